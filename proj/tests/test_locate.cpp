#include <doctest.h>

#include <cmath>

#include "crisloc/locate.hpp"
#include "crisloc/rng.hpp"

using namespace crisloc;
using namespace crisloc::locate;

namespace {

// Map with 8 active subcarriers where each training fingerprint differs from
// a zero query only in its first coordinate: distances are exact by design.
RadioMap line_map(const std::vector<double>& offsets,
                  const std::vector<Position>& positions) {
  RadioMap map;
  map.mask.keep.assign(8, true);
  map.ap_ids = {"a"};
  map.grid_spacing = 1.0;
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    RadioMap::Point p;
    p.pos = positions[i];
    p.samples.resize(1);
    std::vector<double> v(8, 0.0);
    v[0] = offsets[i];
    p.samples[0].push_back(AmplitudeVector(std::move(v)));
    map.points.push_back(std::move(p));
  }
  return map;
}

Fingerprint zero_query() {
  Fingerprint fp;
  fp.values.assign(8, 0.0);
  return fp;
}

NeighborPortionTable uniform_table(std::size_t n, double kappa) {
  NeighborPortionTable t;
  t.kappa.assign(n, kappa);
  t.neighbor_count.assign(n, static_cast<int>(std::lround(1.0 / kappa)));
  return t;
}

RadioMap grid_map(int cols, int rows, double spacing) {
  RadioMap map;
  map.mask.keep.assign(8, true);
  map.ap_ids = {"a"};
  map.grid_spacing = spacing;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      RadioMap::Point p;
      p.pos = {c * spacing, r * spacing};
      p.samples.resize(1);
      p.samples[0].push_back(AmplitudeVector(std::vector<double>(8, 1.0)));
      map.points.push_back(std::move(p));
    }
  return map;
}

}  // namespace

TEST_CASE("wknn: k=1 returns the nearest training point") {
  const RadioMap map = line_map({1, 5, 9}, {{0, 0}, {4, 0}, {8, 8}});
  const Position p = wknn(zero_query(), map, 1, {"a"});
  CHECK(p == Position{0, 0});
}

TEST_CASE("wknn: equal distances give the midpoint") {
  const RadioMap map = line_map({2, -2}, {{0, 0}, {4, 2}});
  const Position p = wknn(zero_query(), map, 2, {"a"});
  CHECK(p.x == doctest::Approx(2.0));
  CHECK(p.y == doctest::Approx(1.0));
}

TEST_CASE("wknn: hand-computed three-neighbor example is exact") {
  // Distances (1, 2, 2) at (0,0), (6,0), (0,6): weights 1/2, 1/4, 1/4.
  const RadioMap map = line_map({1, 2, -2}, {{0, 0}, {6, 0}, {0, 6}});
  const Position p = wknn(zero_query(), map, 3, {"a"});
  CHECK(p.x == 1.5);
  CHECK(p.y == 1.5);
}

TEST_CASE("wknn: exact-zero distance returns that point") {
  const RadioMap map = line_map({0, 3, 4}, {{2, 7}, {0, 0}, {1, 1}});
  const Position p = wknn(zero_query(), map, 2, {"a"});
  CHECK(p == Position{2, 7});
}

TEST_CASE("wknn: several zero distances give their centroid") {
  const RadioMap map = line_map({0, 0, 4}, {{2, 6}, {4, 2}, {1, 1}});
  const Position p = wknn(zero_query(), map, 3, {"a"});
  CHECK(p.x == doctest::Approx(3.0));
  CHECK(p.y == doctest::Approx(4.0));
}

TEST_CASE("wknn: empty map and bad k are rejected") {
  const RadioMap empty = line_map({}, {});
  CHECK_THROWS_AS(wknn(zero_query(), empty, 1, {"a"}), std::invalid_argument);
  const RadioMap map = line_map({1, 2}, {{0, 0}, {1, 0}});
  CHECK_THROWS_AS(wknn(zero_query(), map, 3, {"a"}), std::invalid_argument);
  CHECK_THROWS_AS(wknn(zero_query(), map, 0, {"a"}), std::invalid_argument);
}

TEST_CASE("wknn: scale-invariant in distances") {
  std::vector<double> eps{0.5, 1.25, 2.0, 3.5};
  std::vector<Position> pos{{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  const Position base = wknn_select(eps, pos, 3);
  for (auto& e : eps) e *= 4.0;  // power of two keeps this bitwise
  const Position scaled = wknn_select(eps, pos, 3);
  CHECK(base.x == scaled.x);
  CHECK(base.y == scaled.y);

  for (auto& e : eps) e *= 3.0;
  const Position scaled2 = wknn_select(eps, pos, 3);
  CHECK(scaled2.x == doctest::Approx(base.x).epsilon(1e-12));
  CHECK(scaled2.y == doctest::Approx(base.y).epsilon(1e-12));
}

TEST_CASE("wknn: output stays in the convex hull of the selected points") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = rng.uniform_int(3, 12);
    std::vector<double> eps(n);
    std::vector<Position> pos(n);
    for (int i = 0; i < n; ++i) {
      eps[i] = rng.uniform(0.01, 5.0);
      pos[i] = {rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0)};
    }
    const int k = rng.uniform_int(1, n);
    const Position p = wknn_select(eps, pos, k);
    // The convex hull is inside the bounding box of the k selected points;
    // weights are positive and normalized, so the estimate is a convex mix.
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return eps[a] != eps[b] ? eps[a] < eps[b] : a < b;
    });
    double xmin = 1e9, xmax = -1e9, ymin = 1e9, ymax = -1e9;
    for (int i = 0; i < k; ++i) {
      xmin = std::min(xmin, pos[order[i]].x);
      xmax = std::max(xmax, pos[order[i]].x);
      ymin = std::min(ymin, pos[order[i]].y);
      ymax = std::max(ymax, pos[order[i]].y);
    }
    CHECK(p.x >= xmin - 1e-12);
    CHECK(p.x <= xmax + 1e-12);
    CHECK(p.y >= ymin - 1e-12);
    CHECK(p.y <= ymax + 1e-12);
  }
}

TEST_CASE("eeknn: uniform portions reproduce wknn bit-for-bit") {
  Rng rng(123);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = rng.uniform_int(6, 20);
    std::vector<double> eps(n);
    std::vector<Position> pos(n);
    for (int i = 0; i < n; ++i) {
      eps[i] = rng.uniform(0.001, 4.0);
      pos[i] = {rng.uniform(0.0, 8.0), rng.uniform(0.0, 8.0)};
    }
    for (int k : {1, 2, 3, 4, 5}) {
      const Position w = wknn_select(eps, pos, k);
      const Position e = eeknn_select(eps, pos, uniform_table(n, 1.0 / k), 1.0);
      CHECK(w.x == e.x);
      CHECK(w.y == e.y);
    }
  }
}

TEST_CASE("eeknn: accumulation rule picks 3 neighbors for corner-edge-interior") {
  // Nearest has kappa 1/2, then 1/3, then 1/4: 1/2+1/3 < 1 <= 1/2+1/3+1/4.
  std::vector<double> eps{1.0, 2.0, 3.0, 4.0, 5.0};
  std::vector<Position> pos{{0, 0}, {1, 0}, {0, 1}, {5, 5}, {6, 6}};
  NeighborPortionTable t;
  t.kappa = {0.5, 1.0 / 3.0, 0.25, 0.25, 0.25};
  t.neighbor_count = {2, 3, 4, 4, 4};

  const Position p = eeknn_select(eps, pos, t, 1.0);

  // Hand evaluation over the first three points with weights kappa/eps.
  const double u0 = 0.5 / 1.0;
  const double u1 = (1.0 / 3.0) / 2.0;
  const double u2 = 0.25 / 3.0;
  const double wsum = u0 + u1 + u2;
  CHECK(p.x == doctest::Approx((u0 * 0 + u1 * 1 + u2 * 0) / wsum).epsilon(1e-12));
  CHECK(p.y == doctest::Approx((u0 * 0 + u1 * 0 + u2 * 1) / wsum).epsilon(1e-12));
}

TEST_CASE("portion table: grid neighbor counts match the 4-neighbor picture") {
  const RadioMap map = grid_map(3, 3, 1.0);
  const NeighborPortionTable t = build_portion_table(map);
  CHECK(t.kappa[4] == 0.25);       // center
  CHECK(t.kappa[0] == 0.5);        // corner
  CHECK(t.kappa[1] == 1.0 / 3.0);  // edge
  CHECK(t.neighbor_count[4] == 4);
  CHECK(t.neighbor_count[0] == 2);
}

TEST_CASE("portion table: isolated point clamps to kappa = 1") {
  RadioMap map = grid_map(2, 1, 1.0);
  map.points[1].pos = {50, 50};  // far away from the other point
  const NeighborPortionTable t = build_portion_table(map);
  CHECK(t.kappa[0] == 1.0);
  CHECK(t.kappa[1] == 1.0);
}

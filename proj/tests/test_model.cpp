#include <doctest.h>

#include <algorithm>

#include "crisloc/model.hpp"
#include "crisloc/rng.hpp"
#include "crisloc/serialize.hpp"

using namespace crisloc;

namespace {

RadioMap tiny_map(int active, const std::vector<ApId>& aps) {
  RadioMap map;
  map.mask.keep.assign(active, true);
  map.ap_ids = aps;
  map.grid_spacing = 1.0;
  return map;
}

RadioMap::Point point_at(double x, double y, std::size_t n_aps) {
  RadioMap::Point p;
  p.pos = {x, y};
  p.samples.resize(n_aps);
  return p;
}

}  // namespace

TEST_CASE("concat_fingerprint: mean of samples") {
  RadioMap map = tiny_map(2, {"a"});
  auto p = point_at(0, 0, 1);
  p.samples[0] = {AmplitudeVector({2, 2}), AmplitudeVector({4, 4})};
  map.points.push_back(p);

  const Fingerprint fp = concat_fingerprint(map, 0, {"a"});
  CHECK(fp.values == std::vector<double>{3, 3});
}

TEST_CASE("concat_fingerprint: unheard AP contributes zeros") {
  RadioMap map = tiny_map(3, {"a"});
  map.points.push_back(point_at(0, 0, 1));  // no samples

  const Fingerprint fp = concat_fingerprint(map, 0, {"a"});
  CHECK(fp.values == std::vector<double>{0, 0, 0});
}

TEST_CASE("concat_fingerprint: concatenation follows ap_ids order") {
  RadioMap map = tiny_map(2, {"a", "b"});
  auto p = point_at(0, 0, 2);
  p.samples[0] = {AmplitudeVector({1, 1})};
  p.samples[1] = {AmplitudeVector({2, 2})};
  map.points.push_back(p);

  const Fingerprint fp = concat_fingerprint(map, 0, {"b", "a"});
  CHECK(fp.values == std::vector<double>{1, 1, 2, 2});
}

TEST_CASE("concat_fingerprint: unknown AP is named in the error") {
  RadioMap map = tiny_map(2, {"a"});
  map.points.push_back(point_at(0, 0, 1));
  CHECK_THROWS_WITH_AS(concat_fingerprint(map, 0, {"ghost"}),
                       doctest::Contains("ghost"), std::invalid_argument);
}

TEST_CASE("concat_fingerprint: permutation-invariant in sample order") {
  Rng rng(7);
  RadioMap map = tiny_map(8, {"a", "b"});
  auto p = point_at(0, 0, 2);
  for (int a = 0; a < 2; ++a)
    for (int s = 0; s < 9; ++s) {
      std::vector<double> v(8);
      for (auto& x : v) x = rng.uniform(0.0, 5.0);
      p.samples[a].emplace_back(std::move(v));
    }
  map.points.push_back(p);

  const Fingerprint base = concat_fingerprint(map, 0, {"a", "b"});
  std::reverse(map.points[0].samples[0].begin(), map.points[0].samples[0].end());
  std::rotate(map.points[0].samples[1].begin(), map.points[0].samples[1].begin() + 4,
              map.points[0].samples[1].end());
  const Fingerprint shuffled = concat_fingerprint(map, 0, {"a", "b"});

  REQUIRE(base.values.size() == shuffled.values.size());
  for (std::size_t i = 0; i < base.values.size(); ++i)
    CHECK(base.values[i] == doctest::Approx(shuffled.values[i]).epsilon(1e-12));
}

TEST_CASE("radio map serialization round-trips bit-identically") {
  Rng rng(42);
  RadioMap map = tiny_map(9, {"ap1", "ap2", "ap3"});
  map.mask.keep.assign(12, true);
  map.mask.keep[0] = map.mask.keep[5] = map.mask.keep[11] = false;
  map.grid_spacing = 0.5;
  for (int i = 0; i < 4; ++i) {
    auto p = point_at(rng.uniform(0.0, 5.0), rng.uniform(0.0, 5.0), 3);
    for (int a = 0; a < 3; ++a) {
      const int n = a == 1 && i == 2 ? 0 : 3;  // one unheard pair
      for (int s = 0; s < n; ++s) {
        std::vector<double> v(9);
        for (auto& x : v) x = rng.uniform(0.0, 1e-3);
        p.samples[a].emplace_back(std::move(v));
      }
    }
    map.points.push_back(std::move(p));
  }

  const std::string text = io::to_json(map);
  const RadioMap back = io::radio_map_from_json(text);

  REQUIRE(back.points.size() == map.points.size());
  CHECK(back.mask.keep == map.mask.keep);
  CHECK(back.ap_ids == map.ap_ids);
  CHECK(back.grid_spacing == map.grid_spacing);
  for (std::size_t p = 0; p < map.points.size(); ++p) {
    CHECK(back.points[p].pos == map.points[p].pos);
    REQUIRE(back.points[p].samples.size() == map.points[p].samples.size());
    for (std::size_t a = 0; a < map.points[p].samples.size(); ++a)
      CHECK(back.points[p].samples[a] == map.points[p].samples[a]);
  }

  // And a second trip through text is byte-stable.
  CHECK(io::to_json(back) == text);
}

TEST_CASE("validate rejects broken maps") {
  RadioMap map = tiny_map(8, {"a"});
  auto p = point_at(0, 0, 1);
  p.samples[0] = {AmplitudeVector(std::vector<double>(8, 1.0))};
  map.points.push_back(p);
  CHECK_NOTHROW(validate(map));

  SUBCASE("mask below 8 active") {
    map.mask.keep.assign(7, true);
    CHECK_THROWS_AS(validate(map), std::invalid_argument);
  }
  SUBCASE("wrong sample length") {
    map.points[0].samples[0][0].values.pop_back();
    CHECK_THROWS_AS(validate(map), std::invalid_argument);
  }
  SUBCASE("duplicate positions") {
    map.points.push_back(point_at(0, 0, 1));
    CHECK_THROWS_AS(validate(map), std::invalid_argument);
  }
  SUBCASE("negative amplitude") {
    map.points[0].samples[0][0].values[3] = -1.0;
    CHECK_THROWS_AS(validate(map), std::invalid_argument);
  }
}

TEST_CASE("dbm/mw conversions") {
  CHECK(dbm_to_mw(0.0) == 1.0);
  CHECK(dbm_to_mw(20.0) == doctest::Approx(100.0));
  CHECK(mw_to_dbm(dbm_to_mw(-37.25)) == doctest::Approx(-37.25).epsilon(1e-12));
}

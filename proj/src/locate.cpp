#include "crisloc/locate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "crisloc/preprocess.hpp"

namespace crisloc::locate {

namespace {
constexpr double kAdjacencyFactor = 1.2;
constexpr double kPortionSlack = 1e-9;

struct Ranked {
  double eps;
  int idx;
};

std::vector<Ranked> rank_by_distance(const std::vector<double>& eps) {
  std::vector<Ranked> ranked(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i)
    ranked[i] = {eps[i], static_cast<int>(i)};
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    return a.eps != b.eps ? a.eps < b.eps : a.idx < b.idx;
  });
  return ranked;
}

// Exact-distance hits short-circuit the weighting: return the matching point,
// or the centroid when several training points are at distance zero.
bool zero_hit(const std::vector<Ranked>& ranked, const std::vector<Position>& pos,
              Position* out) {
  if (ranked.empty() || ranked.front().eps > 0.0) return false;
  double x = 0, y = 0;
  int n = 0;
  for (const auto& r : ranked) {
    if (r.eps > 0.0) break;
    x += pos[r.idx].x;
    y += pos[r.idx].y;
    ++n;
  }
  *out = {x / n, y / n};
  return true;
}

}  // namespace

NeighborPortionTable build_portion_table(const RadioMap& map) {
  if (map.grid_spacing <= 0.0)
    throw std::invalid_argument("portion table requires a known grid spacing");
  const double radius = kAdjacencyFactor * map.grid_spacing;
  const int n = static_cast<int>(map.points.size());
  NeighborPortionTable table;
  table.kappa.resize(n);
  table.neighbor_count.resize(n);
  for (int i = 0; i < n; ++i) {
    int count = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      if (distance(map.points[i].pos, map.points[j].pos) <= radius) ++count;
    }
    table.neighbor_count[i] = count;
    table.kappa[i] = 1.0 / std::max(count, 1);
  }
  return table;
}

MapFeatures MapFeatures::build(const RadioMap& map) {
  MapFeatures f;
  f.map = &map;
  const int dim = map.mask.active_count();
  f.mean.resize(map.points.size());
  f.positions.reserve(map.points.size());
  for (std::size_t p = 0; p < map.points.size(); ++p) {
    f.positions.push_back(map.points[p].pos);
    f.mean[p].resize(map.ap_ids.size());
    for (std::size_t a = 0; a < map.ap_ids.size(); ++a) {
      const AmplitudeVector m = map.mean_amplitude(static_cast<int>(p), static_cast<int>(a));
      f.mean[p][a] = Eigen::Map<const Eigen::VectorXd>(m.values.data(), dim);
    }
  }
  return f;
}

std::vector<double> MapFeatures::distances(const Fingerprint& query,
                                           const std::vector<int>& ap_indices) const {
  const int dim = map->mask.active_count();
  if (query.values.size() != map->ap_ids.size() * static_cast<std::size_t>(dim))
    throw std::invalid_argument("query fingerprint length does not match map layout");

  std::vector<double> eps(positions.size());
  for (std::size_t p = 0; p < positions.size(); ++p) {
    double sq = 0.0;
    for (int a : ap_indices) {
      const Eigen::Map<const Eigen::VectorXd> block(query.values.data() + a * dim, dim);
      sq += (block - mean[p][a]).squaredNorm();
    }
    eps[p] = std::sqrt(sq);
  }
  return eps;
}

std::vector<int> subset_indices(const RadioMap& map, const std::set<ApId>& ap_subset) {
  std::vector<int> idx;
  for (const auto& id : ap_subset) {
    const int a = map.ap_index(id);
    if (a < 0) throw std::invalid_argument("unknown AP id: " + id);
    idx.push_back(a);
  }
  std::sort(idx.begin(), idx.end());
  return idx;
}

Position weighted_centroid(const std::vector<double>& scaled_eps,
                           const std::vector<Position>& positions) {
  double wsum = 0.0, x = 0.0, y = 0.0;
  for (std::size_t i = 0; i < scaled_eps.size(); ++i) {
    const double w = 1.0 / scaled_eps[i];
    wsum += w;
    x += w * positions[i].x;
    y += w * positions[i].y;
  }
  return {x / wsum, y / wsum};
}

Position wknn_select(const std::vector<double>& eps, const std::vector<Position>& pos,
                     int k) {
  if (eps.empty()) throw std::invalid_argument("empty radio map");
  if (k < 1 || k > static_cast<int>(eps.size()))
    throw std::invalid_argument("k must be in [1, number of training points]");

  const std::vector<Ranked> ranked = rank_by_distance(eps);
  Position hit;
  if (zero_hit(ranked, pos, &hit)) return hit;

  std::vector<double> sel_eps(k);
  std::vector<Position> sel_pos(k);
  for (int i = 0; i < k; ++i) {
    sel_eps[i] = ranked[i].eps;
    sel_pos[i] = pos[ranked[i].idx];
  }
  return weighted_centroid(sel_eps, sel_pos);
}

Position eeknn_select(const std::vector<double>& eps, const std::vector<Position>& pos,
                      const NeighborPortionTable& table, double k_prime) {
  if (eps.empty()) throw std::invalid_argument("empty radio map");
  if (k_prime <= 0.0) throw std::invalid_argument("k_prime must be positive");
  if (table.kappa.size() != eps.size())
    throw std::invalid_argument("portion table does not match map size");

  const std::vector<Ranked> ranked = rank_by_distance(eps);
  Position hit;
  if (zero_hit(ranked, pos, &hit)) return hit;

  std::vector<int> selected;
  double acc = 0.0;
  for (const auto& r : ranked) {
    selected.push_back(r.idx);
    acc += table.kappa[r.idx];
    if (acc >= k_prime - kPortionSlack) break;
  }

  double kmax = table.kappa[selected.front()];
  for (int i : selected) kmax = std::max(kmax, table.kappa[i]);

  // Portion-weighted inverse distance: a larger kappa (edge/corner point)
  // raises the neighbor's share, pulling estimates back toward the edge.
  // Portions are taken relative to the selection maximum so that a uniform
  // table reduces to plain inverse-distance WKNN bit for bit.
  std::vector<double> sel_eps(selected.size());
  std::vector<Position> sel_pos(selected.size());
  for (std::size_t i = 0; i < selected.size(); ++i) {
    sel_eps[i] = eps[selected[i]] * (kmax / table.kappa[selected[i]]);
    sel_pos[i] = pos[selected[i]];
  }
  return weighted_centroid(sel_eps, sel_pos);
}

Position wknn(const Fingerprint& query, const MapFeatures& features, int k,
              const std::set<ApId>& ap_subset) {
  const std::vector<double> eps =
      features.distances(query, subset_indices(*features.map, ap_subset));
  return wknn_select(eps, features.positions, k);
}

Position wknn(const Fingerprint& query, const RadioMap& map, int k,
              const std::set<ApId>& ap_subset) {
  return wknn(query, MapFeatures::build(map), k, ap_subset);
}

Position eeknn(const Fingerprint& query, const MapFeatures& features, double k_prime,
               const NeighborPortionTable& table, const std::set<ApId>& ap_subset) {
  const std::vector<double> eps =
      features.distances(query, subset_indices(*features.map, ap_subset));
  return eeknn_select(eps, features.positions, table, k_prime);
}

Position eeknn(const Fingerprint& query, const RadioMap& map, double k_prime,
               const NeighborPortionTable& table, const std::set<ApId>& ap_subset) {
  return eeknn(query, MapFeatures::build(map), k_prime, table, ap_subset);
}

Fingerprint query_fingerprint(const Capture& capture, const SubcarrierMask& mask,
                              const std::vector<ApId>& ap_ids) {
  const int dim = mask.active_count();
  Fingerprint fp;
  fp.values.assign(ap_ids.size() * static_cast<std::size_t>(dim), 0.0);
  for (std::size_t a = 0; a < ap_ids.size(); ++a) {
    const auto it = capture.find(ap_ids[a]);
    if (it == capture.end()) continue;
    int n = 0;
    for (const auto& frame : it->second) {
      if (!frame.heard()) continue;
      const AmplitudeVector amp = preprocess::calibrate(frame, mask);
      for (int d = 0; d < dim; ++d) fp.values[a * dim + d] += amp.values[d];
      ++n;
    }
    if (n > 0)
      for (int d = 0; d < dim; ++d) fp.values[a * dim + d] /= n;
  }
  return fp;
}

}  // namespace crisloc::locate

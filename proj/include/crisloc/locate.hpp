#pragma once

#include <Eigen/Dense>
#include <set>
#include <vector>

#include "crisloc/model.hpp"

namespace crisloc::locate {

/// kappa_i = 1 / (number of spatially adjacent training points), clamped so
/// an isolated point gets kappa = 1. On a full rectangular grid: interior
/// 1/4, edge 1/3, corner 1/2.
struct NeighborPortionTable {
  std::vector<double> kappa;
  std::vector<int> neighbor_count;
};

/// Adjacency radius is 1.2 * grid_spacing: keeps 4-connectivity, excludes
/// diagonals at spacing*sqrt(2).
NeighborPortionTable build_portion_table(const RadioMap& map);

/// Precomputed per-point per-AP mean amplitude blocks so repeated queries do
/// not re-average samples.
struct MapFeatures {
  const RadioMap* map = nullptr;
  std::vector<std::vector<Eigen::VectorXd>> mean;  // [point][ap]
  std::vector<Position> positions;

  static MapFeatures build(const RadioMap& map);

  /// Euclidean distance between a query fingerprint (full ap_ids layout) and
  /// each training point, restricted to the given AP indices.
  std::vector<double> distances(const Fingerprint& query,
                                const std::vector<int>& ap_indices) const;
};

std::vector<int> subset_indices(const RadioMap& map, const std::set<ApId>& ap_subset);

/// Weighted-centroid core shared by both matchers. `scaled_eps` holds the
/// per-neighbor weight denominators (epsilon, possibly scaled by a relative
/// portion); weights are 1/scaled_eps, normalized.
Position weighted_centroid(const std::vector<double>& scaled_eps,
                           const std::vector<Position>& positions);

/// WKNN over precomputed distances: k nearest by (eps, index), inverse-
/// distance weights. Exact-zero distances return that point (centroid when
/// several are at zero).
Position wknn_select(const std::vector<double>& eps, const std::vector<Position>& pos,
                     int k);

/// EEKNN core: scans points by increasing eps accumulating kappa until the
/// sum reaches k_prime; neighbors are weighted by kappa/eps, normalized, so
/// corner and edge points get the larger share. A uniform table degenerates
/// to plain WKNN bit for bit.
Position eeknn_select(const std::vector<double>& eps, const std::vector<Position>& pos,
                      const NeighborPortionTable& table, double k_prime);

Position wknn(const Fingerprint& query, const RadioMap& map, int k,
              const std::set<ApId>& ap_subset);
Position wknn(const Fingerprint& query, const MapFeatures& features, int k,
              const std::set<ApId>& ap_subset);

Position eeknn(const Fingerprint& query, const RadioMap& map, double k_prime,
               const NeighborPortionTable& table, const std::set<ApId>& ap_subset);
Position eeknn(const Fingerprint& query, const MapFeatures& features, double k_prime,
               const NeighborPortionTable& table, const std::set<ApId>& ap_subset);

/// Query-side fingerprint: per-AP mean of calibrated frames in ap_ids order;
/// unheard APs contribute zero blocks.
Fingerprint query_fingerprint(const Capture& capture, const SubcarrierMask& mask,
                              const std::vector<ApId>& ap_ids);

}  // namespace crisloc::locate

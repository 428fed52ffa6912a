#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "crisloc/locate.hpp"
#include "crisloc/model.hpp"

namespace crisloc::reconstruct {

struct TransferParams {
  double mu = 1.0;      // intra-class weight
  double lambda = 0.1;  // ridge
  double alpha = 0.5;   // neighbor-distance ratio bound
  int subspace_dim = 10;
};

/// Inputs for learning one AP's transform: per-point outdated sample matrices
/// (columns are samples), fresh RP sample matrices with their survey indices,
/// and the spatial neighbor structure.
struct TransferInputs {
  std::vector<Eigen::MatrixXd> source;  // c_s matrices, m x n_s_i
  std::vector<Eigen::MatrixXd> target;  // c_t matrices, m x n_t_i
  std::vector<int> target_points;       // survey index per target set
  std::vector<std::vector<int>> neighbor_sets;  // N_i per survey point
  std::vector<std::vector<int>> far_sets;       // F_i = complement of N_i
  TransferParams params;
};

void validate(const TransferInputs& inp);

struct TransferMatrices {
  Eigen::MatrixXd xmx;  // source-target mean discrepancy term
  Eigen::MatrixXd p_s;  // intra-class scatter
  Eigen::MatrixXd q_s;  // between-class scatter
  Eigen::MatrixXd d_n;  // neighbor mean-difference outer products
  Eigen::MatrixXd f_n;  // non-neighbor counterpart
};

TransferMatrices build_matrices(const TransferInputs& inp);

struct TransformMatrix {
  Eigen::MatrixXd a;  // m x M, columns scaled so diag(A^T Q_s A) = 1
  Eigen::VectorXd eigenvalues;  // selected spectrum of the pencil (Q_s, B)
  bool truncated = false;       // fewer than M admissible eigenvectors
};

/// Solves the constrained trace problem via the symmetric-definite pencil
/// Q_s a = z B a with B = xmx + mu*P_s + lambda*I (Cholesky reduction inside
/// Eigen's generalized solver). Picks the largest-eigenvalue eigenvectors
/// subject to Tr(A^T D_N A) <= alpha * Tr(A^T F_N A), skipping null
/// directions of Q_s. Returns fewer columns than requested (possibly none,
/// with a warning) when the constraint admits fewer; throws when Q_s carries
/// no class separation at all.
TransformMatrix solve_transform(const TransferMatrices& mat, const TransferParams& params);

/// A fingerprint database in which some AP blocks live in a learned subspace.
/// Matching sums squared block distances: raw blocks as-is, projected blocks
/// after applying the block's projector to the query.
struct HybridMap {
  RadioMap base;  // original samples kept for unaltered APs

  struct ProjectedBlock {
    ApId ap;
    Eigen::MatrixXd projector;               // scaled A^T is applied to queries
    std::vector<Eigen::VectorXd> features;   // per training point
    bool fresh_rp_applied = false;
  };
  std::map<ApId, ProjectedBlock> projected;

  bool is_projected(const ApId& id) const { return projected.count(id) > 0; }
};

/// Prebuilt matching state for a hybrid map (caches the raw-block means).
struct HybridMatcher {
  const HybridMap* map = nullptr;
  locate::MapFeatures base_features;

  static HybridMatcher build(const HybridMap& map);
  std::vector<double> distances(const Fingerprint& query,
                                const std::set<ApId>& ap_subset) const;
};

/// Per-point distances between a query fingerprint (raw space, full ap_ids
/// layout) and the hybrid map, restricted to an AP subset.
std::vector<double> hybrid_distances(const HybridMap& map, const Fingerprint& query,
                                     const std::set<ApId>& ap_subset);

Position wknn(const Fingerprint& query, const HybridMap& map, int k,
              const std::set<ApId>& ap_subset);
Position wknn(const Fingerprint& query, const HybridMatcher& matcher, int k,
              const std::set<ApId>& ap_subset);
Position eeknn(const Fingerprint& query, const HybridMap& map, double k_prime,
               const locate::NeighborPortionTable& table, const std::set<ApId>& ap_subset);
Position eeknn(const Fingerprint& query, const HybridMatcher& matcher, double k_prime,
               const locate::NeighborPortionTable& table, const std::set<ApId>& ap_subset);

/// Neighbor/far sets from the map's grid using the same adjacency radius as
/// the portion table.
void spatial_sets(const RadioMap& map, std::vector<std::vector<int>>* neighbors,
                  std::vector<std::vector<int>>* far);

/// Learns one transform per altered AP from its outdated samples (source) and
/// the fresh RP samples (target), then replaces that AP's per-point features
/// with projected means. Fresh RP data, being labeled, replaces the
/// reconstruction at RP points. Unaltered APs keep their raw fingerprints.
HybridMap reconstruct_map(const RadioMap& old_map,
                          const std::vector<int>& rp_points,
                          const std::vector<std::map<ApId, std::vector<AmplitudeVector>>>& fresh_rp,
                          const std::set<ApId>& altered, const TransferParams& params);

/// Assembles TransferInputs for a single AP from map samples + fresh RP data.
TransferInputs make_inputs(const RadioMap& map, int ap_index,
                           const std::vector<int>& rp_points,
                           const std::vector<std::vector<AmplitudeVector>>& fresh_per_rp,
                           const TransferParams& params);

}  // namespace crisloc::reconstruct

#include "crisloc/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "crisloc/log.hpp"

namespace crisloc::reconstruct {

void validate(const TransferInputs& inp) {
  if (inp.source.empty()) throw std::invalid_argument("no source points");
  if (inp.target.empty()) throw std::invalid_argument("no target points");
  if (inp.target.size() > inp.source.size())
    throw std::invalid_argument("more target points than source points");
  if (inp.target.size() != inp.target_points.size())
    throw std::invalid_argument("target set / index mismatch");
  const auto m = inp.source.front().rows();
  for (const auto& x : inp.source) {
    if (x.rows() != m) throw std::invalid_argument("inconsistent feature dimension");
    if (x.cols() == 0) throw std::invalid_argument("a source point has no samples");
  }
  for (std::size_t i = 0; i < inp.target.size(); ++i) {
    if (inp.target[i].rows() != m)
      throw std::invalid_argument("inconsistent feature dimension");
    if (inp.target[i].cols() == 0)
      throw std::invalid_argument("a target point has no samples");
    const int p = inp.target_points[i];
    if (p < 0 || p >= static_cast<int>(inp.source.size()))
      throw std::invalid_argument("target survey index out of range");
  }
  if (!(inp.params.mu > 0 && inp.params.lambda > 0 && inp.params.alpha > 0))
    throw std::invalid_argument("mu, lambda, alpha must be positive");
  if (inp.params.subspace_dim < 1 || inp.params.subspace_dim > m)
    throw std::invalid_argument("subspace dimension must lie in [1, m]");
}

TransferMatrices build_matrices(const TransferInputs& inp) {
  validate(inp);
  const int m = static_cast<int>(inp.source.front().rows());
  TransferMatrices out;
  out.xmx = Eigen::MatrixXd::Zero(m, m);
  out.p_s = Eigen::MatrixXd::Zero(m, m);
  out.q_s = Eigen::MatrixXd::Zero(m, m);
  out.d_n = Eigen::MatrixXd::Zero(m, m);
  out.f_n = Eigen::MatrixXd::Zero(m, m);

  // Discrepancy term, assembled through the per-point block coefficient
  // matrix (1/ns^2, 1/nt^2 on the diagonal blocks, -1/(ns*nt) across).
  for (std::size_t t = 0; t < inp.target.size(); ++t) {
    const Eigen::MatrixXd& xs = inp.source[inp.target_points[t]];
    const Eigen::MatrixXd& xt = inp.target[t];
    const int ns = static_cast<int>(xs.cols());
    const int nt = static_cast<int>(xt.cols());

    Eigen::MatrixXd joint(m, ns + nt);
    joint.leftCols(ns) = xs;
    joint.rightCols(nt) = xt;

    Eigen::MatrixXd coeff(ns + nt, ns + nt);
    coeff.topLeftCorner(ns, ns).setConstant(1.0 / (double(ns) * ns));
    coeff.bottomRightCorner(nt, nt).setConstant(1.0 / (double(nt) * nt));
    coeff.topRightCorner(ns, nt).setConstant(-1.0 / (double(ns) * nt));
    coeff.bottomLeftCorner(nt, ns).setConstant(-1.0 / (double(ns) * nt));

    out.xmx += joint * coeff * joint.transpose();
  }

  // Scatter terms over all source points.
  long long total = 0;
  Eigen::VectorXd grand = Eigen::VectorXd::Zero(m);
  for (const auto& xs : inp.source) {
    const int ns = static_cast<int>(xs.cols());
    total += ns;
    grand += xs.rowwise().sum();
    const Eigen::MatrixXd centering =
        Eigen::MatrixXd::Identity(ns, ns) -
        Eigen::MatrixXd::Constant(ns, ns, 1.0 / ns);
    out.p_s += xs * centering * xs.transpose();
  }
  grand /= static_cast<double>(total);

  std::vector<Eigen::VectorXd> means(inp.source.size());
  for (std::size_t i = 0; i < inp.source.size(); ++i)
    means[i] = inp.source[i].rowwise().mean();

  for (std::size_t i = 0; i < inp.source.size(); ++i) {
    const Eigen::VectorXd d = means[i] - grand;
    out.q_s += static_cast<double>(inp.source[i].cols()) * d * d.transpose();
  }

  // Neighbor structure terms on class means.
  const auto accumulate_sets =
      [&](const std::vector<std::vector<int>>& sets, Eigen::MatrixXd* acc) {
        for (std::size_t i = 0; i < inp.source.size(); ++i) {
          if (i >= sets.size() || sets[i].empty()) continue;
          Eigen::MatrixXd local = Eigen::MatrixXd::Zero(m, m);
          for (int k : sets[i]) {
            const Eigen::VectorXd d = means[i] - means[k];
            local += d * d.transpose();
          }
          *acc += local / static_cast<double>(sets[i].size());
        }
      };
  accumulate_sets(inp.neighbor_sets, &out.d_n);
  accumulate_sets(inp.far_sets, &out.f_n);
  return out;
}

TransformMatrix solve_transform(const TransferMatrices& mat, const TransferParams& params) {
  const int m = static_cast<int>(mat.q_s.rows());
  const Eigen::MatrixXd b = mat.xmx + params.mu * mat.p_s +
                            params.lambda * Eigen::MatrixXd::Identity(m, m);

  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(mat.q_s, b,
                                                                   Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("generalized eigensolver failed");

  const Eigen::VectorXd evals = solver.eigenvalues();  // ascending
  const double z_max = evals(m - 1);
  if (!(z_max > 1e-12))
    throw std::runtime_error("Q_s carries no class separation (rank < 1)");

  const int want = std::min(params.subspace_dim, m);
  std::vector<Eigen::VectorXd> cols;
  std::vector<double> selected_z;
  double trace_dn = 0.0, trace_fn = 0.0;

  // Largest eigenvalues first; null directions of Q_s are never selected;
  // candidates that would break d_N <= alpha * d_F are skipped.
  for (int i = m - 1; i >= 0 && static_cast<int>(cols.size()) < want; --i) {
    const double z = evals(i);
    if (z <= 1e-12 * z_max) break;
    Eigen::VectorXd a = solver.eigenvectors().col(i);
    const double qnorm = a.dot(mat.q_s * a);
    if (qnorm <= 0.0) continue;
    a /= std::sqrt(qnorm);  // a^T Q_s a = 1

    const double dn = a.dot(mat.d_n * a);
    const double fn = a.dot(mat.f_n * a);
    if (trace_dn + dn > params.alpha * (trace_fn + fn)) continue;

    trace_dn += dn;
    trace_fn += fn;
    cols.push_back(std::move(a));
    selected_z.push_back(z);
  }

  TransformMatrix out;
  out.truncated = static_cast<int>(cols.size()) < want;
  if (cols.empty())
    log::warn("no eigenvector satisfies the neighbor constraint; returning an "
              "empty transform (the block will carry no features)");
  else if (out.truncated)
    log::warn("transform truncated to " + std::to_string(cols.size()) + " of " +
              std::to_string(want) + " requested dimensions");
  out.a.resize(m, static_cast<int>(cols.size()));
  out.eigenvalues.resize(static_cast<int>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    out.a.col(static_cast<int>(c)) = cols[c];
    out.eigenvalues(static_cast<int>(c)) = selected_z[c];
  }
  return out;
}

void spatial_sets(const RadioMap& map, std::vector<std::vector<int>>* neighbors,
                  std::vector<std::vector<int>>* far) {
  const double radius = 1.2 * map.grid_spacing;
  const int n = static_cast<int>(map.points.size());
  neighbors->assign(n, {});
  far->assign(n, {});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double d = distance(map.points[i].pos, map.points[j].pos);
      (d <= radius ? (*neighbors)[i] : (*far)[i]).push_back(j);
    }
}

TransferInputs make_inputs(const RadioMap& map, int ap_index,
                           const std::vector<int>& rp_points,
                           const std::vector<std::vector<AmplitudeVector>>& fresh_per_rp,
                           const TransferParams& params) {
  const int m = map.mask.active_count();
  TransferInputs inp;
  inp.params = params;
  inp.params.subspace_dim = std::min(params.subspace_dim, m - 1);

  for (const auto& point : map.points) {
    const auto& samples = point.samples[ap_index];
    if (samples.empty())
      throw std::invalid_argument("source point with no samples for the altered AP");
    Eigen::MatrixXd xs(m, samples.size());
    for (std::size_t j = 0; j < samples.size(); ++j)
      xs.col(static_cast<int>(j)) =
          Eigen::Map<const Eigen::VectorXd>(samples[j].values.data(), m);
    inp.source.push_back(std::move(xs));
  }

  if (rp_points.size() != fresh_per_rp.size())
    throw std::invalid_argument("RP index / fresh sample mismatch");
  for (std::size_t r = 0; r < rp_points.size(); ++r) {
    const auto& samples = fresh_per_rp[r];
    if (samples.empty())
      throw std::invalid_argument("no fresh RP samples for the altered AP");
    Eigen::MatrixXd xt(m, samples.size());
    for (std::size_t j = 0; j < samples.size(); ++j)
      xt.col(static_cast<int>(j)) =
          Eigen::Map<const Eigen::VectorXd>(samples[j].values.data(), m);
    inp.target.push_back(std::move(xt));
    inp.target_points.push_back(rp_points[r]);
  }

  spatial_sets(map, &inp.neighbor_sets, &inp.far_sets);
  return inp;
}

HybridMap reconstruct_map(const RadioMap& old_map, const std::vector<int>& rp_points,
                          const std::vector<std::map<ApId, std::vector<AmplitudeVector>>>& fresh_rp,
                          const std::set<ApId>& altered, const TransferParams& params) {
  HybridMap out;
  out.base = old_map;
  if (altered.empty()) return out;
  if (rp_points.size() != fresh_rp.size())
    throw std::invalid_argument("RP index / fresh capture mismatch");

  const int m = old_map.mask.active_count();
  const int n_points = static_cast<int>(old_map.points.size());

  for (const auto& id : altered) {
    const int a = old_map.ap_index(id);
    if (a < 0) throw std::invalid_argument("unknown AP id: " + id);

    std::vector<std::vector<AmplitudeVector>> fresh_per_rp;
    fresh_per_rp.reserve(rp_points.size());
    for (const auto& per_ap : fresh_rp) {
      const auto it = per_ap.find(id);
      if (it == per_ap.end() || it->second.empty())
        throw std::invalid_argument("no fresh RP samples for altered AP " + id);
      fresh_per_rp.push_back(it->second);
    }

    const TransferInputs inp = make_inputs(old_map, a, rp_points, fresh_per_rp, params);
    const TransferMatrices mats = build_matrices(inp);
    const TransformMatrix tf = solve_transform(mats, inp.params);
    const int sub_dim = static_cast<int>(tf.a.cols());

    HybridMap::ProjectedBlock block;
    block.ap = id;
    block.fresh_rp_applied = true;

    // Projected per-point features from the outdated means.
    std::vector<Eigen::VectorXd> feats(n_points);
    Eigen::VectorXd raw_centroid = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd proj_centroid = Eigen::VectorXd::Zero(sub_dim);
    std::vector<Eigen::VectorXd> raw_means(n_points);
    for (int p = 0; p < n_points; ++p) {
      raw_means[p] = inp.source[p].rowwise().mean();
      feats[p] = tf.a.transpose() * raw_means[p];
      raw_centroid += raw_means[p];
      proj_centroid += feats[p];
    }
    raw_centroid /= n_points;
    proj_centroid /= n_points;

    // Scale so the block's per-dimension spread across points matches the raw
    // block it replaces; otherwise the unit-variance projected coordinates
    // would dominate the blockwise distance sum.
    double raw_dev = 0.0, proj_dev = 0.0;
    for (int p = 0; p < n_points; ++p) {
      raw_dev += (raw_means[p] - raw_centroid).squaredNorm();
      proj_dev += (feats[p] - proj_centroid).squaredNorm();
    }
    double gamma = 1.0;
    if (sub_dim > 0 && proj_dev > 0.0)
      gamma = std::sqrt((raw_dev / m) / (proj_dev / sub_dim));

    // Shrink further by the alignment quality observed at the RPs: the block
    // contributes in proportion to how much of its spread survived the
    // source-target residual (Wiener-style attenuation).
    double resid = 0.0;
    for (std::size_t r = 0; r < rp_points.size(); ++r) {
      Eigen::VectorXd fresh_mean = Eigen::VectorXd::Zero(m);
      for (const auto& s : fresh_per_rp[r])
        fresh_mean += Eigen::Map<const Eigen::VectorXd>(s.values.data(), m);
      fresh_mean /= static_cast<double>(fresh_per_rp[r].size());
      resid += (tf.a.transpose() * (fresh_mean - raw_means[rp_points[r]])).squaredNorm();
    }
    const double signal = proj_dev / n_points;
    const double noise = resid / static_cast<double>(rp_points.size());
    const double beta =
        signal > 0.0 ? std::sqrt(signal / (signal + noise)) : 1.0;

    const double scale = gamma * beta;
    for (auto& f : feats) f *= scale;
    block.projector = scale * tf.a.transpose();

    // Fresh RP samples are labeled current data: they replace the
    // reconstruction at their own survey points.
    for (std::size_t r = 0; r < rp_points.size(); ++r) {
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(m);
      for (const auto& s : fresh_per_rp[r])
        mean += Eigen::Map<const Eigen::VectorXd>(s.values.data(), m);
      mean /= static_cast<double>(fresh_per_rp[r].size());
      feats[rp_points[r]] = block.projector * mean;
    }

    block.features = std::move(feats);
    out.projected[id] = std::move(block);
  }
  return out;
}

HybridMatcher HybridMatcher::build(const HybridMap& map) {
  HybridMatcher m;
  m.map = &map;
  m.base_features = locate::MapFeatures::build(map.base);
  return m;
}

std::vector<double> HybridMatcher::distances(const Fingerprint& query,
                                             const std::set<ApId>& ap_subset) const {
  const RadioMap& base = map->base;
  const int dim = base.mask.active_count();
  if (query.values.size() != base.ap_ids.size() * static_cast<std::size_t>(dim))
    throw std::invalid_argument("query fingerprint length does not match map layout");

  struct Block {
    int ap = -1;
    const HybridMap::ProjectedBlock* projected = nullptr;
    Eigen::VectorXd query_feat;
  };
  std::vector<Block> blocks;
  for (const auto& id : ap_subset) {
    const int a = base.ap_index(id);
    if (a < 0) throw std::invalid_argument("unknown AP id: " + id);
    Block blk;
    blk.ap = a;
    const Eigen::Map<const Eigen::VectorXd> raw(query.values.data() + a * dim, dim);
    const auto it = map->projected.find(id);
    if (it != map->projected.end()) {
      blk.projected = &it->second;
      blk.query_feat = it->second.projector * raw;
    } else {
      blk.query_feat = raw;
    }
    blocks.push_back(std::move(blk));
  }

  const int n = static_cast<int>(base.points.size());
  std::vector<double> eps(n);
  for (int p = 0; p < n; ++p) {
    double sq = 0.0;
    for (const auto& blk : blocks) {
      if (blk.projected != nullptr)
        sq += (blk.query_feat - blk.projected->features[p]).squaredNorm();
      else
        sq += (blk.query_feat - base_features.mean[p][blk.ap]).squaredNorm();
    }
    eps[p] = std::sqrt(sq);
  }
  return eps;
}

std::vector<double> hybrid_distances(const HybridMap& map, const Fingerprint& query,
                                     const std::set<ApId>& ap_subset) {
  return HybridMatcher::build(map).distances(query, ap_subset);
}

Position wknn(const Fingerprint& query, const HybridMatcher& matcher, int k,
              const std::set<ApId>& ap_subset) {
  return locate::wknn_select(matcher.distances(query, ap_subset),
                             matcher.base_features.positions, k);
}

Position eeknn(const Fingerprint& query, const HybridMatcher& matcher, double k_prime,
               const locate::NeighborPortionTable& table, const std::set<ApId>& ap_subset) {
  return locate::eeknn_select(matcher.distances(query, ap_subset),
                              matcher.base_features.positions, table, k_prime);
}

Position wknn(const Fingerprint& query, const HybridMap& map, int k,
              const std::set<ApId>& ap_subset) {
  return wknn(query, HybridMatcher::build(map), k, ap_subset);
}

Position eeknn(const Fingerprint& query, const HybridMap& map, double k_prime,
               const locate::NeighborPortionTable& table, const std::set<ApId>& ap_subset) {
  return eeknn(query, HybridMatcher::build(map), k_prime, table, ap_subset);
}

}  // namespace crisloc::reconstruct

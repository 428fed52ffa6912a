#include "crisloc/detect.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

#include "crisloc/log.hpp"
#include "crisloc/preprocess.hpp"
#include "crisloc/rng.hpp"

namespace crisloc::detect {

// ---------------------------------------------------------------------------
// KDE

double silverman_bandwidth(const std::vector<double>& samples) {
  const std::size_t n = samples.size();
  if (n < 2) return 1e-6;
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : samples) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n - 1);
  const double sd = std::sqrt(var);

  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  const auto q = [&](double p) {
    const double pos = p * (sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + (pos - lo) * (sorted[lo + 1] - sorted[lo]);
  };
  const double iqr = q(0.75) - q(0.25);

  double spread = sd;
  if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
  double h = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
  // Degenerate samples still need a usable, sharply peaked kernel.
  const double floor = 1e-9 + 1e-6 * std::abs(mean);
  return std::max(h, floor);
}

double kde_pdf(const KdeCell& cell, double x) {
  const double h = cell.bandwidth;
  double acc = 0.0;
  for (double s : cell.samples) {
    const double z = (x - s) / h;
    acc += std::exp(-0.5 * z * z);
  }
  return acc / (cell.samples.size() * h * std::sqrt(2.0 * M_PI));
}

double kde_cdf(const KdeCell& cell, double x) {
  const double h = cell.bandwidth;
  double acc = 0.0;
  for (double s : cell.samples) acc += 0.5 * std::erfc(-(x - s) / (h * std::sqrt(2.0)));
  return acc / static_cast<double>(cell.samples.size());
}

KdeModel kde_fit(const RadioMap& history, const std::vector<int>& rp_points) {
  KdeModel model;
  model.ap_ids = history.ap_ids;
  model.dim = history.mask.active_count();
  model.cells.resize(rp_points.size());

  for (std::size_t r = 0; r < rp_points.size(); ++r) {
    const int p = rp_points[r];
    if (p < 0 || p >= static_cast<int>(history.points.size()))
      throw std::invalid_argument("RP index out of range");
    model.cells[r].resize(history.ap_ids.size());
    for (std::size_t a = 0; a < history.ap_ids.size(); ++a) {
      const auto& samples = history.points[p].samples[a];
      if (samples.empty()) continue;  // unheard AP at this RP
      if (samples.size() < 30)
        throw std::invalid_argument("KDE needs >= 30 samples per (RP, AP); recollect");
      auto& per_sub = model.cells[r][a];
      per_sub.resize(model.dim);
      for (int d = 0; d < model.dim; ++d) {
        per_sub[d].samples.reserve(samples.size());
        for (const auto& s : samples) per_sub[d].samples.push_back(s.values[d]);
        per_sub[d].bandwidth = silverman_bandwidth(per_sub[d].samples);
      }
    }
  }
  return model;
}

KdeDetection kde_detect(const KdeModel& model, const FreshRpSamples& fresh,
                        double p_value) {
  if (fresh.size() != model.cells.size())
    throw std::invalid_argument("fresh sample RP count does not match model");

  KdeDetection out;
  for (std::size_t a = 0; a < model.ap_ids.size(); ++a) {
    const ApId& id = model.ap_ids[a];
    std::vector<double> per_rp;
    for (std::size_t r = 0; r < fresh.size(); ++r) {
      const auto it = fresh[r].find(id);
      if (it == fresh[r].end()) continue;
      const auto& frames = it->second;
      if (frames.size() < 10)
        throw std::invalid_argument("KDE detection needs >= 10 fresh samples per (RP, AP)");
      if (model.cells[r][a].empty())
        throw std::invalid_argument("AP " + id + " missing from KDE model at RP " +
                                    std::to_string(r));

      // Geometric mean over subcarriers of the two-sided tail probability of
      // the fresh mean.
      double log_acc = 0.0;
      for (int d = 0; d < model.dim; ++d) {
        double mean = 0.0;
        for (const auto& f : frames) mean += f.values[d];
        mean /= static_cast<double>(frames.size());
        const double cdf = kde_cdf(model.cells[r][a][d], mean);
        const double tail = std::clamp(2.0 * std::min(cdf, 1.0 - cdf), 1e-300, 1.0);
        log_acc += std::log(tail);
      }
      per_rp.push_back(std::exp(log_acc / model.dim));
    }
    if (per_rp.empty())
      throw std::invalid_argument("no fresh samples for AP " + id);
    std::sort(per_rp.begin(), per_rp.end());
    const std::size_t n = per_rp.size();
    const double median =
        n % 2 == 1 ? per_rp[n / 2] : 0.5 * (per_rp[n / 2 - 1] + per_rp[n / 2]);
    out.aggregate[id] = median;
    out.altered[id] = median < p_value;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subset generation

std::vector<std::set<ApId>> gen_subsets(const std::vector<ApId>& aps, int budget,
                                        std::uint64_t rng_seed) {
  const int n = static_cast<int>(aps.size());
  if (n < 4) throw std::invalid_argument("subset generation needs at least 4 APs");
  if (budget < n) throw std::invalid_argument("subset budget must be >= number of APs");

  const int max_size = std::min(5, n);
  // Total number of subsets of sizes 3..max_size.
  auto choose = [](int nn, int kk) {
    double c = 1.0;
    for (int i = 1; i <= kk; ++i) c = c * (nn - kk + i) / i;
    return static_cast<long long>(c + 0.5);
  };
  long long total = 0;
  for (int s = 3; s <= max_size; ++s) total += choose(n, s);

  std::vector<std::set<ApId>> subsets;
  if (total <= budget) {
    // Enumerate everything.
    for (int s = 3; s <= max_size; ++s) {
      std::vector<int> idx(s);
      for (int i = 0; i < s; ++i) idx[i] = i;
      while (true) {
        std::set<ApId> sub;
        for (int i : idx) sub.insert(aps[i]);
        subsets.push_back(std::move(sub));
        int i = s - 1;
        while (i >= 0 && idx[i] == n - s + i) --i;
        if (i < 0) break;
        ++idx[i];
        for (int j = i + 1; j < s; ++j) idx[j] = idx[j - 1] + 1;
      }
    }
    return subsets;
  }

  // Round-robin construction: deal APs from repeated shuffles so per-AP
  // appearance counts stay within one of each other; reshuffles are rejected
  // while they would duplicate an AP inside the current subset.
  Rng rng(rng_seed);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  auto shuffle = [&] {
    for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(0, i)]);
  };
  shuffle();
  int cursor = 0;

  subsets.reserve(budget);
  for (int b = 0; b < budget; ++b) {
    const int size = rng.uniform_int(3, max_size);
    std::set<ApId> sub;
    while (static_cast<int>(sub.size()) < size) {
      if (cursor == n) {
        for (int attempt = 0; attempt < 64; ++attempt) {
          shuffle();
          bool clash = false;
          const int need = size - static_cast<int>(sub.size());
          for (int i = 0; i < need && i < n; ++i)
            if (sub.count(aps[order[i]])) clash = true;
          if (!clash) break;
        }
        cursor = 0;
      }
      sub.insert(aps[order[cursor++]]);
    }
    subsets.push_back(std::move(sub));
  }
  return subsets;
}

// ---------------------------------------------------------------------------
// DBSCAN and the k-distance heuristic

std::vector<double> k_distances(const std::vector<Position>& points, int k) {
  const int n = static_cast<int>(points.size());
  std::vector<double> kd(n, 0.0);
  std::vector<double> row(n);
  for (int i = 0; i < n; ++i) {
    int m = 0;
    for (int j = 0; j < n; ++j)
      if (j != i) row[m++] = distance(points[i], points[j]);
    std::nth_element(row.begin(), row.begin() + (k - 1), row.begin() + m);
    kd[i] = row[k - 1];
  }
  return kd;
}

double auto_rho(const std::vector<Position>& points, int k) {
  const int n = static_cast<int>(points.size());
  if (n <= k) throw std::invalid_argument("auto_rho needs more points than k");

  std::vector<double> kd = k_distances(points, k);
  std::sort(kd.begin(), kd.end());
  if (kd.back() <= 1e-12) return 1e-3;  // all points (nearly) identical

  // Maximum curvature of the ascending k-distance curve.
  int best = 1;
  double best_curv = -std::numeric_limits<double>::infinity();
  for (int i = 1; i + 1 < n; ++i) {
    const double curv = kd[i + 1] - 2.0 * kd[i] + kd[i - 1];
    if (curv > best_curv) {
      best_curv = curv;
      best = i;
    }
  }
  return std::max(kd[best], 1e-3);
}

ClusterLabeling dbscan(const std::vector<Position>& points, double rho, int min_pts) {
  if (min_pts < 1) throw std::invalid_argument("min_pts must be >= 1");
  const int n = static_cast<int>(points.size());
  ClusterLabeling out;
  out.rho = rho;
  out.min_pts = min_pts;
  out.label.assign(n, kOutlier);

  std::vector<std::vector<int>> neighbors(n);  // includes the point itself
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (distance(points[i], points[j]) <= rho) neighbors[i].push_back(j);

  std::vector<bool> core(n);
  for (int i = 0; i < n; ++i) core[i] = static_cast<int>(neighbors[i].size()) >= min_pts;

  // Clusters are the connected components of core points; expansion by BFS.
  int next_cluster = 0;
  for (int i = 0; i < n; ++i) {
    if (!core[i] || out.label[i] != kOutlier) continue;
    const int cid = next_cluster++;
    std::deque<int> queue{i};
    out.label[i] = cid;
    while (!queue.empty()) {
      const int p = queue.front();
      queue.pop_front();
      if (!core[p]) continue;
      for (int q : neighbors[p]) {
        if (!core[q] || out.label[q] != kOutlier) continue;
        out.label[q] = cid;
        queue.push_back(q);
      }
    }
  }

  // Border points join the cluster of their nearest core point (ties by
  // smaller cluster id), which keeps labeling order-independent.
  for (int i = 0; i < n; ++i) {
    if (core[i] || out.label[i] != kOutlier) continue;
    double best = std::numeric_limits<double>::infinity();
    int best_cid = kOutlier;
    for (int q : neighbors[i]) {
      if (!core[q]) continue;
      const double d = distance(points[i], points[q]);
      if (d < best || (d == best && out.label[q] < best_cid)) {
        best = d;
        best_cid = out.label[q];
      }
    }
    out.label[i] = best_cid;
  }

  out.n_clusters = next_cluster;
  out.cluster_sizes.assign(next_cluster, 0);
  for (int i = 0; i < n; ++i)
    if (out.label[i] != kOutlier) ++out.cluster_sizes[out.label[i]];
  return out;
}

// ---------------------------------------------------------------------------
// Jenks and the joint approach

int jenks_breakpoint(const std::vector<double>& sorted_values, double eta) {
  const int n = static_cast<int>(sorted_values.size());
  if (n < 2) throw std::invalid_argument("Jenks needs at least two values");

  auto class_ss = [&](int lo, int hi) {  // [lo, hi)
    double mean = 0.0;
    for (int i = lo; i < hi; ++i) mean += sorted_values[i];
    mean /= (hi - lo);
    double ss = 0.0;
    for (int i = lo; i < hi; ++i) {
      const double d = sorted_values[i] - mean;
      ss += d * d;
    }
    return ss;
  };

  int best_bp = 1;
  double best_obj = std::numeric_limits<double>::infinity();
  // Both classes stay nonempty; ties prefer the smaller upper class.
  for (int bp = 1; bp < n; ++bp) {
    const double obj = class_ss(0, bp) + eta * class_ss(bp, n);
    if (obj < best_obj || (obj == best_obj && bp > best_bp)) {
      best_obj = obj;
      best_bp = bp;
    }
  }
  return best_bp;
}

double mean_pairwise_distance(const std::vector<Position>& points) {
  const int n = static_cast<int>(points.size());
  if (n < 2) return 0.0;
  double acc = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) acc += distance(points[i], points[j]);
  return acc / (0.5 * n * (n - 1));
}

JointOutcome joint_detect(const std::vector<SubsetResult>& sample,
                          const Baseline& baseline, const JointParams& params) {
  if (sample.size() < 20)
    throw std::invalid_argument("joint detection needs at least 20 subset results");

  std::vector<Position> points;
  points.reserve(sample.size());
  std::set<ApId> all_aps;
  for (const auto& r : sample) {
    points.push_back(r.estimate);
    all_aps.insert(r.ap_subset.begin(), r.ap_subset.end());
  }

  JointOutcome out;
  const double rho = auto_rho(points, params.kdist_k);
  out.labeling = dbscan(points, rho, params.min_pts);
  out.labeling.k_distances = k_distances(points, params.kdist_k);

  // Sizes of the two largest clusters decide which evidence to count.
  int gtc = -1, c1 = 0, c2 = 0;
  for (int c = 0; c < out.labeling.n_clusters; ++c) {
    const int size = out.labeling.cluster_sizes[c];
    if (size > c1) {
      c2 = c1;
      c1 = size;
      gtc = c;
    } else if (size > c2) {
      c2 = size;
    }
  }

  for (const auto& id : all_aps) out.frequency[id] = 0.0;

  const bool cluster_branch =
      out.labeling.n_clusters == 1 ||
      (out.labeling.n_clusters >= 2 && static_cast<double>(c1) / c2 > params.r0);
  out.used_outlier_branch = !cluster_branch;

  if (cluster_branch) {
    for (std::size_t i = 0; i < sample.size(); ++i) {
      if (out.labeling.label[i] == gtc) continue;
      for (const auto& id : sample[i].ap_subset) out.frequency[id] += 1.0;
    }
  } else {
    const auto& kd = out.labeling.k_distances;
    const double kd_min = *std::min_element(kd.begin(), kd.end());
    const double kd_max = *std::max_element(kd.begin(), kd.end());
    const double span = kd_max - kd_min;
    for (std::size_t i = 0; i < sample.size(); ++i) {
      if (out.labeling.label[i] != kOutlier) continue;
      const double w = span > 0.0 ? (kd[i] - kd_min) / span : 0.0;
      for (const auto& id : sample[i].ap_subset) out.frequency[id] += w;
    }
  }

  out.dispersion = mean_pairwise_distance(points);
  const double expo = -(out.dispersion - params.eta_baseline_multiplier * baseline.a) /
                      std::max(baseline.sigma, 1e-9);
  out.eta = std::exp(std::clamp(expo, -700.0, 700.0)) + 1.0;

  // Jenks split on frequencies sorted ascending (ties broken by AP order so
  // the outcome is deterministic); the upper class is the alleged set.
  std::vector<std::pair<double, ApId>> ranked;
  for (const auto& [id, f] : out.frequency) ranked.emplace_back(f, id);
  std::sort(ranked.begin(), ranked.end());
  std::vector<double> values;
  values.reserve(ranked.size());
  for (const auto& [f, id] : ranked) values.push_back(f);

  const int bp = jenks_breakpoint(values, out.eta);
  for (std::size_t i = bp; i < ranked.size(); ++i) out.alleged.insert(ranked[i].second);
  out.low_confidence = ranked.back().first <= 0.0;
  return out;
}

JointOutcome joint_detect(const std::vector<SubsetResult>& sample,
                          const Baseline& baseline, double r0) {
  JointParams params;
  params.r0 = r0;
  return joint_detect(sample, baseline, params);
}

// ---------------------------------------------------------------------------
// Sequential analysis

std::set<ApId> DetectionReport::altered_set() const {
  std::set<ApId> out;
  for (const auto& [id, v] : verdicts)
    if (v.altered) out.insert(id);
  return out;
}

DetectionReport sequential_detect(
    const std::function<std::optional<JointOutcome>()>& next_sample,
    const std::vector<ApId>& aps, const SequentialParams& params,
    const Baseline& baseline, double r0) {
  if (params.min_seq < 1 || params.max_seq < params.min_seq)
    throw std::invalid_argument("need 1 <= min_seq <= max_seq");
  if (!(params.l0 > 0.5 && params.l0 < 1.0))
    throw std::invalid_argument("l0 must lie in (0.5, 1)");

  std::vector<JointOutcome> outcomes;
  auto pull = [&]() -> bool {
    std::optional<JointOutcome> s = next_sample();
    if (!s.has_value()) return false;
    outcomes.push_back(std::move(*s));
    return true;
  };

  for (int i = 0; i < params.min_seq; ++i)
    if (!pull())
      throw std::runtime_error("sample stream exhausted before min_seq samples");

  std::map<ApId, int> allegations;
  for (const auto& id : aps) allegations[id] = 0;
  for (const auto& o : outcomes)
    for (const auto& id : o.alleged)
      if (allegations.count(id)) ++allegations[id];

  DetectionReport report;
  report.baseline = baseline;
  report.r0 = r0;

  auto level = [&](const ApId& id) {
    return static_cast<double>(allegations[id]) / outcomes.size();
  };
  auto decide_threshold = [&](const ApId& id) -> std::optional<ApVerdict> {
    const double l = level(id);
    if (l >= params.l0) return ApVerdict{true, l, 0.0, false};
    if (l <= 1.0 - params.l0) return ApVerdict{false, l, 0.0, false};
    return std::nullopt;
  };

  std::set<ApId> undecided(aps.begin(), aps.end());
  for (const auto& id : aps)
    if (auto v = decide_threshold(id)) {
      report.verdicts[id] = *v;
      undecided.erase(id);
    }

  // Mirrors the per-AP while loop of the sequential algorithm, with all APs
  // sharing one sample stream.
  int consumed = params.min_seq;
  while (!undecided.empty() && consumed <= params.max_seq) {
    if (!pull()) break;  // stream ended: fall through to the budget rule
    ++consumed;
    const auto& fresh = outcomes.back();
    for (const auto& id : fresh.alleged)
      if (allegations.count(id)) ++allegations[id];
    for (auto it = undecided.begin(); it != undecided.end();) {
      if (auto v = decide_threshold(*it)) {
        report.verdicts[*it] = *v;
        it = undecided.erase(it);
      } else {
        ++it;
      }
    }
  }

  // Budget exhausted: the explicit 0.5 rule.
  for (const auto& id : undecided) {
    const double l = level(id);
    report.verdicts[id] = ApVerdict{l >= 0.5, l, 0.0, true};
  }

  report.samples_used = static_cast<int>(outcomes.size());
  double mean_d = 0.0, mean_eta = 0.0;
  std::map<ApId, double> freq_sum;
  for (const auto& o : outcomes) {
    mean_d += o.dispersion;
    mean_eta += o.eta;
    for (const auto& [id, f] : o.frequency) freq_sum[id] += f;
  }
  report.mean_dispersion = mean_d / outcomes.size();
  report.mean_eta = mean_eta / outcomes.size();
  for (auto& [id, v] : report.verdicts)
    v.mean_frequency = freq_sum.count(id) ? freq_sum[id] / outcomes.size() : 0.0;
  return report;
}

// ---------------------------------------------------------------------------
// Simulator drivers

std::vector<SubsetResult> localize_subsets(const locate::MapFeatures& features,
                                           const locate::NeighborPortionTable& table,
                                           const Capture& capture,
                                           const std::vector<std::set<ApId>>& subsets,
                                           double k_prime) {
  const Fingerprint query =
      locate::query_fingerprint(capture, features.map->mask, features.map->ap_ids);
  std::vector<SubsetResult> results;
  results.reserve(subsets.size());
  for (const auto& sub : subsets) {
    SubsetResult r;
    r.ap_subset = sub;
    r.estimate = locate::eeknn(query, features, k_prime, table, sub);
    results.push_back(std::move(r));
  }
  return results;
}

Baseline calibrate_baseline(const synth::Scenario& sc, const RadioMap& map,
                            int n_samples, std::uint64_t seed,
                            const SampleConfig& cfg) {
  const locate::MapFeatures features = locate::MapFeatures::build(map);
  const locate::NeighborPortionTable table = locate::build_portion_table(map);

  Rng rng(mix_seed(seed, 0x42415345));
  std::vector<double> dispersions;
  dispersions.reserve(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    const Position rx{rng.uniform(0.1, sc.room.width - 0.1),
                      rng.uniform(0.1, sc.room.height - 0.1)};
    const Capture capture =
        synth::generate_capture(sc, rx, cfg.frames_per_burst, mix_seed(seed, 1000 + i));
    // Same per-sample subset redraw as the online detection path.
    const std::vector<std::set<ApId>> subsets = gen_subsets(
        sc.ap_ids(), cfg.subset_budget, mix_seed(seed, 0x53554253 + i));
    const std::vector<SubsetResult> results =
        localize_subsets(features, table, capture, subsets, cfg.k_prime);
    std::vector<Position> pts;
    pts.reserve(results.size());
    for (const auto& r : results) pts.push_back(r.estimate);
    dispersions.push_back(mean_pairwise_distance(pts));
  }

  Baseline b;
  for (double d : dispersions) b.a += d;
  b.a /= dispersions.size();
  double var = 0.0;
  for (double d : dispersions) var += (d - b.a) * (d - b.a);
  b.sigma = dispersions.size() > 1
                ? std::sqrt(var / (dispersions.size() - 1))
                : 1e-6;
  b.sigma = std::max(b.sigma, 1e-6);
  return b;
}

}  // namespace crisloc::detect

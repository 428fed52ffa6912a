#include "crisloc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crisloc::eval {

void accumulate(DetectionCounts& counts, const std::vector<ApId>& all_aps,
                const std::set<ApId>& truth_altered, const std::set<ApId>& alarms) {
  for (const auto& id : all_aps) {
    const bool altered = truth_altered.count(id) > 0;
    const bool alarmed = alarms.count(id) > 0;
    ApCounts& c = counts[id];
    if (altered && alarmed) ++c.tp;
    else if (!altered && alarmed) ++c.fp;
    else if (altered && !alarmed) ++c.fn;
    else ++c.tn;
  }
}

MicroMetrics micro_metrics(const DetectionCounts& counts) {
  long tp = 0, fp = 0, fn = 0;
  for (const auto& [id, c] : counts) {
    tp += c.tp;
    fp += c.fp;
    fn += c.fn;
  }
  MicroMetrics m;
  if (tp + fp > 0) m.precision = static_cast<double>(tp) / (tp + fp);
  if (tp + fn > 0) m.recall = static_cast<double>(tp) / (tp + fn);
  if (m.precision && m.recall && (*m.precision + *m.recall) > 0.0)
    m.f1 = (*m.precision * *m.recall) / ((*m.precision + *m.recall) / 2.0);
  return m;
}

ConfusionMatrix confusion_matrix(const std::vector<ApId>& all_aps,
                                 const std::vector<Trial>& trials) {
  ConfusionMatrix cm;
  cm.aps = all_aps;
  const std::size_t rows = all_aps.size() + 1;  // + "none"
  cm.percent.assign(rows, std::vector<double>(all_aps.size(), 0.0));
  cm.trials_per_row.assign(rows, 0);

  auto row_of = [&](const std::optional<ApId>& altered) -> std::size_t {
    if (!altered.has_value()) return all_aps.size();
    for (std::size_t i = 0; i < all_aps.size(); ++i)
      if (all_aps[i] == *altered) return i;
    throw std::invalid_argument("trial alters unknown AP: " + *altered);
  };

  for (const auto& t : trials) {
    const std::size_t r = row_of(t.altered);
    ++cm.trials_per_row[r];
    for (std::size_t c = 0; c < all_aps.size(); ++c)
      if (t.alarms.count(all_aps[c])) cm.percent[r][c] += 1.0;
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (cm.trials_per_row[r] == 0) continue;
    for (auto& v : cm.percent[r]) v = 100.0 * v / cm.trials_per_row[r];
  }
  return cm;
}

ErrorStats error_stats(const std::vector<std::pair<Position, Position>>& estimate_truth) {
  if (estimate_truth.empty()) throw std::invalid_argument("no estimates");

  std::vector<double> errs;
  errs.reserve(estimate_truth.size());
  for (const auto& [est, truth] : estimate_truth) errs.push_back(distance(est, truth));
  std::sort(errs.begin(), errs.end());

  auto quantile = [&](double q) {
    const double pos = q * (errs.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= errs.size()) return errs.back();
    return errs[lo] + (pos - lo) * (errs[lo + 1] - errs[lo]);
  };

  ErrorStats s;
  for (double e : errs) s.mean += e;
  s.mean /= errs.size();
  s.median = quantile(0.5);
  s.p75 = quantile(0.75);
  s.p90 = quantile(0.9);
  s.p95 = quantile(0.95);
  s.max = errs.back();
  s.cdf.reserve(errs.size());
  for (std::size_t i = 0; i < errs.size(); ++i)
    s.cdf.emplace_back(errs[i], static_cast<double>(i + 1) / errs.size());
  return s;
}

std::vector<double> rss_feature(const Capture& capture, const std::vector<ApId>& ap_ids) {
  std::vector<double> feat(ap_ids.size(), kUnheardRssDbm);
  for (std::size_t a = 0; a < ap_ids.size(); ++a) {
    const auto it = capture.find(ap_ids[a]);
    if (it == capture.end()) continue;
    double acc = 0.0;
    int n = 0;
    for (const auto& f : it->second)
      if (f.heard()) {
        // Scan APIs report whole decibels; the baseline sees that granularity.
        acc += std::round(f.rss_dbm);
        ++n;
      }
    if (n > 0) feat[a] = acc / n;
  }
  return feat;
}

}  // namespace crisloc::eval

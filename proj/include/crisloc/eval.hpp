#pragma once

#include <optional>
#include <set>
#include <vector>

#include "crisloc/model.hpp"

namespace crisloc::eval {

struct ApCounts {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  long tn = 0;
};

/// Per-AP detection counts (the redefined per-AP TP/TN/FP/FN).
using DetectionCounts = std::map<ApId, ApCounts>;

/// Adds one trial: alarms vs ground-truth altered set, per AP.
void accumulate(DetectionCounts& counts, const std::vector<ApId>& all_aps,
                const std::set<ApId>& truth_altered, const std::set<ApId>& alarms);

struct MicroMetrics {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
};

/// Micro-averaged precision/recall/F1; undefined denominators propagate as
/// empty optionals rather than zeros.
MicroMetrics micro_metrics(const DetectionCounts& counts);

struct Trial {
  std::optional<ApId> altered;  // nullopt = the "none" row
  std::set<ApId> alarms;
};

/// Non-standard confusion matrix: row i = percentage of trials with AP i
/// altered in which each AP was alarmed; the final row covers no-alteration
/// trials. Row sums are unconstrained.
struct ConfusionMatrix {
  std::vector<ApId> aps;
  std::vector<std::vector<double>> percent;  // aps.size()+1 rows
  std::vector<int> trials_per_row;
};

ConfusionMatrix confusion_matrix(const std::vector<ApId>& all_aps,
                                 const std::vector<Trial>& trials);

struct ErrorStats {
  double mean = 0.0;
  double median = 0.0;
  double p75 = 0.0;
  double p90 = 0.0;
  double p95 = 0.0;
  double max = 0.0;
  std::vector<std::pair<double, double>> cdf;  // (error, cumulative fraction)
};

ErrorStats error_stats(const std::vector<std::pair<Position, Position>>& estimate_truth);

/// RSS-only baseline features: per-AP mean RSS in dBm (unheard stays -100),
/// in ap_ids order. Matched with the same WKNN/EEKNN cores.
std::vector<double> rss_feature(const Capture& capture, const std::vector<ApId>& ap_ids);

}  // namespace crisloc::eval

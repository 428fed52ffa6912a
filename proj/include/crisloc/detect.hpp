#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "crisloc/locate.hpp"
#include "crisloc/model.hpp"
#include "crisloc/synth.hpp"

namespace crisloc::detect {

// ---------------------------------------------------------------------------
// Detection with reference points: per-subcarrier Gaussian KDE.

struct KdeCell {
  std::vector<double> samples;
  double bandwidth = 0.0;
};

struct KdeModel {
  std::vector<ApId> ap_ids;
  int dim = 0;                                      // kept subcarriers
  std::vector<std::vector<std::vector<KdeCell>>> cells;  // [rp][ap][subcarrier]
};

double kde_pdf(const KdeCell& cell, double x);
double kde_cdf(const KdeCell& cell, double x);

/// Silverman's rule of thumb with the robust IQR variant.
double silverman_bandwidth(const std::vector<double>& samples);

/// Fits one univariate density per (RP, AP, kept subcarrier) from the
/// historical calibrated samples stored in the map at the given RP points.
/// Requires >= 30 samples per heard (RP, AP).
KdeModel kde_fit(const RadioMap& history, const std::vector<int>& rp_points);

/// Fresh calibrated samples grouped per RP (outer) and AP (inner).
using FreshRpSamples = std::vector<std::map<ApId, std::vector<AmplitudeVector>>>;

struct KdeDetection {
  std::map<ApId, bool> altered;
  std::map<ApId, double> aggregate;  // median-over-RP geometric-mean tail prob
};

/// Two-sided tail probability of the fresh sample mean under each fitted
/// density; geometric mean across subcarriers, median across RPs; an AP is
/// altered when the aggregate falls below p_value.
KdeDetection kde_detect(const KdeModel& model, const FreshRpSamples& fresh,
                        double p_value = 0.05);

// ---------------------------------------------------------------------------
// Detection without reference points.

/// Balanced AP subsets of size 3..5. Enumerates everything when it fits the
/// budget, otherwise round-robin sampling with per-AP appearance counts
/// differing by at most one.
std::vector<std::set<ApId>> gen_subsets(const std::vector<ApId>& aps, int budget,
                                        std::uint64_t rng_seed);

constexpr int kOutlier = -1;

struct ClusterLabeling {
  std::vector<int> label;  // cluster id (0-based) or kOutlier
  std::vector<double> k_distances;
  double rho = 0.0;
  int min_pts = 0;
  int n_clusters = 0;
  std::vector<int> cluster_sizes;
};

/// DBSCAN with neighbor counts including the point itself. Border points are
/// attached to the cluster of their nearest core point so labeling is
/// deterministic and order-independent.
ClusterLabeling dbscan(const std::vector<Position>& points, double rho, int min_pts);

/// k-distance knee heuristic: the k-distance at the largest second difference
/// of the ascending k-distance curve. Degenerate inputs return a 1e-3 floor.
double auto_rho(const std::vector<Position>& points, int k = 3);

std::vector<double> k_distances(const std::vector<Position>& points, int k);

struct SubsetResult {
  std::set<ApId> ap_subset;
  Position estimate;
};

struct Baseline {
  double a = 0.0;      // mean dispersion with no AP altered
  double sigma = 1.0;  // its standard deviation
};

struct JointParams {
  double r0 = 2.0;
  int min_pts = 4;  // double the data dimension (2-D positions)
  int kdist_k = 3;
  double eta_baseline_multiplier = 2.0;  // the "2a" in eta's exponent
};

struct JointOutcome {
  std::map<ApId, double> frequency;
  std::set<ApId> alleged;
  double dispersion = 0.0;
  double eta = 1.0;
  bool used_outlier_branch = false;
  bool low_confidence = false;
  ClusterLabeling labeling;
};

/// Cluster-outlier joint approach on one sample of subset localizations.
JointOutcome joint_detect(const std::vector<SubsetResult>& sample,
                          const Baseline& baseline, double r0);
JointOutcome joint_detect(const std::vector<SubsetResult>& sample,
                          const Baseline& baseline, const JointParams& params);

/// Weighted Jenks 2-class split of sorted values: minimizes
/// SS(P1) + eta * SS(P2) over breakpoints, P2 being the upper class. Ties
/// prefer the smaller upper class. Returns the first index of P2.
int jenks_breakpoint(const std::vector<double>& sorted_values, double eta);

// An 8-sample minimum keeps one structured co-suspect from crossing l0 off
// the first handful of samples; decisions still land well inside max_seq.
struct SequentialParams {
  int min_seq = 8;
  int max_seq = 15;
  double l0 = 0.8;
};

struct ApVerdict {
  bool altered = false;
  double reliability = 0.0;  // l at decision time
  double mean_frequency = 0.0;
  bool decided_by_budget = false;
};

struct DetectionReport {
  std::map<ApId, ApVerdict> verdicts;
  double mean_dispersion = 0.0;
  double mean_eta = 1.0;
  Baseline baseline;
  double r0 = 2.0;
  int samples_used = 0;

  std::set<ApId> altered_set() const;
};

/// Sequential analysis over a lazily-pulled stream of joint outcomes. Each AP
/// follows the min_seq / max_seq / l0 branch structure; undecided APs at
/// budget exhaustion are altered iff l >= 0.5. Throws if the stream ends
/// before min_seq samples.
DetectionReport sequential_detect(
    const std::function<std::optional<JointOutcome>()>& next_sample,
    const std::vector<ApId>& aps, const SequentialParams& params,
    const Baseline& baseline = {}, double r0 = 2.0);

// ---------------------------------------------------------------------------
// Drivers tying the joint approach to the simulator.

struct SampleConfig {
  int subset_budget = 60;
  int frames_per_burst = 60;
  double k_prime = 1.0;
  JointParams joint;
};

/// Localizes one fresh capture with every AP subset.
std::vector<SubsetResult> localize_subsets(const locate::MapFeatures& features,
                                           const locate::NeighborPortionTable& table,
                                           const Capture& capture,
                                           const std::vector<std::set<ApId>>& subsets,
                                           double k_prime = 1.0);

/// Mean and standard deviation of the overall dispersion on an unaltered
/// scenario; feeds the adaptive Jenks factor.
Baseline calibrate_baseline(const synth::Scenario& sc, const RadioMap& map,
                            int n_samples, std::uint64_t seed,
                            const SampleConfig& cfg = {});

double mean_pairwise_distance(const std::vector<Position>& points);

}  // namespace crisloc::detect

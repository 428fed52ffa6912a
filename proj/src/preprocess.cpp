#include "crisloc/preprocess.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "crisloc/log.hpp"

namespace crisloc::preprocess {

namespace {

// Linear-interpolation quantile of already-sorted data.
double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * (sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - lo;
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

int subcarrier_count(const std::vector<Capture>& per_position) {
  for (const auto& cap : per_position)
    for (const auto& [ap, frames] : cap)
      for (const auto& f : frames) return static_cast<int>(f.subcarriers.size());
  throw std::invalid_argument("no frames supplied");
}

}  // namespace

CvStats compute_cv(const std::vector<Capture>& per_position) {
  const int S = subcarrier_count(per_position);
  CvStats stats;
  stats.mean.assign(S, 0.0);
  stats.stddev.assign(S, 0.0);
  stats.cv.assign(S, 0.0);
  stats.valid.assign(S, false);

  std::vector<double> cv_sum(S, 0.0), mean_sum(S, 0.0), sd_sum(S, 0.0);
  std::vector<int> cv_n(S, 0);

  for (const auto& cap : per_position) {
    for (const auto& [ap, frames] : cap) {
      std::vector<const CsiFrame*> heard;
      for (const auto& f : frames)
        if (f.heard()) heard.push_back(&f);
      if (heard.empty()) continue;
      if (heard.size() < 2)
        throw std::invalid_argument(
            "subcarrier filter needs at least 2 frames per heard capture");

      // AGC is cancelled per frame (using all subcarriers) before computing
      // variability, otherwise the per-frame gain swamps every CV.
      const std::size_t n = heard.size();
      std::vector<std::vector<double>> rescaled(n, std::vector<double>(S, 0.0));
      for (std::size_t i = 0; i < n; ++i) {
        double sumsq = 0.0;
        for (int s = 0; s < S; ++s) {
          const double a = std::abs(heard[i]->subcarriers[s]);
          rescaled[i][s] = a;
          sumsq += a * a;
        }
        if (sumsq <= 0.0) continue;
        const double scale = std::sqrt(dbm_to_mw(heard[i]->rss_dbm) / sumsq);
        for (int s = 0; s < S; ++s) rescaled[i][s] *= scale;
      }

      for (int s = 0; s < S; ++s) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) m += rescaled[i][s];
        m /= static_cast<double>(n);
        if (m <= 0.0) continue;
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = rescaled[i][s] - m;
          var += d * d;
        }
        var /= static_cast<double>(n - 1);
        const double sd = std::sqrt(var);
        mean_sum[s] += m;
        sd_sum[s] += sd;
        cv_sum[s] += sd / m;
        cv_n[s] += 1;
      }
    }
  }

  for (int s = 0; s < S; ++s) {
    if (cv_n[s] == 0) continue;
    stats.valid[s] = true;
    stats.mean[s] = mean_sum[s] / cv_n[s];
    stats.stddev[s] = sd_sum[s] / cv_n[s];
    stats.cv[s] = cv_sum[s] / cv_n[s];
  }
  return stats;
}

SubcarrierFilterResult subcarrier_filter(const std::vector<Capture>& per_position,
                                         double kappa) {
  const int S = subcarrier_count(per_position);
  SubcarrierFilterResult res;
  res.stats = compute_cv(per_position);
  res.mask.keep.assign(S, false);

  // The two halves of the band behave differently; threshold each separately.
  for (int half = 0; half < 2; ++half) {
    const int lo = half == 0 ? 0 : S / 2;
    const int hi = half == 0 ? S / 2 : S;
    std::vector<double> cvs;
    for (int s = lo; s < hi; ++s)
      if (res.stats.valid[s]) cvs.push_back(res.stats.cv[s]);
    if (cvs.empty()) continue;
    std::sort(cvs.begin(), cvs.end());
    const double median = quantile_sorted(cvs, 0.5);
    const double iqr = quantile_sorted(cvs, 0.75) - quantile_sorted(cvs, 0.25);
    // The epsilon keeps degenerate inputs (every CV equal up to rounding)
    // from tripping on a zero-width IQR; real unstable subcarriers exceed
    // the threshold by orders of magnitude.
    const double threshold = median + kappa * iqr + 1e-12 * (1.0 + median);
    (half == 0 ? res.threshold_lower : res.threshold_upper) = threshold;
    for (int s = lo; s < hi; ++s)
      if (res.stats.valid[s] && res.stats.cv[s] <= threshold) res.mask.keep[s] = true;
  }

  const int survivors = res.mask.active_count();
  if (survivors < kMinActiveSubcarriers)
    throw std::runtime_error("only " + std::to_string(survivors) +
                             " subcarriers survive filtering; recollect CSI");
  return res;
}

std::vector<double> mahalanobis_distances(const std::vector<AmplitudeVector>& frames) {
  const int n = static_cast<int>(frames.size());
  const int d = static_cast<int>(frames.front().values.size());

  Eigen::MatrixXd X(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) X(i, j) = frames[i].values[j];

  const Eigen::RowVectorXd mu = X.colwise().mean();
  const Eigen::MatrixXd centered = X.rowwise() - mu;
  Eigen::MatrixXd sigma = (centered.transpose() * centered) / double(n - 1);
  const double eps = 1e-6 * sigma.trace() / d;
  sigma += eps * Eigen::MatrixXd::Identity(d, d);

  Eigen::LDLT<Eigen::MatrixXd> ldlt(sigma);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw std::runtime_error("frame covariance singular even after regularization");

  std::vector<double> dist(n);
  const Eigen::MatrixXd solved = ldlt.solve(centered.transpose());
  for (int i = 0; i < n; ++i)
    dist[i] = std::sqrt(std::max(0.0, centered.row(i).dot(solved.col(i))));
  return dist;
}

std::vector<AmplitudeVector> frame_filter(const std::vector<AmplitudeVector>& frames) {
  const int n = static_cast<int>(frames.size());
  if (n == 0) throw std::invalid_argument("no frames");
  const int d = static_cast<int>(frames.front().values.size());
  if (n < std::max(30, 2 * d))
    throw std::invalid_argument("frame filter needs at least max(30, 2*dim) = " +
                                std::to_string(std::max(30, 2 * d)) +
                                " frames; recollect CSI");

  const std::vector<double> dist = mahalanobis_distances(frames);

  std::vector<double> sorted = dist;
  std::sort(sorted.begin(), sorted.end());

  const int cap10 = std::max(1, n / 10);           // never drop more than 10%
  const int drop5 = std::max(1, (n + 10) / 20);    // default: ~5% rounded

  // Consecutive gaps of the sorted curve; a removal cut is placed at the
  // largest gap inside the top decile when it clearly dominates.
  std::vector<double> gaps(n - 1);
  for (int i = 0; i + 1 < n; ++i) gaps[i] = sorted[i + 1] - sorted[i];
  std::vector<double> gsorted = gaps;
  std::sort(gsorted.begin(), gsorted.end());
  const double gap_median = quantile_sorted(gsorted, 0.5);

  int drop = drop5;
  double best_gap = 0.0;
  int best_cut = -1;  // number of frames above the gap
  for (int above = 1; above <= cap10; ++above) {
    const double g = gaps[n - above - 1];
    if (g > best_gap) {
      best_gap = g;
      best_cut = above;
    }
  }
  if (best_cut > 0 && best_gap > 5.0 * std::max(gap_median, 1e-300)) drop = best_cut;
  drop = std::min(drop, cap10);

  const double cutoff = sorted[n - drop];
  std::vector<AmplitudeVector> kept;
  kept.reserve(n - drop);
  int removed = 0;
  for (int i = 0; i < n; ++i) {
    if (dist[i] >= cutoff && removed < drop) {
      ++removed;
      continue;
    }
    kept.push_back(frames[i]);
  }
  return kept;
}

AmplitudeVector calibrate(const CsiFrame& frame, const SubcarrierMask& mask) {
  const std::vector<int> active = mask.active_indices();
  if (!frame.heard()) return AmplitudeVector(std::vector<double>(active.size(), 0.0));

  std::vector<double> amps(active.size());
  double sumsq = 0.0;
  for (std::size_t i = 0; i < active.size(); ++i) {
    amps[i] = std::abs(frame.subcarriers.at(active[i]));
    sumsq += amps[i] * amps[i];
  }
  if (sumsq <= 0.0)
    throw std::runtime_error("corrupt frame: finite RSS but all-zero CSI");

  const double scale = std::sqrt(dbm_to_mw(frame.rss_dbm) / sumsq);
  for (auto& a : amps) a *= scale;
  return AmplitudeVector(std::move(amps));
}

RadioMap build_radio_map(const SurveyCapture& survey, double grid_spacing,
                         const BuildOptions& opts) {
  if (survey.positions.size() != survey.captures.size())
    throw std::invalid_argument("survey positions and captures must align");

  const SubcarrierFilterResult filt = subcarrier_filter(survey.captures, opts.cv_kappa);

  std::set<ApId> ids;
  for (const auto& cap : survey.captures)
    for (const auto& [ap, frames] : cap) ids.insert(ap);

  RadioMap map;
  map.mask = filt.mask;
  map.ap_ids.assign(ids.begin(), ids.end());
  map.grid_spacing = grid_spacing;

  for (std::size_t p = 0; p < survey.positions.size(); ++p) {
    RadioMap::Point point;
    point.pos = survey.positions[p];
    point.samples.resize(map.ap_ids.size());
    for (std::size_t a = 0; a < map.ap_ids.size(); ++a) {
      const auto it = survey.captures[p].find(map.ap_ids[a]);
      if (it == survey.captures[p].end()) continue;
      std::vector<AmplitudeVector> calibrated;
      for (const auto& f : it->second)
        if (f.heard()) calibrated.push_back(calibrate(f, map.mask));
      if (calibrated.empty()) continue;  // unheard AP: empty sample list
      point.samples[a] =
          opts.apply_frame_filter ? frame_filter(calibrated) : std::move(calibrated);
    }
    map.points.push_back(std::move(point));
  }
  validate(map);
  return map;
}

}  // namespace crisloc::preprocess

#pragma once

#include <vector>

#include "crisloc/model.hpp"

namespace crisloc::preprocess {

/// Per-subcarrier coefficient-of-variation statistics, averaged over every
/// (position, AP) capture that was heard. Entries for all-zero subcarriers
/// are left at zero with valid=false.
struct CvStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<double> cv;
  std::vector<bool> valid;
};

CvStats compute_cv(const std::vector<Capture>& per_position);

struct SubcarrierFilterResult {
  SubcarrierMask mask;
  CvStats stats;
  double threshold_lower = 0.0;  // CV cutoffs for the two band halves
  double threshold_upper = 0.0;
};

/// Removes subcarriers that are zero in every frame and those whose
/// position-averaged CV exceeds median + kappa*IQR, thresholded separately
/// for the lower and upper halves of the band. Throws if fewer than 8
/// subcarriers survive (recollect) or if any heard capture has < 2 frames.
SubcarrierFilterResult subcarrier_filter(const std::vector<Capture>& per_position,
                                         double kappa = 3.0);

/// Mahalanobis frame filter: drops roughly the top 5% of frames by distance,
/// preferring a cut at a clear gap inside the top decile. Never drops more
/// than 10%. Requires >= max(30, 2*dim) frames.
std::vector<AmplitudeVector> frame_filter(const std::vector<AmplitudeVector>& frames);

/// Distances used by frame_filter, exposed for inspection/tests.
std::vector<double> mahalanobis_distances(const std::vector<AmplitudeVector>& frames);

/// AGC cancellation: rescales masked amplitudes so their total power equals
/// the frame's RSS in mW. An unheard frame maps to the zero vector.
AmplitudeVector calibrate(const CsiFrame& frame, const SubcarrierMask& mask);

struct BuildOptions {
  double cv_kappa = 3.0;
  bool apply_frame_filter = true;
};

/// Full preprocessing pipeline: subcarrier filter -> per-frame calibration ->
/// frame filter, assembled into a RadioMap.
RadioMap build_radio_map(const SurveyCapture& survey, double grid_spacing,
                         const BuildOptions& opts = {});

}  // namespace crisloc::preprocess

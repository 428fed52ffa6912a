#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace crisloc {

/// RSS value encoding "AP not heard"; such frames carry all-zero subcarriers.
constexpr double kUnheardRssDbm = -100.0;

/// Minimum number of subcarriers a usable mask must keep.
constexpr int kMinActiveSubcarriers = 8;

inline double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }
inline double mw_to_dbm(double mw) { return 10.0 * std::log10(mw); }

struct Position {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Position& a, const Position& b) {
    return a.x == b.x && a.y == b.y;
  }
};

inline double distance(const Position& a, const Position& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

using ApId = std::string;

/// One overheard frame, AGC-distorted as captured. Subcarrier values are the
/// complex channel estimates; downstream processing uses amplitudes only.
struct CsiFrame {
  ApId ap;
  double timestamp = 0.0;  // seconds
  std::vector<std::complex<double>> subcarriers;
  double rss_dbm = kUnheardRssDbm;  // pre-AGC, in [-100, 0]
  std::int64_t sequence = 0;

  bool heard() const { return rss_dbm > kUnheardRssDbm; }
};

/// Calibrated, masked amplitude vector (all entries finite and >= 0).
struct AmplitudeVector {
  std::vector<double> values;

  AmplitudeVector() = default;
  explicit AmplitudeVector(std::vector<double> v) : values(std::move(v)) {}

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }

  friend bool operator==(const AmplitudeVector& a, const AmplitudeVector& b) {
    return a.values == b.values;
  }
};

struct SubcarrierMask {
  std::vector<bool> keep;

  int active_count() const;
  std::vector<int> active_indices() const;
};

/// Frames captured at one receiver position, grouped by AP.
using Capture = std::map<ApId, std::vector<CsiFrame>>;

/// Raw site-survey output: one capture per survey position.
struct SurveyCapture {
  std::vector<Position> positions;
  std::vector<Capture> captures;
};

/// Persisted fingerprint database. Every point stores a (possibly empty)
/// sample list for every AP in ap_ids order; all samples conform to the mask.
struct RadioMap {
  SubcarrierMask mask;
  std::vector<ApId> ap_ids;
  double grid_spacing = 0.0;

  struct Point {
    Position pos;
    std::vector<std::vector<AmplitudeVector>> samples;  // [ap_index][sample]
  };
  std::vector<Point> points;

  int ap_index(const ApId& id) const;

  /// Per-AP sample mean; zero vector of active length when the AP is unheard.
  AmplitudeVector mean_amplitude(int point_index, int ap_index) const;
};

/// Per-AP mean amplitudes concatenated in ap_ids order into one feature vector.
struct Fingerprint {
  std::vector<double> values;
};

/// Throws std::invalid_argument if any RadioMap invariant is violated.
void validate(const RadioMap& map);

Fingerprint concat_fingerprint(const RadioMap& map, int point_index,
                               const std::set<ApId>& ap_subset);

}  // namespace crisloc

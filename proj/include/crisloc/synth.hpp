#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "crisloc/model.hpp"

namespace crisloc::synth {

struct Wall {
  Position a;
  Position b;
};

/// Wall-attenuation-factor path loss parameters.
struct EnvironmentModel {
  double p_d0_dbm = -30.0;  // reference power at d0
  double d0 = 1.0;          // meters
  double n = 2.0;           // path-loss exponent
  double waf_db = 4.0;      // attenuation per wall
  int wall_cap = 3;         // cap C on counted walls
  std::vector<Wall> walls;
  double noise_sigma_db = 0.5;  // per-subcarrier log-amplitude noise
};

struct MultipathSource {
  double dx = 0.0;  // offset of the image source relative to the AP
  double dy = 0.0;
  double amplitude = 0.0;
  double phase = 0.0;
};

/// Per-AP channel shape: a smooth frequency-selective curve over subcarrier
/// index plus phaseless multipath built from a handful of image sources.
/// Redrawn whenever the AP is relocated.
struct GainProfile {
  std::vector<double> curve;
  std::vector<MultipathSource> sources;
};

struct AccessPoint {
  ApId id;
  Position pos;
  GainProfile profile;
  int revision = 0;     // bumped by move_ap
  bool altered = false;  // ground truth used by evaluation
};

struct AgcPolicy {
  double min_gain = 0.5;
  double max_gain = 8.0;
};

struct Room {
  double width = 8.0;
  double height = 6.0;
};

struct Scenario {
  EnvironmentModel env;
  Room room;
  int n_subcarriers = 64;
  std::vector<AccessPoint> aps;
  std::vector<Position> grid;
  double grid_spacing = 0.5;
  std::vector<int> rp_indices;  // survey grid indices acting as reference points
  std::uint64_t seed = 1;
  AgcPolicy agc;
  double anomaly_rate = 0.0;
  double unstable_noise_factor = 10.0;
  double multipath_wavelength = 1.5;  // spatial decorrelation scale, meters
  std::set<int> unstable_subcarriers;
  std::set<int> zero_subcarriers;

  int ap_index(const ApId& id) const;
  std::vector<Position> rp_positions() const;
  std::vector<ApId> ap_ids() const;
  std::set<ApId> altered_set() const;
};

struct ScenarioConfig {
  int grid_cols = 10;
  int grid_rows = 8;
  double grid_spacing = 0.5;
  int n_aps = 9;
  int n_rps = 8;
  int n_walls = 0;
  std::uint64_t seed = 1;
  double noise_sigma_db = 0.5;
  double anomaly_rate = 0.0;
  int n_subcarriers = 64;
};

/// Builds a rectangular-grid scenario with APs spread around the room and the
/// default Nexmon-style zero subcarriers.
Scenario make_scenario(const ScenarioConfig& cfg);

/// Eq.-style WAF model: P(d) = P(d0) - 10 n log10(d/d0) - min(n_W, C) WAF.
/// Distance is clamped to d0/10 so coincident points stay defined.
double path_loss_dbm(const EnvironmentModel& env, Position tx, Position rx);

int count_wall_crossings(const std::vector<Wall>& walls, Position a, Position b);

/// Simulates n_frames overheard frames per AP at the given receiver position.
/// Deterministic in (scenario seed, rx, burst). Throws if rx lies outside the
/// room bounding box.
Capture generate_capture(const Scenario& sc, Position rx, int n_frames,
                         std::uint64_t burst = 0);

/// Returns a copy with the AP repositioned, its gain profile freshly drawn,
/// and its altered flag set.
Scenario move_ap(const Scenario& sc, const ApId& ap, Position new_pos);

/// Captures at every survey grid position.
SurveyCapture survey(const Scenario& sc, int frames_per_position, int jobs = 1);

}  // namespace crisloc::synth

#pragma once

#include <cstdint>
#include <set>

#include "crisloc/detect.hpp"
#include "crisloc/eval.hpp"
#include "crisloc/model.hpp"
#include "crisloc/preprocess.hpp"
#include "crisloc/reconstruct.hpp"
#include "crisloc/synth.hpp"

namespace crisloc::pipeline {

struct Config {
  synth::ScenarioConfig scenario;
  int survey_frames = 130;
  int query_frames = 30;
  int n_test_queries = 20;
  int baseline_samples = 30;
  int n_altered = 0;  // APs moved between survey and the online phase
  double min_move = 2.0;
  detect::SampleConfig sample;
  detect::SequentialParams sequential;
  reconstruct::TransferParams transfer;
  int fresh_rp_frames = 60;
  std::uint64_t seed = 1;
  int jobs = 1;
};

struct Result {
  synth::Scenario scenario;  // state after any alterations
  RadioMap map;
  detect::Baseline baseline;
  detect::DetectionReport report;
  std::set<ApId> truth_altered;
  std::set<ApId> alleged;
  bool reconstructed = false;
  eval::ErrorStats err_outdated;  // matching against the stale map
  eval::ErrorStats err_final;    // after reconstruction (same as outdated if none)
};

/// Fresh calibrated RP samples from the current environment.
detect::FreshRpSamples fresh_rp_samples(const synth::Scenario& sc,
                                        const SubcarrierMask& mask, int frames,
                                        std::uint64_t burst_seed);

/// Moves n randomly chosen APs at least min_move meters; deterministic.
synth::Scenario alter_random_aps(const synth::Scenario& sc, int n, double min_move,
                                 std::uint64_t seed);

/// Runs sequential joint detection against the current environment.
detect::DetectionReport run_joint_detection(const synth::Scenario& current,
                                            const RadioMap& map,
                                            const detect::Baseline& baseline,
                                            const detect::SampleConfig& sample_cfg,
                                            const detect::SequentialParams& seq,
                                            std::uint64_t seed);

/// Survey -> preprocess -> baseline -> alter -> detect -> reconstruct ->
/// evaluate, all driven by one seed.
Result run(const Config& cfg);

}  // namespace crisloc::pipeline

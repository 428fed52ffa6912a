#include "crisloc/pipeline.hpp"

#include <cmath>

#include "crisloc/locate.hpp"
#include "crisloc/log.hpp"
#include "crisloc/rng.hpp"

namespace crisloc::pipeline {

detect::FreshRpSamples fresh_rp_samples(const synth::Scenario& sc,
                                        const SubcarrierMask& mask, int frames,
                                        std::uint64_t burst_seed) {
  detect::FreshRpSamples out;
  const std::vector<Position> rps = sc.rp_positions();
  out.resize(rps.size());
  for (std::size_t r = 0; r < rps.size(); ++r) {
    const Capture cap =
        synth::generate_capture(sc, rps[r], frames, mix_seed(burst_seed, 7000 + r));
    for (const auto& [ap, fr] : cap) {
      auto& dst = out[r][ap];
      for (const auto& f : fr)
        if (f.heard()) dst.push_back(preprocess::calibrate(f, mask));
    }
  }
  return out;
}

synth::Scenario alter_random_aps(const synth::Scenario& sc, int n, double min_move,
                                 std::uint64_t seed) {
  synth::Scenario out = sc;
  Rng rng(mix_seed(seed, 0x414c5452));
  std::vector<int> order(sc.aps.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
    std::swap(order[i], order[rng.uniform_int(0, i)]);

  for (int i = 0; i < n && i < static_cast<int>(order.size()); ++i) {
    const auto& ap = out.aps[order[i]];
    Position target;
    for (int attempt = 0; attempt < 256; ++attempt) {
      target = {rng.uniform(0.15, out.room.width - 0.15),
                rng.uniform(0.15, out.room.height - 0.15)};
      if (distance(target, ap.pos) >= min_move) break;
    }
    out = synth::move_ap(out, ap.id, target);
  }
  return out;
}

detect::DetectionReport run_joint_detection(const synth::Scenario& current,
                                            const RadioMap& map,
                                            const detect::Baseline& baseline,
                                            const detect::SampleConfig& sample_cfg,
                                            const detect::SequentialParams& seq,
                                            std::uint64_t seed) {
  const locate::MapFeatures features = locate::MapFeatures::build(map);
  const locate::NeighborPortionTable table = locate::build_portion_table(map);

  Rng pos_rng(mix_seed(seed, 0x504f5321));
  int counter = 0;
  const auto next = [&]() -> std::optional<detect::JointOutcome> {
    const Position rx{pos_rng.uniform(0.1, current.room.width - 0.1),
                      pos_rng.uniform(0.1, current.room.height - 0.1)};
    const Capture cap = synth::generate_capture(current, rx, sample_cfg.frames_per_burst,
                                                mix_seed(seed, 9000 + counter));
    // Subsets are redrawn per sample so pair co-occurrence quirks of one draw
    // cannot persist through the sequential analysis.
    const std::vector<std::set<ApId>> subsets =
        detect::gen_subsets(current.ap_ids(), sample_cfg.subset_budget,
                            mix_seed(seed, 0x53554253 + counter));
    ++counter;
    const auto results = detect::localize_subsets(features, table, cap, subsets,
                                                  sample_cfg.k_prime);
    return detect::joint_detect(results, baseline, sample_cfg.joint);
  };

  return detect::sequential_detect(next, current.ap_ids(), seq, baseline,
                                   sample_cfg.joint.r0);
}

Result run(const Config& cfg) {
  Result res;

  synth::ScenarioConfig sc_cfg = cfg.scenario;
  sc_cfg.seed = cfg.seed;
  const synth::Scenario original = synth::make_scenario(sc_cfg);

  log::info("pipeline: surveying " + std::to_string(original.grid.size()) + " points");
  const SurveyCapture sv = synth::survey(original, cfg.survey_frames, cfg.jobs);
  res.map = preprocess::build_radio_map(sv, original.grid_spacing);

  log::info("pipeline: calibrating dispersion baseline");
  res.baseline = detect::calibrate_baseline(original, res.map, cfg.baseline_samples,
                                            mix_seed(cfg.seed, 0x42415345), cfg.sample);

  res.scenario = cfg.n_altered > 0
                     ? alter_random_aps(original, cfg.n_altered, cfg.min_move, cfg.seed)
                     : original;
  res.truth_altered = res.scenario.altered_set();

  log::info("pipeline: sequential joint detection");
  res.report = run_joint_detection(res.scenario, res.map, res.baseline, cfg.sample,
                                   cfg.sequential, cfg.seed);
  res.alleged = res.report.altered_set();

  reconstruct::HybridMap hybrid;
  if (!res.alleged.empty()) {
    log::info("pipeline: reconstructing " + std::to_string(res.alleged.size()) +
              " AP block(s)");
    const detect::FreshRpSamples fresh = fresh_rp_samples(
        res.scenario, res.map.mask, cfg.fresh_rp_frames, mix_seed(cfg.seed, 0x46525348));
    hybrid = reconstruct::reconstruct_map(res.map, res.scenario.rp_indices, fresh,
                                          res.alleged, cfg.transfer);
    res.reconstructed = true;
  }

  // Evaluation queries against the current environment.
  const locate::MapFeatures features = locate::MapFeatures::build(res.map);
  const locate::NeighborPortionTable table = locate::build_portion_table(res.map);
  const std::set<ApId> all_aps(res.map.ap_ids.begin(), res.map.ap_ids.end());
  const reconstruct::HybridMatcher matcher =
      res.reconstructed ? reconstruct::HybridMatcher::build(hybrid)
                        : reconstruct::HybridMatcher();

  Rng rng(mix_seed(cfg.seed, 0x51525953));
  std::vector<std::pair<Position, Position>> outdated_pairs, final_pairs;
  for (int q = 0; q < cfg.n_test_queries; ++q) {
    const Position truth{rng.uniform(0.1, res.scenario.room.width - 0.1),
                         rng.uniform(0.1, res.scenario.room.height - 0.1)};
    const Capture cap = synth::generate_capture(res.scenario, truth, cfg.query_frames,
                                                mix_seed(cfg.seed, 20000 + q));
    const Fingerprint fp =
        locate::query_fingerprint(cap, res.map.mask, res.map.ap_ids);

    const Position est_outdated =
        locate::eeknn(fp, features, cfg.sample.k_prime, table, all_aps);
    outdated_pairs.emplace_back(est_outdated, truth);

    const Position est_final =
        res.reconstructed
            ? reconstruct::eeknn(fp, matcher, cfg.sample.k_prime, table, all_aps)
            : est_outdated;
    final_pairs.emplace_back(est_final, truth);
  }
  res.err_outdated = eval::error_stats(outdated_pairs);
  res.err_final = eval::error_stats(final_pairs);
  return res;
}

}  // namespace crisloc::pipeline

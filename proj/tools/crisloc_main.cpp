// crisloc: CSI-fingerprint indoor localization pipeline driver.
//
// Subcommands: synth, survey, preprocess, localize, detect, reconstruct,
// eval, pipeline. Every stage reads/writes files so stages can be rerun
// independently; all randomness derives from --seed.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>

#include "crisloc/detect.hpp"
#include "crisloc/eval.hpp"
#include "crisloc/locate.hpp"
#include "crisloc/log.hpp"
#include "crisloc/pipeline.hpp"
#include "crisloc/preprocess.hpp"
#include "crisloc/reconstruct.hpp"
#include "crisloc/rng.hpp"
#include "crisloc/serialize.hpp"
#include "crisloc/synth.hpp"

namespace {

using namespace crisloc;

constexpr int kExitUsage = 2;

// Outputs are written atomically per file; anything this run created is
// removed again when a later stage of the same invocation fails.
class OutputGuard {
 public:
  void track(const std::string& path) { paths_.push_back(path); }
  void commit() { paths_.clear(); }
  ~OutputGuard() {
    for (const auto& p : paths_) {
      std::error_code ec;
      std::filesystem::remove(p, ec);
    }
  }

 private:
  std::vector<std::string> paths_;
};

void require_file(const std::string& path) {
  if (!std::filesystem::exists(path))
    throw CLI::ValidationError("input file does not exist: " + path);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct TsvWriter {
  std::string text;
  void header(const std::vector<std::string>& cols) {
    for (std::size_t i = 0; i < cols.size(); ++i) text += (i ? "\t" : "") + cols[i];
    text += "\n";
  }
  void row(const std::vector<double>& vals) {
    for (std::size_t i = 0; i < vals.size(); ++i)
      text += (i ? "\t" : "") + format_double(vals[i]);
    text += "\n";
  }
};

synth::Scenario load_scenario_checked(const std::string& path) {
  require_file(path);
  return io::load_scenario(path);
}

RadioMap load_map_checked(const std::string& path) {
  require_file(path);
  return io::load_radio_map(path);
}

int cmd_synth(const std::string& out, const synth::ScenarioConfig& cfg,
              const std::string& from, const std::vector<std::string>& moves,
              std::optional<std::uint64_t> seed, OutputGuard& guard) {
  synth::Scenario sc;
  if (!from.empty()) {
    sc = load_scenario_checked(from);
  } else {
    synth::ScenarioConfig c = cfg;
    if (seed) c.seed = *seed;
    sc = synth::make_scenario(c);
  }
  if (seed) sc.seed = *seed;
  for (const auto& spec : moves) {
    // Format: id:x,y
    const auto colon = spec.find(':');
    const auto comma = spec.find(',', colon);
    if (colon == std::string::npos || comma == std::string::npos)
      throw CLI::ValidationError("--move expects id:x,y, got: " + spec);
    const ApId id = spec.substr(0, colon);
    const double x = std::stod(spec.substr(colon + 1, comma - colon - 1));
    const double y = std::stod(spec.substr(comma + 1));
    sc = synth::move_ap(sc, id, {x, y});
  }
  guard.track(out);
  io::save(sc, out);
  guard.commit();
  log::info("wrote scenario to " + out);
  return 0;
}

int cmd_survey(const std::string& scenario_path, const std::string& out, int frames,
               const std::string& mode, int count, std::optional<std::uint64_t> seed,
               int jobs, OutputGuard& guard) {
  synth::Scenario sc = load_scenario_checked(scenario_path);
  if (seed) sc.seed = *seed;

  SurveyCapture sv;
  if (mode == "grid") {
    sv = synth::survey(sc, frames, jobs);
  } else {
    Rng rng(mix_seed(sc.seed, 0x51554552));
    for (int i = 0; i < count; ++i) {
      const Position p{rng.uniform(0.1, sc.room.width - 0.1),
                       rng.uniform(0.1, sc.room.height - 0.1)};
      sv.positions.push_back(p);
      sv.captures.push_back(synth::generate_capture(sc, p, frames, 424200 + i));
    }
  }
  guard.track(out);
  io::save(sv, out);
  guard.commit();
  log::info("wrote " + std::to_string(sv.positions.size()) + " captures to " + out);
  return 0;
}

int cmd_preprocess(const std::string& survey_path, const std::string& out,
                   double cv_kappa, double spacing, OutputGuard& guard) {
  require_file(survey_path);
  const SurveyCapture sv = io::load_survey(survey_path);
  preprocess::BuildOptions opts;
  opts.cv_kappa = cv_kappa;
  const RadioMap map = preprocess::build_radio_map(sv, spacing, opts);
  guard.track(out);
  io::save(map, out);
  guard.commit();
  log::info("radio map: " + std::to_string(map.points.size()) + " points, " +
            std::to_string(map.mask.active_count()) + " active subcarriers");
  return 0;
}

int cmd_localize(const std::string& map_path, const std::string& capture_path,
                 const std::string& hybrid_path, const std::string& out,
                 const std::string& matcher, int k, double k_prime,
                 OutputGuard& guard) {
  require_file(capture_path);
  const SurveyCapture queries = io::load_survey(capture_path);

  RadioMap map;
  std::optional<reconstruct::HybridMap> hybrid;
  if (!hybrid_path.empty()) {
    require_file(hybrid_path);
    hybrid = io::load_hybrid_map(hybrid_path);
    map = hybrid->base;
  } else {
    map = load_map_checked(map_path);
  }

  const locate::MapFeatures feats = locate::MapFeatures::build(map);
  const locate::NeighborPortionTable table = locate::build_portion_table(map);
  const std::set<ApId> all(map.ap_ids.begin(), map.ap_ids.end());
  reconstruct::HybridMatcher hybrid_matcher;
  if (hybrid) hybrid_matcher = reconstruct::HybridMatcher::build(*hybrid);

  TsvWriter tsv;
  tsv.header({"query", "truth_x", "truth_y", "est_x", "est_y", "error_m"});
  double total = 0.0;
  for (std::size_t q = 0; q < queries.positions.size(); ++q) {
    const Fingerprint fp =
        locate::query_fingerprint(queries.captures[q], map.mask, map.ap_ids);
    Position est;
    if (hybrid) {
      est = matcher == "wknn"
                ? reconstruct::wknn(fp, hybrid_matcher, k, all)
                : reconstruct::eeknn(fp, hybrid_matcher, k_prime, table, all);
    } else {
      est = matcher == "wknn" ? locate::wknn(fp, feats, k, all)
                              : locate::eeknn(fp, feats, k_prime, table, all);
    }
    const double err = distance(est, queries.positions[q]);
    total += err;
    tsv.row({static_cast<double>(q), queries.positions[q].x, queries.positions[q].y,
             est.x, est.y, err});
  }
  guard.track(out);
  io::write_file(out, tsv.text);
  guard.commit();
  log::info("mean error " + format_double(total / queries.positions.size()) +
            " m over " + std::to_string(queries.positions.size()) + " queries");
  return 0;
}

int cmd_detect(const std::string& map_path, const std::string& scenario_path,
               const std::string& out, const std::string& mode, double p_value,
               const detect::SampleConfig& sample_cfg,
               const detect::SequentialParams& seq, int baseline_samples,
               int rp_frames, std::optional<std::uint64_t> seed, OutputGuard& guard) {
  const RadioMap map = load_map_checked(map_path);
  synth::Scenario current = load_scenario_checked(scenario_path);
  const std::uint64_t run_seed = seed ? *seed : current.seed;

  detect::DetectionReport report;
  if (mode == "rp") {
    const detect::KdeModel model = detect::kde_fit(map, current.rp_indices);
    const detect::FreshRpSamples fresh = pipeline::fresh_rp_samples(
        current, map.mask, rp_frames, mix_seed(run_seed, 0x46525348));
    const detect::KdeDetection det = detect::kde_detect(model, fresh, p_value);
    for (const auto& [id, altered] : det.altered) {
      detect::ApVerdict v;
      v.altered = altered;
      v.reliability = 1.0 - det.aggregate.at(id);
      report.verdicts[id] = v;
    }
    report.samples_used = rp_frames;
  } else {
    const detect::Baseline baseline = detect::calibrate_baseline(
        current, map, baseline_samples, mix_seed(run_seed, 0x42415345), sample_cfg);
    report = pipeline::run_joint_detection(current, map, baseline, sample_cfg, seq,
                                           run_seed);
  }

  guard.track(out);
  io::save(report, out);
  guard.commit();
  std::string alarms;
  for (const auto& id : report.altered_set()) alarms += id + " ";
  log::info("alarmed APs: " + (alarms.empty() ? "(none)" : alarms));
  return 0;
}

int cmd_reconstruct(const std::string& map_path, const std::string& scenario_path,
                    const std::string& report_path, std::vector<std::string> altered,
                    const std::string& out, const reconstruct::TransferParams& params,
                    int rp_frames, std::optional<std::uint64_t> seed,
                    OutputGuard& guard) {
  const RadioMap map = load_map_checked(map_path);
  synth::Scenario current = load_scenario_checked(scenario_path);
  const std::uint64_t run_seed = seed ? *seed : current.seed;

  std::set<ApId> altered_set(altered.begin(), altered.end());
  if (!report_path.empty()) {
    require_file(report_path);
    const detect::DetectionReport report =
        io::detection_report_from_json(io::read_file(report_path));
    const std::set<ApId> from_report = report.altered_set();
    altered_set.insert(from_report.begin(), from_report.end());
  }
  if (altered_set.empty())
    throw CLI::ValidationError("no altered APs given (use --altered or --report)");

  const detect::FreshRpSamples fresh = pipeline::fresh_rp_samples(
      current, map.mask, rp_frames, mix_seed(run_seed, 0x46525348));
  const reconstruct::HybridMap hybrid =
      reconstruct::reconstruct_map(map, current.rp_indices, fresh, altered_set, params);
  guard.track(out);
  io::save(hybrid, out);
  guard.commit();
  log::info("reconstructed " + std::to_string(hybrid.projected.size()) +
            " AP block(s)");
  return 0;
}

int cmd_eval(const std::string& estimates_path, const std::string& stats_out,
             const std::string& cdf_out, OutputGuard& guard) {
  require_file(estimates_path);
  const std::string text = io::read_file(estimates_path);

  std::vector<std::pair<Position, Position>> pairs;
  std::size_t pos = text.find('\n');  // skip header
  while (pos != std::string::npos && pos + 1 < text.size()) {
    const std::size_t end = text.find('\n', pos + 1);
    const std::string line = text.substr(pos + 1, end - pos - 1);
    pos = end;
    if (line.empty()) continue;
    double q, tx, ty, ex, ey, err;
    if (std::sscanf(line.c_str(), "%lf\t%lf\t%lf\t%lf\t%lf\t%lf", &q, &tx, &ty, &ex,
                    &ey, &err) == 6)
      pairs.push_back({{ex, ey}, {tx, ty}});
  }
  if (pairs.empty())
    throw CLI::ValidationError("no estimate rows in " + estimates_path);

  const eval::ErrorStats stats = eval::error_stats(pairs);
  nlohmann::json j{{"kind", "error_stats"}, {"format_version", 1},
                   {"count", pairs.size()}, {"mean", stats.mean},
                   {"median", stats.median}, {"p75", stats.p75},
                   {"p90", stats.p90},       {"p95", stats.p95},
                   {"max", stats.max}};
  guard.track(stats_out);
  io::write_file(stats_out, j.dump(2) + "\n");

  if (!cdf_out.empty()) {
    TsvWriter tsv;
    tsv.header({"error_m", "fraction"});
    for (const auto& [e, frac] : stats.cdf) tsv.row({e, frac});
    guard.track(cdf_out);
    io::write_file(cdf_out, tsv.text);
  }
  guard.commit();
  log::info("mean error " + format_double(stats.mean) + " m");
  return 0;
}

int cmd_pipeline(const pipeline::Config& cfg, const std::string& out_dir,
                 OutputGuard& guard) {
  std::filesystem::create_directories(out_dir);
  const pipeline::Result res = pipeline::run(cfg);

  const std::string scenario_path = out_dir + "/scenario.json";
  const std::string map_path = out_dir + "/radio_map.json";
  const std::string report_path = out_dir + "/detection_report.json";
  const std::string metrics_path = out_dir + "/metrics.json";
  guard.track(scenario_path);
  guard.track(map_path);
  guard.track(report_path);
  guard.track(metrics_path);

  io::save(res.scenario, scenario_path);
  io::save(res.map, map_path);
  io::save(res.report, report_path);

  nlohmann::json truth = nlohmann::json::array();
  for (const auto& id : res.truth_altered) truth.push_back(id);
  nlohmann::json alleged = nlohmann::json::array();
  for (const auto& id : res.alleged) alleged.push_back(id);
  nlohmann::json j{{"kind", "pipeline_metrics"},
                   {"format_version", 1},
                   {"seed", cfg.seed},
                   {"truth_altered", truth},
                   {"alleged", alleged},
                   {"reconstructed", res.reconstructed},
                   {"baseline_a", res.baseline.a},
                   {"baseline_sigma", res.baseline.sigma},
                   {"err_outdated_mean", res.err_outdated.mean},
                   {"err_outdated_median", res.err_outdated.median},
                   {"err_final_mean", res.err_final.mean},
                   {"err_final_median", res.err_final.median}};
  io::write_file(metrics_path, j.dump(2) + "\n");
  guard.commit();
  log::info("pipeline metrics written to " + metrics_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CSI fingerprinting localization with altered-AP detection and "
               "fingerprint reconstruction"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "Read defaults from an INI/TOML file");

  std::optional<std::uint64_t> seed;
  int jobs = 2;
  app.add_option("--seed", seed, "Master seed; overrides stored scenario seeds");
  app.add_option("--jobs", jobs, "Worker threads for per-position captures");

  OutputGuard guard;

  // --- synth ---
  auto* synth_cmd = app.add_subcommand("synth", "Create or modify a scenario file");
  std::string synth_out = "scenario.json", synth_from;
  std::vector<std::string> synth_moves;
  synth::ScenarioConfig sc_cfg;
  synth_cmd->add_option("--out", synth_out, "Output scenario path");
  synth_cmd->add_option("--from", synth_from, "Modify an existing scenario");
  synth_cmd->add_option("--move", synth_moves, "Relocate an AP: id:x,y (repeatable)");
  synth_cmd->add_option("--cols", sc_cfg.grid_cols, "Survey grid columns");
  synth_cmd->add_option("--rows", sc_cfg.grid_rows, "Survey grid rows");
  synth_cmd->add_option("--spacing", sc_cfg.grid_spacing, "Grid spacing in meters");
  synth_cmd->add_option("--aps", sc_cfg.n_aps, "Number of APs");
  synth_cmd->add_option("--rps", sc_cfg.n_rps, "Number of reference points");
  synth_cmd->add_option("--walls", sc_cfg.n_walls, "Interior wall count");
  synth_cmd->add_option("--noise-sigma-db", sc_cfg.noise_sigma_db,
                        "Per-subcarrier log-amplitude noise");
  synth_cmd->add_option("--anomaly-rate", sc_cfg.anomaly_rate,
                        "Fraction of corrupted frames");

  // --- survey ---
  auto* survey_cmd = app.add_subcommand("survey", "Capture CSI frames from a scenario");
  std::string survey_scenario, survey_out = "survey.json", survey_mode = "grid";
  int survey_frames = 130, survey_count = 20;
  survey_cmd->add_option("--scenario", survey_scenario, "Scenario file")->required();
  survey_cmd->add_option("--out", survey_out, "Output capture path");
  survey_cmd->add_option("--frames", survey_frames, "Frames per position");
  survey_cmd->add_option("--mode", survey_mode, "grid | random")
      ->check(CLI::IsMember({"grid", "random"}));
  survey_cmd->add_option("--count", survey_count, "Random positions (mode=random)");

  // --- preprocess ---
  auto* prep_cmd = app.add_subcommand("preprocess", "Build a radio map from a survey");
  std::string prep_survey, prep_out = "radio_map.json";
  double prep_kappa = 3.0, prep_spacing = 0.5;
  prep_cmd->add_option("--survey", prep_survey, "Survey capture file")->required();
  prep_cmd->add_option("--out", prep_out, "Output radio map path");
  prep_cmd->add_option("--cv-kappa", prep_kappa, "CV threshold multiplier");
  prep_cmd->add_option("--spacing", prep_spacing, "Grid spacing in meters");

  // --- localize ---
  auto* loc_cmd = app.add_subcommand("localize", "Match query captures against a map");
  std::string loc_map, loc_capture, loc_hybrid, loc_out = "estimates.tsv";
  std::string loc_matcher = "eeknn";
  int loc_k = 3;
  double loc_kprime = 1.0;
  loc_cmd->add_option("--map", loc_map, "Radio map file");
  loc_cmd->add_option("--hybrid", loc_hybrid, "Hybrid (reconstructed) map file");
  loc_cmd->add_option("--capture", loc_capture, "Query capture file")->required();
  loc_cmd->add_option("--out", loc_out, "Output TSV path");
  loc_cmd->add_option("--matcher", loc_matcher, "wknn | eeknn")
      ->check(CLI::IsMember({"wknn", "eeknn"}));
  loc_cmd->add_option("--k", loc_k, "Neighbor count for WKNN");
  loc_cmd->add_option("--k-prime", loc_kprime, "Portion budget for EEKNN");

  // --- detect ---
  auto* det_cmd = app.add_subcommand("detect", "Detect altered APs");
  std::string det_map, det_scenario, det_out = "detection_report.json";
  std::string det_mode = "joint";
  double det_pvalue = 0.05;
  detect::SampleConfig det_sample;
  detect::SequentialParams det_seq;
  int det_baseline_samples = 30, det_rp_frames = 30;
  det_cmd->add_option("--map", det_map, "Radio map file")->required();
  det_cmd->add_option("--scenario", det_scenario, "Current environment scenario")
      ->required();
  det_cmd->add_option("--out", det_out, "Output report path");
  det_cmd->add_option("--mode", det_mode, "rp | joint")
      ->check(CLI::IsMember({"rp", "joint"}));
  det_cmd->add_option("--p-value", det_pvalue, "KDE tail threshold (mode=rp)");
  det_cmd->add_option("--r0", det_sample.joint.r0, "Cluster dominance ratio");
  det_cmd->add_option("--min-seq", det_seq.min_seq, "Sequential minimum samples");
  det_cmd->add_option("--max-seq", det_seq.max_seq, "Sequential maximum samples");
  det_cmd->add_option("--l0", det_seq.l0, "Reliability threshold");
  det_cmd->add_option("--budget", det_sample.subset_budget, "AP subset budget");
  det_cmd->add_option("--frames", det_sample.frames_per_burst, "Frames per burst");
  det_cmd->add_option("--baseline-samples", det_baseline_samples,
                      "Dispersion calibration samples");
  det_cmd->add_option("--rp-frames", det_rp_frames, "Fresh frames per RP (mode=rp)");

  // --- reconstruct ---
  auto* rec_cmd = app.add_subcommand("reconstruct", "Rebuild altered-AP fingerprints");
  std::string rec_map, rec_scenario, rec_report, rec_out = "hybrid_map.json";
  std::vector<std::string> rec_altered;
  reconstruct::TransferParams rec_params;
  int rec_rp_frames = 60;
  rec_cmd->add_option("--map", rec_map, "Radio map file")->required();
  rec_cmd->add_option("--scenario", rec_scenario, "Current environment scenario")
      ->required();
  rec_cmd->add_option("--report", rec_report, "Detection report naming altered APs");
  rec_cmd->add_option("--altered", rec_altered, "Altered AP ids")->delimiter(',');
  rec_cmd->add_option("--out", rec_out, "Output hybrid map path");
  rec_cmd->add_option("--mu", rec_params.mu, "Intra-class weight");
  rec_cmd->add_option("--lambda", rec_params.lambda, "Ridge weight");
  rec_cmd->add_option("--alpha", rec_params.alpha, "Neighbor distance ratio bound");
  rec_cmd->add_option("--subdim", rec_params.subspace_dim, "Subspace dimension");
  rec_cmd->add_option("--rp-frames", rec_rp_frames, "Fresh frames per RP");

  // --- eval ---
  auto* eval_cmd = app.add_subcommand("eval", "Summarize localization estimates");
  std::string eval_in, eval_stats = "stats.json", eval_cdf = "cdf.tsv";
  eval_cmd->add_option("--estimates", eval_in, "Estimates TSV from localize")
      ->required();
  eval_cmd->add_option("--stats-out", eval_stats, "Metrics JSON path");
  eval_cmd->add_option("--cdf-out", eval_cdf, "CDF TSV path (empty to skip)");

  // --- pipeline ---
  auto* pipe_cmd = app.add_subcommand("pipeline", "Run every stage end to end");
  pipeline::Config pipe_cfg;
  std::string pipe_out_dir = "pipeline_out";
  pipe_cmd->add_option("--out-dir", pipe_out_dir, "Artifact directory");
  pipe_cmd->add_option("--cols", pipe_cfg.scenario.grid_cols, "Survey grid columns");
  pipe_cmd->add_option("--rows", pipe_cfg.scenario.grid_rows, "Survey grid rows");
  pipe_cmd->add_option("--aps", pipe_cfg.scenario.n_aps, "Number of APs");
  pipe_cmd->add_option("--rps", pipe_cfg.scenario.n_rps, "Reference points");
  pipe_cmd->add_option("--altered", pipe_cfg.n_altered, "APs to move mid-run");
  pipe_cmd->add_option("--survey-frames", pipe_cfg.survey_frames,
                       "Frames per survey point");
  pipe_cmd->add_option("--queries", pipe_cfg.n_test_queries, "Evaluation queries");
  pipe_cmd->add_option("--noise-sigma-db", pipe_cfg.scenario.noise_sigma_db,
                       "Per-subcarrier noise");
  pipe_cmd->add_option("--anomaly-rate", pipe_cfg.scenario.anomaly_rate,
                       "Corrupted frame fraction");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_cmd->parsed())
      return cmd_synth(synth_out, sc_cfg, synth_from, synth_moves, seed, guard);
    if (survey_cmd->parsed())
      return cmd_survey(survey_scenario, survey_out, survey_frames, survey_mode,
                        survey_count, seed, jobs, guard);
    if (prep_cmd->parsed())
      return cmd_preprocess(prep_survey, prep_out, prep_kappa, prep_spacing, guard);
    if (loc_cmd->parsed()) {
      if (loc_map.empty() && loc_hybrid.empty())
        throw CLI::ValidationError("localize needs --map or --hybrid");
      return cmd_localize(loc_map, loc_capture, loc_hybrid, loc_out, loc_matcher,
                          loc_k, loc_kprime, guard);
    }
    if (det_cmd->parsed())
      return cmd_detect(det_map, det_scenario, det_out, det_mode, det_pvalue,
                        det_sample, det_seq, det_baseline_samples, det_rp_frames,
                        seed, guard);
    if (rec_cmd->parsed())
      return cmd_reconstruct(rec_map, rec_scenario, rec_report, rec_altered, rec_out,
                             rec_params, rec_rp_frames, seed, guard);
    if (eval_cmd->parsed()) return cmd_eval(eval_in, eval_stats, eval_cdf, guard);
    if (pipe_cmd->parsed()) {
      if (seed) pipe_cfg.seed = *seed;
      pipe_cfg.jobs = jobs;
      return cmd_pipeline(pipe_cfg, pipe_out_dir, guard);
    }
  } catch (const CLI::ValidationError& e) {
    log::error(e.what());
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    log::error(e.what());
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kExitUsage;
}

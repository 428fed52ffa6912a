#include "crisloc/serialize.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

namespace crisloc::io {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

void check_header(const json& j, const std::string& kind) {
  if (!j.is_object() || j.value("kind", "") != kind)
    throw std::runtime_error("document is not a " + kind + " file");
  if (j.value("format_version", -1) != kFormatVersion)
    throw std::runtime_error("unsupported format_version in " + kind + " file");
}

json position_json(const Position& p) { return json{{"x", p.x}, {"y", p.y}}; }
Position position_from(const json& j) { return {j.at("x"), j.at("y")}; }

json mask_json(const SubcarrierMask& m) {
  json keep = json::array();
  for (bool b : m.keep) keep.push_back(b ? 1 : 0);
  return keep;
}

SubcarrierMask mask_from(const json& j) {
  SubcarrierMask m;
  for (const auto& v : j) m.keep.push_back(v.get<int>() != 0);
  return m;
}

json frame_json(const CsiFrame& f) {
  json sub = json::array();
  for (const auto& c : f.subcarriers) {
    sub.push_back(c.real());
    sub.push_back(c.imag());
  }
  return json{{"ap", f.ap},
              {"timestamp", f.timestamp},
              {"rss_dbm", f.rss_dbm},
              {"sequence", f.sequence},
              {"subcarriers", std::move(sub)}};
}

CsiFrame frame_from(const json& j) {
  CsiFrame f;
  f.ap = j.at("ap");
  f.timestamp = j.at("timestamp");
  f.rss_dbm = j.at("rss_dbm");
  f.sequence = j.at("sequence");
  const auto& sub = j.at("subcarriers");
  f.subcarriers.reserve(sub.size() / 2);
  for (std::size_t i = 0; i + 1 < sub.size(); i += 2)
    f.subcarriers.emplace_back(sub[i].get<double>(), sub[i + 1].get<double>());
  return f;
}

json capture_json(const Capture& cap) {
  json out = json::object();
  for (const auto& [ap, frames] : cap) {
    json arr = json::array();
    for (const auto& f : frames) arr.push_back(frame_json(f));
    out[ap] = std::move(arr);
  }
  return out;
}

Capture capture_from(const json& j) {
  Capture cap;
  for (const auto& [ap, frames] : j.items()) {
    std::vector<CsiFrame>& dst = cap[ap];
    for (const auto& f : frames) dst.push_back(frame_from(f));
  }
  return cap;
}

}  // namespace

std::string to_json(const RadioMap& map) {
  json points = json::array();
  for (const auto& p : map.points) {
    json samples = json::array();
    for (const auto& per_ap : p.samples) {
      json list = json::array();
      for (const auto& s : per_ap) list.push_back(s.values);
      samples.push_back(std::move(list));
    }
    points.push_back(json{{"pos", position_json(p.pos)}, {"samples", std::move(samples)}});
  }
  json j{{"kind", "radio_map"},
         {"format_version", kFormatVersion},
         {"mask", mask_json(map.mask)},
         {"ap_ids", map.ap_ids},
         {"grid_spacing", map.grid_spacing},
         {"points", std::move(points)}};
  return j.dump();
}

RadioMap radio_map_from_json(const std::string& text) {
  const json j = json::parse(text);
  check_header(j, "radio_map");
  RadioMap map;
  map.mask = mask_from(j.at("mask"));
  map.ap_ids = j.at("ap_ids").get<std::vector<ApId>>();
  map.grid_spacing = j.at("grid_spacing");
  for (const auto& pj : j.at("points")) {
    RadioMap::Point p;
    p.pos = position_from(pj.at("pos"));
    for (const auto& per_ap : pj.at("samples")) {
      std::vector<AmplitudeVector> list;
      for (const auto& s : per_ap) list.emplace_back(s.get<std::vector<double>>());
      p.samples.push_back(std::move(list));
    }
    map.points.push_back(std::move(p));
  }
  validate(map);
  return map;
}

std::string to_json(const synth::Scenario& sc) {
  json walls = json::array();
  for (const auto& w : sc.env.walls)
    walls.push_back(json{{"a", position_json(w.a)}, {"b", position_json(w.b)}});

  json aps = json::array();
  for (const auto& ap : sc.aps) {
    json sources = json::array();
    for (const auto& s : ap.profile.sources)
      sources.push_back(json{{"dx", s.dx},
                             {"dy", s.dy},
                             {"amplitude", s.amplitude},
                             {"phase", s.phase}});
    aps.push_back(json{{"id", ap.id},
                       {"pos", position_json(ap.pos)},
                       {"curve", ap.profile.curve},
                       {"sources", std::move(sources)},
                       {"revision", ap.revision},
                       {"altered", ap.altered}});
  }

  json grid = json::array();
  for (const auto& g : sc.grid) grid.push_back(position_json(g));

  json j{{"kind", "scenario"},
         {"format_version", kFormatVersion},
         {"env",
          {{"p_d0_dbm", sc.env.p_d0_dbm},
           {"d0", sc.env.d0},
           {"n", sc.env.n},
           {"waf_db", sc.env.waf_db},
           {"wall_cap", sc.env.wall_cap},
           {"walls", std::move(walls)},
           {"noise_sigma_db", sc.env.noise_sigma_db}}},
         {"room", {{"width", sc.room.width}, {"height", sc.room.height}}},
         {"n_subcarriers", sc.n_subcarriers},
         {"aps", std::move(aps)},
         {"grid", std::move(grid)},
         {"grid_spacing", sc.grid_spacing},
         {"rp_indices", sc.rp_indices},
         {"seed", sc.seed},
         {"agc", {{"min_gain", sc.agc.min_gain}, {"max_gain", sc.agc.max_gain}}},
         {"anomaly_rate", sc.anomaly_rate},
         {"unstable_noise_factor", sc.unstable_noise_factor},
         {"multipath_wavelength", sc.multipath_wavelength},
         {"unstable_subcarriers", std::vector<int>(sc.unstable_subcarriers.begin(),
                                                   sc.unstable_subcarriers.end())},
         {"zero_subcarriers",
          std::vector<int>(sc.zero_subcarriers.begin(), sc.zero_subcarriers.end())}};
  return j.dump();
}

synth::Scenario scenario_from_json(const std::string& text) {
  const json j = json::parse(text);
  check_header(j, "scenario");
  synth::Scenario sc;
  const auto& env = j.at("env");
  sc.env.p_d0_dbm = env.at("p_d0_dbm");
  sc.env.d0 = env.at("d0");
  sc.env.n = env.at("n");
  sc.env.waf_db = env.at("waf_db");
  sc.env.wall_cap = env.at("wall_cap");
  sc.env.noise_sigma_db = env.at("noise_sigma_db");
  for (const auto& w : env.at("walls"))
    sc.env.walls.push_back({position_from(w.at("a")), position_from(w.at("b"))});
  sc.room.width = j.at("room").at("width");
  sc.room.height = j.at("room").at("height");
  sc.n_subcarriers = j.at("n_subcarriers");
  for (const auto& aj : j.at("aps")) {
    synth::AccessPoint ap;
    ap.id = aj.at("id");
    ap.pos = position_from(aj.at("pos"));
    ap.profile.curve = aj.at("curve").get<std::vector<double>>();
    for (const auto& s : aj.at("sources")) {
      synth::MultipathSource src;
      src.dx = s.at("dx");
      src.dy = s.at("dy");
      src.amplitude = s.at("amplitude");
      src.phase = s.at("phase");
      ap.profile.sources.push_back(src);
    }
    ap.revision = aj.at("revision");
    ap.altered = aj.at("altered");
    sc.aps.push_back(std::move(ap));
  }
  for (const auto& g : j.at("grid")) sc.grid.push_back(position_from(g));
  sc.grid_spacing = j.at("grid_spacing");
  sc.rp_indices = j.at("rp_indices").get<std::vector<int>>();
  sc.seed = j.at("seed");
  sc.agc.min_gain = j.at("agc").at("min_gain");
  sc.agc.max_gain = j.at("agc").at("max_gain");
  sc.anomaly_rate = j.at("anomaly_rate");
  sc.unstable_noise_factor = j.at("unstable_noise_factor");
  sc.multipath_wavelength = j.at("multipath_wavelength");
  for (int s : j.at("unstable_subcarriers").get<std::vector<int>>())
    sc.unstable_subcarriers.insert(s);
  for (int s : j.at("zero_subcarriers").get<std::vector<int>>())
    sc.zero_subcarriers.insert(s);
  return sc;
}

std::string to_json(const SurveyCapture& survey) {
  json positions = json::array();
  for (const auto& p : survey.positions) positions.push_back(position_json(p));
  json captures = json::array();
  for (const auto& c : survey.captures) captures.push_back(capture_json(c));
  json j{{"kind", "survey"},
         {"format_version", kFormatVersion},
         {"positions", std::move(positions)},
         {"captures", std::move(captures)}};
  return j.dump();
}

SurveyCapture survey_from_json(const std::string& text) {
  const json j = json::parse(text);
  check_header(j, "survey");
  SurveyCapture survey;
  for (const auto& p : j.at("positions")) survey.positions.push_back(position_from(p));
  for (const auto& c : j.at("captures")) survey.captures.push_back(capture_from(c));
  return survey;
}

std::string to_json(const reconstruct::HybridMap& map) {
  json blocks = json::array();
  for (const auto& [id, block] : map.projected) {
    json proj = json::array();
    for (int r = 0; r < block.projector.rows(); ++r)
      for (int c = 0; c < block.projector.cols(); ++c) proj.push_back(block.projector(r, c));
    json feats = json::array();
    for (const auto& f : block.features) {
      json v = json::array();
      for (int i = 0; i < f.size(); ++i) v.push_back(f(i));
      feats.push_back(std::move(v));
    }
    blocks.push_back(json{{"ap", id},
                          {"rows", block.projector.rows()},
                          {"cols", block.projector.cols()},
                          {"projector", std::move(proj)},
                          {"features", std::move(feats)},
                          {"fresh_rp_applied", block.fresh_rp_applied}});
  }
  json j = json::parse(to_json(map.base));
  j["kind"] = "hybrid_map";
  j["projected_blocks"] = std::move(blocks);
  return j.dump();
}

reconstruct::HybridMap hybrid_map_from_json(const std::string& text) {
  json j = json::parse(text);
  check_header(j, "hybrid_map");
  reconstruct::HybridMap map;
  json base = j;
  base["kind"] = "radio_map";
  base.erase("projected_blocks");
  map.base = radio_map_from_json(base.dump());
  for (const auto& bj : j.at("projected_blocks")) {
    reconstruct::HybridMap::ProjectedBlock block;
    block.ap = bj.at("ap");
    const int rows = bj.at("rows"), cols = bj.at("cols");
    block.projector.resize(rows, cols);
    const auto& proj = bj.at("projector");
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) block.projector(r, c) = proj[r * cols + c];
    for (const auto& fj : bj.at("features")) {
      Eigen::VectorXd v(fj.size());
      for (std::size_t i = 0; i < fj.size(); ++i) v(static_cast<int>(i)) = fj[i];
      block.features.push_back(std::move(v));
    }
    block.fresh_rp_applied = bj.at("fresh_rp_applied");
    map.projected[block.ap] = std::move(block);
  }
  return map;
}

std::string to_json(const detect::DetectionReport& report) {
  json verdicts = json::object();
  for (const auto& [id, v] : report.verdicts)
    verdicts[id] = json{{"altered", v.altered},
                        {"reliability", v.reliability},
                        {"mean_frequency", v.mean_frequency},
                        {"decided_by_budget", v.decided_by_budget}};
  json j{{"kind", "detection_report"},
         {"format_version", kFormatVersion},
         {"verdicts", std::move(verdicts)},
         {"mean_dispersion", report.mean_dispersion},
         {"mean_eta", report.mean_eta},
         {"baseline_a", report.baseline.a},
         {"baseline_sigma", report.baseline.sigma},
         {"r0", report.r0},
         {"samples_used", report.samples_used}};
  return j.dump();
}

detect::DetectionReport detection_report_from_json(const std::string& text) {
  const json j = json::parse(text);
  check_header(j, "detection_report");
  detect::DetectionReport report;
  for (const auto& [id, vj] : j.at("verdicts").items()) {
    detect::ApVerdict v;
    v.altered = vj.at("altered");
    v.reliability = vj.at("reliability");
    v.mean_frequency = vj.at("mean_frequency");
    v.decided_by_budget = vj.at("decided_by_budget");
    report.verdicts[id] = v;
  }
  report.mean_dispersion = j.at("mean_dispersion");
  report.mean_eta = j.at("mean_eta");
  report.baseline.a = j.at("baseline_a");
  report.baseline.sigma = j.at("baseline_sigma");
  report.r0 = j.at("r0");
  report.samples_used = j.at("samples_used");
  return report;
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << contents;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RadioMap load_radio_map(const std::string& path) {
  return radio_map_from_json(read_file(path));
}
synth::Scenario load_scenario(const std::string& path) {
  return scenario_from_json(read_file(path));
}
SurveyCapture load_survey(const std::string& path) {
  return survey_from_json(read_file(path));
}
reconstruct::HybridMap load_hybrid_map(const std::string& path) {
  return hybrid_map_from_json(read_file(path));
}

void save(const RadioMap& map, const std::string& path) { write_file(path, to_json(map)); }
void save(const synth::Scenario& sc, const std::string& path) {
  write_file(path, to_json(sc));
}
void save(const SurveyCapture& survey, const std::string& path) {
  write_file(path, to_json(survey));
}
void save(const reconstruct::HybridMap& map, const std::string& path) {
  write_file(path, to_json(map));
}
void save(const detect::DetectionReport& report, const std::string& path) {
  write_file(path, to_json(report));
}

}  // namespace crisloc::io

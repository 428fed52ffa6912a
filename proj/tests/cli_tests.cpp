// Drives the installed binary through representative flows.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

std::string bin() { return CRISLOC_BIN; }

int run(const std::string& args) {
  const std::string cmd = bin() + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("crisloc_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("cli: stage chain produces consistent artifacts") {
  TempDir dir;
  const std::string sc = dir / "sc.json";
  const std::string sv = dir / "sv.json";
  const std::string map = dir / "map.json";
  const std::string queries = dir / "q.json";
  const std::string est = dir / "est.tsv";
  const std::string stats = dir / "stats.json";

  REQUIRE(run("synth --out " + sc + " --cols 6 --rows 5 --aps 6 --rps 4 --seed 12") == 0);
  REQUIRE(run("survey --scenario " + sc + " --out " + sv + " --frames 120 --jobs 2") == 0);
  REQUIRE(run("preprocess --survey " + sv + " --out " + map) == 0);
  REQUIRE(run("survey --scenario " + sc + " --mode random --count 6 --frames 25 --out " +
              queries) == 0);
  REQUIRE(run("localize --map " + map + " --capture " + queries + " --out " + est) == 0);
  REQUIRE(run("eval --estimates " + est + " --stats-out " + stats + " --cdf-out " +
              (dir / "cdf.tsv")) == 0);

  const std::string est_text = slurp(est);
  CHECK(est_text.find("query\ttruth_x") == 0);  // header row
  CHECK(slurp(stats).find("\"mean\"") != std::string::npos);
}

TEST_CASE("cli: pipeline runs are byte-identical for a fixed seed") {
  TempDir dir;
  const std::string common =
      " --cols 6 --rows 5 --aps 6 --rps 4 --queries 6 --survey-frames 120";
  REQUIRE(run("pipeline --seed 7 --out-dir " + (dir / "a") + common) == 0);
  REQUIRE(run("pipeline --seed 7 --out-dir " + (dir / "b") + common) == 0);
  CHECK(slurp(dir.path / "a" / "metrics.json") == slurp(dir.path / "b" / "metrics.json"));
  CHECK(slurp(dir.path / "a" / "radio_map.json") ==
        slurp(dir.path / "b" / "radio_map.json"));
  CHECK(slurp(dir.path / "a" / "detection_report.json") ==
        slurp(dir.path / "b" / "detection_report.json"));

  // A different seed changes the numbers.
  REQUIRE(run("pipeline --seed 8 --out-dir " + (dir / "c") + common) == 0);
  CHECK(slurp(dir.path / "a" / "metrics.json") != slurp(dir.path / "c" / "metrics.json"));
}

TEST_CASE("cli: missing input file exits with code 2 and names the path") {
  TempDir dir;
  const std::string cmd = bin() + " survey --scenario " + (dir / "nope.json") +
                          " --out " + (dir / "x.json") + " 2> " + (dir / "err.txt");
  const int status = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(status) == 2);
  CHECK(slurp(dir.path / "err.txt").find("nope.json") != std::string::npos);
  CHECK_FALSE(fs::exists(dir.path / "x.json"));
}

TEST_CASE("cli: invalid matcher flag is rejected") {
  TempDir dir;
  CHECK(run("localize --map m.json --capture c.json --matcher nearest") != 0);
}

TEST_CASE("cli: moved-AP scenario flows through detect and reconstruct") {
  TempDir dir;
  const std::string sc = dir / "sc.json";
  const std::string sc_alt = dir / "sc_alt.json";
  const std::string sv = dir / "sv.json";
  const std::string map = dir / "map.json";

  REQUIRE(run("synth --out " + sc + " --cols 7 --rows 5 --aps 8 --rps 5 --seed 33") == 0);
  REQUIRE(run("survey --scenario " + sc + " --out " + sv + " --frames 120 --jobs 2") == 0);
  REQUIRE(run("preprocess --survey " + sv + " --out " + map) == 0);
  REQUIRE(run("synth --from " + sc + " --move ap2:0.4,2.4 --out " + sc_alt) == 0);

  const std::string rep = dir / "rep.json";
  REQUIRE(run("detect --map " + map + " --scenario " + sc_alt +
              " --mode rp --out " + rep + " --seed 5") == 0);
  const std::string rep_text = slurp(rep);
  CHECK(rep_text.find("detection_report") != std::string::npos);

  const std::string hybrid = dir / "hybrid.json";
  REQUIRE(run("reconstruct --map " + map + " --scenario " + sc_alt +
              " --altered ap2 --out " + hybrid + " --seed 5") == 0);
  CHECK(slurp(hybrid).find("projected_blocks") != std::string::npos);

  const std::string q = dir / "q.json";
  const std::string est = dir / "est.tsv";
  REQUIRE(run("survey --scenario " + sc_alt +
              " --mode random --count 5 --frames 25 --out " + q + " --seed 5") == 0);
  REQUIRE(run("localize --hybrid " + hybrid + " --capture " + q + " --out " + est) == 0);
  CHECK(slurp(est).find("error_m") != std::string::npos);
}

#include "crisloc/rng.hpp"
#include "crisloc/serialize.hpp"
#include "crisloc/synth.hpp"

namespace {

double mean_error_column(const std::string& tsv) {
  double total = 0.0;
  int n = 0;
  std::istringstream in(tsv);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) continue;
    total += std::stod(line.substr(tab + 1));
    ++n;
  }
  return total / n;
}

}  // namespace

TEST_CASE("cli: eeknn beats wknn on a corner-heavy query set") {
  TempDir dir;
  const std::string sc_path = dir / "sc.json";
  const std::string sv_path = dir / "sv.json";
  const std::string map_path = dir / "map.json";

  REQUIRE(run("synth --out " + sc_path +
              " --cols 10 --rows 8 --aps 9 --rps 6 --seed 2026") == 0);
  REQUIRE(run("survey --scenario " + sc_path + " --out " + sv_path +
              " --frames 130 --jobs 2") == 0);
  REQUIRE(run("preprocess --survey " + sv_path + " --out " + map_path) == 0);

  // Corner-heavy query capture built against the same scenario.
  const crisloc::synth::Scenario sc = crisloc::io::load_scenario(sc_path);
  crisloc::SurveyCapture queries;
  crisloc::Rng rng(777);
  const double m0 = sc.grid_spacing;
  const std::vector<crisloc::Position> corners{
      {m0, m0},
      {sc.room.width - m0, m0},
      {m0, sc.room.height - m0},
      {sc.room.width - m0, sc.room.height - m0}};
  for (int rep = 0; rep < 15; ++rep)
    for (const auto& c : corners) {
      const crisloc::Position p{c.x + rng.uniform(-0.45, 0.45) * sc.grid_spacing,
                                c.y + rng.uniform(-0.45, 0.45) * sc.grid_spacing};
      queries.positions.push_back(p);
      queries.captures.push_back(
          crisloc::synth::generate_capture(sc, p, 30, 90000 + rep * 7));
    }
  const std::string q_path = dir / "queries.json";
  crisloc::io::save(queries, q_path);

  const std::string est_w = dir / "est_wknn.tsv";
  const std::string est_e = dir / "est_eeknn.tsv";
  REQUIRE(run("localize --map " + map_path + " --capture " + q_path +
              " --matcher wknn --k 3 --out " + est_w) == 0);
  REQUIRE(run("localize --map " + map_path + " --capture " + q_path +
              " --matcher eeknn --out " + est_e) == 0);

  const double mean_w = mean_error_column(slurp(est_w));
  const double mean_e = mean_error_column(slurp(est_e));
  CHECK(mean_e < mean_w);
}

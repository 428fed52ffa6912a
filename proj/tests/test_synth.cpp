#include <doctest.h>

#include <cmath>

#include "crisloc/model.hpp"
#include "crisloc/serialize.hpp"
#include "crisloc/synth.hpp"

using namespace crisloc;
using namespace crisloc::synth;

namespace {

Scenario small_scenario(std::uint64_t seed = 3, double noise_db = 0.5) {
  ScenarioConfig cfg;
  cfg.grid_cols = 5;
  cfg.grid_rows = 4;
  cfg.n_aps = 5;
  cfg.n_rps = 4;
  cfg.seed = seed;
  cfg.noise_sigma_db = noise_db;
  return make_scenario(cfg);
}

double mean_rss_dbm(const std::vector<CsiFrame>& frames) {
  double acc = 0.0;
  int n = 0;
  for (const auto& f : frames)
    if (f.heard()) {
      acc += f.rss_dbm;
      ++n;
    }
  return acc / n;
}

}  // namespace

TEST_CASE("path loss: log term vanishes at d0") {
  EnvironmentModel env;
  env.p_d0_dbm = -30;
  env.d0 = 1.0;
  CHECK(path_loss_dbm(env, {0, 0}, {1, 0}) == doctest::Approx(-30.0));
}

TEST_CASE("path loss: 10x distance at n=2 costs 20 dB") {
  EnvironmentModel env;
  env.p_d0_dbm = -30;
  env.d0 = 1.0;
  env.n = 2.0;
  CHECK(path_loss_dbm(env, {0, 0}, {10, 0}) == doctest::Approx(-50.0));
}

TEST_CASE("path loss: wall term caps at C") {
  EnvironmentModel env;
  env.p_d0_dbm = -30;
  env.n = 2.0;
  env.waf_db = 4.0;
  env.wall_cap = 3;
  // Five walls crossing the segment from (0,0) to (1,0).
  for (int i = 1; i <= 5; ++i) {
    const double x = i / 6.0;
    env.walls.push_back({{x, -1}, {x, 1}});
  }
  const double with_walls = path_loss_dbm(env, {0, 0}, {1, 0});
  env.walls.clear();
  const double without = path_loss_dbm(env, {0, 0}, {1, 0});
  CHECK(without - with_walls == doctest::Approx(12.0));  // min(5,3)*4
}

TEST_CASE("capture: subcarrier power sums to RSS when clean") {
  Scenario sc = small_scenario(11, 0.0);
  sc.agc.min_gain = sc.agc.max_gain = 1.0;
  sc.anomaly_rate = 0.0;

  const Capture cap = generate_capture(sc, {2.0, 1.5}, 5);
  for (const auto& [ap, frames] : cap)
    for (const auto& f : frames) {
      double sumsq = 0.0;
      for (const auto& c : f.subcarriers) sumsq += std::norm(c);
      CHECK(sumsq == doctest::Approx(dbm_to_mw(f.rss_dbm)).epsilon(1e-12));
    }
}

TEST_CASE("capture: deterministic for identical inputs") {
  const Scenario sc = small_scenario(5);
  const Capture a = generate_capture(sc, {1.0, 1.0}, 8, 2);
  const Capture b = generate_capture(sc, {1.0, 1.0}, 8, 2);
  REQUIRE(a.size() == b.size());
  for (const auto& [ap, frames] : a) {
    const auto& other = b.at(ap);
    REQUIRE(frames.size() == other.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
      CHECK(frames[i].rss_dbm == other[i].rss_dbm);
      CHECK(frames[i].subcarriers == other[i].subcarriers);
    }
  }
}

TEST_CASE("capture: doubling distance at n=2 drops mean RSS by ~6.02 dB") {
  ScenarioConfig cfg;
  cfg.grid_cols = 12;
  cfg.grid_rows = 8;
  cfg.n_aps = 4;
  cfg.seed = 17;
  cfg.noise_sigma_db = 0.5;
  Scenario sc = make_scenario(cfg);
  // Single AP at a known spot, no walls.
  sc.aps.resize(1);
  sc.aps[0].pos = {0.5, 0.5};
  sc.env.walls.clear();

  const Position rx1{2.5, 0.5}, rx2{4.5, 0.5};  // d = 2 and 4
  const Capture c1 = generate_capture(sc, rx1, 1000);
  const Capture c2 = generate_capture(sc, rx2, 1000);
  const double diff = mean_rss_dbm(c1.at(sc.aps[0].id)) - mean_rss_dbm(c2.at(sc.aps[0].id));
  CHECK(diff == doctest::Approx(20.0 * std::log10(2.0)).epsilon(0.3 / 6.02));
}

TEST_CASE("capture: closer position has larger empirical power") {
  ScenarioConfig cfg;
  cfg.grid_cols = 12;
  cfg.grid_rows = 8;
  cfg.n_aps = 4;
  cfg.seed = 23;
  cfg.noise_sigma_db = 1.0;
  Scenario sc = make_scenario(cfg);
  sc.aps.resize(1);
  sc.aps[0].pos = {0.5, 0.5};

  const Capture near = generate_capture(sc, {1.5, 0.5}, 500);
  const Capture far = generate_capture(sc, {4.0, 2.0}, 500);
  double p_near = 0, p_far = 0;
  for (const auto& f : near.at(sc.aps[0].id)) p_near += dbm_to_mw(f.rss_dbm);
  for (const auto& f : far.at(sc.aps[0].id)) p_far += dbm_to_mw(f.rss_dbm);
  CHECK(p_near > p_far);
}

TEST_CASE("capture: AGC gain cancels in subcarrier ratios") {
  Scenario with_agc = small_scenario(29, 0.3);
  Scenario no_agc = with_agc;
  no_agc.agc.min_gain = no_agc.agc.max_gain = 1.0;

  const Capture a = generate_capture(with_agc, {2.0, 2.0}, 10);
  const Capture b = generate_capture(no_agc, {2.0, 2.0}, 10);
  const ApId id = with_agc.aps[0].id;
  const auto active = [&](const CsiFrame& f) {
    std::vector<int> idx;
    for (std::size_t s = 0; s < f.subcarriers.size(); ++s)
      if (std::abs(f.subcarriers[s]) > 0) idx.push_back(static_cast<int>(s));
    return idx;
  };
  for (std::size_t i = 0; i < a.at(id).size(); ++i) {
    const auto& fa = a.at(id)[i];
    const auto& fb = b.at(id)[i];
    const auto idx = active(fa);
    REQUIRE(idx.size() >= 2);
    const double ra = std::abs(fa.subcarriers[idx[0]]) / std::abs(fa.subcarriers[idx[1]]);
    const double rb = std::abs(fb.subcarriers[idx[0]]) / std::abs(fb.subcarriers[idx[1]]);
    CHECK(ra == doctest::Approx(rb).epsilon(1e-9));
  }
}

TEST_CASE("capture: declared zero subcarriers stay zero in every frame") {
  Scenario sc = small_scenario(31, 1.0);
  sc.anomaly_rate = 0.1;
  const Capture cap = generate_capture(sc, {1.0, 2.0}, 50);
  for (const auto& [ap, frames] : cap)
    for (const auto& f : frames)
      for (int s : sc.zero_subcarriers) CHECK(std::abs(f.subcarriers[s]) == 0.0);
}

TEST_CASE("capture: rx outside the room is rejected") {
  const Scenario sc = small_scenario();
  CHECK_THROWS_AS(generate_capture(sc, {-1.0, 0.5}, 3), std::invalid_argument);
  CHECK_THROWS_AS(generate_capture(sc, {0.5, 100.0}, 3), std::invalid_argument);
}

TEST_CASE("move_ap: deterministic and flagged") {
  const Scenario sc = small_scenario(37);
  const ApId id = sc.aps[2].id;
  const Position old_pos = sc.aps[2].pos;

  const Scenario moved1 = move_ap(move_ap(sc, id, {3.0, 1.0}), id, old_pos);
  const Scenario moved2 = move_ap(move_ap(sc, id, {3.0, 1.0}), id, old_pos);
  CHECK(io::to_json(moved1) == io::to_json(moved2));

  SUBCASE("unknown id") {
    CHECK_THROWS_WITH_AS(move_ap(sc, "nope", {1, 1}), doctest::Contains("nope"),
                         std::invalid_argument);
  }
  SUBCASE("same position still redraws the multipath and flags alteration") {
    const Scenario same = move_ap(sc, id, old_pos);
    CHECK(same.aps[2].altered);
    CHECK(same.aps[2].revision == 1);
    // Hardware response survives relocation; the multipath sources do not.
    CHECK(same.aps[2].profile.curve == sc.aps[2].profile.curve);
    const auto& a = same.aps[2].profile.sources;
    const auto& b = sc.aps[2].profile.sources;
    bool sources_changed = a.size() != b.size();
    for (std::size_t i = 0; !sources_changed && i < a.size(); ++i)
      sources_changed = a[i].dx != b[i].dx || a[i].amplitude != b[i].amplitude ||
                        a[i].phase != b[i].phase;
    CHECK(sources_changed);
    CHECK(same.altered_set() == std::set<ApId>{id});
  }
}

TEST_CASE("move_ap: mean RSS shift follows the path-loss delta") {
  Scenario sc = small_scenario(41, 0.4);
  sc.aps.resize(1);
  sc.aps[0].pos = {0.5, 0.5};
  sc.env.walls.clear();
  const ApId id = sc.aps[0].id;
  const Position rx{1.5, 0.5};
  const Position new_pos{4.5, 2.5};

  const Scenario moved = move_ap(sc, id, new_pos);
  const double before = mean_rss_dbm(generate_capture(sc, rx, 800).at(id));
  const double after = mean_rss_dbm(generate_capture(moved, rx, 800).at(id));
  const double expected =
      path_loss_dbm(sc.env, new_pos, rx) - path_loss_dbm(sc.env, sc.aps[0].pos, rx);
  CHECK(after - before == doctest::Approx(expected).epsilon(0.05));
}

TEST_CASE("scenario serialization round-trips") {
  const Scenario sc = small_scenario(43);
  const std::string text = io::to_json(sc);
  const Scenario back = io::scenario_from_json(text);
  CHECK(io::to_json(back) == text);
}

#include "crisloc/synth.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <stdexcept>

#include "crisloc/rng.hpp"

namespace crisloc::synth {

namespace {

// Stream tags for seed derivation.
constexpr std::uint64_t kTagProfile = 0x50524f46;   // "PROF"
constexpr std::uint64_t kTagCapture = 0x43415054;   // "CAPT"
constexpr std::uint64_t kTagScenario = 0x5343454e;  // "SCEN"

// Phase advance per subcarrier step per meter of excess path, ~2*pi*df/c
// for a 20 MHz / 64-subcarrier OFDM grid with some extra selectivity.
constexpr double kSubcarrierPhaseSlope = 0.013;

// The smooth frequency-response curve models the AP's own radio hardware:
// it survives relocation. Multipath image sources model the environment
// around the AP position: they are redrawn on every move (revision).
std::vector<double> draw_curve(std::uint64_t scenario_seed, int ap_index,
                               int n_subcarriers) {
  Rng rng(mix_seed(mix_seed(scenario_seed, kTagProfile),
                   static_cast<std::uint64_t>(ap_index) * 1000003ull));
  const int S = n_subcarriers;
  std::vector<double> white(S);
  for (auto& w : white) w = rng.normal();
  const double len = 8.0, sigma_gp = 0.25;
  std::vector<double> curve(S);
  for (int s = 0; s < S; ++s) {
    double acc = 0.0, wsum = 0.0;
    for (int t = 0; t < S; ++t) {
      const double w = std::exp(-0.5 * (s - t) * (s - t) / (len * len));
      acc += w * white[t];
      wsum += w * w;
    }
    curve[s] = std::exp(sigma_gp * acc / std::sqrt(wsum));
  }
  return curve;
}

std::vector<MultipathSource> draw_sources(std::uint64_t scenario_seed, int ap_index,
                                          int revision) {
  Rng rng(mix_seed(mix_seed(scenario_seed, kTagProfile + 1),
                   static_cast<std::uint64_t>(ap_index) * 1000003ull +
                       static_cast<std::uint64_t>(revision)));
  std::vector<MultipathSource> sources(rng.uniform_int(3, 8));
  for (auto& src : sources) {
    const double theta = rng.uniform(0.0, 2.0 * M_PI);
    const double radius = rng.uniform(0.5, 5.0);
    src.dx = radius * std::cos(theta);
    src.dy = radius * std::sin(theta);
    src.amplitude = rng.uniform(0.03, 0.12);
    src.phase = rng.uniform(0.0, 2.0 * M_PI);
  }
  return sources;
}

GainProfile draw_profile(std::uint64_t scenario_seed, int ap_index, int revision,
                         int n_subcarriers) {
  GainProfile p;
  p.curve = draw_curve(scenario_seed, ap_index, n_subcarriers);
  p.sources = draw_sources(scenario_seed, ap_index, revision);
  return p;
}

// Frequency-selective envelope of one AP at one position, normalized so the
// mean square over non-zero subcarriers is 1 (total power carries the path
// loss, the envelope carries only shape).
std::vector<double> envelope_at(const Scenario& sc, const AccessPoint& ap, Position rx) {
  const int S = sc.n_subcarriers;
  std::vector<double> env(S, 0.0);
  const double d_direct = std::max(distance(ap.pos, rx), 1e-6);

  std::vector<double> delta(ap.profile.sources.size());
  for (std::size_t k = 0; k < ap.profile.sources.size(); ++k) {
    const auto& src = ap.profile.sources[k];
    const Position img{ap.pos.x + src.dx, ap.pos.y + src.dy};
    delta[k] = distance(img, rx) - d_direct;
  }

  double sumsq = 0.0;
  int n_nonzero = 0;
  for (int s = 0; s < S; ++s) {
    if (sc.zero_subcarriers.count(s)) continue;
    double re = 1.0, im = 0.0;
    for (std::size_t k = 0; k < ap.profile.sources.size(); ++k) {
      const auto& src = ap.profile.sources[k];
      const double phi = src.phase +
                         2.0 * M_PI * delta[k] / sc.multipath_wavelength +
                         kSubcarrierPhaseSlope * (s - S / 2) * delta[k];
      re += src.amplitude * std::cos(phi);
      im += src.amplitude * std::sin(phi);
    }
    env[s] = ap.profile.curve[s] * std::hypot(re, im);
    sumsq += env[s] * env[s];
    ++n_nonzero;
  }
  if (n_nonzero == 0 || sumsq <= 0.0)
    throw std::runtime_error("scenario declares every subcarrier zero");
  const double scale = std::sqrt(static_cast<double>(n_nonzero) / sumsq);
  for (auto& e : env) e *= scale;
  return env;
}

}  // namespace

int Scenario::ap_index(const ApId& id) const {
  for (std::size_t i = 0; i < aps.size(); ++i)
    if (aps[i].id == id) return static_cast<int>(i);
  return -1;
}

std::vector<Position> Scenario::rp_positions() const {
  std::vector<Position> out;
  out.reserve(rp_indices.size());
  for (int i : rp_indices) out.push_back(grid.at(i));
  return out;
}

std::vector<ApId> Scenario::ap_ids() const {
  std::vector<ApId> ids;
  ids.reserve(aps.size());
  for (const auto& ap : aps) ids.push_back(ap.id);
  return ids;
}

std::set<ApId> Scenario::altered_set() const {
  std::set<ApId> out;
  for (const auto& ap : aps)
    if (ap.altered) out.insert(ap.id);
  return out;
}

Scenario make_scenario(const ScenarioConfig& cfg) {
  if (cfg.grid_cols < 2 || cfg.grid_rows < 2)
    throw std::invalid_argument("grid must be at least 2x2");
  Scenario sc;
  sc.seed = cfg.seed;
  sc.grid_spacing = cfg.grid_spacing;
  sc.n_subcarriers = cfg.n_subcarriers;
  sc.env.noise_sigma_db = cfg.noise_sigma_db;
  sc.anomaly_rate = cfg.anomaly_rate;

  // Survey grid sits 1 spacing away from the walls.
  const double margin = cfg.grid_spacing;
  sc.room.width = margin * 2 + (cfg.grid_cols - 1) * cfg.grid_spacing;
  sc.room.height = margin * 2 + (cfg.grid_rows - 1) * cfg.grid_spacing;
  for (int r = 0; r < cfg.grid_rows; ++r)
    for (int c = 0; c < cfg.grid_cols; ++c)
      sc.grid.push_back({margin + c * cfg.grid_spacing, margin + r * cfg.grid_spacing});

  // Nexmon-style invalid subcarriers: guards plus DC.
  if (cfg.n_subcarriers == 64)
    sc.zero_subcarriers = {0, 1, 2, 31, 32, 33, 61, 62, 63};

  Rng rng(mix_seed(cfg.seed, kTagScenario));

  // APs around the perimeter first, then interior.
  for (int a = 0; a < cfg.n_aps; ++a) {
    AccessPoint ap;
    ap.id = "ap" + std::to_string(a + 1);
    const double t = static_cast<double>(a) / cfg.n_aps;
    const double jitter_x = rng.uniform(-0.2, 0.2) * cfg.grid_spacing;
    const double jitter_y = rng.uniform(-0.2, 0.2) * cfg.grid_spacing;
    const double u = t * 4.0;
    double x, y;
    const double w = sc.room.width, h = sc.room.height, inset = 0.25;
    if (u < 1.0) {
      x = inset + (w - 2 * inset) * u;
      y = inset;
    } else if (u < 2.0) {
      x = w - inset;
      y = inset + (h - 2 * inset) * (u - 1.0);
    } else if (u < 3.0) {
      x = w - inset - (w - 2 * inset) * (u - 2.0);
      y = h - inset;
    } else {
      x = inset;
      y = h - inset - (h - 2 * inset) * (u - 3.0);
    }
    ap.pos = {std::clamp(x + jitter_x, 0.1, w - 0.1), std::clamp(y + jitter_y, 0.1, h - 0.1)};
    ap.profile = draw_profile(cfg.seed, a, 0, cfg.n_subcarriers);
    sc.aps.push_back(std::move(ap));
  }

  for (int w = 0; w < cfg.n_walls; ++w) {
    Wall wall;
    if (rng.bernoulli(0.5)) {
      const double x = rng.uniform(0.2, sc.room.width - 0.2);
      wall.a = {x, rng.uniform(0.0, sc.room.height * 0.4)};
      wall.b = {x, wall.a.y + rng.uniform(1.0, sc.room.height * 0.5)};
    } else {
      const double y = rng.uniform(0.2, sc.room.height - 0.2);
      wall.a = {rng.uniform(0.0, sc.room.width * 0.4), y};
      wall.b = {wall.a.x + rng.uniform(1.0, sc.room.width * 0.5), y};
    }
    sc.env.walls.push_back(wall);
  }

  // Reference points on a coarse two-dimensional sub-grid so they span the
  // room rather than a single line.
  const int n_points = static_cast<int>(sc.grid.size());
  const int n_rps = std::min(cfg.n_rps, n_points);
  if (n_rps > 0) {
    int rp_cols = std::max(1, static_cast<int>(std::lround(std::sqrt(
                                  n_rps * static_cast<double>(cfg.grid_cols) /
                                  cfg.grid_rows))));
    rp_cols = std::min(rp_cols, n_rps);
    const int rp_rows = (n_rps + rp_cols - 1) / rp_cols;
    for (int r = 0; r < rp_rows && static_cast<int>(sc.rp_indices.size()) < n_rps; ++r)
      for (int c = 0; c < rp_cols && static_cast<int>(sc.rp_indices.size()) < n_rps; ++c) {
        const int row = std::clamp(
            static_cast<int>(std::lround((r + 0.5) / rp_rows * (cfg.grid_rows - 1))),
            0, cfg.grid_rows - 1);
        const int col = std::clamp(
            static_cast<int>(std::lround((c + 0.5) / rp_cols * (cfg.grid_cols - 1))),
            0, cfg.grid_cols - 1);
        int idx = row * cfg.grid_cols + col;
        while (std::count(sc.rp_indices.begin(), sc.rp_indices.end(), idx))
          idx = (idx + 1) % n_points;
        sc.rp_indices.push_back(idx);
      }
  }
  return sc;
}

namespace {
int orientation(Position a, Position b, Position c) {
  const double v = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
  if (v > 0) return 1;
  if (v < 0) return -1;
  return 0;
}
}  // namespace

int count_wall_crossings(const std::vector<Wall>& walls, Position a, Position b) {
  int n = 0;
  for (const auto& w : walls) {
    const int o1 = orientation(a, b, w.a), o2 = orientation(a, b, w.b);
    const int o3 = orientation(w.a, w.b, a), o4 = orientation(w.a, w.b, b);
    if (o1 != o2 && o3 != o4 && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0) ++n;
  }
  return n;
}

double path_loss_dbm(const EnvironmentModel& env, Position tx, Position rx) {
  const double d = std::max(distance(tx, rx), env.d0 / 10.0);
  const int n_w = count_wall_crossings(env.walls, tx, rx);
  const double wall_term = std::min(n_w, env.wall_cap) * env.waf_db;
  return env.p_d0_dbm - 10.0 * env.n * std::log10(d / env.d0) - wall_term;
}

Capture generate_capture(const Scenario& sc, Position rx, int n_frames,
                         std::uint64_t burst) {
  if (n_frames < 1) throw std::invalid_argument("n_frames must be >= 1");
  if (rx.x < 0 || rx.x > sc.room.width || rx.y < 0 || rx.y > sc.room.height)
    throw std::invalid_argument("receiver position outside room bounding box");

  const int S = sc.n_subcarriers;
  Capture capture;
  for (std::size_t a = 0; a < sc.aps.size(); ++a) {
    const auto& ap = sc.aps[a];
    const std::uint64_t stream =
        mix_seed(mix_seed(mix_seed(sc.seed, kTagCapture), burst),
                 hash_double(rx.x) ^ (hash_double(rx.y) << 1) ^
                     (static_cast<std::uint64_t>(a) * 0x9e3779b9ull));
    Rng rng(stream);

    const double pl_dbm = path_loss_dbm(sc.env, ap.pos, rx);
    const double pl_mw = dbm_to_mw(pl_dbm);
    const std::vector<double> env = envelope_at(sc, ap, rx);
    const int n_nonzero = S - static_cast<int>(sc.zero_subcarriers.size());
    const double base = std::sqrt(pl_mw / n_nonzero);

    std::vector<CsiFrame>& frames = capture[ap.id];
    frames.reserve(n_frames);
    for (int f = 0; f < n_frames; ++f) {
      CsiFrame frame;
      frame.ap = ap.id;
      frame.sequence = f;
      frame.timestamp = 0.01 * f;
      frame.subcarriers.resize(S);

      std::vector<double> amp(S, 0.0);
      double rss_mw = 0.0;
      for (int s = 0; s < S; ++s) {
        if (sc.zero_subcarriers.count(s)) continue;
        double sigma = sc.env.noise_sigma_db;
        if (sc.unstable_subcarriers.count(s)) sigma *= sc.unstable_noise_factor;
        const double noise_db = sigma > 0 ? rng.normal(0.0, sigma) : 0.0;
        amp[s] = base * env[s] * std::pow(10.0, noise_db / 20.0);
        rss_mw += amp[s] * amp[s];
      }

      const double rss_dbm = mw_to_dbm(rss_mw);
      if (!(rss_dbm > kUnheardRssDbm)) {
        // Too weak to decode: the unheard convention.
        frame.rss_dbm = kUnheardRssDbm;
        frames.push_back(std::move(frame));
        continue;
      }
      frame.rss_dbm = std::min(rss_dbm, 0.0);

      // Measurement corruption hits the CSI path after RSS is latched.
      if (sc.anomaly_rate > 0 && rng.bernoulli(sc.anomaly_rate)) {
        for (int s = 0; s < S; ++s)
          if (amp[s] > 0 && rng.bernoulli(0.6)) amp[s] *= rng.uniform(0.1, 3.0);
      }

      const double gain = rng.uniform(sc.agc.min_gain, sc.agc.max_gain);
      for (int s = 0; s < S; ++s) {
        const double theta = rng.uniform(0.0, 2.0 * M_PI);
        frame.subcarriers[s] = std::polar(amp[s] * gain, amp[s] > 0 ? theta : 0.0);
      }
      frames.push_back(std::move(frame));
    }
  }
  return capture;
}

Scenario move_ap(const Scenario& sc, const ApId& id, Position new_pos) {
  const int idx = sc.ap_index(id);
  if (idx < 0) throw std::invalid_argument("unknown AP id: " + id);
  Scenario out = sc;
  AccessPoint& ap = out.aps[idx];
  ap.pos = new_pos;
  ap.revision += 1;
  // Relocation changes multipath, so the profile is redrawn even if the
  // position is unchanged.
  ap.profile = draw_profile(out.seed, idx, ap.revision, out.n_subcarriers);
  ap.altered = true;
  return out;
}

SurveyCapture survey(const Scenario& sc, int frames_per_position, int jobs) {
  SurveyCapture out;
  out.positions = sc.grid;
  out.captures.resize(sc.grid.size());
  const int n = static_cast<int>(sc.grid.size());
  jobs = std::max(1, jobs);
  if (jobs == 1) {
    for (int i = 0; i < n; ++i)
      out.captures[i] = generate_capture(sc, sc.grid[i], frames_per_position);
    return out;
  }
  std::vector<std::future<void>> tasks;
  std::atomic<int> next{0};
  for (int j = 0; j < jobs; ++j)
    tasks.push_back(std::async(std::launch::async, [&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1))
        out.captures[i] = generate_capture(sc, sc.grid[i], frames_per_position);
    }));
  for (auto& t : tasks) t.get();
  return out;
}

}  // namespace crisloc::synth

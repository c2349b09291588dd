#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "wifinet/dataset.hpp"
#include "wifinet/rng.hpp"

namespace wifinet {

struct EnvironmentSpec {
  double width_m = 60.0;  // 60 x 60 m = 3600 m^2
  double height_m = 60.0;
  int n_aps = 113;
  int n_positions = 30;
  double spacing_min_m = 3.0;
  double spacing_mean_m = 4.46;
  double spacing_tolerance = 0.15;  // relative, on (min, mean)
  int n_unknown = 67;
  double tx_power_min_dbm = -45.0;
  double tx_power_max_dbm = -35.0;
};

struct AccessPoint {
  std::string id;  // synthetic BSSID
  Vec2 pos;
  double tx_power_dbm = -40.0;  // at the 1 m reference distance
};

struct Environment {
  double width_m = 0.0;
  double height_m = 0.0;
  std::vector<AccessPoint> aps;
  std::vector<Vec2> train_positions;    // index == position_id
  std::vector<Vec2> unknown_positions;  // off-grid test points
  std::uint64_t seed = 0;               // drives shared temporal drift
};

// Log-distance path loss with log-normal shadowing plus a per-(AP, epoch)
// drift offset standing in for signal change over the weeks between training
// and test collection. Epoch 0 = training day, 1 = one week later, 2 = two
// months later.
//
// Shadowing is a static spatial field: the obstructions between an AP and a
// location do not change from scan to scan, so shadow(ap, location) is a
// fixed draw, smooth over ~metres. Scan-to-scan variation at a fixed spot is
// the (smaller) scan_sigma term. With per-scan shadowing instead, no
// classifier separates neighbouring positions at realistic noise levels.
//
// body_atten_dbm models the person carrying the scanning device: APs behind
// the carrier lose up to that many dB, as a smooth function of the angle
// between the AP bearing and the carrier's heading. Each standing scan draws
// a heading; scans taken in motion use the walking direction. This makes a
// position's scans a heading-parameterised family rather than a single
// template, which is what separates the nonlinear learners from the linear
// ones here.
// Drift is spatially structured: most of the change between collection days
// is environmental (doors, furniture, occupancy), which moves all APs of an
// area together, with a smaller per-AP residual. drift_zone_frac is the
// variance fraction carried by the shared zone component.
// Training data is collected in several sessions spread over days, each with
// its own drift realisation, the way a real site survey accumulates. Test
// epochs then shift the environment once more. Models therefore see temporal
// variability during training instead of one unnaturally clean snapshot.
struct RadioModel {
  double path_loss_exponent = 4.0;
  double shadow_sigma_dbm = 4.0;       // static spatial shadowing
  double scan_sigma_dbm = 1.5;         // per-scan fast fading
  double body_atten_dbm = 8.0;         // peak attenuation behind the carrier
  int train_sessions = 5;
  double session_sigma_dbm = 3.0;      // drift between training sessions
  double drift_sigma_week_dbm = 3.0;
  double drift_sigma_months_dbm = 4.0;
  double drift_zone_frac = 0.7;
  double drift_zone_m = 15.0;          // zone edge length
  double shadow_cell_m = 3.0;          // correlation length of the shadow field
  double reference_distance_m = 1.0;
  double dropout_prob = 0.05;
  int floor_dbm = kRssFloorDbm;
  int ceil_dbm = kRssCeilDbm;

  double drift_sigma(int epoch) const {
    if (epoch <= 0) return 0.0;
    return epoch == 1 ? drift_sigma_week_dbm : drift_sigma_months_dbm;
  }
};

struct Trajectory {
  std::vector<Vec2> waypoints;
  double speed_mps = 1.0;
  double scan_interval_s = 1.0;
};

namespace detail {

inline std::string synthetic_bssid(int index) {
  char buf[18];
  std::snprintf(buf, sizeof(buf), "02:%02X:%02X:%02X:%02X:%02X", (index >> 24) & 0xff,
                (index >> 16) & 0xff, (index >> 8) & 0xff, index & 0xff, 0);
  return buf;
}

struct GridShape {
  int cols = 0;
  int rows = 0;
};

inline GridShape grid_shape(int n) {
  GridShape g;
  g.cols = 1;
  while (g.cols * g.cols < n) ++g.cols;
  g.rows = (n + g.cols - 1) / g.cols;
  return g;
}

}  // namespace detail

// Train positions form a jittered grid tuned until the nearest-neighbour
// spacing profile lands within the requested tolerance of (min, mean).
inline Environment generate_environment(const EnvironmentSpec& spec, std::uint64_t seed) {
  if (spec.n_positions < 2) throw std::invalid_argument("need at least 2 train positions");
  if (spec.n_aps < 1) throw std::invalid_argument("need at least 1 AP");
  if (spec.spacing_min_m <= 0 || spec.spacing_mean_m < spec.spacing_min_m)
    throw std::invalid_argument("invalid spacing profile");

  const auto grid = detail::grid_shape(spec.n_positions);
  const double usable_w = spec.width_m * 0.95;
  const double usable_h = spec.height_m * 0.95;

  Environment env;
  env.width_m = spec.width_m;
  env.height_m = spec.height_m;
  env.seed = seed;

  double pitch = spec.spacing_mean_m;
  const auto tol_ok = [&](const SpacingStats& st) {
    const double t = spec.spacing_tolerance;
    return st.min_m >= spec.spacing_min_m * (1 - t) && st.min_m <= spec.spacing_min_m * (1 + t) &&
           st.mean_m >= spec.spacing_mean_m * (1 - t) && st.mean_m <= spec.spacing_mean_m * (1 + t);
  };

  bool placed = false;
  for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
    const double jitter = (pitch - spec.spacing_min_m) / 2.0;
    const double extent_w = (grid.cols - 1) * pitch + 2 * jitter;
    const double extent_h = (grid.rows - 1) * pitch + 2 * jitter;
    if (extent_w > usable_w || extent_h > usable_h)
      throw std::invalid_argument("spacing profile infeasible for bounds");

    const double x0 = (spec.width_m - (grid.cols - 1) * pitch) / 2.0;
    const double y0 = (spec.height_m - (grid.rows - 1) * pitch) / 2.0;

    auto rng = make_rng(seed, 0x706f73, static_cast<std::uint64_t>(attempt));
    std::uniform_real_distribution<double> jd(-jitter, jitter);

    std::vector<Vec2> pts;
    pts.reserve(static_cast<std::size_t>(spec.n_positions));
    for (int i = 0; i < spec.n_positions; ++i) {
      const int r = i / grid.cols, c = i % grid.cols;
      const double jx = jitter > 0 ? jd(rng) : 0.0;
      const double jy = jitter > 0 ? jd(rng) : 0.0;
      pts.push_back({x0 + c * pitch + jx, y0 + r * pitch + jy});
    }

    const SpacingStats st = spacing_stats(pts);
    if (tol_ok(st)) {
      env.train_positions = std::move(pts);
      placed = true;
    } else {
      // steer the pitch toward the mean target, then retry with fresh jitter
      pitch *= std::clamp(spec.spacing_mean_m / st.mean_m, 0.9, 1.1);
    }
  }
  if (!placed) throw std::invalid_argument("could not satisfy the spacing profile");

  // unknown test points scattered over the train grid's bounding box
  {
    double min_x = env.train_positions[0].x, max_x = min_x;
    double min_y = env.train_positions[0].y, max_y = min_y;
    for (const auto& p : env.train_positions) {
      min_x = std::min(min_x, p.x);
      max_x = std::max(max_x, p.x);
      min_y = std::min(min_y, p.y);
      max_y = std::max(max_y, p.y);
    }
    auto rng = make_rng(seed, 0x756e6b);
    std::uniform_real_distribution<double> ux(min_x, max_x), uy(min_y, max_y);
    env.unknown_positions.reserve(static_cast<std::size_t>(spec.n_unknown));
    for (int i = 0; i < spec.n_unknown; ++i) env.unknown_positions.push_back({ux(rng), uy(rng)});
  }

  {
    auto rng = make_rng(seed, 0x617073);
    std::uniform_real_distribution<double> ux(0.0, spec.width_m), uy(0.0, spec.height_m);
    std::uniform_real_distribution<double> up(spec.tx_power_min_dbm, spec.tx_power_max_dbm);
    env.aps.reserve(static_cast<std::size_t>(spec.n_aps));
    for (int i = 0; i < spec.n_aps; ++i)
      env.aps.push_back({detail::synthetic_bssid(i), {ux(rng), uy(rng)}, up(rng)});
  }
  return env;
}

// Drift is a property of the radio environment over time: every dataset drawn
// from the same environment sees the same per-(AP, epoch) offset.
inline double drift_offset_dbm(const Environment& env, const RadioModel& radio, int ap_index,
                               int epoch) {
  const double sigma = radio.drift_sigma(epoch);
  if (sigma <= 0.0) return 0.0;
  const double frac = std::clamp(radio.drift_zone_frac, 0.0, 1.0);
  const auto& pos = env.aps[static_cast<std::size_t>(ap_index)].pos;
  const auto zx = static_cast<std::int64_t>(std::floor(pos.x / radio.drift_zone_m));
  const auto zy = static_cast<std::int64_t>(std::floor(pos.y / radio.drift_zone_m));
  const std::uint64_t zone = (static_cast<std::uint64_t>(zx + 0x10000) << 20) ^
                             static_cast<std::uint64_t>(zy + 0x10000);
  const double shared =
      gaussian_hash(env.seed, 0x7a6f6e65 + static_cast<std::uint64_t>(epoch), zone);
  const double indiv =
      gaussian_hash(env.seed, 0x64726966 + static_cast<std::uint64_t>(epoch),
                    static_cast<std::uint64_t>(ap_index));
  return sigma * (std::sqrt(frac) * shared + std::sqrt(1.0 - frac) * indiv);
}

inline std::vector<double> drift_offsets_dbm(const Environment& env, const RadioModel& radio,
                                             int epoch) {
  std::vector<double> drifts(env.aps.size(), 0.0);
  if (radio.drift_sigma(epoch) > 0.0)
    for (std::size_t i = 0; i < env.aps.size(); ++i)
      drifts[i] = drift_offset_dbm(env, radio, static_cast<int>(i), epoch);
  return drifts;
}

// Per-session drift for the training collection, same zone structure as the
// epoch drift but at session scale. Session 0 is the reference survey day
// with no offset.
inline std::vector<double> session_drift_offsets_dbm(const Environment& env,
                                                     const RadioModel& radio, int session) {
  std::vector<double> drifts(env.aps.size(), 0.0);
  if (session <= 0 || radio.session_sigma_dbm <= 0.0) return drifts;
  const double frac = std::clamp(radio.drift_zone_frac, 0.0, 1.0);
  for (std::size_t i = 0; i < env.aps.size(); ++i) {
    const auto& pos = env.aps[i].pos;
    const auto zx = static_cast<std::int64_t>(std::floor(pos.x / radio.drift_zone_m));
    const auto zy = static_cast<std::int64_t>(std::floor(pos.y / radio.drift_zone_m));
    const std::uint64_t zone = (static_cast<std::uint64_t>(zx + 0x10000) << 20) ^
                               static_cast<std::uint64_t>(zy + 0x10000);
    const double shared =
        gaussian_hash(env.seed, 0x73657a + static_cast<std::uint64_t>(session), zone);
    const double indiv = gaussian_hash(env.seed, 0x736573 + static_cast<std::uint64_t>(session),
                                       static_cast<std::uint64_t>(i));
    drifts[i] =
        radio.session_sigma_dbm * (std::sqrt(frac) * shared + std::sqrt(1.0 - frac) * indiv);
  }
  return drifts;
}

// Static shadow at (ap, location): bilinear blend of hashed unit normals on a
// shadow_cell_m grid, renormalised so the marginal std is exactly sigma.
inline double shadow_dbm(const Environment& env, const RadioModel& radio, int ap_index,
                         const Vec2& location) {
  if (radio.shadow_sigma_dbm <= 0.0) return 0.0;
  const double gx = location.x / radio.shadow_cell_m;
  const double gy = location.y / radio.shadow_cell_m;
  const auto i0 = static_cast<std::int64_t>(std::floor(gx));
  const auto j0 = static_cast<std::int64_t>(std::floor(gy));
  const double fx = gx - static_cast<double>(i0);
  const double fy = gy - static_cast<double>(j0);

  const auto node = [&](std::int64_t i, std::int64_t j) {
    const std::uint64_t cell = (static_cast<std::uint64_t>(i + 0x100000) << 24) ^
                               static_cast<std::uint64_t>(j + 0x100000);
    return gaussian_hash(env.seed, 0x73686164 + static_cast<std::uint64_t>(ap_index), cell);
  };

  const double w00 = (1 - fx) * (1 - fy), w10 = fx * (1 - fy);
  const double w01 = (1 - fx) * fy, w11 = fx * fy;
  const double blend = w00 * node(i0, j0) + w10 * node(i0 + 1, j0) + w01 * node(i0, j0 + 1) +
                       w11 * node(i0 + 1, j0 + 1);
  const double norm = std::sqrt(w00 * w00 + w10 * w10 + w01 * w01 + w11 * w11);
  return radio.shadow_sigma_dbm * blend / norm;
}

namespace detail {

inline RssSample sample_rss_with_drift(const Environment& env, const RadioModel& radio,
                                       const Vec2& location, const std::vector<double>& drifts,
                                       std::uint64_t sample_seed,
                                       std::optional<double> heading_override = std::nullopt) {
  if (location.x < 0 || location.x > env.width_m || location.y < 0 || location.y > env.height_m)
    throw std::invalid_argument("location outside environment bounds");

  auto rng = make_rng(sample_seed, 0x726673);
  std::normal_distribution<double> fading(0.0, radio.scan_sigma_dbm);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  constexpr double two_pi = 6.283185307179586;
  double heading = 0.0;
  if (radio.body_atten_dbm > 0) {
    const double drawn = unit(rng) * two_pi;
    heading = heading_override ? *heading_override : drawn;
  }

  RssSample s;
  s.location = location;
  for (std::size_t i = 0; i < env.aps.size(); ++i) {
    const auto& ap = env.aps[i];
    const double d = std::max(distance(ap.pos, location), radio.reference_distance_m);
    double rss = ap.tx_power_dbm -
                 10.0 * radio.path_loss_exponent * std::log10(d / radio.reference_distance_m);
    rss += shadow_dbm(env, radio, static_cast<int>(i), location);
    if (radio.body_atten_dbm > 0) {
      // rear sector blockage: zero in the front half-plane, full attenuation
      // beyond 120 degrees off heading, linear ramp between
      const double bearing = std::atan2(ap.pos.y - location.y, ap.pos.x - location.x);
      const double c = std::cos(bearing - heading);
      rss -= radio.body_atten_dbm * std::clamp(-2.0 * c, 0.0, 1.0);
    }
    if (radio.scan_sigma_dbm > 0) rss += fading(rng);
    rss += drifts[i];

    const bool dropped = unit(rng) < radio.dropout_prob;
    if (rss < radio.floor_dbm || dropped) continue;
    const int v = std::clamp(static_cast<int>(std::lround(std::min(rss, double(radio.ceil_dbm)))),
                             radio.floor_dbm, radio.ceil_dbm);
    s.readings.push_back({ap.id, v});
  }
  return s;
}

}  // namespace detail

// rss = P0 - 10 n log10(max(d, d0)/d0) + shadowing + drift; the AP is absent
// when the result falls below the visibility floor or scan dropout fires.
inline RssSample sample_rss(const Environment& env, const RadioModel& radio, const Vec2& location,
                            int epoch, std::uint64_t sample_seed) {
  return detail::sample_rss_with_drift(env, radio, location, drift_offsets_dbm(env, radio, epoch),
                                       sample_seed);
}

namespace detail {

inline int epoch_for_kind(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::train: return 0;
    case DatasetKind::test_known: return 1;  // one week later
    case DatasetKind::test_unknown:
    case DatasetKind::test_trajectory: return 2;  // two months later
  }
  return 0;
}

inline double epoch_base_timestamp(int epoch) {
  switch (epoch) {
    case 1: return 7 * 86400.0;
    case 2: return 61 * 86400.0;
    default: return 0.0;
  }
}

}  // namespace detail

inline Dataset generate_dataset(const Environment& env, const RadioModel& radio, DatasetKind kind,
                                int scans_per_point, std::uint64_t seed) {
  if (kind == DatasetKind::test_trajectory)
    throw std::invalid_argument("use generate_trajectory_dataset for trajectories");
  if (scans_per_point < 1) throw std::invalid_argument("scans_per_point must be >= 1");

  const bool labelled = kind != DatasetKind::test_unknown;
  const auto& points = labelled ? env.train_positions : env.unknown_positions;
  if (points.empty()) throw std::invalid_argument("environment has no positions for this kind");

  const int epoch = detail::epoch_for_kind(kind);
  const bool sessions = kind == DatasetKind::train && radio.train_sessions > 1;
  std::vector<std::vector<double>> drift_sets;
  if (sessions) {
    for (int s = 0; s < radio.train_sessions; ++s)
      drift_sets.push_back(session_drift_offsets_dbm(env, radio, s));
  } else {
    drift_sets.push_back(drift_offsets_dbm(env, radio, epoch));
  }

  Dataset ds;
  ds.kind = kind;
  ds.samples.reserve(points.size() * static_cast<std::size_t>(scans_per_point));

  std::uint64_t counter = 0;
  const double ts0 = detail::epoch_base_timestamp(epoch);
  for (std::size_t p = 0; p < points.size(); ++p) {
    for (int k = 0; k < scans_per_point; ++k) {
      const int session = sessions ? k % radio.train_sessions : 0;
      const auto& drifts = drift_sets[static_cast<std::size_t>(session)];
      RssSample s = detail::sample_rss_with_drift(env, radio, points[p], drifts,
                                                  mix_seed(seed, counter));
      if (s.readings.empty()) {
        // degenerate draw (heavy dropout); redo with a derived seed
        s = detail::sample_rss_with_drift(env, radio, points[p], drifts,
                                          mix_seed(seed, counter, 0x7265));
        if (s.readings.empty())
          throw std::runtime_error("generated a scan with no visible APs; radio model too harsh");
      }
      // sessions land on successive survey days
      s.timestamp = ts0 + session * 86400.0 + static_cast<double>(counter);
      if (labelled) {
        s.position_id = static_cast<int>(p);
        ds.positions.try_emplace(static_cast<int>(p), points[p]);
      }
      ds.samples.push_back(std::move(s));
      ++counter;
    }
  }
  validate_dataset(ds);
  return ds;
}

inline Dataset generate_trajectory_dataset(const Environment& env, const RadioModel& radio,
                                           const Trajectory& traj, std::uint64_t seed) {
  if (traj.waypoints.size() < 2) throw std::invalid_argument("trajectory needs >= 2 waypoints");
  if (traj.scan_interval_s <= 0) throw std::invalid_argument("scan interval must be positive");
  if (traj.speed_mps <= 0) throw std::invalid_argument("speed must be positive");
  for (const auto& w : traj.waypoints)
    if (w.x < 0 || w.x > env.width_m || w.y < 0 || w.y > env.height_m)
      throw std::invalid_argument("waypoint outside environment bounds");

  std::vector<double> leg_len;
  double total = 0.0;
  for (std::size_t i = 1; i < traj.waypoints.size(); ++i) {
    leg_len.push_back(distance(traj.waypoints[i - 1], traj.waypoints[i]));
    total += leg_len.back();
  }
  if (total <= 0) throw std::invalid_argument("trajectory has zero length");

  struct PathPoint {
    Vec2 pos;
    double heading;
  };
  auto point_at = [&](double walked) {
    double rest = walked;
    for (std::size_t i = 0; i < leg_len.size(); ++i) {
      if (rest <= leg_len[i] || i + 1 == leg_len.size()) {
        const double f = leg_len[i] > 0 ? std::min(rest, leg_len[i]) / leg_len[i] : 0.0;
        const Vec2& a = traj.waypoints[i];
        const Vec2& b = traj.waypoints[i + 1];
        return PathPoint{{a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)},
                         std::atan2(b.y - a.y, b.x - a.x)};
      }
      rest -= leg_len[i];
    }
    const Vec2& a = traj.waypoints[traj.waypoints.size() - 2];
    const Vec2& b = traj.waypoints.back();
    return PathPoint{b, std::atan2(b.y - a.y, b.x - a.x)};
  };

  const int epoch = 2;
  const auto drifts = drift_offsets_dbm(env, radio, epoch);
  const double duration = total / traj.speed_mps;
  const int n_scans = static_cast<int>(std::floor(duration / traj.scan_interval_s)) + 1;

  Dataset ds;
  ds.kind = DatasetKind::test_trajectory;
  const double t0 = detail::epoch_base_timestamp(epoch);
  for (int k = 0; k < n_scans; ++k) {
    const double t = k * traj.scan_interval_s;
    const auto [where, heading] = point_at(t * traj.speed_mps);
    RssSample s = detail::sample_rss_with_drift(
        env, radio, where, drifts, mix_seed(seed, static_cast<std::uint64_t>(k)), heading);
    if (s.readings.empty())
      s = detail::sample_rss_with_drift(
          env, radio, where, drifts, mix_seed(seed, static_cast<std::uint64_t>(k), 0x7265), heading);
    s.timestamp = t0 + t;
    ds.samples.push_back(std::move(s));
  }
  validate_dataset(ds);
  return ds;
}

// Rectangle loop through the interior of the train grid.
inline Trajectory default_trajectory(const Environment& env) {
  double min_x = env.train_positions[0].x, max_x = min_x;
  double min_y = env.train_positions[0].y, max_y = min_y;
  for (const auto& p : env.train_positions) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const double inset_x = (max_x - min_x) * 0.2;
  const double inset_y = (max_y - min_y) * 0.2;
  Trajectory t;
  t.waypoints = {{min_x + inset_x, min_y + inset_y},
                 {max_x - inset_x, min_y + inset_y},
                 {max_x - inset_x, max_y - inset_y},
                 {min_x + inset_x, max_y - inset_y},
                 {min_x + inset_x, min_y + inset_y}};
  return t;
}

inline nlohmann::json environment_to_json(const Environment& env) {
  nlohmann::json j;
  j["bounds"] = {env.width_m, env.height_m};
  j["seed"] = env.seed;
  auto aps = nlohmann::json::array();
  for (const auto& ap : env.aps)
    aps.push_back({{"id", ap.id}, {"x", ap.pos.x}, {"y", ap.pos.y}, {"p0_dbm", ap.tx_power_dbm}});
  j["aps"] = std::move(aps);
  auto train = nlohmann::json::array();
  for (std::size_t i = 0; i < env.train_positions.size(); ++i)
    train.push_back({{"id", i}, {"x", env.train_positions[i].x}, {"y", env.train_positions[i].y}});
  j["train_positions"] = std::move(train);
  auto unknown = nlohmann::json::array();
  for (const auto& p : env.unknown_positions) unknown.push_back({p.x, p.y});
  j["unknown_positions"] = std::move(unknown);
  return j;
}

inline Environment environment_from_json(const nlohmann::json& j) {
  Environment env;
  env.width_m = j.at("bounds").at(0).get<double>();
  env.height_m = j.at("bounds").at(1).get<double>();
  env.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& ap : j.at("aps"))
    env.aps.push_back({ap.at("id").get<std::string>(),
                       {ap.at("x").get<double>(), ap.at("y").get<double>()},
                       ap.at("p0_dbm").get<double>()});
  for (const auto& p : j.at("train_positions"))
    env.train_positions.push_back({p.at("x").get<double>(), p.at("y").get<double>()});
  for (const auto& p : j.at("unknown_positions"))
    env.unknown_positions.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return env;
}

}  // namespace wifinet

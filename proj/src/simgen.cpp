#include "spoofguard/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "spoofguard/error.hpp"
#include "spoofguard/util.hpp"

namespace spoofguard::simgen {
namespace {

using nlohmann::json;

// Fraction of a turn spent ramping curvature up (and, symmetrically, down).
constexpr double kTurnRampFraction = 0.25;

double turn_profile(double u) {
  u = std::clamp(u, 0.0, 1.0);
  if (u < kTurnRampFraction) {
    return 0.5 * (1.0 - std::cos(std::numbers::pi * u / kTurnRampFraction));
  }
  if (u > 1.0 - kTurnRampFraction) {
    return 0.5 * (1.0 - std::cos(std::numbers::pi * (1.0 - u) / kTurnRampFraction));
  }
  return 1.0;
}

// Mean of turn_profile over [0, 1].
constexpr double kTurnProfileMean = 1.0 - kTurnRampFraction;

std::string_view kind_name(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::Straight:
      return "straight";
    case SegmentKind::LeftTurn:
      return "left_turn";
    case SegmentKind::RightTurn:
      return "right_turn";
    case SegmentKind::Stop:
      return "stop";
  }
  return "straight";
}

SegmentKind parse_kind(const std::string& name) {
  if (name == "straight") return SegmentKind::Straight;
  if (name == "left_turn") return SegmentKind::LeftTurn;
  if (name == "right_turn") return SegmentKind::RightTurn;
  if (name == "stop") return SegmentKind::Stop;
  throw InvalidInputError("unknown segment kind '" + name + "'");
}

// Boundary-sampled kinematics on the internal simulation grid.
class Kinematics {
 public:
  Kinematics(double dt, double initial_speed, double max_accel)
      : dt_(dt), max_accel_(max_accel), speed_{initial_speed}, curvature_{0.0} {}

  std::size_t steps() const { return step_curvature_.size(); }
  double speed() const { return speed_.back(); }

  void push(double next_speed, double step_curvature, double next_curvature) {
    speed_.push_back(next_speed);
    step_curvature_.push_back(step_curvature);
    curvature_.push_back(next_curvature);
  }

  /// Moves speed toward target at the acceleration limit; stops after max_steps.
  void ramp_to(double target, std::size_t max_steps = static_cast<std::size_t>(-1)) {
    const double dv = max_accel_ * dt_;
    for (std::size_t k = 0; k < max_steps && speed() != target; ++k) {
      const double v = speed();
      const double next = target > v ? std::min(target, v + dv) : std::max(target, v - dv);
      push(next, 0.0, 0.0);
    }
  }

  void cruise(std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) push(speed(), 0.0, 0.0);
  }

  const std::vector<double>& speeds() const { return speed_; }
  const std::vector<double>& curvatures() const { return curvature_; }
  const std::vector<double>& step_curvatures() const { return step_curvature_; }

 private:
  double dt_;
  double max_accel_;
  std::vector<double> speed_;           // at boundaries, size steps + 1
  std::vector<double> curvature_;       // at boundaries, drives steering
  std::vector<double> step_curvature_;  // per step, drives heading
};

int gcd_int(int a, int b) { return std::gcd(a, b); }

}  // namespace

const ingest::RawChannel& SensorTrace::channel(std::string_view name) const {
  return ingest::require_channel(channels, name);
}

ingest::RawChannel& SensorTrace::channel(std::string_view name) {
  for (auto& c : channels) {
    if (c.name == name) return c;
  }
  throw ConfigurationError("missing channel '" + std::string(name) + "'");
}

std::vector<geo::TimedPoint> SensorTrace::gnss_track() const {
  const auto& lat = channel(ingest::kGnssLat).samples;
  const auto& lon = channel(ingest::kGnssLon).samples;
  std::vector<geo::TimedPoint> track;
  track.reserve(lat.size());
  for (std::size_t i = 0; i < lat.size(); ++i) {
    track.push_back({lat[i].t, geo::GeoPoint::from_degrees(lat[i].value, lon[i].value)});
  }
  return track;
}

double SensorTrace::gnss_hz() const {
  const auto& lat = channel(ingest::kGnssLat).samples;
  if (lat.size() < 2) throw InsufficientDataError("GNSS channel has fewer than two samples");
  return static_cast<double>(lat.size() - 1) / (lat.back().t - lat.front().t);
}

void validate(const RouteScript& script) {
  if (script.segments.empty()) throw InvalidInputError("empty route: script has no segments");
  if (script.gnss_hz <= 0 || script.can_hz <= 0) throw InvalidInputError("sensor rates must be positive");
  if (script.initial_speed_mps < 0.0) throw InvalidInputError("initial speed must be non-negative");
  if (!(script.vehicle.max_accel_mps2 > 0.0) || !(script.vehicle.wheelbase_m > 0.0) ||
      !(script.vehicle.steering_ratio > 0.0)) {
    throw InvalidInputError("vehicle parameters must be positive");
  }
  geo::validate(script.start);
  for (std::size_t i = 0; i < script.segments.size(); ++i) {
    const Segment& seg = script.segments[i];
    const std::string where = "segment " + std::to_string(i) + ": ";
    switch (seg.kind) {
      case SegmentKind::Straight:
        if (seg.speed_mps < 0.0) throw InvalidInputError(where + "negative speed");
        if (!(seg.duration_s > 0.0) && !(seg.length_m > 0.0)) {
          throw InvalidInputError(where + "straight needs a positive duration or length");
        }
        if (seg.length_m > 0.0 && !(seg.speed_mps > 0.0)) {
          throw InvalidInputError(where + "length-based straight needs a positive speed");
        }
        break;
      case SegmentKind::LeftTurn:
      case SegmentKind::RightTurn:
        if (!(seg.speed_mps > 0.0) || !(seg.angle_deg > 0.0) || !(seg.radius_m > 0.0)) {
          throw InvalidInputError(where + "turn needs positive speed, angle and radius");
        }
        break;
      case SegmentKind::Stop:
        if (!(seg.duration_s > 0.0)) throw InvalidInputError(where + "stop needs a positive duration");
        break;
    }
  }
}

SensorTrace generate_trace(const RouteScript& script) {
  validate(script);
  const int sim_hz = script.gnss_hz / gcd_int(script.gnss_hz, script.can_hz) * script.can_hz;
  const double dt = 1.0 / sim_hz;
  const VehicleConfig& vehicle = script.vehicle;

  Kinematics kin(dt, script.initial_speed_mps, vehicle.max_accel_mps2);
  std::vector<GroundTruthTurn> turns;
  auto steps_for = [&](double seconds) {
    return static_cast<std::size_t>(std::llround(seconds * sim_hz));
  };

  for (const Segment& seg : script.segments) {
    switch (seg.kind) {
      case SegmentKind::Straight: {
        if (seg.length_m > 0.0) {
          const std::size_t before = kin.steps();
          kin.ramp_to(seg.speed_mps);
          double covered = 0.0;
          for (std::size_t s = before; s < kin.steps(); ++s) {
            covered += 0.5 * (kin.speeds()[s] + kin.speeds()[s + 1]) * dt;
          }
          const double remaining = std::max(0.0, seg.length_m - covered);
          kin.cruise(static_cast<std::size_t>(std::llround(remaining / (seg.speed_mps * dt))));
        } else {
          const std::size_t n = steps_for(seg.duration_s);
          const std::size_t before = kin.steps();
          kin.ramp_to(seg.speed_mps, n);
          kin.cruise(n - (kin.steps() - before));
        }
        break;
      }
      case SegmentKind::LeftTurn:
      case SegmentKind::RightTurn: {
        kin.ramp_to(seg.speed_mps);
        const double angle = seg.angle_deg * geo::kDegToRad;
        const double v = seg.speed_mps;
        const std::size_t n =
            std::max<std::size_t>(4, steps_for(angle * seg.radius_m / (v * kTurnProfileMean)));
        double profile_sum = 0.0;
        for (std::size_t k = 0; k < n; ++k) profile_sum += turn_profile((k + 0.5) / n);
        // Normalized so the integrated heading change equals the scripted angle.
        const double sign = seg.kind == SegmentKind::RightTurn ? 1.0 : -1.0;
        const double peak = sign * angle / (v * dt * profile_sum);
        const double start = script.start_time_s + kin.steps() * dt;
        for (std::size_t k = 0; k < n; ++k) {
          kin.push(v, peak * turn_profile((k + 0.5) / n), peak * turn_profile((k + 1.0) / n));
        }
        turns.push_back({start, script.start_time_s + kin.steps() * dt,
                         seg.kind == SegmentKind::RightTurn ? TurnLabel::Right : TurnLabel::Left,
                         sign * angle, v});
        break;
      }
      case SegmentKind::Stop: {
        kin.ramp_to(0.0);
        kin.cruise(steps_for(seg.duration_s));
        break;
      }
    }
  }
  if (kin.steps() == 0) throw InvalidInputError("empty route: script produces no motion steps");

  const std::size_t n_steps = kin.steps();
  const auto& speed = kin.speeds();
  const auto& step_curv = kin.step_curvatures();
  const auto& curv = kin.curvatures();

  // Integrate pose over boundaries 0..n_steps.
  std::vector<geo::GeoPoint> pos(n_steps + 1);
  pos[0] = script.start;
  double hdg = script.start_heading_rad;
  for (std::size_t s = 0; s < n_steps; ++s) {
    const double dist = 0.5 * (speed[s] + speed[s + 1]) * dt;
    const double turn = step_curv[s] * dist;
    pos[s + 1] = dist > 0.0 ? geo::destination(pos[s], hdg + 0.5 * turn, dist) : pos[s];
    hdg += turn;
  }

  Rng rng(script.seed);
  auto noise = [&](double amplitude) {
    const double u = rng.uniform(-1.0, 1.0);
    return amplitude * u;
  };

  SensorTrace trace;
  trace.seed = script.seed;
  trace.config_hash = to_hex(fnv1a64(to_json(script).dump()));
  trace.turns = std::move(turns);

  const std::size_t gnss_stride = static_cast<std::size_t>(sim_hz / script.gnss_hz);
  const std::size_t can_stride = static_cast<std::size_t>(sim_hz / script.can_hz);
  const geo::EarthModel earth;

  ingest::RawChannel lat{std::string(ingest::kGnssLat), {}};
  ingest::RawChannel lon{std::string(ingest::kGnssLon), {}};
  for (std::size_t i = 0; i * gnss_stride <= n_steps; ++i) {
    const std::size_t s = i * gnss_stride;
    const double t = script.start_time_s + static_cast<double>(i) / script.gnss_hz;
    geo::GeoPoint p = pos[s];
    const double dn = noise(script.noise.gnss_m);
    const double de = noise(script.noise.gnss_m);
    p.lat += dn / earth.radius_m;
    p.lon += de / (earth.radius_m * std::cos(p.lat));
    lat.samples.push_back({t, p.lat_deg()});
    lon.samples.push_back({t, p.lon_deg()});
  }

  ingest::RawChannel speed_ch{std::string(ingest::kSpeed), {}};
  ingest::RawChannel accel_ch{std::string(ingest::kAccelPct), {}};
  ingest::RawChannel steer_ch{std::string(ingest::kSteeringDeg), {}};
  for (std::size_t j = 0; j * can_stride <= n_steps; ++j) {
    const std::size_t s = j * can_stride;
    const double t = script.start_time_s + static_cast<double>(j) / script.can_hz;
    const double accel = s < n_steps ? (speed[s + 1] - speed[s]) / dt : 0.0;
    const double pedal =
        std::clamp(vehicle.pedal_offset_pct + vehicle.pedal_gain_pct * accel, 0.0, 100.0);
    const double steering =
        vehicle.steering_ratio * std::atan(vehicle.wheelbase_m * curv[s]) * geo::kRadToDeg;
    speed_ch.samples.push_back({t, std::max(0.0, speed[s] + noise(script.noise.speed_mps))});
    accel_ch.samples.push_back({t, pedal + noise(script.noise.accel_pct)});
    steer_ch.samples.push_back({t, steering + noise(script.noise.steering_deg)});
  }
  trace.channels = {std::move(lat), std::move(lon), std::move(speed_ch), std::move(accel_ch),
                    std::move(steer_ch)};

  // Motion intervals from the noise-free speed profile.
  for (std::size_t s = 0; s <= n_steps; ++s) {
    const MotionState state = speed[s] > 0.0 ? MotionState::InMotion : MotionState::Standstill;
    const double t = script.start_time_s + s * dt;
    if (trace.motion.empty() || trace.motion.back().state != state) {
      if (!trace.motion.empty()) trace.motion.back().end_s = t;
      trace.motion.push_back({t, t, state});
    } else {
      trace.motion.back().end_s = t;
    }
  }
  return trace;
}

json to_json(const RouteScript& script) {
  json segs = json::array();
  for (const Segment& seg : script.segments) {
    json j;
    j["kind"] = kind_name(seg.kind);
    switch (seg.kind) {
      case SegmentKind::Straight:
        j["speed_mps"] = seg.speed_mps;
        if (seg.length_m > 0.0) {
          j["length_m"] = seg.length_m;
        } else {
          j["duration_s"] = seg.duration_s;
        }
        break;
      case SegmentKind::LeftTurn:
      case SegmentKind::RightTurn:
        j["speed_mps"] = seg.speed_mps;
        j["angle_deg"] = seg.angle_deg;
        j["radius_m"] = seg.radius_m;
        break;
      case SegmentKind::Stop:
        j["duration_s"] = seg.duration_s;
        break;
    }
    segs.push_back(std::move(j));
  }
  return json{
      {"segments", segs},
      {"start", {{"lat_deg", script.start.lat_deg()}, {"lon_deg", script.start.lon_deg()}}},
      {"start_heading_deg", script.start_heading_rad * geo::kRadToDeg},
      {"start_time_s", script.start_time_s},
      {"initial_speed_mps", script.initial_speed_mps},
      {"rates", {{"gnss_hz", script.gnss_hz}, {"can_hz", script.can_hz}}},
      {"noise",
       {{"gnss_m", script.noise.gnss_m},
        {"speed_mps", script.noise.speed_mps},
        {"accel_pct", script.noise.accel_pct},
        {"steering_deg", script.noise.steering_deg}}},
      {"vehicle",
       {{"wheelbase_m", script.vehicle.wheelbase_m},
        {"steering_ratio", script.vehicle.steering_ratio},
        {"max_accel_mps2", script.vehicle.max_accel_mps2},
        {"pedal_offset_pct", script.vehicle.pedal_offset_pct},
        {"pedal_gain_pct", script.vehicle.pedal_gain_pct}}},
      {"seed", script.seed},
  };
}

RouteScript route_from_json(const json& doc) {
  RouteScript script;
  try {
    for (const json& j : doc.at("segments")) {
      Segment seg;
      seg.kind = parse_kind(j.at("kind").get<std::string>());
      seg.speed_mps = j.value("speed_mps", 0.0);
      seg.duration_s = j.value("duration_s", 0.0);
      seg.length_m = j.value("length_m", 0.0);
      seg.angle_deg = j.value("angle_deg", 90.0);
      seg.radius_m = j.value("radius_m", 25.0);
      script.segments.push_back(seg);
    }
    if (doc.contains("start")) {
      script.start = geo::GeoPoint::from_degrees(doc["start"].at("lat_deg").get<double>(),
                                                 doc["start"].at("lon_deg").get<double>());
    }
    script.start_heading_rad = doc.value("start_heading_deg", 0.0) * geo::kDegToRad;
    script.start_time_s = doc.value("start_time_s", 0.0);
    script.initial_speed_mps = doc.value("initial_speed_mps", 0.0);
    if (doc.contains("rates")) {
      script.gnss_hz = doc["rates"].value("gnss_hz", 120);
      script.can_hz = doc["rates"].value("can_hz", 100);
    }
    if (doc.contains("noise")) {
      const json& n = doc["noise"];
      script.noise = {n.value("gnss_m", 0.0), n.value("speed_mps", 0.0), n.value("accel_pct", 0.0),
                      n.value("steering_deg", 0.0)};
    }
    if (doc.contains("vehicle")) {
      const json& v = doc["vehicle"];
      VehicleConfig d;
      script.vehicle = {v.value("wheelbase_m", d.wheelbase_m), v.value("steering_ratio", d.steering_ratio),
                        v.value("max_accel_mps2", d.max_accel_mps2),
                        v.value("pedal_offset_pct", d.pedal_offset_pct),
                        v.value("pedal_gain_pct", d.pedal_gain_pct)};
    }
    script.seed = doc.value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw FormatError(std::string("route script: ") + e.what());
  }
  validate(script);
  return script;
}

RouteScript load_route(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInputError("cannot open route script " + path.string());
  try {
    return route_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

json ground_truth_json(const SensorTrace& trace) {
  json turns = json::array();
  for (const auto& t : trace.turns) {
    turns.push_back({{"start_s", t.start_s},
                     {"end_s", t.end_s},
                     {"label", to_string(t.label)},
                     {"angle_deg", t.angle_rad * geo::kRadToDeg},
                     {"speed_mps", t.speed_mps}});
  }
  json motion = json::array();
  for (const auto& m : trace.motion) {
    motion.push_back({{"start_s", m.start_s}, {"end_s", m.end_s}, {"state", to_string(m.state)}});
  }
  return {{"seed", trace.seed}, {"config_hash", trace.config_hash}, {"turns", turns}, {"motion", motion}};
}

void save_trace(const std::filesystem::path& dir, const SensorTrace& trace) {
  std::filesystem::create_directories(dir);
  const std::string comment = "seed=" + std::to_string(trace.seed) + " config=" + trace.config_hash;
  ingest::TraceManifest manifest;
  for (const auto& channel : trace.channels) {
    const std::string file = channel.name + ".csv";
    std::ofstream out(dir / file);
    ingest::write_channel_csv(out, channel, comment);
    manifest.channels[channel.name] = file;
  }
  ingest::save_manifest(dir / "manifest.json", manifest);
  {
    std::ofstream out(dir / "ground_truth.json");
    out << ground_truth_json(trace).dump(2) << '\n';
  }
  std::ofstream out(dir / "aligned.csv");
  ingest::write_aligned_csv(out, ingest::synchronize(trace.channels), comment);
}

SensorTrace load_trace(const std::filesystem::path& dir) {
  SensorTrace trace;
  trace.channels = ingest::parse_trace(dir / "manifest.json");
  const auto gt_path = dir / "ground_truth.json";
  if (std::filesystem::exists(gt_path)) {
    std::ifstream in(gt_path);
    const json doc = json::parse(in);
    trace.seed = doc.value("seed", std::uint64_t{0});
    trace.config_hash = doc.value("config_hash", std::string{});
    for (const json& t : doc.value("turns", json::array())) {
      trace.turns.push_back({t.at("start_s").get<double>(), t.at("end_s").get<double>(),
                             parse_turn_label(t.at("label").get<std::string>()),
                             t.at("angle_deg").get<double>() * geo::kDegToRad,
                             t.value("speed_mps", 0.0)});
    }
    for (const json& m : doc.value("motion", json::array())) {
      trace.motion.push_back({m.at("start_s").get<double>(), m.at("end_s").get<double>(),
                              m.at("state").get<std::string>() == "Standstill"
                                  ? MotionState::Standstill
                                  : MotionState::InMotion});
    }
  }
  return trace;
}

RouteScript random_route(std::uint64_t seed, double duration_s, bool include_stop) {
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  RouteScript script;
  script.seed = seed;
  script.start = geo::GeoPoint::from_degrees(37.0 + rng.uniform(0.0, 1.0), -122.0 + rng.uniform(0.0, 1.0));
  script.start_heading_rad = geo::wrap_angle(rng.uniform(-std::numbers::pi, std::numbers::pi));
  script.initial_speed_mps = rng.uniform(7.0, 12.0);

  // Rough elapsed time, used only to decide when to stop adding segments.
  double elapsed = 0.0;
  bool stop_added = false;
  auto add_straight = [&] {
    const double d = rng.uniform(10.0, 16.0);
    script.segments.push_back({SegmentKind::Straight, rng.uniform(7.0, 13.0), d});
    elapsed += d;
  };
  add_straight();
  while (elapsed < duration_s) {
    const bool want_stop = include_stop && !stop_added && (rng.unit() < 0.4 || elapsed > 0.5 * duration_s);
    if (want_stop) {
      const double hold = rng.uniform(4.0, 7.0);
      script.segments.push_back({SegmentKind::Stop, 0.0, hold});
      elapsed += hold + 6.0;
      stop_added = true;
    } else {
      Segment turn;
      turn.kind = rng.unit() < 0.5 ? SegmentKind::LeftTurn : SegmentKind::RightTurn;
      turn.speed_mps = rng.uniform(6.0, 9.0);
      turn.angle_deg = rng.uniform(80.0, 100.0);
      turn.radius_m = rng.uniform(20.0, 30.0);
      script.segments.push_back(turn);
      elapsed += 8.0;
    }
    add_straight();
  }
  return script;
}

}  // namespace spoofguard::simgen

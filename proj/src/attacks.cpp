#include "spoofguard/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "spoofguard/error.hpp"
#include "spoofguard/geo.hpp"
#include "spoofguard/util.hpp"

namespace spoofguard::attacks {
namespace {

using geo::GeoPoint;
using nlohmann::json;

struct Gnss {
  std::vector<ingest::Sample>& lat;
  std::vector<ingest::Sample>& lon;

  explicit Gnss(simgen::SensorTrace& trace)
      : lat(trace.channel(ingest::kGnssLat).samples), lon(trace.channel(ingest::kGnssLon).samples) {}
  std::size_t size() const { return lat.size(); }
  double t(std::size_t i) const { return lat[i].t; }
  GeoPoint at(std::size_t i) const { return GeoPoint::from_degrees(lat[i].value, lon[i].value); }
  void set(std::size_t i, const GeoPoint& p) {
    lat[i].value = p.lat_deg();
    lon[i].value = p.lon_deg();
  }
};

std::size_t index_at(const Gnss& g, double t, const std::string& what) {
  if (g.size() < 2) throw ScenarioError("trace has too few GNSS samples");
  const auto it = std::lower_bound(g.lat.begin(), g.lat.end(), t - 1e-9,
                                   [](const ingest::Sample& s, double v) { return s.t < v; });
  const auto i = static_cast<std::size_t>(it - g.lat.begin());
  if (i == 0 || i >= g.size()) {
    throw ScenarioError(what + " at t=" + format_double(t) + " is outside the trace span (" +
                        format_double(g.t(0)) + ", " + format_double(g.t(g.size() - 1)) + "]");
  }
  return i;
}

// Bearing of travel arriving at sample i, from the nearest earlier sample at least `min_m` away.
std::optional<double> approach_heading(const Gnss& g, std::size_t i, double min_m) {
  const GeoPoint here = g.at(i);
  for (std::size_t j = i; j-- > 0;) {
    const GeoPoint p = g.at(j);
    if (geo::haversine_distance(p, here) >= min_m) return geo::heading(p, here);
  }
  return std::nullopt;
}

double speed_at(const simgen::SensorTrace& trace, double t) {
  return ingest::interpolate_at(trace.channel(ingest::kSpeed).samples, t);
}

int gnss_rate(const simgen::SensorTrace& trace) { return static_cast<int>(std::lround(trace.gnss_hz())); }

simgen::SensorTrace simulate_from(const simgen::SensorTrace& clean, std::vector<simgen::Segment> segments,
                                  const GeoPoint& start, double heading, double t0, double speed,
                                  std::uint64_t seed) {
  simgen::RouteScript script;
  script.segments = std::move(segments);
  script.start = start;
  script.start_heading_rad = heading;
  script.start_time_s = t0;
  script.initial_speed_mps = speed;
  script.gnss_hz = gnss_rate(clean);
  script.seed = seed;
  return simgen::generate_trace(script);
}

SpoofedTrace start(const simgen::SensorTrace& clean, const AttackScenario& scenario) {
  return SpoofedTrace{clean, scenario, 0, 0.0};
}

json segments_json(const std::vector<simgen::Segment>& segments) {
  simgen::RouteScript script;
  script.segments = segments;
  return simgen::to_json(script)["segments"];
}

std::vector<simgen::Segment> segments_from(const json& arr) {
  if (arr.empty()) return {};
  return simgen::route_from_json(json{{"segments", arr}}).segments;
}

}  // namespace

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::TurnByTurn: return "turn_by_turn";
    case AttackKind::Overshoot: return "overshoot";
    case AttackKind::WrongTurn: return "wrong_turn";
    case AttackKind::Stop: return "stop";
  }
  return "unknown";
}

AttackKind parse_attack_kind(std::string_view text) {
  for (auto k : {AttackKind::TurnByTurn, AttackKind::Overshoot, AttackKind::WrongTurn, AttackKind::Stop}) {
    if (text == to_string(k)) return k;
  }
  throw InvalidInputError("unknown attack kind '" + std::string(text) + "'");
}

SpoofedTrace inject_turn_by_turn(const simgen::SensorTrace& clean, const AttackScenario& scenario) {
  if (scenario.alternate_route.empty()) throw ScenarioError("turn-by-turn attack needs an alternate route");
  if (scenario.jump_m < 0.0) throw ScenarioError("jump distance must be non-negative");
  SpoofedTrace out = start(clean, scenario);
  Gnss g(out.trace);
  const std::size_t i0 = index_at(g, scenario.onset_s, "onset");
  const double heading = approach_heading(g, i0, 0.5).value_or(0.0);
  const GeoPoint jumped = geo::destination(g.at(i0), heading, scenario.jump_m);
  const auto alt = simulate_from(clean, scenario.alternate_route, jumped, heading, g.t(i0),
                                 speed_at(clean, g.t(i0)), scenario.seed);
  const auto& alat = alt.channel(ingest::kGnssLat).samples;
  const auto& alon = alt.channel(ingest::kGnssLon).samples;
  if (alat.size() < g.size() - i0) {
    throw ScenarioError("alternate route covers " + std::to_string(alat.size()) + " GNSS samples but " +
                        std::to_string(g.size() - i0) + " remain after onset");
  }
  for (std::size_t i = i0; i < g.size(); ++i) {
    g.lat[i].value = alat[i - i0].value;
    g.lon[i].value = alon[i - i0].value;
  }
  out.onset_index = i0;
  out.onset_s = g.t(i0);
  return out;
}

SpoofedTrace inject_overshoot(const simgen::SensorTrace& clean, const AttackScenario& scenario,
                              double speed_error) {
  SpoofedTrace out = start(clean, scenario);
  Gnss g(out.trace);
  const std::size_t i0 = index_at(g, scenario.onset_s, "onset");
  const double v = speed_at(clean, g.t(i0));
  if (v <= speed_error) {
    throw ScenarioError("vehicle is stationary at onset t=" + format_double(g.t(i0)) + " (speed " +
                        format_double(v) + " m/s)");
  }
  for (std::size_t i = i0 + 1; i < g.size(); ++i) {
    g.lat[i].value = g.lat[i0].value;
    g.lon[i].value = g.lon[i0].value;
  }
  out.onset_index = i0;
  out.onset_s = g.t(i0);
  return out;
}

SpoofedTrace inject_wrong_turn(const simgen::SensorTrace& clean, const AttackScenario& scenario) {
  if (scenario.turn_index >= clean.turns.size()) {
    throw ScenarioError("no ground-truth turn at index " + std::to_string(scenario.turn_index));
  }
  const auto& turn = clean.turns[scenario.turn_index];
  SpoofedTrace out = start(clean, scenario);
  out.scenario.onset_s = turn.start_s - scenario.lead_s;
  Gnss g(out.trace);
  const std::size_t i0 = index_at(g, out.scenario.onset_s, "wrong-turn onset");
  const auto axis = approach_heading(g, i0 - 1, 0.5);
  if (!axis) throw ScenarioError("vehicle not moving before the targeted turn");

  std::vector<GeoPoint> original(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) original[i] = g.at(i);
  GeoPoint prev = original[i0 - 1];
  for (std::size_t i = i0; i < g.size(); ++i) {
    const double d = geo::haversine_distance(original[i - 1], original[i]);
    if (d > 0.0) {
      const double b = geo::heading(original[i - 1], original[i]);
      prev = geo::destination(prev, geo::wrap_angle(2.0 * *axis - b), d);
    }
    g.set(i, prev);
  }
  out.onset_index = i0;
  out.onset_s = g.t(i0);
  return out;
}

SpoofedTrace inject_stop(const simgen::SensorTrace& clean, const AttackScenario& scenario,
                         double speed_error) {
  if (!(scenario.stop_end_s > scenario.stop_start_s)) throw ScenarioError("stop interval is empty");
  if (!(scenario.stop_speed_mps > 0.0)) throw ScenarioError("stop profile speed must be positive");
  std::size_t inside = 0;
  for (const auto& s : clean.channel(ingest::kSpeed).samples) {
    if (s.t < scenario.stop_start_s || s.t > scenario.stop_end_s) continue;
    ++inside;
    if (s.value > speed_error) {
      throw ScenarioError("vehicle not stationary over the stop interval (speed " + format_double(s.value) +
                          " m/s at t=" + format_double(s.t) + ")");
    }
  }
  if (inside == 0) throw ScenarioError("stop interval contains no speed samples");

  SpoofedTrace out = start(clean, scenario);
  out.scenario.onset_s = scenario.stop_start_s;
  Gnss g(out.trace);
  const std::size_t i0 = index_at(g, scenario.stop_start_s, "stop start");
  std::size_t i1 = i0;
  while (i1 + 1 < g.size() && g.t(i1 + 1) <= scenario.stop_end_s + 1e-9) ++i1;
  const auto heading = approach_heading(g, i0, 2.0);
  if (!heading) throw ScenarioError("no pre-stop motion to take the heading from");

  auto profile = scenario.stop_profile;
  if (profile.empty()) {
    profile.push_back({simgen::SegmentKind::Straight, scenario.stop_speed_mps,
                       scenario.stop_end_s - scenario.stop_start_s + 1.0});
  }
  const auto fake = simulate_from(clean, profile, g.at(i0), *heading, g.t(i0), scenario.stop_speed_mps,
                                  scenario.seed);
  const auto& flat = fake.channel(ingest::kGnssLat).samples;
  const auto& flon = fake.channel(ingest::kGnssLon).samples;
  if (flat.size() < i1 - i0 + 1) throw ScenarioError("stop profile is shorter than the stop interval");
  for (std::size_t i = i0 + 1; i <= i1; ++i) {
    g.lat[i].value = flat[i - i0].value;
    g.lon[i].value = flon[i - i0].value;
  }
  const auto& clat = clean.channel(ingest::kGnssLat).samples;
  const auto& clon = clean.channel(ingest::kGnssLon).samples;
  const double dlat = g.lat[i1].value - clat[i1].value;
  const double dlon = g.lon[i1].value - clon[i1].value;
  for (std::size_t i = i1 + 1; i < g.size(); ++i) {
    g.lat[i].value = clat[i].value + dlat;
    g.lon[i].value = clon[i].value + dlon;
  }
  out.onset_index = i0;
  out.onset_s = g.t(i0);
  return out;
}

SpoofedTrace inject(const simgen::SensorTrace& clean, const AttackScenario& scenario) {
  switch (scenario.kind) {
    case AttackKind::TurnByTurn: return inject_turn_by_turn(clean, scenario);
    case AttackKind::Overshoot: return inject_overshoot(clean, scenario);
    case AttackKind::WrongTurn: return inject_wrong_turn(clean, scenario);
    case AttackKind::Stop: return inject_stop(clean, scenario);
  }
  throw ScenarioError("unknown attack kind");
}

AttackScenario random_scenario(AttackKind kind, const simgen::SensorTrace& clean, std::uint64_t seed) {
  Rng rng(seed ^ 0xa0761d6478bd642fULL);
  AttackScenario sc;
  sc.kind = kind;
  sc.seed = seed;
  sc.id = to_string(kind) + "-" + std::to_string(seed);
  const auto& lat = clean.channel(ingest::kGnssLat).samples;
  if (lat.size() < 2) throw ScenarioError("trace too short for an attack");
  const double t0 = lat.front().t;
  const double span = lat.back().t - t0;

  auto moving_onset = [&] {
    for (int attempt = 0; attempt < 100; ++attempt) {
      const double t = t0 + span * rng.uniform(0.3, 0.6);
      if (speed_at(clean, t) > 2.0) return t;
    }
    throw ScenarioError("no moving stretch for the attack onset");
  };

  switch (kind) {
    case AttackKind::TurnByTurn: {
      sc.onset_s = moving_onset();
      const double v = std::clamp(speed_at(clean, sc.onset_s), 6.0, 12.0);
      simgen::Segment turn{rng.unit() < 0.5 ? simgen::SegmentKind::LeftTurn : simgen::SegmentKind::RightTurn,
                           std::min(v, 9.0)};
      turn.angle_deg = rng.uniform(80.0, 100.0);
      turn.radius_m = rng.uniform(20.0, 30.0);
      sc.alternate_route = {{simgen::SegmentKind::Straight, v, rng.uniform(3.0, 6.0)}, turn,
                            {simgen::SegmentKind::Straight, v, span + 5.0}};
      break;
    }
    case AttackKind::Overshoot:
      sc.onset_s = moving_onset();
      break;
    case AttackKind::WrongTurn: {
      std::vector<std::size_t> candidates;
      for (std::size_t i = 0; i < clean.turns.size(); ++i) {
        const auto& t = clean.turns[i];
        if (std::abs(t.angle_rad) >= 60.0 * geo::kDegToRad && t.start_s - sc.lead_s > t0 + 2.0) {
          candidates.push_back(i);
        }
      }
      if (candidates.empty()) throw ScenarioError("trace has no turn suitable for a wrong-turn attack");
      sc.turn_index = candidates[rng.below(candidates.size())];
      sc.onset_s = clean.turns[sc.turn_index].start_s - sc.lead_s;
      break;
    }
    case AttackKind::Stop: {
      const auto it = std::find_if(clean.motion.begin(), clean.motion.end(), [&](const simgen::MotionInterval& m) {
        return m.state == MotionState::Standstill && m.end_s - m.start_s >= 2.0 && m.start_s > t0 + 2.0;
      });
      if (it == clean.motion.end()) throw ScenarioError("trace has no standstill for a stop attack");
      sc.stop_start_s = it->start_s;
      sc.stop_end_s = it->end_s;
      sc.onset_s = it->start_s;
      break;
    }
  }
  return sc;
}

json to_json(const AttackScenario& s) {
  json doc{{"id", s.id}, {"kind", to_string(s.kind)}, {"onset_s", s.onset_s}, {"seed", s.seed}};
  switch (s.kind) {
    case AttackKind::TurnByTurn:
      doc["jump_m"] = s.jump_m;
      doc["alternate_route"] = segments_json(s.alternate_route);
      break;
    case AttackKind::Overshoot:
      break;
    case AttackKind::WrongTurn:
      doc["turn_index"] = s.turn_index;
      doc["lead_s"] = s.lead_s;
      break;
    case AttackKind::Stop:
      doc["stop"] = {{"start_s", s.stop_start_s},
                     {"end_s", s.stop_end_s},
                     {"speed_mps", s.stop_speed_mps},
                     {"profile", segments_json(s.stop_profile)}};
      break;
  }
  return doc;
}

AttackScenario scenario_from_json(const json& doc) {
  AttackScenario s;
  try {
    s.kind = parse_attack_kind(doc.at("kind").get<std::string>());
    s.id = doc.value("id", std::string());
    s.onset_s = doc.value("onset_s", 0.0);
    s.seed = doc.value("seed", std::uint64_t{0});
    s.jump_m = doc.value("jump_m", 5.0);
    if (doc.contains("alternate_route")) s.alternate_route = segments_from(doc["alternate_route"]);
    s.turn_index = doc.value("turn_index", std::size_t{0});
    s.lead_s = doc.value("lead_s", 1.0);
    if (doc.contains("stop")) {
      const json& st = doc["stop"];
      s.stop_start_s = st.at("start_s").get<double>();
      s.stop_end_s = st.at("end_s").get<double>();
      s.stop_speed_mps = st.value("speed_mps", 8.0);
      if (st.contains("profile")) s.stop_profile = segments_from(st["profile"]);
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid scenario: ") + e.what());
  }
  return s;
}

AttackScenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInputError("cannot open scenario file " + path.string());
  try {
    return scenario_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_scenario(const std::filesystem::path& path, const AttackScenario& scenario) {
  std::ofstream out(path);
  if (!out) throw InvalidInputError("cannot write scenario file " + path.string());
  out << to_json(scenario).dump(2) << '\n';
}

void save_spoofed(const std::filesystem::path& dir, const SpoofedTrace& spoofed) {
  simgen::save_trace(dir, spoofed.trace);
  std::ofstream out(dir / "attack.json");
  if (!out) throw InvalidInputError("cannot write " + (dir / "attack.json").string());
  const json doc{{"scenario", to_json(spoofed.scenario)},
                 {"onset_index", spoofed.onset_index},
                 {"onset_s", spoofed.onset_s}};
  out << doc.dump(2) << '\n';
}

SpoofedTrace load_spoofed(const std::filesystem::path& dir) {
  SpoofedTrace out;
  out.trace = simgen::load_trace(dir);
  std::ifstream in(dir / "attack.json");
  if (!in) throw InvalidInputError("cannot open " + (dir / "attack.json").string());
  try {
    const json doc = json::parse(in);
    out.scenario = scenario_from_json(doc.at("scenario"));
    out.onset_index = doc.at("onset_index").get<std::size_t>();
    out.onset_s = doc.at("onset_s").get<double>();
  } catch (const json::exception& e) {
    throw FormatError((dir / "attack.json").string() + ": " + e.what());
  }
  return out;
}

}  // namespace spoofguard::attacks

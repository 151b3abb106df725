#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spoofguard/geo.hpp"
#include "spoofguard/ingest.hpp"
#include "spoofguard/types.hpp"

namespace spoofguard::simgen {

enum class SegmentKind { Straight, LeftTurn, RightTurn, Stop };

struct Segment {
  SegmentKind kind = SegmentKind::Straight;
  double speed_mps = 0.0;   // target speed (straight, turn)
  double duration_s = 0.0;  // straight: total time incl. speed ramp; stop: hold time at 0
  double length_m = 0.0;    // straight alternative to duration_s
  double angle_deg = 90.0;  // turn
  double radius_m = 25.0;   // turn, radius at peak curvature
};

struct NoiseConfig {
  double gnss_m = 0.0;
  double speed_mps = 0.0;
  double accel_pct = 0.0;
  double steering_deg = 0.0;
};

struct VehicleConfig {
  double wheelbase_m = 2.7;
  double steering_ratio = 15.0;
  double max_accel_mps2 = 2.0;
  double pedal_offset_pct = 20.0;   // accel_pct at zero acceleration
  double pedal_gain_pct = 25.0;     // accel_pct per m/s^2
};

/// A scripted drive. Heading: north = 0, clockwise positive. Steering: right turn positive.
struct RouteScript {
  std::vector<Segment> segments;
  geo::GeoPoint start = geo::GeoPoint::from_degrees(37.3861, -122.0839);
  double start_heading_rad = 0.0;
  double start_time_s = 0.0;
  double initial_speed_mps = 0.0;
  int gnss_hz = 120;
  int can_hz = 100;
  NoiseConfig noise;
  VehicleConfig vehicle;
  std::uint64_t seed = 0;
};

struct GroundTruthTurn {
  double start_s = 0.0;
  double end_s = 0.0;
  TurnLabel label = TurnLabel::NoTurn;
  double angle_rad = 0.0;  // signed, clockwise positive
  double speed_mps = 0.0;
};

struct MotionInterval {
  double start_s = 0.0;
  double end_s = 0.0;
  MotionState state = MotionState::InMotion;
};

/// All channels of one simulated drive plus its ground truth.
struct SensorTrace {
  std::vector<ingest::RawChannel> channels;  // gnss_lat, gnss_lon (deg), speed, accel_pct, steering_deg
  std::vector<GroundTruthTurn> turns;
  std::vector<MotionInterval> motion;
  std::uint64_t seed = 0;
  std::string config_hash;

  const ingest::RawChannel& channel(std::string_view name) const;
  ingest::RawChannel& channel(std::string_view name);
  std::vector<geo::TimedPoint> gnss_track() const;
  double gnss_hz() const;
};

/// Simulates the script. Throws InvalidInputError on an empty or invalid script.
SensorTrace generate_trace(const RouteScript& script);

void validate(const RouteScript& script);

nlohmann::json to_json(const RouteScript& script);
RouteScript route_from_json(const nlohmann::json& doc);
RouteScript load_route(const std::filesystem::path& path);

/// Writes channel CSVs, manifest.json, ground_truth.json and aligned.csv into `dir`.
void save_trace(const std::filesystem::path& dir, const SensorTrace& trace);
/// Loads a trace directory written by save_trace.
SensorTrace load_trace(const std::filesystem::path& dir);

nlohmann::json ground_truth_json(const SensorTrace& trace);

/// A random urban route: straights of 10-16 s between near-right-angle turns, and optionally one stop.
RouteScript random_route(std::uint64_t seed, double duration_s, bool include_stop = true);

}  // namespace spoofguard::simgen

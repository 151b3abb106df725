#pragma once

#include <numbers>
#include <span>
#include <vector>

namespace spoofguard::geo {

inline constexpr double kDegToRad = std::numbers::pi / 180.0;
inline constexpr double kRadToDeg = 180.0 / std::numbers::pi;

/// A point on the sphere, stored in radians.
struct GeoPoint {
  double lat = 0.0;  // [-pi/2, pi/2]
  double lon = 0.0;  // [-pi, pi]

  static GeoPoint from_degrees(double lat_deg, double lon_deg) {
    return {lat_deg * kDegToRad, lon_deg * kDegToRad};
  }
  double lat_deg() const { return lat * kRadToDeg; }
  double lon_deg() const { return lon * kRadToDeg; }

  bool operator==(const GeoPoint&) const = default;
};

/// Spherical earth. The default radius is 6378 km.
struct EarthModel {
  double radius_m = 6'378'000.0;
};

struct TimedPoint {
  double t = 0.0;
  GeoPoint point;
};

/// Per-step distances of a timestamped track; shifts.size() == timestamps.size() - 1.
struct ShiftSeries {
  std::vector<double> timestamps;
  std::vector<double> shifts;
};

/// Throws InvalidInputError on non-finite or out-of-range coordinates.
void validate(const GeoPoint& p);

/// Great-circle distance in meters by the haversine formula.
double haversine_distance(const GeoPoint& a, const GeoPoint& b, const EarthModel& earth = {});

/// shifts[i] is the haversine distance between points[i] and points[i + 1].
/// Requires at least two points with strictly increasing timestamps.
ShiftSeries location_shift_series(std::span<const TimedPoint> points,
                                  const EarthModel& earth = {});

/// Initial bearing from a to b in radians: north = 0, clockwise positive, in [-pi, pi).
/// Throws InvalidInputError when a == b.
double heading(const GeoPoint& a, const GeoPoint& b);

/// Point reached by travelling `distance_m` from `from` along the initial bearing `bearing`.
GeoPoint destination(const GeoPoint& from, double bearing, double distance_m,
                     const EarthModel& earth = {});

/// Wraps an angle to [-pi, pi).
double wrap_angle(double angle);

}  // namespace spoofguard::geo

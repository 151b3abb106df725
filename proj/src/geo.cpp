#include "spoofguard/geo.hpp"

#include <algorithm>
#include <cmath>

#include "spoofguard/error.hpp"

namespace spoofguard::geo {

void validate(const GeoPoint& p) {
  if (!std::isfinite(p.lat) || !std::isfinite(p.lon)) {
    throw InvalidInputError("non-finite coordinate");
  }
  if (std::abs(p.lat) > std::numbers::pi / 2 || std::abs(p.lon) > std::numbers::pi) {
    throw InvalidInputError("coordinate out of range");
  }
}

double haversine_distance(const GeoPoint& a, const GeoPoint& b, const EarthModel& earth) {
  validate(a);
  validate(b);
  // abs() keeps the result bit-symmetric in (a, b).
  const double s_lat = std::sin(std::abs(b.lat - a.lat) / 2.0);
  const double s_lon = std::sin(std::abs(b.lon - a.lon) / 2.0);
  const double h = s_lat * s_lat + std::cos(a.lat) * std::cos(b.lat) * s_lon * s_lon;
  return 2.0 * earth.radius_m * std::asin(std::sqrt(std::clamp(h, 0.0, 1.0)));
}

ShiftSeries location_shift_series(std::span<const TimedPoint> points, const EarthModel& earth) {
  if (points.size() < 2) {
    throw InsufficientDataError("location shift needs at least two points");
  }
  ShiftSeries out;
  out.timestamps.reserve(points.size());
  out.shifts.reserve(points.size() - 1);
  out.timestamps.push_back(points.front().t);
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (!(points[i].t > points[i - 1].t)) {
      throw OrderingError("timestamps must be strictly increasing (index " + std::to_string(i) +
                          ")");
    }
    out.timestamps.push_back(points[i].t);
    out.shifts.push_back(haversine_distance(points[i - 1].point, points[i].point, earth));
  }
  return out;
}

double wrap_angle(double angle) {
  const double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(angle + std::numbers::pi, two_pi);
  if (w < 0.0) w += two_pi;
  w -= std::numbers::pi;
  // fmod can land exactly on +pi after rounding.
  if (w >= std::numbers::pi) w -= two_pi;
  return w;
}

double heading(const GeoPoint& a, const GeoPoint& b) {
  validate(a);
  validate(b);
  if (a == b) {
    throw InvalidInputError("heading undefined for identical points");
  }
  const double d_lon = b.lon - a.lon;
  const double y = std::sin(d_lon) * std::cos(b.lat);
  const double x = std::cos(a.lat) * std::sin(b.lat) - std::sin(a.lat) * std::cos(b.lat) * std::cos(d_lon);
  return wrap_angle(std::atan2(y, x));
}

GeoPoint destination(const GeoPoint& from, double bearing, double distance_m,
                     const EarthModel& earth) {
  const double delta = distance_m / earth.radius_m;
  const double sin_lat = std::sin(from.lat) * std::cos(delta) +
                         std::cos(from.lat) * std::sin(delta) * std::cos(bearing);
  const double lat = std::asin(std::clamp(sin_lat, -1.0, 1.0));
  const double lon = from.lon + std::atan2(std::sin(bearing) * std::sin(delta) * std::cos(from.lat),
                                           std::cos(delta) - std::sin(from.lat) * sin_lat);
  return {lat, wrap_angle(lon)};
}

}  // namespace spoofguard::geo

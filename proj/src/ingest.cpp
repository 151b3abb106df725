#include "spoofguard/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "spoofguard/error.hpp"
#include "spoofguard/util.hpp"

namespace spoofguard::ingest {
namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

std::string_view trim_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

bool is_comment_or_blank(std::string_view line) {
  return line.empty() || line.front() == '#';
}

void write_comment(std::ostream& out, std::string_view comment) {
  if (!comment.empty()) out << "# " << comment << '\n';
}

}  // namespace

void validate_channel(const RawChannel& channel) {
  for (std::size_t i = 0; i < channel.samples.size(); ++i) {
    const Sample& s = channel.samples[i];
    if (!std::isfinite(s.t) || !std::isfinite(s.value)) {
      throw InvalidInputError("channel '" + channel.name + "' has a non-finite sample at index " +
                              std::to_string(i));
    }
    if (i > 0 && !(s.t > channel.samples[i - 1].t)) {
      throw OrderingError("channel '" + channel.name +
                          "' timestamps not strictly increasing at index " + std::to_string(i));
    }
  }
}

RawChannel parse_channel_csv(std::istream& in, std::string name, const std::string& source) {
  RawChannel channel{std::move(name), {}};
  std::string raw;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = trim_cr(raw);
    if (is_comment_or_blank(line)) continue;
    if (!header_seen) {
      if (line != "timestamp,value") {
        throw ParseError(source, line_no, "expected header 'timestamp,value'");
      }
      header_seen = true;
      continue;
    }
    const auto fields = split_fields(line);
    if (fields.size() != 2) {
      throw ParseError(source, line_no, "expected 2 fields, got " + std::to_string(fields.size()));
    }
    const auto t = parse_double(fields[0]);
    const auto v = parse_double(fields[1]);
    if (!t || !v) throw ParseError(source, line_no, "malformed or non-finite number");
    if (!channel.samples.empty() && !(*t > channel.samples.back().t)) {
      throw OrderingError(source + ":" + std::to_string(line_no) +
                          ": timestamps not strictly increasing");
    }
    channel.samples.push_back({*t, *v});
  }
  if (channel.samples.empty()) {
    throw InsufficientDataError(source + ": channel '" + channel.name + "' is empty");
  }
  return channel;
}

RawChannel parse_channel_file(const std::filesystem::path& path, std::string name) {
  std::ifstream in(path);
  if (!in) throw InvalidInputError("cannot open channel file " + path.string());
  return parse_channel_csv(in, std::move(name), path.string());
}

void write_channel_csv(std::ostream& out, const RawChannel& channel, std::string_view comment) {
  write_comment(out, comment);
  out << "timestamp,value\n";
  for (const Sample& s : channel.samples) {
    out << format_double(s.t) << ',' << format_double(s.value) << '\n';
  }
}

TraceManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInputError("cannot open manifest " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  TraceManifest manifest;
  const auto base = path.parent_path();
  if (!doc.contains("channels") || !doc["channels"].is_object()) {
    throw FormatError(path.string() + ": missing 'channels' object");
  }
  for (const auto& [name, file] : doc["channels"].items()) {
    std::filesystem::path p = file.get<std::string>();
    manifest.channels[name] = p.is_absolute() ? p : base / p;
  }
  manifest.speed_unit = doc.value("speed_unit", std::string("m/s"));
  if (manifest.speed_unit != "m/s" && manifest.speed_unit != "ft/s") {
    throw ConfigurationError(path.string() + ": unsupported speed unit '" + manifest.speed_unit + "'");
  }
  return manifest;
}

void save_manifest(const std::filesystem::path& path, const TraceManifest& manifest) {
  nlohmann::json doc;
  doc["speed_unit"] = manifest.speed_unit;
  doc["channels"] = nlohmann::json::object();
  for (const auto& [name, file] : manifest.channels) {
    doc["channels"][name] = file.generic_string();
  }
  std::ofstream out(path);
  out << doc.dump(2) << '\n';
}

std::vector<RawChannel> parse_trace(const std::filesystem::path& manifest_path) {
  const TraceManifest manifest = load_manifest(manifest_path);
  std::vector<RawChannel> channels;
  for (const auto& [name, file] : manifest.channels) {
    RawChannel channel = parse_channel_file(file, name);
    if (name == kSpeed && manifest.speed_unit == "ft/s") {
      for (Sample& s : channel.samples) s.value *= kFeetToMeters;
    }
    channels.push_back(std::move(channel));
  }
  return channels;
}

const RawChannel* find_channel(std::span<const RawChannel> channels, std::string_view name) {
  for (const RawChannel& c : channels) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

const RawChannel& require_channel(std::span<const RawChannel> channels, std::string_view name) {
  const RawChannel* c = find_channel(channels, name);
  if (c == nullptr) {
    throw ConfigurationError("missing mandatory channel '" + std::string(name) + "'");
  }
  if (c->samples.empty()) {
    throw InsufficientDataError("channel '" + std::string(name) + "' is empty");
  }
  return *c;
}

double interpolate_at(std::span<const Sample> samples, double t) {
  if (samples.empty()) throw InsufficientDataError("interpolation over an empty channel");
  if (t <= samples.front().t) return samples.front().value;
  if (t >= samples.back().t) return samples.back().value;
  const auto upper = std::upper_bound(samples.begin(), samples.end(), t,
                                      [](double x, const Sample& s) { return x < s.t; });
  const Sample& hi = *upper;
  const Sample& lo = *(upper - 1);
  const double w = (t - lo.t) / (hi.t - lo.t);
  return lo.value + w * (hi.value - lo.value);
}

std::vector<AlignedFrame> synchronize(std::span<const RawChannel> channels) {
  const RawChannel& lat = require_channel(channels, kGnssLat);
  const RawChannel& lon = require_channel(channels, kGnssLon);
  const RawChannel& speed = require_channel(channels, kSpeed);
  const RawChannel& accel = require_channel(channels, kAccelPct);
  const RawChannel& steering = require_channel(channels, kSteeringDeg);
  if (lat.samples.size() != lon.samples.size()) {
    throw ConfigurationError("gnss_lat and gnss_lon have different sample counts");
  }
  std::vector<AlignedFrame> frames;
  frames.reserve(lat.samples.size());
  for (std::size_t i = 0; i < lat.samples.size(); ++i) {
    const double t = lat.samples[i].t;
    if (lon.samples[i].t != t) {
      throw ConfigurationError("gnss_lat and gnss_lon timestamps differ at index " +
                               std::to_string(i));
    }
    frames.push_back({t, lat.samples[i].value, lon.samples[i].value,
                      interpolate_at(speed.samples, t), interpolate_at(accel.samples, t),
                      interpolate_at(steering.samples, t)});
  }
  return frames;
}

void write_aligned_csv(std::ostream& out, std::span<const AlignedFrame> frames,
                       std::string_view comment) {
  write_comment(out, comment);
  out << "t,lat_deg,lon_deg,speed_mps,accel_pct,steering_deg\n";
  for (const AlignedFrame& f : frames) {
    out << format_double(f.t) << ',' << format_double(f.lat_deg) << ',' << format_double(f.lon_deg)
        << ',' << format_double(f.speed_mps) << ',' << format_double(f.accel_pct) << ','
        << format_double(f.steering_deg) << '\n';
  }
}

std::vector<AlignedFrame> read_aligned_csv(std::istream& in, const std::string& source) {
  std::vector<AlignedFrame> frames;
  std::string raw;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = trim_cr(raw);
    if (is_comment_or_blank(line)) continue;
    if (!header_seen) {
      if (line != "t,lat_deg,lon_deg,speed_mps,accel_pct,steering_deg") {
        throw ParseError(source, line_no, "unexpected aligned-trace header");
      }
      header_seen = true;
      continue;
    }
    const auto fields = split_fields(line);
    if (fields.size() != 6) throw ParseError(source, line_no, "expected 6 fields");
    double v[6];
    for (std::size_t k = 0; k < 6; ++k) {
      const auto parsed = parse_double(fields[k]);
      if (!parsed) throw ParseError(source, line_no, "malformed or non-finite number");
      v[k] = *parsed;
    }
    if (!frames.empty() && !(v[0] > frames.back().t)) {
      throw OrderingError(source + ":" + std::to_string(line_no) +
                          ": timestamps not strictly increasing");
    }
    frames.push_back({v[0], v[1], v[2], v[3], v[4], v[5]});
  }
  return frames;
}

FeatureScaler::FeatureScaler(std::vector<double> mins, std::vector<double> maxs)
    : mins_(std::move(mins)), maxs_(std::move(maxs)) {
  if (mins_.size() != maxs_.size()) throw DimensionError("scaler min/max size mismatch");
  for (std::size_t i = 0; i < mins_.size(); ++i) {
    if (!(maxs_[i] >= mins_[i])) throw InvalidInputError("scaler max < min");
  }
}

FeatureScaler FeatureScaler::fit(std::span<const std::vector<double>> columns) {
  std::vector<double> mins, maxs;
  std::vector<std::string> warnings;
  for (std::size_t f = 0; f < columns.size(); ++f) {
    const auto& col = columns[f];
    if (col.empty()) throw InsufficientDataError("scaler needs at least one value per feature");
    const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
    mins.push_back(*lo);
    maxs.push_back(*hi);
    if (*lo == *hi) {
      warnings.push_back("feature " + std::to_string(f) + " has zero range; scaled to 0");
    }
  }
  FeatureScaler scaler(std::move(mins), std::move(maxs));
  scaler.warnings_ = std::move(warnings);
  return scaler;
}

double FeatureScaler::apply(std::size_t feature, double value) const {
  const double lo = mins_.at(feature);
  const double range = maxs_.at(feature) - lo;
  if (range == 0.0) return 0.0;
  return (value - lo) / range;
}

double FeatureScaler::invert(std::size_t feature, double scaled) const {
  const double lo = mins_.at(feature);
  return lo + scaled * (maxs_.at(feature) - lo);
}

std::vector<Sample> resample(std::span<const Sample> series, double source_hz, double target_hz) {
  if (!(source_hz > 0.0) || !(target_hz > 0.0)) {
    throw InvalidInputError("sampling rates must be positive");
  }
  if (target_hz > source_hz) {
    throw InvalidInputError("upsampling is not supported");
  }
  if (series.empty()) return {};
  const double t0 = series.front().t;
  const double span = series.back().t - t0;
  const auto count = static_cast<std::size_t>(std::floor(span * target_hz + 1e-9)) + 1;
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double t = t0 + static_cast<double>(k) / target_hz;
    out.push_back({t, interpolate_at(series, t)});
  }
  return out;
}

}  // namespace spoofguard::ingest

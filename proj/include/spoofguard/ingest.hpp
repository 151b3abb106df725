#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace spoofguard::ingest {

// Channel identifiers used in manifests and traces.
inline constexpr std::string_view kGnssLat = "gnss_lat";
inline constexpr std::string_view kGnssLon = "gnss_lon";
inline constexpr std::string_view kSpeed = "speed";
inline constexpr std::string_view kAccelPct = "accel_pct";
inline constexpr std::string_view kSteeringDeg = "steering_deg";

inline constexpr double kFeetToMeters = 0.3048;

struct Sample {
  double t = 0.0;
  double value = 0.0;
};

struct RawChannel {
  std::string name;
  std::vector<Sample> samples;
};

/// One row of the fused trace, stamped with a GNSS timestamp.
struct AlignedFrame {
  double t = 0.0;
  double lat_deg = 0.0;
  double lon_deg = 0.0;
  double speed_mps = 0.0;
  double accel_pct = 0.0;
  double steering_deg = 0.0;
};

/// Maps channel names to CSV files. Paths are resolved relative to the manifest directory.
struct TraceManifest {
  std::map<std::string, std::filesystem::path> channels;
  std::string speed_unit = "m/s";  // "m/s" or "ft/s"
};

/// Checks that timestamps are strictly increasing and values finite.
void validate_channel(const RawChannel& channel);

/// Reads a `timestamp,value` CSV. Lines starting with '#' are comments.
RawChannel parse_channel_csv(std::istream& in, std::string name, const std::string& source = "<stream>");
RawChannel parse_channel_file(const std::filesystem::path& path, std::string name);
void write_channel_csv(std::ostream& out, const RawChannel& channel, std::string_view comment = {});

TraceManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const TraceManifest& manifest);

/// Loads every channel listed in the manifest; speed is converted to m/s.
std::vector<RawChannel> parse_trace(const std::filesystem::path& manifest_path);

const RawChannel* find_channel(std::span<const RawChannel> channels, std::string_view name);
const RawChannel& require_channel(std::span<const RawChannel> channels, std::string_view name);

/// Linear interpolation between the two bracketing samples; clamped to the end values
/// outside the sampled span.
double interpolate_at(std::span<const Sample> samples, double t);

/// Aligns every channel onto the GNSS timestamps. gnss_lat and gnss_lon must share timestamps.
std::vector<AlignedFrame> synchronize(std::span<const RawChannel> channels);

void write_aligned_csv(std::ostream& out, std::span<const AlignedFrame> frames,
                       std::string_view comment = {});
std::vector<AlignedFrame> read_aligned_csv(std::istream& in, const std::string& source = "<stream>");

/// Min-max scaling to [0, 1], learned per feature.
class FeatureScaler {
 public:
  FeatureScaler() = default;
  FeatureScaler(std::vector<double> mins, std::vector<double> maxs);

  /// Learns (min, max) per column. Zero-range columns are recorded in warnings().
  static FeatureScaler fit(std::span<const std::vector<double>> columns);

  std::size_t size() const { return mins_.size(); }
  double apply(std::size_t feature, double value) const;
  double invert(std::size_t feature, double scaled) const;
  double min(std::size_t feature) const { return mins_.at(feature); }
  double max(std::size_t feature) const { return maxs_.at(feature); }
  const std::vector<double>& mins() const { return mins_; }
  const std::vector<double>& maxs() const { return maxs_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  std::vector<double> mins_;
  std::vector<double> maxs_;
  std::vector<std::string> warnings_;
};

/// Downsamples by linear interpolation at t0 + k / target_hz for every target instant
/// within the series span. Throws InvalidInputError when target_hz > source_hz.
std::vector<Sample> resample(std::span<const Sample> series, double source_hz, double target_hz);

}  // namespace spoofguard::ingest

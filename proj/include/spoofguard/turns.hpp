#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "spoofguard/dtw.hpp"
#include "spoofguard/geo.hpp"
#include "spoofguard/ingest.hpp"
#include "spoofguard/simgen.hpp"
#include "spoofguard/types.hpp"

namespace spoofguard::turns {

enum class EventSource { Steering, Gnss };

std::string to_string(EventSource source);

struct TurnEvent {
  double start_s = 0.0;
  double end_s = 0.0;
  TurnLabel label = TurnLabel::NoTurn;
  EventSource source = EventSource::Steering;
  // Steering: nearest template distance. Gnss: peak signed heading change within the window, degrees.
  double evidence = 0.0;
  std::vector<double> neighbor_distances;
  // When a streaming consumer could first have known about the event.
  double detected_at_s = 0.0;
};

struct SegmenterConfig {
  double enter_deg = 30.0;
  double exit_deg = 15.0;
  double min_duration_s = 1.0;
  double max_duration_s = 15.0;
};

void validate(const SegmenterConfig& config);

/// Sample range [begin, end) of a steering series.
struct CandidateWindow {
  std::size_t begin = 0;
  std::size_t end = 0;
  double start_s = 0.0;
  double end_s = 0.0;
  double closed_at_s = 0.0;  // time of the sample that fell below the exit threshold
};

/// Hysteresis segmentation: a window opens when |steering| reaches the enter threshold (its start
/// reaching back to where |steering| first rose above the exit threshold) and closes when it drops
/// below the exit threshold. Windows outside [min, max] duration are dropped.
std::vector<CandidateWindow> segment_turns(std::span<const ingest::Sample> steering,
                                           const SegmenterConfig& config = {});

dtw::TimeSeries window_values(std::span<const ingest::Sample> steering, const CandidateWindow& window);

/// Mean of the speed samples inside [start_s, end_s]; the interpolated midpoint value if none fall inside.
double mean_speed(std::span<const ingest::Sample> speed, double start_s, double end_s);

/// k-NN label of the window, forced to NoTurn when the mean speed is at or below `speed_error`.
TurnEvent classify_turn(std::span<const ingest::Sample> steering, const CandidateWindow& window,
                        std::span<const dtw::LabeledTemplate> templates,
                        std::span<const ingest::Sample> speed, double speed_error,
                        const dtw::KnnConfig& knn = {});

/// Segments and classifies a whole steering series, keeping only Left/Right events.
std::vector<TurnEvent> steering_turns(std::span<const ingest::Sample> steering,
                                      std::span<const dtw::LabeledTemplate> templates,
                                      std::span<const ingest::Sample> speed, double speed_error,
                                      const SegmenterConfig& segmenter = {},
                                      const dtw::KnnConfig& knn = {});

struct HeadingConfig {
  double window_s = 15.0;
  double min_change_rad = 60.0 * geo::kDegToRad;
  double sample_hz = 5.0;
  double min_step_m = 0.5;           // shorter moves keep the previous heading
  double min_rate_rad_s = 5.0 * geo::kDegToRad;  // steps slower than this end a turning stretch
  double max_gap_s = 1.0;            // slow steps tolerated inside a stretch
};

void validate(const HeadingConfig& config);

/// Turn events from the GNSS track alone. Headings are taken at `sample_hz`; consecutive
/// same-signed turning steps form a stretch, and a stretch whose cumulative heading change reaches
/// the threshold within `window_s` becomes an event (clockwise = Right).
std::vector<TurnEvent> infer_gnss_turns(std::span<const geo::TimedPoint> track,
                                        const HeadingConfig& config = {});

/// Steering channel resampled to the detection rate.
std::vector<ingest::Sample> steering_at(const ingest::RawChannel& steering, double hz);

/// Templates from a trace: each candidate window overlapping a ground-truth turn is labeled with it.
std::vector<dtw::LabeledTemplate> extract_templates(const simgen::SensorTrace& trace, double steering_hz,
                                                    const SegmenterConfig& segmenter = {});

struct CorpusConfig {
  std::size_t right = 19;
  std::size_t left = 13;
  simgen::NoiseConfig noise{0.02, 0.05, 0.5, 0.5};
  double steering_hz = 5.0;
  std::uint64_t seed = 0;
};

/// One short drive per turn (straight, turn of 80-100 degrees, straight) with seeded geometry and speed.
std::vector<dtw::LabeledTemplate> make_turn_corpus(const CorpusConfig& config);

/// Directory layout: manifest.csv (`file,label`) plus one channel CSV (`timestamp,value`, degrees) per template.
void save_templates(const std::filesystem::path& dir, std::span<const dtw::LabeledTemplate> templates,
                    double steering_hz, const std::string& comment = {});
std::vector<dtw::LabeledTemplate> load_templates(const std::filesystem::path& dir);

/// CSV `start_s,end_s,label,source,evidence`.
void write_turn_report(std::ostream& out, std::span<const TurnEvent> events, const std::string& comment = {});

}  // namespace spoofguard::turns

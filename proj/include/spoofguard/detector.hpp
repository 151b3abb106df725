#pragma once

#include <cstddef>
#include <deque>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spoofguard/attacks.hpp"
#include "spoofguard/dtw.hpp"
#include "spoofguard/ingest.hpp"
#include "spoofguard/lstm.hpp"
#include "spoofguard/turns.hpp"
#include "spoofguard/types.hpp"

namespace spoofguard::detector {

enum class Strategy { S1Shift, S1Motion, S2Turn };

std::string to_string(Strategy strategy);
Strategy parse_strategy(std::string_view text);

/// Which checks run. PerKind enables only the strategies assigned to the scenario's attack kind.
enum class Routing { All, PerKind };

struct DetectionConfig {
  double model_max_abs_error_m = 0.0;
  double positioning_error_m = 0.1;
  double speed_error_mps = 0.5;
  double motion_baseline_s = 0.25;    // GNSS-implied speed uses the displacement over this span
  double motion_persistence_s = 1.0;  // contradiction must last this long
  turns::SegmenterConfig segmenter;
  turns::HeadingConfig heading;
  double match_tolerance_s = 2.0;
  double steering_hz = 5.0;
  dtw::KnnConfig knn;

  double threshold() const;
};

void validate(const DetectionConfig& config);

/// Model max absolute error + GNSS positioning error. Throws InvalidInputError on negative input.
double compute_threshold(double model_max_abs_error_m, double positioning_error_m);

/// Standstill iff speed <= speed_error.
MotionState motion_state(double speed_mps, double speed_error_mps);

bool shift_alarm(double perceived_m, double predicted_m, double threshold_m);

struct DetectionVerdict {
  double t = 0.0;
  bool alarm = false;
  Strategy strategy = Strategy::S1Shift;
  double perceived_shift_m = 0.0;
  double predicted_shift_m = 0.0;
  double diff_m = 0.0;
  MotionState gnss_state = MotionState::InMotion;
  MotionState speed_state = MotionState::InMotion;
  TurnLabel steering_label = TurnLabel::NoTurn;
  TurnLabel gnss_label = TurnLabel::NoTurn;
  double latency_s = 0.0;  // verdict time minus the time of the evidence it rests on
  double compute_s = 0.0;  // wall-clock processing time
};

/// Streaming Strategy 1: feed aligned frames in order; each frame after W frames of history
/// yields one verdict on the step from the previous frame to it.
class Strategy1Monitor {
 public:
  /// Throws ConfigurationError when the model does not take the detector's feature set.
  Strategy1Monitor(const lstm::LstmNetwork& model, const DetectionConfig& config);
  std::optional<DetectionVerdict> step(const ingest::AlignedFrame& frame);

 private:
  const lstm::LstmNetwork& model_;
  DetectionConfig config_;
  double threshold_;
  std::size_t window_;
  std::optional<ingest::AlignedFrame> prev_;
  std::deque<std::array<double, lstm::kFeatureCount>> rows_;
  std::deque<ingest::AlignedFrame> recent_;  // frames within the motion baseline
  std::optional<double> contradiction_since_;
  lstm::RowMatrix scratch_;
};

/// Strategy 2 decisions: one verdict per steering event and per unmatched GNSS event.
/// Alarms: (i) steering turn without an overlapping GNSS turn, (ii) overlapping turns with
/// different labels, (iii) GNSS turn without an overlapping steering turn. Overlap allows
/// `tolerance_s` of slack on either side. Verdicts come back ordered by time.
std::vector<DetectionVerdict> strategy2_step(std::span<const turns::TurnEvent> steering,
                                             std::span<const turns::TurnEvent> gnss, double tolerance_s);

struct LatencyStats {
  std::size_t count = 0;
  double mean_s = 0.0;
  double p50_s = 0.0;
  double p95_s = 0.0;
  double max_s = 0.0;
};

LatencyStats latency_stats(std::vector<double> samples);

struct DetectionSummary {
  std::string scenario_id;
  std::string kind;  // attack kind or "clean"
  std::optional<double> onset_s;
  std::optional<double> first_alarm_s;
  std::optional<Strategy> first_alarm_strategy;
  std::optional<double> detection_latency_s;
  std::size_t false_alarms = 0;  // alarm episodes starting before the onset (all of them when clean)
  std::size_t s1_shift_alarms = 0;
  std::size_t s1_motion_alarms = 0;
  std::size_t s2_alarms = 0;
  double threshold_m = 0.0;
  LatencyStats s1_latency;  // per observation
  LatencyStats s2_latency;  // per classified steering window
};

struct DetectionReport {
  std::vector<DetectionVerdict> verdicts;  // ordered by t
  DetectionSummary summary;
};

/// Runs both strategies over a trace. `spoofed` supplies the onset and, with PerKind routing, the
/// attack kind.
DetectionReport run_detection(const simgen::SensorTrace& trace, const lstm::LstmNetwork& model,
                              std::span<const dtw::LabeledTemplate> templates, const DetectionConfig& config,
                              const attacks::SpoofedTrace* spoofed = nullptr, Routing routing = Routing::All);

/// Convenience overload for a spoofed trace.
DetectionReport run_detection(const attacks::SpoofedTrace& spoofed, const lstm::LstmNetwork& model,
                              std::span<const dtw::LabeledTemplate> templates, const DetectionConfig& config,
                              Routing routing = Routing::All);

/// CSV `t,alarm,strategy,perceived_shift_m,predicted_shift_m,diff_m,latency_s`; shift fields
/// are empty on Strategy-2 rows.
void write_verdicts(std::ostream& out, std::span<const DetectionVerdict> verdicts,
                    const std::string& comment = {});
/// Reads a file written by write_verdicts. Only the written fields are restored.
std::vector<DetectionVerdict> read_verdicts(std::istream& in, const std::string& source = "<stream>");

nlohmann::json to_json(const DetectionSummary& summary);

}  // namespace spoofguard::detector

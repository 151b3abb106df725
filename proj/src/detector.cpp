#include "spoofguard/detector.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "spoofguard/error.hpp"
#include "spoofguard/geo.hpp"
#include "spoofguard/util.hpp"

namespace spoofguard::detector {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void check_model(const lstm::LstmNetwork& model) {
  const auto& md = model.metadata;
  if (model.dims().input_size != lstm::kFeatureCount || model.scaler.size() != lstm::kFeatureCount) {
    throw ConfigurationError("model expects " + std::to_string(model.dims().input_size) +
                             " features; the detector supplies " + std::to_string(lstm::kFeatureCount));
  }
  if (md.window == 0) throw ConfigurationError("model metadata has no window length");
  if (md.feature_order != std::vector<std::string>(lstm::kFeatureOrder.begin(), lstm::kFeatureOrder.end())) {
    throw ConfigurationError("model feature order does not match the detector's");
  }
}

bool overlaps(const turns::TurnEvent& a, const turns::TurnEvent& b, double tol) {
  return a.start_s - tol <= b.end_s && b.start_s - tol <= a.end_s;
}

double overlap_length(const turns::TurnEvent& a, const turns::TurnEvent& b) {
  return std::min(a.end_s, b.end_s) - std::max(a.start_s, b.start_s);
}

}  // namespace

std::string to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::S1Shift: return "S1Shift";
    case Strategy::S1Motion: return "S1Motion";
    case Strategy::S2Turn: return "S2Turn";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view text) {
  if (text == "S1Shift") return Strategy::S1Shift;
  if (text == "S1Motion") return Strategy::S1Motion;
  if (text == "S2Turn") return Strategy::S2Turn;
  throw InvalidInputError("unknown strategy '" + std::string(text) + "'");
}

double DetectionConfig::threshold() const { return compute_threshold(model_max_abs_error_m, positioning_error_m); }

void validate(const DetectionConfig& c) {
  if (c.model_max_abs_error_m < 0.0 || c.positioning_error_m < 0.0 || c.speed_error_mps < 0.0 ||
      !(c.motion_baseline_s > 0.0) || c.motion_persistence_s < 0.0 || c.match_tolerance_s < 0.0 ||
      !(c.steering_hz > 0.0)) {
    throw InvalidInputError("detection configuration values must be non-negative (rates positive)");
  }
  turns::validate(c.segmenter);
  turns::validate(c.heading);
}

double compute_threshold(double model_max_abs_error_m, double positioning_error_m) {
  if (model_max_abs_error_m < 0.0 || positioning_error_m < 0.0) {
    throw InvalidInputError("threshold components must be non-negative");
  }
  return model_max_abs_error_m + positioning_error_m;
}

MotionState motion_state(double speed_mps, double speed_error_mps) {
  return speed_mps <= speed_error_mps ? MotionState::Standstill : MotionState::InMotion;
}

bool shift_alarm(double perceived_m, double predicted_m, double threshold_m) {
  return std::abs(perceived_m - predicted_m) > threshold_m;
}

Strategy1Monitor::Strategy1Monitor(const lstm::LstmNetwork& model, const DetectionConfig& config)
    : model_(model), config_(config), threshold_(config.threshold()), window_(model.metadata.window) {
  check_model(model);
  validate(config);
  scratch_.resize(static_cast<Eigen::Index>(window_), lstm::kFeatureCount);
}

std::optional<DetectionVerdict> Strategy1Monitor::step(const ingest::AlignedFrame& frame) {
  if (prev_ && !(frame.t > prev_->t)) throw OrderingError("frames must arrive in increasing time order");

  // Motion state implied by the GNSS displacement over the baseline.
  recent_.push_back(frame);
  while (recent_.size() > 2 && recent_[1].t <= frame.t - config_.motion_baseline_s) recent_.pop_front();
  std::optional<MotionState> gnss_state;
  if (recent_.front().t <= frame.t - config_.motion_baseline_s) {
    const auto& a = recent_.front();
    const double d = geo::haversine_distance(geo::GeoPoint::from_degrees(a.lat_deg, a.lon_deg),
                                             geo::GeoPoint::from_degrees(frame.lat_deg, frame.lon_deg));
    gnss_state = motion_state(d / (frame.t - a.t), config_.speed_error_mps);
  }
  const MotionState speed_state = motion_state(frame.speed_mps, config_.speed_error_mps);
  if (gnss_state && *gnss_state != speed_state) {
    if (!contradiction_since_) contradiction_since_ = frame.t;
  } else {
    contradiction_since_.reset();
  }

  std::optional<DetectionVerdict> verdict;
  if (!prev_) {
    prev_ = frame;
    return verdict;
  }
  const double perceived = geo::haversine_distance(geo::GeoPoint::from_degrees(prev_->lat_deg, prev_->lon_deg),
                                                   geo::GeoPoint::from_degrees(frame.lat_deg, frame.lon_deg));
  if (rows_.size() == window_) {
    for (std::size_t r = 0; r < window_; ++r) {
      lstm::scale_row(model_.scaler, rows_[r], scratch_, static_cast<Eigen::Index>(r));
    }
    const double predicted = lstm::forward(model_, scratch_);
    DetectionVerdict v;
    v.t = frame.t;
    v.perceived_shift_m = perceived;
    v.predicted_shift_m = predicted;
    v.diff_m = std::abs(perceived - predicted);
    v.gnss_state = gnss_state.value_or(speed_state);
    v.speed_state = speed_state;
    const bool motion_alarm =
        contradiction_since_ && frame.t - *contradiction_since_ >= config_.motion_persistence_s - 1e-9;
    if (shift_alarm(perceived, predicted, threshold_)) {
      v.alarm = true;
      v.strategy = Strategy::S1Shift;
    } else if (motion_alarm) {
      v.alarm = true;
      v.strategy = Strategy::S1Motion;
      v.latency_s = frame.t - *contradiction_since_;
    }
    verdict = v;
  }
  rows_.push_back({perceived, frame.accel_pct, frame.steering_deg, frame.speed_mps});
  if (rows_.size() > window_) rows_.pop_front();
  prev_ = frame;
  return verdict;
}

std::vector<DetectionVerdict> strategy2_step(std::span<const turns::TurnEvent> steering,
                                             std::span<const turns::TurnEvent> gnss, double tolerance_s) {
  std::vector<DetectionVerdict> out;
  std::vector<bool> used(gnss.size(), false);
  for (const auto& s : steering) {
    std::optional<std::size_t> best;
    for (std::size_t g = 0; g < gnss.size(); ++g) {
      if (!overlaps(s, gnss[g], tolerance_s)) continue;
      if (!best || (used[*best] && !used[g]) ||
          (used[*best] == used[g] && overlap_length(s, gnss[g]) > overlap_length(s, gnss[*best]))) {
        best = g;
      }
    }
    DetectionVerdict v;
    v.strategy = Strategy::S2Turn;
    v.steering_label = s.label;
    if (best) {
      const auto& g = gnss[*best];
      used[*best] = true;
      v.gnss_label = g.label;
      v.alarm = g.label != s.label;
      v.t = std::max(s.detected_at_s, g.detected_at_s);
      v.latency_s = std::max(0.0, v.t - std::max(s.end_s, g.end_s));
    } else {
      v.alarm = true;
      v.gnss_label = TurnLabel::NoTurn;
      v.t = std::max(s.detected_at_s, s.end_s + tolerance_s);
      v.latency_s = v.t - s.end_s;
    }
    out.push_back(v);
  }
  for (std::size_t g = 0; g < gnss.size(); ++g) {
    if (used[g]) continue;
    const bool matched = std::any_of(steering.begin(), steering.end(),
                                     [&](const turns::TurnEvent& s) { return overlaps(s, gnss[g], tolerance_s); });
    if (matched) continue;
    DetectionVerdict v;
    v.strategy = Strategy::S2Turn;
    v.alarm = true;
    v.steering_label = TurnLabel::NoTurn;
    v.gnss_label = gnss[g].label;
    v.t = std::max(gnss[g].detected_at_s, gnss[g].end_s + tolerance_s);
    v.latency_s = v.t - gnss[g].end_s;
    out.push_back(v);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
  return out;
}

LatencyStats latency_stats(std::vector<double> samples) {
  LatencyStats st;
  st.count = samples.size();
  if (samples.empty()) return st;
  std::sort(samples.begin(), samples.end());
  double sum = 0.0;
  for (double s : samples) sum += s;
  st.mean_s = sum / static_cast<double>(samples.size());
  auto pct = [&](double p) {
    const auto idx = static_cast<std::size_t>(std::ceil(p * static_cast<double>(samples.size()))) - 1;
    return samples[std::min(idx, samples.size() - 1)];
  };
  st.p50_s = pct(0.5);
  st.p95_s = pct(0.95);
  st.max_s = samples.back();
  return st;
}

DetectionReport run_detection(const simgen::SensorTrace& trace, const lstm::LstmNetwork& model,
                              std::span<const dtw::LabeledTemplate> templates, const DetectionConfig& config,
                              const attacks::SpoofedTrace* spoofed, Routing routing) {
  validate(config);
  check_model(model);
  bool run_s1 = true, run_s2 = true;
  if (routing == Routing::PerKind && spoofed != nullptr) {
    run_s1 = spoofed->scenario.kind != attacks::AttackKind::WrongTurn;
    run_s2 = spoofed->scenario.kind != attacks::AttackKind::TurnByTurn;
  }

  DetectionReport report;
  DetectionSummary& sum = report.summary;
  sum.threshold_m = config.threshold();
  if (spoofed != nullptr) {
    sum.scenario_id = spoofed->scenario.id;
    sum.kind = attacks::to_string(spoofed->scenario.kind);
    sum.onset_s = spoofed->onset_s;
  } else {
    sum.kind = "clean";
  }

  const auto frames = ingest::synchronize(trace.channels);
  std::vector<DetectionVerdict> s1;
  std::vector<double> s1_times;
  if (run_s1) {
    Strategy1Monitor monitor(model, config);
    s1.reserve(frames.size());
    s1_times.reserve(frames.size());
    for (const auto& f : frames) {
      const auto start = Clock::now();
      auto v = monitor.step(f);
      const double elapsed = seconds_since(start);
      if (v) {
        v->compute_s = elapsed;
        s1.push_back(*v);
        s1_times.push_back(elapsed);
      }
    }
  }

  std::vector<DetectionVerdict> s2;
  std::vector<double> s2_times;
  if (run_s2) {
    if (templates.empty()) throw ConfigurationError("strategy 2 needs a template corpus");
    const auto steering = turns::steering_at(trace.channel(ingest::kSteeringDeg), config.steering_hz);
    const auto& speed = trace.channel(ingest::kSpeed).samples;
    std::vector<turns::TurnEvent> steering_events;
    for (const auto& w : turns::segment_turns(steering, config.segmenter)) {
      const auto start = Clock::now();
      auto ev = turns::classify_turn(steering, w, templates, speed, config.speed_error_mps, config.knn);
      s2_times.push_back(seconds_since(start));
      if (ev.label != TurnLabel::NoTurn) steering_events.push_back(std::move(ev));
    }
    const auto gnss_events = turns::infer_gnss_turns(trace.gnss_track(), config.heading);
    const double end_t = frames.back().t;
    for (auto& v : strategy2_step(steering_events, gnss_events, config.match_tolerance_s)) {
      // A streaming run ends with the data; later decisions never happen.
      if (v.t <= end_t) s2.push_back(v);
    }
  }

  report.verdicts.reserve(s1.size() + s2.size());
  std::merge(s1.begin(), s1.end(), s2.begin(), s2.end(), std::back_inserter(report.verdicts),
             [](const DetectionVerdict& a, const DetectionVerdict& b) { return a.t < b.t; });

  const double onset = sum.onset_s.value_or(-std::numeric_limits<double>::infinity());
  bool prev_s1_alarm = false;
  for (const auto& v : report.verdicts) {
    bool rising = false;
    if (v.strategy == Strategy::S2Turn) {
      rising = v.alarm;
      if (v.alarm) ++sum.s2_alarms;
    } else {
      rising = v.alarm && !prev_s1_alarm;
      prev_s1_alarm = v.alarm;
      if (v.alarm && v.strategy == Strategy::S1Shift) ++sum.s1_shift_alarms;
      if (v.alarm && v.strategy == Strategy::S1Motion) ++sum.s1_motion_alarms;
    }
    if (!v.alarm) continue;
    if (sum.onset_s ? v.t < onset : true) {
      if (rising) ++sum.false_alarms;
      if (sum.onset_s) continue;
    }
    if (!sum.first_alarm_s) {
      sum.first_alarm_s = v.t;
      sum.first_alarm_strategy = v.strategy;
      if (sum.onset_s) sum.detection_latency_s = v.t - onset;
    }
  }
  sum.s1_latency = latency_stats(std::move(s1_times));
  sum.s2_latency = latency_stats(std::move(s2_times));
  return report;
}

DetectionReport run_detection(const attacks::SpoofedTrace& spoofed, const lstm::LstmNetwork& model,
                              std::span<const dtw::LabeledTemplate> templates, const DetectionConfig& config,
                              Routing routing) {
  return run_detection(spoofed.trace, model, templates, config, &spoofed, routing);
}

void write_verdicts(std::ostream& out, std::span<const DetectionVerdict> verdicts, const std::string& comment) {
  if (!comment.empty()) out << "# " << comment << '\n';
  out << "t,alarm,strategy,perceived_shift_m,predicted_shift_m,diff_m,latency_s\n";
  for (const auto& v : verdicts) {
    out << format_double(v.t) << ',' << (v.alarm ? 1 : 0) << ',' << to_string(v.strategy) << ',';
    if (v.strategy == Strategy::S2Turn) {
      out << ",,,";
    } else {
      out << format_double(v.perceived_shift_m) << ',' << format_double(v.predicted_shift_m) << ','
          << format_double(v.diff_m) << ',';
    }
    out << format_double(v.latency_s) << '\n';
  }
}

std::vector<DetectionVerdict> read_verdicts(std::istream& in, const std::string& source) {
  std::vector<DetectionVerdict> out;
  std::string line;
  std::size_t line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (header) {
      if (line != "t,alarm,strategy,perceived_shift_m,predicted_shift_m,diff_m,latency_s") {
        throw ParseError(source, line_no, "unexpected verdict header");
      }
      header = false;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string field; std::getline(ss, field, ',');) f.push_back(field);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 7) throw ParseError(source, line_no, "expected 7 fields");
    auto num = [&](const std::string& text) {
      const auto v = parse_double(text);
      if (!v) throw ParseError(source, line_no, "bad number '" + text + "'");
      return *v;
    };
    DetectionVerdict v;
    v.t = num(f[0]);
    v.alarm = f[1] == "1";
    try {
      v.strategy = parse_strategy(f[2]);
    } catch (const Error& e) {
      throw ParseError(source, line_no, e.what());
    }
    if (v.strategy != Strategy::S2Turn) {
      v.perceived_shift_m = num(f[3]);
      v.predicted_shift_m = num(f[4]);
      v.diff_m = num(f[5]);
    }
    v.latency_s = num(f[6]);
    out.push_back(v);
  }
  if (header) throw ParseError(source, line_no, "missing verdict header");
  return out;
}

nlohmann::json to_json(const DetectionSummary& s) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  auto stats = [](const LatencyStats& st) {
    return nlohmann::json{{"count", st.count}, {"mean_s", st.mean_s}, {"p50_s", st.p50_s},
                          {"p95_s", st.p95_s}, {"max_s", st.max_s}};
  };
  return {{"scenario_id", s.scenario_id},
          {"kind", s.kind},
          {"onset_s", opt(s.onset_s)},
          {"first_alarm_s", opt(s.first_alarm_s)},
          {"first_alarm_strategy",
           s.first_alarm_strategy ? nlohmann::json(to_string(*s.first_alarm_strategy)) : nlohmann::json(nullptr)},
          {"detection_latency_s", opt(s.detection_latency_s)},
          {"false_alarms", s.false_alarms},
          {"alarms", {{"S1Shift", s.s1_shift_alarms}, {"S1Motion", s.s1_motion_alarms}, {"S2Turn", s.s2_alarms}}},
          {"threshold_m", s.threshold_m},
          {"s1_latency", stats(s.s1_latency)},
          {"s2_latency", stats(s.s2_latency)}};
}

}  // namespace spoofguard::detector

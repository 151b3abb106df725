#include "spoofguard/turns.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <optional>
#include <ostream>

#include "spoofguard/error.hpp"
#include "spoofguard/util.hpp"

namespace spoofguard::turns {
namespace {

bool overlaps(double a0, double a1, double b0, double b1) { return a0 <= b1 && b0 <= a1; }

std::vector<geo::TimedPoint> decimate(std::span<const geo::TimedPoint> track, double hz) {
  std::vector<ingest::Sample> lat, lon;
  lat.reserve(track.size());
  lon.reserve(track.size());
  for (const auto& p : track) {
    lat.push_back({p.t, p.point.lat});
    lon.push_back({p.t, p.point.lon});
  }
  const double t0 = track.front().t;
  const double span = track.back().t - t0;
  const auto count = static_cast<std::size_t>(std::floor(span * hz + 1e-9)) + 1;
  std::vector<geo::TimedPoint> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double t = t0 + static_cast<double>(k) / hz;
    out.push_back({t, geo::GeoPoint{ingest::interpolate_at(lat, t), ingest::interpolate_at(lon, t)}});
  }
  return out;
}

}  // namespace

std::string to_string(EventSource source) { return source == EventSource::Steering ? "steering" : "gnss"; }

void validate(const SegmenterConfig& c) {
  if (!(c.exit_deg > 0.0 && c.enter_deg > c.exit_deg)) {
    throw InvalidInputError("segmenter thresholds must satisfy enter > exit > 0");
  }
  if (!(c.min_duration_s > 0.0 && c.max_duration_s > c.min_duration_s)) {
    throw InvalidInputError("segmenter durations must satisfy max > min > 0");
  }
}

void validate(const HeadingConfig& c) {
  if (!(c.window_s > 0.0) || !(c.min_change_rad > 0.0) || !(c.sample_hz > 0.0) || c.min_step_m < 0.0 ||
      c.min_rate_rad_s < 0.0 || c.max_gap_s < 0.0) {
    throw InvalidInputError("invalid heading configuration");
  }
}

std::vector<CandidateWindow> segment_turns(std::span<const ingest::Sample> steering,
                                           const SegmenterConfig& config) {
  validate(config);
  std::vector<CandidateWindow> out;
  const std::size_t n = steering.size();
  std::size_t k = 0;
  while (k < n) {
    if (std::abs(steering[k].value) < config.enter_deg) {
      ++k;
      continue;
    }
    std::size_t begin = k;
    while (begin > 0 && std::abs(steering[begin - 1].value) >= config.exit_deg) --begin;
    if (!out.empty() && begin < out.back().end) begin = out.back().end;
    std::size_t end = k;
    while (end < n && std::abs(steering[end].value) >= config.exit_deg) ++end;
    CandidateWindow w{begin, end, steering[begin].t, steering[end - 1].t,
                      end < n ? steering[end].t : steering[end - 1].t};
    const double duration = w.end_s - w.start_s;
    if (duration >= config.min_duration_s && duration <= config.max_duration_s) out.push_back(w);
    k = end;
  }
  return out;
}

dtw::TimeSeries window_values(std::span<const ingest::Sample> steering, const CandidateWindow& window) {
  if (window.end > steering.size() || window.begin >= window.end) {
    throw InvalidInputError("candidate window outside the steering series");
  }
  dtw::TimeSeries out;
  out.reserve(window.end - window.begin);
  for (std::size_t k = window.begin; k < window.end; ++k) out.push_back(steering[k].value);
  return out;
}

double mean_speed(std::span<const ingest::Sample> speed, double start_s, double end_s) {
  if (speed.empty()) throw InsufficientDataError("speed series is empty");
  double sum = 0.0;
  std::size_t count = 0;
  auto it = std::lower_bound(speed.begin(), speed.end(), start_s,
                             [](const ingest::Sample& s, double t) { return s.t < t; });
  for (; it != speed.end() && it->t <= end_s; ++it) {
    sum += it->value;
    ++count;
  }
  if (count == 0) return ingest::interpolate_at(speed, 0.5 * (start_s + end_s));
  return sum / static_cast<double>(count);
}

TurnEvent classify_turn(std::span<const ingest::Sample> steering, const CandidateWindow& window,
                        std::span<const dtw::LabeledTemplate> templates,
                        std::span<const ingest::Sample> speed, double speed_error,
                        const dtw::KnnConfig& knn) {
  TurnEvent ev;
  ev.start_s = window.start_s;
  ev.end_s = window.end_s;
  ev.source = EventSource::Steering;
  ev.detected_at_s = window.closed_at_s;
  if (mean_speed(speed, window.start_s, window.end_s) <= speed_error) {
    ev.label = TurnLabel::NoTurn;
    return ev;
  }
  const auto series = window_values(steering, window);
  const auto result = dtw::knn_classify(series, templates, knn);
  ev.label = result.label;
  for (const auto& nb : result.neighbors) ev.neighbor_distances.push_back(nb.distance);
  ev.evidence = result.neighbors.empty() ? 0.0 : result.neighbors.front().distance;
  return ev;
}

std::vector<TurnEvent> steering_turns(std::span<const ingest::Sample> steering,
                                      std::span<const dtw::LabeledTemplate> templates,
                                      std::span<const ingest::Sample> speed, double speed_error,
                                      const SegmenterConfig& segmenter, const dtw::KnnConfig& knn) {
  std::vector<TurnEvent> out;
  for (const auto& w : segment_turns(steering, segmenter)) {
    auto ev = classify_turn(steering, w, templates, speed, speed_error, knn);
    if (ev.label != TurnLabel::NoTurn) out.push_back(std::move(ev));
  }
  return out;
}

std::vector<TurnEvent> infer_gnss_turns(std::span<const geo::TimedPoint> track, const HeadingConfig& config) {
  validate(config);
  if (track.size() < 2) throw InsufficientDataError("GNSS turn inference needs at least two points");
  const auto pts = decimate(track, config.sample_hz);
  const std::size_t n = pts.size();

  // Per-step heading change; step k covers (t[k-1], t[k]].
  std::vector<double> dtheta(n, 0.0);
  bool have = false;
  double prev = 0.0;
  for (std::size_t k = 1; k < n; ++k) {
    if (geo::haversine_distance(pts[k - 1].point, pts[k].point) < config.min_step_m) continue;
    const double h = geo::heading(pts[k - 1].point, pts[k].point);
    if (have) dtheta[k] = geo::wrap_angle(h - prev);
    prev = h;
    have = true;
  }
  const double dt = 1.0 / config.sample_hz;
  auto active_sign = [&](std::size_t k) {
    if (std::abs(dtheta[k]) / dt < config.min_rate_rad_s || dtheta[k] == 0.0) return 0;
    return dtheta[k] > 0.0 ? 1 : -1;
  };

  std::vector<TurnEvent> out;
  std::size_t k = 1;
  while (k < n) {
    const int sign = active_sign(k);
    if (sign == 0) {
      ++k;
      continue;
    }
    const std::size_t first = k;
    std::size_t last = k;
    for (std::size_t j = k + 1; j < n; ++j) {
      if (active_sign(j) == sign) {
        last = j;
      } else if (pts[j].t - pts[last].t > config.max_gap_s) {
        break;
      }
    }
    // Earliest step at which the trailing window's heading change reaches the threshold.
    double sum = 0.0, peak = 0.0;
    std::size_t tail = first;
    std::optional<double> flagged;
    for (std::size_t j = first; j <= last; ++j) {
      sum += dtheta[j];
      while (pts[j].t - pts[tail - 1].t > config.window_s + 1e-9) sum -= dtheta[tail++];
      if (sign * sum > sign * peak) peak = sum;
      if (!flagged && sign * sum >= config.min_change_rad) flagged = pts[j].t;
    }
    if (flagged) {
      TurnEvent ev;
      ev.start_s = pts[first - 1].t;
      ev.end_s = pts[last].t;
      ev.label = sign > 0 ? TurnLabel::Right : TurnLabel::Left;
      ev.source = EventSource::Gnss;
      ev.evidence = peak * geo::kRadToDeg;
      ev.detected_at_s = *flagged;
      out.push_back(ev);
    }
    k = last + 1;
  }
  return out;
}

std::vector<ingest::Sample> steering_at(const ingest::RawChannel& steering, double hz) {
  if (steering.samples.size() < 2) throw InsufficientDataError("steering channel too short");
  const double span = steering.samples.back().t - steering.samples.front().t;
  const double source_hz = static_cast<double>(steering.samples.size() - 1) / span;
  return ingest::resample(steering.samples, std::max(source_hz, hz), hz);
}

std::vector<dtw::LabeledTemplate> extract_templates(const simgen::SensorTrace& trace, double steering_hz,
                                                    const SegmenterConfig& segmenter) {
  const auto steering = steering_at(trace.channel(ingest::kSteeringDeg), steering_hz);
  std::vector<dtw::LabeledTemplate> out;
  for (const auto& w : segment_turns(steering, segmenter)) {
    for (const auto& gt : trace.turns) {
      if (overlaps(w.start_s, w.end_s, gt.start_s, gt.end_s)) {
        out.push_back({window_values(steering, w), gt.label});
        break;
      }
    }
  }
  return out;
}

std::vector<dtw::LabeledTemplate> make_turn_corpus(const CorpusConfig& config) {
  Rng rng(config.seed);
  std::vector<dtw::LabeledTemplate> out;
  const std::size_t total = config.right + config.left;
  for (std::size_t i = 0; i < total; ++i) {
    const bool right = i < config.right;
    simgen::RouteScript script;
    const double speed = rng.uniform(6.0, 9.0);
    script.initial_speed_mps = speed;
    script.start_heading_rad = rng.uniform(-std::numbers::pi, std::numbers::pi);
    script.noise = config.noise;
    script.seed = config.seed * 1000003ULL + i;
    simgen::Segment turn{right ? simgen::SegmentKind::RightTurn : simgen::SegmentKind::LeftTurn, speed};
    turn.angle_deg = rng.uniform(80.0, 100.0);
    turn.radius_m = rng.uniform(20.0, 30.0);
    script.segments = {{simgen::SegmentKind::Straight, speed, 3.0}, turn,
                       {simgen::SegmentKind::Straight, speed, 3.0}};
    auto templates = extract_templates(simgen::generate_trace(script), config.steering_hz);
    if (templates.size() != 1) {
      throw ScenarioError("corpus drive " + std::to_string(i) + " produced " +
                          std::to_string(templates.size()) + " turn windows");
    }
    out.push_back(std::move(templates.front()));
  }
  return out;
}

void save_templates(const std::filesystem::path& dir, std::span<const dtw::LabeledTemplate> templates,
                    double steering_hz, const std::string& comment) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.csv");
  if (!manifest) throw InvalidInputError("cannot write " + (dir / "manifest.csv").string());
  if (!comment.empty()) manifest << "# " << comment << '\n';
  manifest << "file,label\n";
  for (std::size_t i = 0; i < templates.size(); ++i) {
    const std::string file = "template_" + std::to_string(i) + ".csv";
    ingest::RawChannel ch{std::string(ingest::kSteeringDeg), {}};
    for (std::size_t k = 0; k < templates[i].series.size(); ++k) {
      ch.samples.push_back({static_cast<double>(k) / steering_hz, templates[i].series[k]});
    }
    std::ofstream out(dir / file);
    if (!out) throw InvalidInputError("cannot write " + (dir / file).string());
    ingest::write_channel_csv(out, ch, comment);
    manifest << file << ',' << spoofguard::to_string(templates[i].label) << '\n';
  }
}

std::vector<dtw::LabeledTemplate> load_templates(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.csv";
  std::ifstream in(path);
  if (!in) throw InvalidInputError("cannot open template manifest " + path.string());
  std::vector<dtw::LabeledTemplate> out;
  std::string line;
  std::size_t line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (header) {
      header = false;
      if (line != "file,label") throw ParseError(path.string(), line_no, "expected header 'file,label'");
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError(path.string(), line_no, "expected 2 fields");
    dtw::LabeledTemplate t;
    try {
      t.label = parse_turn_label(std::string_view(line).substr(comma + 1));
    } catch (const Error& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
    for (const auto& s : ingest::parse_channel_file(dir / line.substr(0, comma), "template").samples) {
      t.series.push_back(s.value);
    }
    out.push_back(std::move(t));
  }
  if (out.empty()) throw InsufficientDataError(path.string() + ": no templates");
  return out;
}

void write_turn_report(std::ostream& out, std::span<const TurnEvent> events, const std::string& comment) {
  if (!comment.empty()) out << "# " << comment << '\n';
  out << "start_s,end_s,label,source,evidence\n";
  for (const auto& e : events) {
    out << format_double(e.start_s) << ',' << format_double(e.end_s) << ','
        << spoofguard::to_string(e.label) << ',' << to_string(e.source) << ','
        << format_double(e.evidence) << '\n';
  }
}

}  // namespace spoofguard::turns

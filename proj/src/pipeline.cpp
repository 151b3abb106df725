#include "spoofguard/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <set>

#include "spoofguard/error.hpp"
#include "spoofguard/util.hpp"

namespace spoofguard::pipeline {
namespace {

using nlohmann::json;

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigurationError(where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items()) {
    if (!ok.contains(key)) throw ConfigurationError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

std::string scenario_id(const std::string& prefix, std::size_t index) {
  std::string n = std::to_string(index);
  if (n.size() < 3) n.insert(0, 3 - n.size(), '0');
  return prefix + "-" + n;
}

std::string optional_field(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

void comment_line(std::ostream& out, const std::string& comment) {
  if (!comment.empty()) out << "# " << comment << '\n';
}

}  // namespace

json to_json(const RunConfig& c) {
  const auto& t = c.training;
  const auto& d = c.detection;
  json kinds = json::array();
  for (auto k : c.attack_kinds) kinds.push_back(attacks::to_string(k));
  return {
      {"seed", c.seed},
      {"corpus",
       {{"traces", c.traces},
        {"duration_s", c.trace_duration_s},
        {"include_stop", c.include_stop},
        {"noise",
         {{"gnss_m", c.noise.gnss_m},
          {"speed_mps", c.noise.speed_mps},
          {"accel_pct", c.noise.accel_pct},
          {"steering_deg", c.noise.steering_deg}}}}},
      {"training",
       {{"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"learning_rate", t.learning_rate},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"epsilon", t.epsilon},
        {"window", t.window},
        {"train_fraction", t.train_fraction},
        {"shuffle", t.shuffle},
        {"hidden", t.dims.hidden}}},
      {"templates",
       {{"right", c.template_right}, {"left", c.template_left}, {"test_right", c.test_right}, {"test_left", c.test_left}}},
      {"scenarios",
       {{"kinds", kinds},
        {"per_kind", c.scenarios_per_kind},
        {"clean_runs", c.clean_runs},
        {"duration_s", c.scenario_duration_s}}},
      {"detection",
       {{"positioning_error_m", d.positioning_error_m},
        {"speed_error_mps", d.speed_error_mps},
        {"motion_baseline_s", d.motion_baseline_s},
        {"motion_persistence_s", d.motion_persistence_s},
        {"match_tolerance_s", d.match_tolerance_s},
        {"steering_hz", d.steering_hz},
        {"routing", c.routing == detector::Routing::PerKind ? "per_kind" : "all"},
        {"knn", {{"k", d.knn.k}, {"metric", d.knn.metric == dtw::Metric::Fast ? "fast" : "exact"}, {"radius", d.knn.radius}}},
        {"segmenter",
         {{"enter_deg", d.segmenter.enter_deg},
          {"exit_deg", d.segmenter.exit_deg},
          {"min_duration_s", d.segmenter.min_duration_s},
          {"max_duration_s", d.segmenter.max_duration_s}}},
        {"heading",
         {{"window_s", d.heading.window_s},
          {"min_change_deg", d.heading.min_change_rad * geo::kRadToDeg},
          {"sample_hz", d.heading.sample_hz},
          {"min_step_m", d.heading.min_step_m},
          {"min_rate_deg_s", d.heading.min_rate_rad_s * geo::kRadToDeg},
          {"max_gap_s", d.heading.max_gap_s}}}}}};
}

RunConfig run_config_from_json(const json& doc) {
  RunConfig c;
  try {
    check_keys(doc, {"seed", "corpus", "training", "templates", "scenarios", "detection"}, "config");
    read(doc, "seed", c.seed);
    if (doc.contains("corpus")) {
      const json& j = doc["corpus"];
      check_keys(j, {"traces", "duration_s", "include_stop", "noise"}, "corpus");
      read(j, "traces", c.traces);
      read(j, "duration_s", c.trace_duration_s);
      read(j, "include_stop", c.include_stop);
      if (j.contains("noise")) {
        const json& n = j["noise"];
        check_keys(n, {"gnss_m", "speed_mps", "accel_pct", "steering_deg"}, "corpus.noise");
        read(n, "gnss_m", c.noise.gnss_m);
        read(n, "speed_mps", c.noise.speed_mps);
        read(n, "accel_pct", c.noise.accel_pct);
        read(n, "steering_deg", c.noise.steering_deg);
      }
    }
    if (doc.contains("training")) {
      const json& j = doc["training"];
      check_keys(j, {"epochs", "batch_size", "learning_rate", "beta1", "beta2", "epsilon", "window",
                     "train_fraction", "shuffle", "hidden"},
                 "training");
      auto& t = c.training;
      read(j, "epochs", t.epochs);
      read(j, "batch_size", t.batch_size);
      read(j, "learning_rate", t.learning_rate);
      read(j, "beta1", t.beta1);
      read(j, "beta2", t.beta2);
      read(j, "epsilon", t.epsilon);
      read(j, "window", t.window);
      read(j, "train_fraction", t.train_fraction);
      read(j, "shuffle", t.shuffle);
      read(j, "hidden", t.dims.hidden);
    }
    if (doc.contains("templates")) {
      const json& j = doc["templates"];
      check_keys(j, {"right", "left", "test_right", "test_left"}, "templates");
      read(j, "right", c.template_right);
      read(j, "left", c.template_left);
      read(j, "test_right", c.test_right);
      read(j, "test_left", c.test_left);
    }
    if (doc.contains("scenarios")) {
      const json& j = doc["scenarios"];
      check_keys(j, {"kinds", "per_kind", "clean_runs", "duration_s"}, "scenarios");
      if (j.contains("kinds")) {
        c.attack_kinds.clear();
        for (const auto& k : j["kinds"]) c.attack_kinds.push_back(attacks::parse_attack_kind(k.get<std::string>()));
      }
      read(j, "per_kind", c.scenarios_per_kind);
      read(j, "clean_runs", c.clean_runs);
      read(j, "duration_s", c.scenario_duration_s);
    }
    if (doc.contains("detection")) {
      const json& j = doc["detection"];
      check_keys(j, {"positioning_error_m", "speed_error_mps", "motion_baseline_s", "motion_persistence_s",
                     "match_tolerance_s", "steering_hz", "routing", "knn", "segmenter", "heading"},
                 "detection");
      auto& d = c.detection;
      read(j, "positioning_error_m", d.positioning_error_m);
      read(j, "speed_error_mps", d.speed_error_mps);
      read(j, "motion_baseline_s", d.motion_baseline_s);
      read(j, "motion_persistence_s", d.motion_persistence_s);
      read(j, "match_tolerance_s", d.match_tolerance_s);
      read(j, "steering_hz", d.steering_hz);
      if (j.contains("routing")) {
        const auto r = j["routing"].get<std::string>();
        if (r == "per_kind") c.routing = detector::Routing::PerKind;
        else if (r == "all") c.routing = detector::Routing::All;
        else throw ConfigurationError("routing must be 'per_kind' or 'all'");
      }
      if (j.contains("knn")) {
        const json& k = j["knn"];
        check_keys(k, {"k", "metric", "radius"}, "detection.knn");
        read(k, "k", d.knn.k);
        read(k, "radius", d.knn.radius);
        if (k.contains("metric")) {
          const auto m = k["metric"].get<std::string>();
          if (m == "fast") d.knn.metric = dtw::Metric::Fast;
          else if (m == "exact") d.knn.metric = dtw::Metric::Exact;
          else throw ConfigurationError("knn metric must be 'fast' or 'exact'");
        }
      }
      if (j.contains("segmenter")) {
        const json& s = j["segmenter"];
        check_keys(s, {"enter_deg", "exit_deg", "min_duration_s", "max_duration_s"}, "detection.segmenter");
        read(s, "enter_deg", d.segmenter.enter_deg);
        read(s, "exit_deg", d.segmenter.exit_deg);
        read(s, "min_duration_s", d.segmenter.min_duration_s);
        read(s, "max_duration_s", d.segmenter.max_duration_s);
      }
      if (j.contains("heading")) {
        const json& h = j["heading"];
        check_keys(h, {"window_s", "min_change_deg", "sample_hz", "min_step_m", "min_rate_deg_s", "max_gap_s"},
                   "detection.heading");
        read(h, "window_s", d.heading.window_s);
        if (h.contains("min_change_deg")) d.heading.min_change_rad = h["min_change_deg"].get<double>() * geo::kDegToRad;
        read(h, "sample_hz", d.heading.sample_hz);
        read(h, "min_step_m", d.heading.min_step_m);
        if (h.contains("min_rate_deg_s")) d.heading.min_rate_rad_s = h["min_rate_deg_s"].get<double>() * geo::kDegToRad;
        read(h, "max_gap_s", d.heading.max_gap_s);
      }
    }
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("invalid config value: ") + e.what());
  }
  c.training.seed = c.seed;
  lstm::validate(c.training);
  detector::validate(c.detection);
  if (c.traces == 0) throw ConfigurationError("corpus.traces must be positive");
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInputError("cannot open config " + path.string());
  try {
    return run_config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string config_hash(const RunConfig& config) { return to_hex(fnv1a64(to_json(config).dump())); }

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  // splitmix64 over a combination of the three inputs.
  std::uint64_t z = seed * 0x9e3779b97f4a7c15ULL + stream * 0xbf58476d1ce4e5b9ULL + index * 0x94d049bb133111ebULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<simgen::SensorTrace> generate_corpus(const RunConfig& config) {
  std::vector<simgen::SensorTrace> out;
  for (std::size_t i = 0; i < config.traces; ++i) {
    auto route = simgen::random_route(derive_seed(config.seed, 1, i), config.trace_duration_s, config.include_stop);
    route.noise = config.noise;
    out.push_back(simgen::generate_trace(route));
    out.back().config_hash = config_hash(config);
  }
  return out;
}

TrainingData build_training_data(std::span<const simgen::SensorTrace> traces, std::size_t window) {
  if (traces.empty()) throw InsufficientDataError("no training traces");
  std::vector<lstm::FeatureTable> tables;
  for (const auto& tr : traces) tables.push_back(lstm::make_feature_table(ingest::synchronize(tr.channels)));
  TrainingData data{lstm::fit_feature_scaler(tables), {}};
  for (const auto& t : tables) {
    auto w = lstm::build_windows(t, data.scaler, window);
    data.windows.insert(data.windows.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  return data;
}

lstm::TrainingResult train_model(std::span<const simgen::SensorTrace> traces, const RunConfig& config,
                                 const lstm::EpochCallback& on_epoch) {
  auto tc = config.training;
  tc.seed = config.seed;
  tc.config_hash = config_hash(config);
  const auto data = build_training_data(traces, tc.window);
  return lstm::train(data.windows, data.scaler, tc, on_epoch);
}

std::vector<dtw::LabeledTemplate> build_templates(const RunConfig& config) {
  turns::CorpusConfig cc;
  cc.right = config.template_right;
  cc.left = config.template_left;
  cc.noise = config.noise;
  cc.steering_hz = config.detection.steering_hz;
  cc.seed = derive_seed(config.seed, 2, 0);
  return turns::make_turn_corpus(cc);
}

std::vector<dtw::LabeledTemplate> build_test_turns(const RunConfig& config) {
  turns::CorpusConfig cc;
  cc.right = config.test_right;
  cc.left = config.test_left;
  cc.noise = config.noise;
  cc.steering_hz = config.detection.steering_hz;
  cc.seed = derive_seed(config.seed, 3, 0);
  return turns::make_turn_corpus(cc);
}

ClassificationReport evaluate_classifier(std::span<const dtw::LabeledTemplate> templates,
                                         std::span<const dtw::LabeledTemplate> test, const dtw::KnnConfig& knn) {
  if (test.empty()) throw InsufficientDataError("empty test corpus");
  ClassificationReport r;
  std::size_t tp_l = 0, fp_l = 0, fn_l = 0, tp_r = 0, fp_r = 0, fn_r = 0;
  for (const auto& t : test) {
    const TurnLabel got = dtw::knn_classify(t.series, templates, knn).label;
    ++r.total;
    if (got == t.label) ++r.correct;
    if (t.label == TurnLabel::Left) ++r.left.support;
    if (t.label == TurnLabel::Right) ++r.right.support;
    if (got == TurnLabel::Left) (t.label == TurnLabel::Left ? tp_l : fp_l)++;
    else if (t.label == TurnLabel::Left) ++fn_l;
    if (got == TurnLabel::Right) (t.label == TurnLabel::Right ? tp_r : fp_r)++;
    else if (t.label == TurnLabel::Right) ++fn_r;
  }
  auto fill = [](ClassMetrics& m, std::size_t tp, std::size_t fp, std::size_t fn) {
    m.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  };
  fill(r.left, tp_l, fp_l, fn_l);
  fill(r.right, tp_r, fp_r, fn_r);
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  return r;
}

json to_json(const ClassificationReport& r) {
  auto cls = [](const ClassMetrics& m) {
    return json{{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
  };
  return {{"accuracy", r.accuracy}, {"total", r.total}, {"correct", r.correct},
          {"Left", cls(r.left)},    {"Right", cls(r.right)}};
}

ScenarioCase make_case(const RunConfig& config, attacks::AttackKind kind, std::size_t index) {
  const auto stream = 10 + static_cast<std::uint64_t>(kind);
  for (std::uint64_t attempt = 0; attempt < 32; ++attempt) {
    const auto key = index * 32 + attempt;
    auto route = simgen::random_route(derive_seed(config.seed, stream, key), config.scenario_duration_s, true);
    route.noise = config.noise;
    ScenarioCase c{simgen::generate_trace(route), {}};
    c.clean.config_hash = config_hash(config);
    try {
      c.scenario = attacks::random_scenario(kind, c.clean, derive_seed(config.seed, stream + 10, key));
      c.scenario.id = scenario_id(attacks::to_string(kind), index);
      attacks::inject(c.clean, c.scenario);
      return c;
    } catch (const ScenarioError&) {
      continue;
    }
  }
  throw ScenarioError("no route suitable for " + attacks::to_string(kind) + " scenario " + std::to_string(index));
}

std::string clean_run_id(std::size_t index) { return scenario_id("clean", index); }

simgen::SensorTrace make_clean_run(const RunConfig& config, std::size_t index) {
  auto route = simgen::random_route(derive_seed(config.seed, 30, index), config.scenario_duration_s, true);
  route.noise = config.noise;
  auto trace = simgen::generate_trace(route);
  trace.config_hash = config_hash(config);
  return trace;
}

ReportRow report_row(const detector::DetectionSummary& s) {
  ReportRow r;
  r.scenario_id = s.scenario_id;
  r.kind = s.kind;
  r.onset_s = s.onset_s;
  r.first_alarm_s = s.first_alarm_s;
  r.strategy = s.first_alarm_strategy ? detector::to_string(*s.first_alarm_strategy) : "";
  r.detection_latency_s = s.detection_latency_s;
  r.false_alarms = s.false_alarms;
  r.detected = s.onset_s.has_value() && s.first_alarm_s.has_value();
  r.s1_mean_latency_s = s.s1_latency.mean_s;
  r.s2_mean_latency_s = s.s2_latency.mean_s;
  return r;
}

ReportRow report_row(const json& s) {
  auto opt = [&](const char* key) -> std::optional<double> {
    if (!s.contains(key) || s[key].is_null()) return std::nullopt;
    return s[key].get<double>();
  };
  try {
    ReportRow r;
    r.scenario_id = s.value("scenario_id", std::string());
    r.kind = s.at("kind").get<std::string>();
    r.onset_s = opt("onset_s");
    r.first_alarm_s = opt("first_alarm_s");
    r.strategy = s.contains("first_alarm_strategy") && !s["first_alarm_strategy"].is_null()
                     ? s["first_alarm_strategy"].get<std::string>()
                     : "";
    r.detection_latency_s = opt("detection_latency_s");
    r.false_alarms = s.at("false_alarms").get<std::size_t>();
    r.detected = r.onset_s.has_value() && r.first_alarm_s.has_value();
    r.s1_mean_latency_s = s.at("s1_latency").at("mean_s").get<double>();
    r.s2_mean_latency_s = s.at("s2_latency").at("mean_s").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid detection summary: ") + e.what());
  }
}

void write_detection_table(std::ostream& out, std::span<const ReportRow> rows, const std::string& comment) {
  comment_line(out, comment);
  out << "scenario_id,kind,onset_s,first_alarm_s,strategy,detection_latency_s,false_alarms,detected\n";
  for (const auto& r : rows) {
    out << r.scenario_id << ',' << r.kind << ',' << optional_field(r.onset_s) << ','
        << optional_field(r.first_alarm_s) << ',' << r.strategy << ',' << optional_field(r.detection_latency_s)
        << ',' << r.false_alarms << ',' << (r.detected ? 1 : 0) << '\n';
  }
}

void write_kind_table(std::ostream& out, std::span<const ReportRow> rows, const std::string& comment) {
  comment_line(out, comment);
  out << "kind,scenarios,detected,false_alarms,mean_latency_s,max_latency_s\n";
  std::vector<std::string> kinds;
  for (const auto& r : rows) {
    if (std::find(kinds.begin(), kinds.end(), r.kind) == kinds.end()) kinds.push_back(r.kind);
  }
  for (const auto& k : kinds) {
    std::size_t n = 0, detected = 0, false_alarms = 0;
    double sum = 0.0, worst = 0.0;
    std::size_t timed = 0;
    for (const auto& r : rows) {
      if (r.kind != k) continue;
      ++n;
      false_alarms += r.false_alarms;
      if (r.detected) ++detected;
      if (r.detection_latency_s) {
        sum += *r.detection_latency_s;
        worst = std::max(worst, *r.detection_latency_s);
        ++timed;
      }
    }
    out << k << ',' << n << ',' << detected << ',' << false_alarms << ','
        << (timed ? format_double(sum / static_cast<double>(timed)) : std::string()) << ','
        << (timed ? format_double(worst) : std::string()) << '\n';
  }
}

void write_difference_csv(std::ostream& out, std::span<const detector::DetectionVerdict> verdicts,
                          double threshold_m, const std::string& comment) {
  comment_line(out, comment);
  out << "t,perceived_shift_m,predicted_shift_m,diff_m,threshold_m,alarm\n";
  for (const auto& v : verdicts) {
    if (v.strategy == detector::Strategy::S2Turn) continue;
    out << format_double(v.t) << ',' << format_double(v.perceived_shift_m) << ','
        << format_double(v.predicted_shift_m) << ',' << format_double(v.diff_m) << ','
        << format_double(threshold_m) << ',' << (v.alarm ? 1 : 0) << '\n';
  }
}

}  // namespace spoofguard::pipeline

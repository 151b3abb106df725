// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "dtw_oracle.hpp"
#include "spoofguard/detector.hpp"
#include "spoofguard/dtw.hpp"
#include "spoofguard/geo.hpp"
#include "spoofguard/lstm.hpp"
#include "spoofguard/pipeline.hpp"
#include "spoofguard/turns.hpp"
#include "spoofguard/util.hpp"

namespace fs = std::filesystem;
using namespace spoofguard;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

// ---- 1 -------------------------------------------------------------------------------------------

Outcome threshold_arithmetic() {
  const double t = detector::compute_threshold(0.0446, 0.1);
  return {t == 0.1446, "compute_threshold(0.0446, 0.1) = " + fmt(t) + (t == 0.1446 ? " (equal to the literal)" : " (differs from 0.1446)")};
}

// ---- 2 -------------------------------------------------------------------------------------------

using Big = boost::multiprecision::cpp_bin_float_50;

// Great-circle distance by the atan2 (Vincenty, equal axes) form in 50-digit arithmetic.
double great_circle_oracle(const geo::GeoPoint& a, const geo::GeoPoint& b) {
  const Big p1 = a.lat, p2 = b.lat, dl = Big(b.lon) - Big(a.lon);
  using boost::multiprecision::atan2;
  using boost::multiprecision::cos;
  using boost::multiprecision::sin;
  using boost::multiprecision::sqrt;
  const Big x = cos(p2) * sin(dl);
  const Big y = cos(p1) * sin(p2) - sin(p1) * cos(p2) * cos(dl);
  const Big z = sin(p1) * sin(p2) + cos(p1) * cos(p2) * cos(dl);
  return static_cast<double>(Big(6'378'000) * atan2(sqrt(x * x + y * y), z));
}

Outcome haversine_fidelity() {
  Rng rng(2024);
  auto random_point = [&] { return geo::GeoPoint::from_degrees(rng.uniform(-89.0, 89.0), rng.uniform(-180.0, 180.0)); };
  auto nearby = [&](const geo::GeoPoint& p, double max_m) {
    return geo::destination(p, rng.uniform(-std::numbers::pi, std::numbers::pi), rng.uniform(0.01, max_m));
  };

  double worst = 0.0;
  std::size_t property_failures = 0;
  for (int i = 0; i < 1000; ++i) {
    const geo::GeoPoint a = random_point();
    // Half global pairs, half at street scale where the detector works.
    const geo::GeoPoint b = i % 2 == 0 ? random_point() : nearby(a, i % 4 == 1 ? 50.0 : 5000.0);
    const geo::GeoPoint c = i % 2 == 0 ? random_point() : nearby(b, 50.0);
    const double d = geo::haversine_distance(a, b);
    const double ref = great_circle_oracle(a, b);
    worst = std::max(worst, std::abs(d - ref) / ref);

    if (geo::haversine_distance(a, a) != 0.0) ++property_failures;
    if (geo::haversine_distance(b, a) != d) ++property_failures;
    const double ac = geo::haversine_distance(a, c), bc = geo::haversine_distance(b, c);
    if (ac > d + bc + 1e-9 * (d + bc)) ++property_failures;
  }
  return {worst <= 1e-6 && property_failures == 0,
          "max relative error " + fmt(worst, 3) + " over 1000 pairs, " + std::to_string(property_failures) +
              " property violations"};
}

// ---- 3 -------------------------------------------------------------------------------------------

Outcome gradient_correctness() {
  double worst = 0.0;
  std::size_t compared = 0, skipped = 0;
  const std::vector<std::vector<std::size_t>> shapes{{8}, {8, 6}, {5, 8}};
  for (std::size_t n = 0; n < shapes.size(); ++n) {
    const auto net = lstm::init_network({lstm::kFeatureCount, shapes[n]}, 100 + n);
    Rng rng(500 + n);
    for (int trial = 0; trial < 3; ++trial) {
      lstm::SupervisedWindow w{lstm::RowMatrix(6, lstm::kFeatureCount), rng.uniform(-1.0, 1.0)};
      for (Eigen::Index r = 0; r < w.inputs.rows(); ++r) {
        for (Eigen::Index c = 0; c < w.inputs.cols(); ++c) w.inputs(r, c) = rng.uniform(0.0, 1.0);
      }
      const auto cmp = lstm::gradient_check(net, w);
      worst = std::max(worst, cmp.max_relative_deviation);
      compared += cmp.compared;
      skipped += cmp.skipped;
    }
  }
  return {worst < 1e-4 && compared > 0,
          "max relative deviation " + fmt(worst, 3) + " over " + std::to_string(compared) + " components (" +
              std::to_string(skipped) + " zero)"};
}

// ---- 4 -------------------------------------------------------------------------------------------

Outcome learnability() {
  pipeline::RunConfig c;
  c.seed = 41;
  c.traces = 3;
  c.trace_duration_s = 20.0;
  c.include_stop = false;
  c.noise = {};
  c.training.epochs = 15;
  const auto corpus = pipeline::generate_corpus(c);
  const auto result = pipeline::train_model(corpus, c);
  const auto& h = result.history;
  const auto& first = h.front();
  const auto& last = h.back();
  const bool pass = last.val_mae <= 0.005 && last.train_mae < first.train_mae && last.val_mae < first.val_mae;
  return {pass, std::to_string(h.size()) + " epochs, train MAE " + fmt(first.train_mae, 3) + " -> " +
                    fmt(last.train_mae, 3) + " m, val MAE " + fmt(first.val_mae, 3) + " -> " +
                    fmt(last.val_mae, 3) + " m"};
}

// ---- 5 -------------------------------------------------------------------------------------------

Outcome dtw_equivalence() {
  const auto series = oracle::all_series(5, {0.0, 1.0, 2.0});
  std::size_t mismatches = 0, pairs = 0;
  for (const auto& t : series) {
    for (const auto& s : series) {
      ++pairs;
      if (std::abs(dtw::dtw_exact(t, s).distance - oracle::brute_force_dtw(t, s)) > 1e-12) ++mismatches;
    }
  }
  Rng rng(77);
  std::size_t fast_mismatches = 0;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> a(2 + rng.below(39)), b(2 + rng.below(39));
    for (auto& v : a) v = rng.uniform(-50.0, 50.0);
    for (auto& v : b) v = rng.uniform(-50.0, 50.0);
    const double exact = dtw::dtw_exact(a, b).distance;
    const double fast = dtw::fastdtw(a, b, std::max(a.size(), b.size())).distance;
    if (std::abs(exact - fast) > 1e-9 * std::max(1.0, exact)) ++fast_mismatches;
  }
  return {mismatches == 0 && fast_mismatches == 0,
          std::to_string(pairs) + " exhaustive pairs, " + std::to_string(mismatches) +
              " mismatches; fastdtw full radius " + std::to_string(fast_mismatches) + "/100 mismatches"};
}

// ---- 6 -------------------------------------------------------------------------------------------

Outcome turn_classification() {
  pipeline::RunConfig c;
  c.seed = 6;
  const auto templates = pipeline::build_templates(c);
  const auto test = pipeline::build_test_turns(c);
  const auto r = pipeline::evaluate_classifier(templates, test, c.detection.knn);
  const bool perfect = r.accuracy == 1.0 && r.left.precision == 1.0 && r.left.recall == 1.0 && r.left.f1 == 1.0 &&
                       r.right.precision == 1.0 && r.right.recall == 1.0 && r.right.f1 == 1.0;

  // Steering lobes while parked: the same shapes as real turns, but the speedometer reads zero.
  Rng rng(66);
  const double hz = c.detection.steering_hz;
  std::size_t excursions = 0, no_turn = 0;
  for (int i = 0; i < 20; ++i) {
    const double amplitude = rng.uniform(80.0, 400.0) * (i % 2 == 0 ? 1.0 : -1.0);
    const double length_s = rng.uniform(2.0, 8.0);
    std::vector<ingest::Sample> steering, speed;
    for (double t = 0.0; t <= length_s + 4.0; t += 1.0 / hz) {
      const double u = (t - 2.0) / length_s;
      const double lobe = u > 0.0 && u < 1.0 ? 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * u)) : 0.0;
      steering.push_back({t, amplitude * lobe + rng.uniform(-0.5, 0.5)});
      speed.push_back({t, std::abs(rng.uniform(-0.05, 0.05))});
    }
    for (const auto& w : turns::segment_turns(steering, c.detection.segmenter)) {
      ++excursions;
      const auto ev = turns::classify_turn(steering, w, templates, speed, c.detection.speed_error_mps, c.detection.knn);
      if (ev.label == TurnLabel::NoTurn) ++no_turn;
    }
  }
  return {perfect && excursions == 20 && no_turn == excursions,
          "accuracy " + fmt(r.accuracy) + " on " + std::to_string(r.total) + " turns, P/R/F1 Left " +
              fmt(r.left.precision) + "/" + fmt(r.left.recall) + "/" + fmt(r.left.f1) + " Right " +
              fmt(r.right.precision) + "/" + fmt(r.right.recall) + "/" + fmt(r.right.f1) + "; stationary " +
              std::to_string(no_turn) + "/" + std::to_string(excursions) + " NoTurn"};
}

// ---- 7, 8 ----------------------------------------------------------------------------------------

pipeline::RunConfig detection_config() {
  pipeline::RunConfig c;
  c.seed = 7;
  c.traces = 4;
  c.trace_duration_s = 40.0;
  c.training.epochs = 10;
  return c;
}

struct DetectionRun {
  pipeline::RunConfig config;
  std::vector<detector::DetectionSummary> attacks;
  std::map<std::string, double> turn_duration;  // wrong-turn scenario id -> spoofed turn duration
  std::vector<detector::DetectionSummary> clean;
};

const DetectionRun& detection_run() {
  static std::optional<DetectionRun> run;
  if (run) return *run;
  run.emplace();
  run->config = detection_config();
  auto& c = run->config;
  const auto corpus = pipeline::generate_corpus(c);
  const auto model = pipeline::train_model(corpus, c).network;
  const auto templates = pipeline::build_templates(c);
  c.detection.model_max_abs_error_m = model.metadata.validation_max_abs_error;
  std::cerr << "  detection model: max abs error " << fmt(model.metadata.validation_max_abs_error, 4)
            << " m, threshold " << fmt(c.detection.threshold(), 4) << " m\n";

  for (auto kind : c.attack_kinds) {
    for (std::size_t i = 0; i < c.scenarios_per_kind; ++i) {
      const auto kase = pipeline::make_case(c, kind, i);
      const auto spoofed = attacks::inject(kase.clean, kase.scenario);
      auto report = detector::run_detection(spoofed, model, templates, c.detection, c.routing);
      if (kind == attacks::AttackKind::WrongTurn) {
        const auto& turn = kase.clean.turns.at(kase.scenario.turn_index);
        run->turn_duration[kase.scenario.id] = turn.end_s - turn.start_s;
      }
      run->attacks.push_back(std::move(report.summary));
    }
  }
  for (std::size_t i = 0; i < c.clean_runs; ++i) {
    auto report = detector::run_detection(pipeline::make_clean_run(c, i), model, templates, c.detection, nullptr,
                                          c.routing);
    report.summary.scenario_id = pipeline::clean_run_id(i);
    run->clean.push_back(std::move(report.summary));
  }
  return *run;
}

Outcome end_to_end_detection() {
  const auto& run = detection_run();
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_kind;  // detected within budget, total
  std::map<std::string, double> worst_latency;
  std::vector<std::string> misses;
  for (const auto& s : run.attacks) {
    auto& [ok_count, total] = per_kind[s.kind];
    ++total;
    const bool wrong_turn = s.kind == "wrong_turn";
    const double budget = wrong_turn ? run.turn_duration.at(s.scenario_id) + 2.0 : 2.0;
    const bool strategy_ok =
        s.first_alarm_strategy &&
        (wrong_turn ? *s.first_alarm_strategy == detector::Strategy::S2Turn
                    : s.kind == "turn_by_turn" ? *s.first_alarm_strategy == detector::Strategy::S1Shift
                                               : *s.first_alarm_strategy != detector::Strategy::S2Turn);
    const bool ok = s.detection_latency_s && *s.detection_latency_s >= 0.0 && *s.detection_latency_s <= budget &&
                    strategy_ok && s.false_alarms == 0;
    if (s.detection_latency_s) worst_latency[s.kind] = std::max(worst_latency[s.kind], *s.detection_latency_s);
    if (ok) {
      ++ok_count;
    } else {
      misses.push_back(s.scenario_id + "(" +
                       (s.detection_latency_s ? fmt(*s.detection_latency_s, 3) + "s " : std::string("none ")) +
                       (s.first_alarm_strategy ? detector::to_string(*s.first_alarm_strategy) : "-") +
                       " fa=" + std::to_string(s.false_alarms) + ")");
    }
  }
  std::size_t clean_alarms = 0;
  for (const auto& s : run.clean) {
    clean_alarms += s.false_alarms;
    if (s.false_alarms > 0) misses.push_back(s.scenario_id + "(fa=" + std::to_string(s.false_alarms) + ")");
  }

  bool pass = clean_alarms == 0 && run.clean.size() >= 10;
  std::string detail;
  for (const auto& [kind, counts] : per_kind) {
    pass = pass && counts.first == counts.second && counts.second == run.config.scenarios_per_kind;
    detail += kind + " " + std::to_string(counts.first) + "/" + std::to_string(counts.second) + " (max " +
              fmt(worst_latency[kind], 3) + " s), ";
  }
  detail += std::to_string(clean_alarms) + " false alarms over " + std::to_string(run.clean.size()) + " clean runs";
  if (!misses.empty()) {
    detail += "; failing:";
    for (const auto& m : misses) detail += " " + m;
  }
  return {pass, detail};
}

Outcome latency_budget() {
  const auto& run = detection_run();
  double s1_sum = 0.0, s2_sum = 0.0;
  std::size_t s1_n = 0, s2_n = 0;
  auto add = [&](const detector::DetectionSummary& s) {
    s1_sum += s.s1_latency.mean_s * static_cast<double>(s.s1_latency.count);
    s1_n += s.s1_latency.count;
    s2_sum += s.s2_latency.mean_s * static_cast<double>(s.s2_latency.count);
    s2_n += s.s2_latency.count;
  };
  for (const auto& s : run.attacks) add(s);
  for (const auto& s : run.clean) add(s);
  const double s1 = s1_n ? s1_sum / static_cast<double>(s1_n) : 0.0;
  const double s2 = s2_n ? s2_sum / static_cast<double>(s2_n) : 0.0;
  return {s1_n > 0 && s2_n > 0 && s1 <= 1.0 / 120.0 && s2 <= 0.2,
          "Strategy 1 mean " + fmt(s1 * 1e3, 3) + " ms over " + std::to_string(s1_n) +
              " observations (budget 8.33 ms); Strategy 2 mean " + fmt(s2 * 1e3, 3) + " ms over " +
              std::to_string(s2_n) + " turns (budget 200 ms)"};
}

// ---- 9 -------------------------------------------------------------------------------------------

void pipeline_artifacts(const fs::path& dir) {
  pipeline::RunConfig c;
  c.seed = 9;
  c.traces = 1;
  c.trace_duration_s = 20.0;
  c.training.epochs = 2;
  c.scenarios_per_kind = 1;
  c.clean_runs = 1;
  const std::string comment = "seed=9 config=" + pipeline::config_hash(c);
  fs::create_directories(dir);

  const auto corpus = pipeline::generate_corpus(c);
  const auto model = pipeline::train_model(corpus, c).network;
  lstm::save_model(dir / "model.bin", model);
  const auto templates = pipeline::build_templates(c);
  turns::save_templates(dir / "templates", templates, c.detection.steering_hz, comment);
  c.detection.model_max_abs_error_m = model.metadata.validation_max_abs_error;

  auto detect = [&](const std::string& id, const detector::DetectionReport& report) {
    std::ofstream out(dir / (id + "_verdicts.csv"));
    detector::write_verdicts(out, report.verdicts, comment);
  };
  for (auto kind : c.attack_kinds) {
    const auto kase = pipeline::make_case(c, kind, 0);
    const auto spoofed = attacks::inject(kase.clean, kase.scenario);
    attacks::save_spoofed(dir / kase.scenario.id, spoofed);
    detect(kase.scenario.id, detector::run_detection(spoofed, model, templates, c.detection, c.routing));
  }
  detect("clean", detector::run_detection(pipeline::make_clean_run(c, 0), model, templates, c.detection, nullptr,
                                          c.routing));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome reproducibility() {
  const fs::path root = fs::temp_directory_path() / ("spoofguard_repro_" + std::to_string(::getpid()));
  fs::remove_all(root);
  pipeline_artifacts(root / "a");
  pipeline_artifacts(root / "b");

  std::size_t files = 0, differing = 0, model_files = 0, verdict_files = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root / "a");
    ++files;
    if (rel.filename() == "model.bin") ++model_files;
    if (rel.filename().string().ends_with("_verdicts.csv")) ++verdict_files;
    if (!fs::exists(root / "b" / rel) || slurp(e.path()) != slurp(root / "b" / rel)) ++differing;
  }
  std::size_t files_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "b")) files_b += e.is_regular_file() ? 1 : 0;
  fs::remove_all(root);
  return {differing == 0 && files == files_b && model_files == 1 && verdict_files == 5,
          std::to_string(files) + " artifacts compared (model, templates, 4 spoofed traces, 5 verdict streams), " +
              std::to_string(differing) + " differ"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"threshold arithmetic", threshold_arithmetic},
      {"haversine fidelity", haversine_fidelity},
      {"LSTM gradient correctness", gradient_correctness},
      {"LSTM learnability", learnability},
      {"DTW oracle equivalence", dtw_equivalence},
      {"turn classification", turn_classification},
      {"end-to-end detection", end_to_end_detection},
      {"latency budget", latency_budget},
      {"reproducibility", reproducibility},
  };
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoul(argv[i]));

  std::size_t failed = 0;
  for (std::size_t n = 1; n <= criteria.size(); ++n) {
    if (!selected.empty() && !selected.contains(n)) continue;
    const auto& [name, fn] = criteria[n - 1];
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << n << " " << name << ": " << o.detail << " ["
              << fmt(secs, 3) << " s]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}

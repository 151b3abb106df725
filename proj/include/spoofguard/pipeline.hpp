#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spoofguard/attacks.hpp"
#include "spoofguard/detector.hpp"
#include "spoofguard/lstm.hpp"
#include "spoofguard/simgen.hpp"
#include "spoofguard/turns.hpp"

namespace spoofguard::pipeline {

/// Everything a run needs besides file paths. Loaded from JSON; missing keys keep these defaults.
struct RunConfig {
  std::uint64_t seed = 1;

  // Clean training corpus.
  std::size_t traces = 4;
  double trace_duration_s = 40.0;
  bool include_stop = true;
  simgen::NoiseConfig noise{0.02, 0.05, 0.5, 0.5};

  lstm::TrainingConfig training;

  // Turn templates (training corpus) and the held-out test corpus.
  std::size_t template_right = 19;
  std::size_t template_left = 13;
  std::size_t test_right = 7;
  std::size_t test_left = 6;

  // Scenario batch.
  std::vector<attacks::AttackKind> attack_kinds{attacks::AttackKind::TurnByTurn, attacks::AttackKind::Overshoot,
                                                attacks::AttackKind::WrongTurn, attacks::AttackKind::Stop};
  std::size_t scenarios_per_kind = 10;
  std::size_t clean_runs = 10;
  double scenario_duration_s = 60.0;

  detector::DetectionConfig detection;
  detector::Routing routing = detector::Routing::PerKind;
};

nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);

/// Hex FNV-1a of the canonical JSON form.
std::string config_hash(const RunConfig& config);

/// Independent seed for (stream, index) under the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

/// Clean noisy traces for training the shift predictor.
std::vector<simgen::SensorTrace> generate_corpus(const RunConfig& config);

struct TrainingData {
  ingest::FeatureScaler scaler;
  std::vector<lstm::SupervisedWindow> windows;  // traces concatenated in order
};

TrainingData build_training_data(std::span<const simgen::SensorTrace> traces, std::size_t window);

lstm::TrainingResult train_model(std::span<const simgen::SensorTrace> traces, const RunConfig& config,
                                 const lstm::EpochCallback& on_epoch = {});

std::vector<dtw::LabeledTemplate> build_templates(const RunConfig& config);
std::vector<dtw::LabeledTemplate> build_test_turns(const RunConfig& config);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct ClassificationReport {
  double accuracy = 0.0;
  ClassMetrics left, right;
  std::size_t total = 0;
  std::size_t correct = 0;
};

ClassificationReport evaluate_classifier(std::span<const dtw::LabeledTemplate> templates,
                                         std::span<const dtw::LabeledTemplate> test, const dtw::KnnConfig& knn);

nlohmann::json to_json(const ClassificationReport& report);

/// Clean trace for scenario `index` of `kind` (and the scenario itself). Retries other routes when a
/// route lacks what the attack needs.
struct ScenarioCase {
  simgen::SensorTrace clean;
  attacks::AttackScenario scenario;
};

ScenarioCase make_case(const RunConfig& config, attacks::AttackKind kind, std::size_t index);
simgen::SensorTrace make_clean_run(const RunConfig& config, std::size_t index);
/// Scenario ids are `<kind>-NNN`; clean runs are `clean-NNN`.
std::string clean_run_id(std::size_t index);

struct ReportRow {
  std::string scenario_id;
  std::string kind;
  std::optional<double> onset_s;
  std::optional<double> first_alarm_s;
  std::string strategy;
  std::optional<double> detection_latency_s;
  std::size_t false_alarms = 0;
  bool detected = false;
  double s1_mean_latency_s = 0.0;
  double s2_mean_latency_s = 0.0;
};

ReportRow report_row(const detector::DetectionSummary& summary);
ReportRow report_row(const nlohmann::json& summary);

/// Per-scenario CSV `scenario_id,kind,onset_s,first_alarm_s,strategy,detection_latency_s,false_alarms,detected`.
void write_detection_table(std::ostream& out, std::span<const ReportRow> rows, const std::string& comment);
/// Per-kind aggregate CSV `kind,scenarios,detected,false_alarms,mean_latency_s,max_latency_s`.
void write_kind_table(std::ostream& out, std::span<const ReportRow> rows, const std::string& comment);
/// Difference-vs-time CSV `t,perceived_shift_m,predicted_shift_m,diff_m,threshold_m,alarm` of S1 verdicts.
void write_difference_csv(std::ostream& out, std::span<const detector::DetectionVerdict> verdicts,
                          double threshold_m, const std::string& comment);

}  // namespace spoofguard::pipeline

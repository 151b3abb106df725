#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "spoofguard/error.hpp"
#include "spoofguard/pipeline.hpp"
#include "spoofguard/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spoofguard;

namespace {

// Removes every output created by a command unless the command finishes.
class OutputGuard {
 public:
  ~OutputGuard() {
    if (committed_) return;
    std::error_code ec;
    for (auto it = created_.rbegin(); it != created_.rend(); ++it) fs::remove_all(*it, ec);
  }

  // Replaces any previous artifact at `path`.
  fs::path fresh(const fs::path& path) {
    std::error_code ec;
    fs::remove_all(path, ec);
    created_.push_back(path);
    return path;
  }

  void ensure_dir(const fs::path& dir) {
    if (!fs::exists(dir)) {
      created_.push_back(dir);
      fs::create_directories(dir);
    }
  }

  void commit() { committed_ = true; }

 private:
  std::vector<fs::path> created_;
  bool committed_ = false;
};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "run";

  std::string corpus, model, templates, scenarios, detections;
  std::string trace, scenario;

  std::optional<std::size_t> traces, epochs, per_kind, clean_runs;
  std::optional<double> duration;
  std::string routing;
};

pipeline::RunConfig effective_config(const Options& o) {
  pipeline::RunConfig c;
  const fs::path recorded = fs::path(o.out) / "run.json";
  if (!o.config.empty()) {
    c = pipeline::load_run_config(o.config);
  } else if (fs::exists(recorded)) {
    std::ifstream in(recorded);
    try {
      c = pipeline::run_config_from_json(json::parse(in).at("config"));
    } catch (const json::exception& e) {
      throw FormatError(recorded.string() + ": " + e.what());
    }
  }
  if (o.seed) c.seed = *o.seed;
  if (o.traces) c.traces = *o.traces;
  if (o.duration) c.trace_duration_s = *o.duration;
  if (o.epochs) c.training.epochs = *o.epochs;
  if (o.per_kind) c.scenarios_per_kind = *o.per_kind;
  if (o.clean_runs) c.clean_runs = *o.clean_runs;
  if (!o.routing.empty()) {
    if (o.routing == "per_kind") c.routing = detector::Routing::PerKind;
    else if (o.routing == "all") c.routing = detector::Routing::All;
    else throw ConfigurationError("--routing must be 'per_kind' or 'all'");
  }
  c.training.seed = c.seed;
  return pipeline::run_config_from_json(pipeline::to_json(c));
}

std::string provenance(const pipeline::RunConfig& c) {
  return "seed=" + std::to_string(c.seed) + " config=" + pipeline::config_hash(c);
}

fs::path pick(const std::string& flag, const fs::path& fallback) { return flag.empty() ? fallback : fs::path(flag); }

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInputError("cannot write " + path.string());
  return out;
}

void write_json(const fs::path& path, const json& doc) { open_out(path) << doc.dump(2) << '\n'; }

json stamp(json doc, const pipeline::RunConfig& c) {
  doc["seed"] = c.seed;
  doc["config_hash"] = pipeline::config_hash(c);
  return doc;
}

// Subdirectories in name order.
std::vector<fs::path> subdirs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InvalidInputError("missing directory " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<simgen::SensorTrace> load_corpus(const fs::path& dir) {
  std::vector<simgen::SensorTrace> traces;
  for (const auto& d : subdirs(dir)) {
    if (fs::exists(d / "manifest.json")) traces.push_back(simgen::load_trace(d));
  }
  if (traces.empty()) throw InsufficientDataError("no traces under " + dir.string());
  return traces;
}

void cmd_generate(const pipeline::RunConfig& c, const fs::path& out, OutputGuard& guard) {
  guard.ensure_dir(out);
  write_json(guard.fresh(out / "run.json"),
             stamp({{"config", pipeline::to_json(c)}}, c));
  const fs::path dir = guard.fresh(out / "corpus");
  const auto corpus = pipeline::generate_corpus(c);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    std::string name = std::to_string(i);
    name.insert(0, 3 - std::min<std::size_t>(3, name.size()), '0');
    simgen::save_trace(dir / ("trace_" + name), corpus[i]);
  }
  std::cerr << "generated " << corpus.size() << " traces in " << dir.string() << '\n';
}

void cmd_train(const pipeline::RunConfig& c, const fs::path& corpus_dir, const fs::path& out, OutputGuard& guard) {
  const auto corpus = load_corpus(corpus_dir);
  guard.ensure_dir(out);
  const fs::path dir = guard.fresh(out / "model");
  fs::create_directories(dir);

  const auto result = pipeline::train_model(corpus, c, [&](const lstm::EpochLoss& e) {
    std::cerr << "epoch " << e.epoch << '/' << c.training.epochs << " train_mae=" << format_double(e.train_mae)
              << " val_mae=" << format_double(e.val_mae) << '\n';
  });
  lstm::save_model(dir / "model.bin", result.network);

  auto loss = open_out(dir / "loss.csv");
  loss << "# " << provenance(c) << '\n' << "epoch,train_mae,val_mae\n";
  for (const auto& e : result.history) {
    loss << e.epoch << ',' << format_double(e.train_mae) << ',' << format_double(e.val_mae) << '\n';
  }

  turns::save_templates(dir / "templates", pipeline::build_templates(c), c.detection.steering_hz, provenance(c));
  const auto& m = result.network.metadata;
  std::cerr << "model: val rmse=" << format_double(m.validation_rmse)
            << " max_abs=" << format_double(m.validation_max_abs_error) << " m\n";
}

void cmd_eval(const pipeline::RunConfig& c, const fs::path& corpus_dir, const fs::path& model_dir,
              const fs::path& templates_dir, const fs::path& out, OutputGuard& guard) {
  const auto model = lstm::load_model(model_dir / "model.bin");
  const auto corpus = load_corpus(corpus_dir);
  const auto templates = turns::load_templates(templates_dir);

  std::vector<lstm::SupervisedWindow> windows;
  for (const auto& tr : corpus) {
    auto w = lstm::build_windows(lstm::make_feature_table(ingest::synchronize(tr.channels)), model.scaler,
                                 model.metadata.window);
    windows.insert(windows.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  const auto split = static_cast<std::size_t>(static_cast<double>(windows.size()) * c.training.train_fraction);
  const std::span<const lstm::SupervisedWindow> val(windows.begin() + static_cast<std::ptrdiff_t>(split), windows.end());
  if (val.empty()) throw InsufficientDataError("no validation windows");
  const auto predicted = lstm::predict(model, val);
  std::vector<double> actual;
  for (const auto& w : val) actual.push_back(w.target);
  const auto metrics = lstm::compute_metrics(predicted, actual);

  const auto test = pipeline::build_test_turns(c);
  const auto classifier = pipeline::evaluate_classifier(templates, test, c.detection.knn);

  guard.ensure_dir(out);
  write_json(guard.fresh(out / "metrics.json"),
             stamp({{"lstm",
                     {{"windows", val.size()},
                      {"rmse_m", metrics.rmse},
                      {"max_abs_error_m", metrics.max_abs_error},
                      {"mae_m", metrics.mae}}},
                    {"threshold_m", detector::compute_threshold(model.metadata.validation_max_abs_error,
                                                                c.detection.positioning_error_m)},
                    {"classifier", pipeline::to_json(classifier)}},
                   c));
  auto pred = open_out(guard.fresh(out / "predictions.csv"));
  pred << "# " << provenance(c) << '\n' << "index,actual_shift_m,predicted_shift_m\n";
  for (std::size_t i = 0; i < val.size(); ++i) {
    pred << i << ',' << format_double(actual[i]) << ',' << format_double(predicted[i]) << '\n';
  }
  std::cerr << "eval: rmse=" << format_double(metrics.rmse) << " m, turn accuracy "
            << format_double(classifier.accuracy) << '\n';
}

void cmd_inject(const pipeline::RunConfig& c, const Options& o, const fs::path& out, OutputGuard& guard) {
  guard.ensure_dir(out);
  if (!o.trace.empty() || !o.scenario.empty()) {
    if (o.trace.empty() || o.scenario.empty()) throw InvalidInputError("--trace and --scenario go together");
    const auto clean = simgen::load_trace(o.trace);
    const auto scenario = attacks::load_scenario(o.scenario);
    const auto spoofed = attacks::inject(clean, scenario);
    attacks::save_spoofed(guard.fresh(out / "spoofed"), spoofed);
    std::cerr << "injected " << attacks::to_string(scenario.kind) << " at t=" << format_double(spoofed.onset_s)
              << '\n';
    return;
  }
  const fs::path dir = guard.fresh(out / "scenarios");
  std::size_t n = 0;
  for (auto kind : c.attack_kinds) {
    for (std::size_t i = 0; i < c.scenarios_per_kind; ++i) {
      const auto kase = pipeline::make_case(c, kind, i);
      const fs::path sdir = dir / kase.scenario.id;
      simgen::save_trace(sdir / "clean", kase.clean);
      attacks::save_spoofed(sdir / "spoofed", attacks::inject(kase.clean, kase.scenario));
      ++n;
    }
  }
  for (std::size_t i = 0; i < c.clean_runs; ++i) {
    simgen::save_trace(dir / pipeline::clean_run_id(i) / "clean", pipeline::make_clean_run(c, i));
  }
  std::cerr << "wrote " << n << " scenarios and " << c.clean_runs << " clean runs in " << dir.string() << '\n';
}

void detect_one(const fs::path& source, const std::string& id, const lstm::LstmNetwork& model,
                std::span<const dtw::LabeledTemplate> templates, const pipeline::RunConfig& c,
                const fs::path& out) {
  detector::DetectionReport report;
  if (fs::exists(source / "attack.json")) {
    report = detector::run_detection(attacks::load_spoofed(source), model, templates, c.detection, c.routing);
  } else {
    report = detector::run_detection(simgen::load_trace(source), model, templates, c.detection, nullptr, c.routing);
  }
  report.summary.scenario_id = id;
  fs::create_directories(out);
  auto verdicts = open_out(out / "verdicts.csv");
  detector::write_verdicts(verdicts, report.verdicts, provenance(c));
  write_json(out / "summary.json", stamp(detector::to_json(report.summary), c));
  const auto& s = report.summary;
  std::cerr << id << ": " << (s.first_alarm_s ? "alarm at t=" + format_double(*s.first_alarm_s) : "no alarm")
            << ", false alarms " << s.false_alarms << '\n';
}

void cmd_detect(pipeline::RunConfig c, const Options& o, const fs::path& scenarios_dir, const fs::path& model_dir,
                const fs::path& templates_dir, const fs::path& out, OutputGuard& guard) {
  const auto model = lstm::load_model(model_dir / "model.bin");
  const auto templates = turns::load_templates(templates_dir);
  c.detection.model_max_abs_error_m = model.metadata.validation_max_abs_error;
  guard.ensure_dir(out);
  const fs::path dir = guard.fresh(out / "detections");
  if (!o.trace.empty()) {
    const fs::path source = o.trace;
    if (!fs::is_directory(source)) throw InvalidInputError("missing trace directory " + source.string());
    const std::string id = source.filename().empty() ? source.parent_path().filename().string()
                                                     : source.filename().string();
    detect_one(source, id, model, templates, c, dir / id);
    return;
  }
  for (const auto& sdir : subdirs(scenarios_dir)) {
    const std::string id = sdir.filename().string();
    const fs::path source = fs::exists(sdir / "spoofed") ? sdir / "spoofed" : sdir / "clean";
    detect_one(source, id, model, templates, c, dir / id);
  }
}

void cmd_report(const pipeline::RunConfig& c, const fs::path& detections_dir, const fs::path& out,
                OutputGuard& guard) {
  std::vector<pipeline::ReportRow> rows;
  std::vector<std::pair<std::string, std::vector<detector::DetectionVerdict>>> diffs;
  std::vector<double> thresholds;
  for (const auto& d : subdirs(detections_dir)) {
    std::ifstream sin(d / "summary.json");
    if (!sin) throw InvalidInputError("missing " + (d / "summary.json").string());
    json summary;
    try {
      summary = json::parse(sin);
    } catch (const json::parse_error& e) {
      throw FormatError((d / "summary.json").string() + ": " + e.what());
    }
    rows.push_back(pipeline::report_row(summary));
    std::ifstream vin(d / "verdicts.csv");
    if (!vin) throw InvalidInputError("missing " + (d / "verdicts.csv").string());
    diffs.emplace_back(d.filename().string(), detector::read_verdicts(vin, (d / "verdicts.csv").string()));
    thresholds.push_back(summary.value("threshold_m", 0.0));
  }
  if (rows.empty()) throw InsufficientDataError("no detections under " + detections_dir.string());

  guard.ensure_dir(out);
  const fs::path dir = guard.fresh(out / "report");
  fs::create_directories(dir / "differences");
  auto table = open_out(dir / "detection_table.csv");
  pipeline::write_detection_table(table, rows, provenance(c));
  auto kinds = open_out(dir / "kind_table.csv");
  pipeline::write_kind_table(kinds, rows, provenance(c));
  for (std::size_t i = 0; i < diffs.size(); ++i) {
    auto f = open_out(dir / "differences" / (diffs[i].first + ".csv"));
    pipeline::write_difference_csv(f, diffs[i].second, thresholds[i], provenance(c));
  }

  std::size_t detected = 0, attacks = 0, false_alarms = 0;
  for (const auto& r : rows) {
    false_alarms += r.false_alarms;
    if (r.kind == "clean") continue;
    ++attacks;
    if (r.detected) ++detected;
  }
  std::cout << "detected " << detected << '/' << attacks << " attacks, " << false_alarms
            << " false alarms over " << rows.size() << " runs\n";
}

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Run seed (overrides the config)");
  cmd->add_option("--out", o.out, "Output directory")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GNSS spoofing detection toolkit"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("generate", "Simulate the clean training corpus");
  auto* train = app.add_subcommand("train", "Train the shift predictor and build turn templates");
  auto* eval = app.add_subcommand("eval", "Evaluate the model and the turn classifier");
  auto* inject = app.add_subcommand("inject", "Build spoofed scenarios");
  auto* detect = app.add_subcommand("detect", "Run the detector over scenarios");
  auto* report = app.add_subcommand("report", "Aggregate detections into tables");
  auto* pipe = app.add_subcommand("pipeline", "generate, train, eval, inject, detect and report in one go");
  for (auto* cmd : {gen, train, eval, inject, detect, report, pipe}) add_common(cmd, o);

  for (auto* cmd : {gen, pipe}) {
    cmd->add_option("--traces", o.traces, "Number of corpus traces");
    cmd->add_option("--duration", o.duration, "Corpus trace duration (s)");
  }
  for (auto* cmd : {train, eval}) cmd->add_option("--corpus", o.corpus, "Corpus directory [out/corpus]");
  for (auto* cmd : {train, pipe}) cmd->add_option("--epochs", o.epochs, "Training epochs");
  for (auto* cmd : {eval, detect}) {
    cmd->add_option("--model", o.model, "Model directory [out/model]");
    cmd->add_option("--templates", o.templates, "Template directory [model/templates]");
  }
  for (auto* cmd : {inject, pipe}) {
    cmd->add_option("--per-kind", o.per_kind, "Scenarios per attack kind");
    cmd->add_option("--clean-runs", o.clean_runs, "Clean runs in the batch");
  }
  inject->add_option("--trace", o.trace, "Clean trace directory (single injection)");
  inject->add_option("--scenario", o.scenario, "Scenario JSON (single injection)");
  detect->add_option("--scenarios", o.scenarios, "Scenario batch directory [out/scenarios]");
  detect->add_option("--trace", o.trace, "Single clean or spoofed trace directory");
  for (auto* cmd : {detect, pipe}) cmd->add_option("--routing", o.routing, "Strategy routing: per_kind or all");
  report->add_option("--detections", o.detections, "Detection directory [out/detections]");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "spoofguard: " << e.what() << '\n';
    return 2;
  }

  OutputGuard guard;
  try {
    const auto c = effective_config(o);
    const fs::path out = o.out;
    const fs::path model_dir = pick(o.model, out / "model");
    const fs::path templates_dir = pick(o.templates, model_dir / "templates");
    if (gen->parsed()) {
      cmd_generate(c, out, guard);
    } else if (train->parsed()) {
      cmd_train(c, pick(o.corpus, out / "corpus"), out, guard);
    } else if (eval->parsed()) {
      cmd_eval(c, pick(o.corpus, out / "corpus"), model_dir, templates_dir, out, guard);
    } else if (inject->parsed()) {
      cmd_inject(c, o, out, guard);
    } else if (detect->parsed()) {
      cmd_detect(c, o, pick(o.scenarios, out / "scenarios"), model_dir, templates_dir, out, guard);
    } else if (report->parsed()) {
      cmd_report(c, pick(o.detections, out / "detections"), out, guard);
    } else {
      cmd_generate(c, out, guard);
      cmd_train(c, out / "corpus", out, guard);
      cmd_eval(c, out / "corpus", out / "model", out / "model" / "templates", out, guard);
      cmd_inject(c, o, out, guard);
      cmd_detect(c, o, out / "scenarios", out / "model", out / "model" / "templates", out, guard);
      cmd_report(c, out / "detections", out, guard);
    }
    guard.commit();
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "spoofguard: error: " << msg << '\n';
    return 1;
  }
  return 0;
}

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "spoofguard/detector.hpp"
#include "spoofguard/error.hpp"
#include "spoofguard/util.hpp"

using namespace spoofguard;
using namespace spoofguard::detector;
using simgen::SegmentKind;

namespace {

// A network whose prediction is always `shift_m`: zero weights, head bias set in scaled space.
lstm::LstmNetwork constant_model(double shift_m, std::size_t window = 4) {
  lstm::LstmNetwork net(lstm::NetworkDims{4, {2}});
  net.scaler = ingest::FeatureScaler({0, 0, -100, 0}, {1, 100, 100, 30});
  net.head_bias() = net.scaler.apply(lstm::kShiftFeature, shift_m);
  net.metadata.window = window;
  return net;
}

std::vector<ingest::AlignedFrame> straight_frames(double speed, double seconds, double hz = 120.0) {
  std::vector<ingest::AlignedFrame> out;
  const auto start = geo::GeoPoint::from_degrees(37.0, -122.0);
  for (int k = 0; k <= static_cast<int>(seconds * hz); ++k) {
    const double t = k / hz;
    const auto p = geo::destination(start, 0.3, speed * t);
    out.push_back({t, p.lat_deg(), p.lon_deg(), speed, 20.0, 0.0});
  }
  return out;
}

turns::TurnEvent event(double a, double b, TurnLabel label, turns::EventSource src, double detected) {
  return {a, b, label, src, 0.0, {}, detected};
}

}  // namespace

TEST(Detector, ThresholdArithmetic) {
  EXPECT_EQ(compute_threshold(0.0446, 0.1), 0.0446 + 0.1);
  EXPECT_NEAR(compute_threshold(0.0446, 0.1), 0.1446, 1e-15);
  EXPECT_EQ(compute_threshold(0.0, 0.0), 0.0);
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const double a = rng.uniform(0, 1), b = rng.uniform(0, 1);
    EXPECT_EQ(compute_threshold(a, b), a + b);
  }
  EXPECT_THROW(compute_threshold(-0.1, 0.1), InvalidInputError);
  EXPECT_THROW(compute_threshold(0.1, -1e-9), InvalidInputError);
}

TEST(Detector, MotionStateBoundary) {
  EXPECT_EQ(motion_state(0.0, 0.5), MotionState::Standstill);
  EXPECT_EQ(motion_state(10.0, 0.5), MotionState::InMotion);
  EXPECT_EQ(motion_state(0.5, 0.5), MotionState::Standstill);
}

TEST(Detector, ShiftAlarmMonotoneInThreshold) {
  EXPECT_TRUE(shift_alarm(0.3, 0.1, 0.1446));
  EXPECT_FALSE(shift_alarm(0.11, 0.1, 0.1446));
  Rng rng(8);
  for (int i = 0; i < 1000; ++i) {
    const double p = rng.uniform(0, 2), q = rng.uniform(0, 2), hi = rng.uniform(0, 1), lo = hi * rng.unit();
    if (shift_alarm(p, q, hi)) ASSERT_TRUE(shift_alarm(p, q, lo));
  }
}

TEST(Detector, CleanStreamNoAlarmAndWarmup) {
  const double speed = 10.0;
  const auto model = constant_model(speed / 120.0);
  DetectionConfig cfg;
  Strategy1Monitor mon(model, cfg);
  const auto frames = straight_frames(speed, 5.0);
  std::size_t verdicts = 0;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const auto v = mon.step(frames[k]);
    if (k <= model.metadata.window) {
      EXPECT_FALSE(v.has_value()) << k;
      continue;
    }
    ASSERT_TRUE(v.has_value());
    ++verdicts;
    EXPECT_FALSE(v->alarm) << k;
    EXPECT_NEAR(v->diff_m, 0.0, 1e-6);
  }
  EXPECT_EQ(verdicts, frames.size() - model.metadata.window - 1);
}

TEST(Detector, ShiftDifferenceAboveThresholdAlarms) {
  const auto model = constant_model(10.0 / 120.0);
  DetectionConfig cfg;
  cfg.model_max_abs_error_m = 0.0446;
  auto frames = straight_frames(10.0, 2.0);
  // Displace one frame by 0.2 m beyond its neighbours: the step into it grows by 0.2 m.
  const auto moved = geo::destination(geo::GeoPoint::from_degrees(frames[100].lat_deg, frames[100].lon_deg), 0.3, 0.2);
  frames[100].lat_deg = moved.lat_deg();
  frames[100].lon_deg = moved.lon_deg();
  Strategy1Monitor mon(model, cfg);
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const auto v = mon.step(frames[k]);
    if (!v) continue;
    if (k == 100) {
      EXPECT_TRUE(v->alarm);
      EXPECT_EQ(v->strategy, Strategy::S1Shift);
      EXPECT_NEAR(v->diff_m, 0.2, 1e-6);
    } else if (k == 101) {
      // The step back out measures |0.0833 - 0.2| m, within the threshold of the prediction.
      EXPECT_FALSE(v->alarm);
      EXPECT_NEAR(v->diff_m, 0.2 - 2.0 * 10.0 / 120.0, 1e-6);
    } else {
      EXPECT_FALSE(v->alarm) << k;
    }
  }
  DetectionConfig small = cfg;
  small.model_max_abs_error_m = 0.0;
  small.positioning_error_m = 0.01;
  EXPECT_LT(small.threshold(), cfg.threshold());
}

TEST(Detector, FrozenGnssWhileMovingRaisesMotionAlarm) {
  const auto model = constant_model(10.0 / 120.0);
  DetectionConfig cfg;
  auto frames = straight_frames(10.0, 6.0);
  const std::size_t freeze = 240;
  for (std::size_t k = freeze; k < frames.size(); ++k) {
    frames[k].lat_deg = frames[freeze].lat_deg;
    frames[k].lon_deg = frames[freeze].lon_deg;
  }
  Strategy1Monitor mon(model, cfg);
  std::optional<double> first_motion;
  for (const auto& f : frames) {
    const auto v = mon.step(f);
    if (v && v->alarm && v->strategy == Strategy::S1Motion && !first_motion) first_motion = v->t;
  }
  ASSERT_TRUE(first_motion.has_value());
  const double since = *first_motion - frames[freeze].t;
  EXPECT_GE(since, cfg.motion_persistence_s);
  EXPECT_LE(since, cfg.motion_persistence_s + cfg.motion_baseline_s + 0.01);
}

TEST(Detector, ModelMismatchRejected) {
  lstm::LstmNetwork wrong(lstm::NetworkDims{3, {2}});
  wrong.metadata.window = 4;
  DetectionConfig cfg;
  EXPECT_THROW(Strategy1Monitor(wrong, cfg), ConfigurationError);
  auto unscaled = constant_model(0.1);
  unscaled.scaler = {};
  EXPECT_THROW(Strategy1Monitor(unscaled, cfg), ConfigurationError);
}

TEST(Detector, Strategy2Rules) {
  using turns::EventSource;
  const auto sr = event(10, 15, TurnLabel::Right, EventSource::Steering, 15.2);
  const auto gr = event(10.4, 15.8, TurnLabel::Right, EventSource::Gnss, 13.0);
  const auto gl = event(10.4, 15.8, TurnLabel::Left, EventSource::Gnss, 13.0);
  const auto far = event(40, 45, TurnLabel::Left, EventSource::Gnss, 43.0);

  auto v = strategy2_step(std::vector{sr}, std::vector{gr}, 2.0);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_FALSE(v[0].alarm);

  v = strategy2_step(std::vector{sr}, std::vector{gl}, 2.0);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_TRUE(v[0].alarm);
  EXPECT_EQ(v[0].steering_label, TurnLabel::Right);
  EXPECT_EQ(v[0].gnss_label, TurnLabel::Left);
  EXPECT_DOUBLE_EQ(v[0].t, 15.2);

  v = strategy2_step(std::vector{sr}, std::vector<turns::TurnEvent>{}, 2.0);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_TRUE(v[0].alarm);
  EXPECT_DOUBLE_EQ(v[0].t, 17.0);

  v = strategy2_step(std::vector<turns::TurnEvent>{}, std::vector{far}, 2.0);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_TRUE(v[0].alarm);
  EXPECT_EQ(v[0].gnss_label, TurnLabel::Left);
  EXPECT_DOUBLE_EQ(v[0].t, 47.0);

  // Tolerance bridges a small gap between the sources.
  const auto late = event(16.5, 20, TurnLabel::Right, EventSource::Gnss, 18.0);
  v = strategy2_step(std::vector{sr}, std::vector{late}, 2.0);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_FALSE(v[0].alarm);
}

TEST(Detector, LatencyStats) {
  const auto st = latency_stats({4, 1, 3, 2});
  EXPECT_EQ(st.count, 4u);
  EXPECT_DOUBLE_EQ(st.mean_s, 2.5);
  EXPECT_DOUBLE_EQ(st.p50_s, 2);
  EXPECT_DOUBLE_EQ(st.max_s, 4);
}

namespace {

struct Fixture {
  lstm::LstmNetwork model;
  std::vector<dtw::LabeledTemplate> templates;
  DetectionConfig config;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    simgen::NoiseConfig noise{0.02, 0.05, 0.5, 0.5};
    std::vector<lstm::FeatureTable> tables;
    for (std::uint64_t s = 0; s < 2; ++s) {
      auto route = simgen::random_route(500 + s, 30.0);
      route.noise = noise;
      const auto tr = simgen::generate_trace(route);
      tables.push_back(lstm::make_feature_table(ingest::synchronize(tr.channels)));
    }
    const auto scaler = lstm::fit_feature_scaler(tables);
    std::vector<lstm::SupervisedWindow> data;
    for (const auto& t : tables) {
      auto w = lstm::build_windows(t, scaler, 6);
      data.insert(data.end(), w.begin(), w.end());
    }
    lstm::TrainingConfig tc;
    tc.epochs = 4;
    tc.window = 6;
    tc.dims = lstm::NetworkDims{4, {12, 8}};
    tc.seed = 2;
    Fixture f{lstm::train(data, scaler, tc).network, {}, {}};
    turns::CorpusConfig cc;
    cc.seed = 1;
    f.templates = turns::make_turn_corpus(cc);
    f.config.model_max_abs_error_m = f.model.metadata.validation_max_abs_error;
    return f;
  }();
  return f;
}

simgen::SensorTrace noisy_route(std::uint64_t seed) {
  auto route = simgen::random_route(seed, 50.0);
  route.noise = {0.02, 0.05, 0.5, 0.5};
  return simgen::generate_trace(route);
}

}  // namespace

TEST(Detector, CleanTraceHasNoFalseAlarms) {
  const auto& f = fixture();
  for (std::uint64_t seed = 900; seed < 903; ++seed) {
    const auto report = run_detection(noisy_route(seed), f.model, f.templates, f.config);
    EXPECT_EQ(report.summary.false_alarms, 0u) << "seed " << seed;
    EXPECT_FALSE(report.summary.first_alarm_s.has_value());
    EXPECT_GT(report.summary.s1_latency.count, 1000u);
    EXPECT_TRUE(std::is_sorted(report.verdicts.begin(), report.verdicts.end(),
                               [](const auto& a, const auto& b) { return a.t < b.t; }));
  }
}

TEST(Detector, AttacksDetectedAfterOnset) {
  const auto& f = fixture();
  const auto clean = noisy_route(77);
  for (auto kind : {attacks::AttackKind::TurnByTurn, attacks::AttackKind::Overshoot,
                    attacks::AttackKind::WrongTurn, attacks::AttackKind::Stop}) {
    const auto spoofed = attacks::inject(clean, attacks::random_scenario(kind, clean, 3));
    const auto report = run_detection(spoofed, f.model, f.templates, f.config, Routing::PerKind);
    const auto& s = report.summary;
    ASSERT_TRUE(s.first_alarm_s.has_value()) << attacks::to_string(kind);
    EXPECT_GE(*s.first_alarm_s, spoofed.onset_s);
    EXPECT_EQ(s.false_alarms, 0u);
    if (kind == attacks::AttackKind::WrongTurn) {
      EXPECT_EQ(*s.first_alarm_strategy, Strategy::S2Turn);
      EXPECT_EQ(s.s1_latency.count, 0u);
    } else {
      EXPECT_NE(*s.first_alarm_strategy, Strategy::S2Turn) << attacks::to_string(kind);
      EXPECT_LE(*s.detection_latency_s, 2.0) << attacks::to_string(kind);
    }
    if (kind == attacks::AttackKind::TurnByTurn) {
      EXPECT_EQ(*s.first_alarm_strategy, Strategy::S1Shift);
      EXPECT_EQ(s.s2_latency.count, 0u);
    }
  }
}

TEST(Detector, VerdictCsvIsDeterministic) {
  const auto& f = fixture();
  const auto clean = noisy_route(78);
  const auto spoofed = attacks::inject(clean, attacks::random_scenario(attacks::AttackKind::Overshoot, clean, 1));
  std::ostringstream a, b;
  write_verdicts(a, run_detection(spoofed, f.model, f.templates, f.config).verdicts);
  write_verdicts(b, run_detection(spoofed, f.model, f.templates, f.config).verdicts);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().substr(0, a.str().find('\n')), "t,alarm,strategy,perceived_shift_m,predicted_shift_m,diff_m,latency_s");
}

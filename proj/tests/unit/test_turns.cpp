#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "spoofguard/error.hpp"
#include "spoofguard/turns.hpp"

using namespace spoofguard;
using namespace spoofguard::turns;
using simgen::Segment;
using simgen::SegmentKind;

namespace {

std::vector<ingest::Sample> series_at_5hz(std::vector<double> values) {
  std::vector<ingest::Sample> out;
  for (std::size_t k = 0; k < values.size(); ++k) out.push_back({k * 0.2, values[k]});
  return out;
}

std::vector<ingest::Sample> constant_speed(double v, double duration) {
  return {{0.0, v}, {duration, v}};
}

simgen::SensorTrace drive(std::vector<Segment> segments, double speed, simgen::NoiseConfig noise = {},
                          std::uint64_t seed = 1) {
  simgen::RouteScript s;
  s.segments = std::move(segments);
  s.initial_speed_mps = speed;
  s.noise = noise;
  s.seed = seed;
  return simgen::generate_trace(s);
}

const std::vector<dtw::LabeledTemplate>& corpus() {
  static const auto templates = [] {
    CorpusConfig c;
    c.seed = 5;
    return make_turn_corpus(c);
  }();
  return templates;
}

}  // namespace

TEST(Turns, FlatSteeringHasNoCandidates) {
  EXPECT_TRUE(segment_turns(series_at_5hz(std::vector<double>(100, 0.0))).empty());
}

TEST(Turns, HysteresisBoundaries) {
  // 0 0 20 40 50 40 20 10 0: enter at index 3, start backs up to 2, closes at index 7.
  std::vector<double> v{0, 0, 20, 40, 50, 40, 20, 10, 0, 0};
  const auto w = segment_turns(series_at_5hz(v), {30, 15, 0.5, 15});
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0].begin, 2u);
  EXPECT_EQ(w[0].end, 7u);
  EXPECT_DOUBLE_EQ(w[0].closed_at_s, 7 * 0.2);
}

TEST(Turns, DurationFilter) {
  std::vector<double> shortv{0, 40, 0};
  EXPECT_TRUE(segment_turns(series_at_5hz(shortv)).empty());
  EXPECT_TRUE(segment_turns(series_at_5hz(std::vector<double>(100, 45.0))).empty());
  EXPECT_THROW(segment_turns(series_at_5hz(shortv), {10, 20, 1, 15}), InvalidInputError);
}

TEST(Turns, SimulatedLobeGivesOneCandidate) {
  const auto tr = drive({{SegmentKind::Straight, 8, 4}, {SegmentKind::RightTurn, 8, 0, 0, 90, 25},
                         {SegmentKind::Straight, 8, 4}},
                        8);
  const auto steering = steering_at(tr.channel(ingest::kSteeringDeg), 5.0);
  const auto w = segment_turns(steering);
  ASSERT_EQ(w.size(), 1u);
  ASSERT_EQ(tr.turns.size(), 1u);
  EXPECT_LE(w[0].start_s, tr.turns[0].end_s);
  EXPECT_GE(w[0].end_s, tr.turns[0].start_s);
  EXPECT_GT(window_values(steering, w[0]).size(), 5u);
}

TEST(Turns, TwoSeparatedLobes) {
  const auto tr = drive({{SegmentKind::Straight, 8, 3}, {SegmentKind::RightTurn, 8, 0, 0, 90, 25},
                         {SegmentKind::Straight, 8, 10}, {SegmentKind::LeftTurn, 8, 0, 0, 90, 25},
                         {SegmentKind::Straight, 8, 3}},
                        8);
  const auto w = segment_turns(steering_at(tr.channel(ingest::kSteeringDeg), 5.0));
  ASSERT_EQ(w.size(), 2u);
  EXPECT_LT(w[0].end, w[1].begin);
}

TEST(Turns, CorpusShapeAndLabels) {
  const auto& c = corpus();
  ASSERT_EQ(c.size(), 32u);
  std::size_t right = 0;
  for (const auto& t : c) {
    if (t.label == TurnLabel::Right) {
      ++right;
      EXPECT_GT(*std::max_element(t.series.begin(), t.series.end()), 30.0);
    } else {
      EXPECT_EQ(t.label, TurnLabel::Left);
      EXPECT_LT(*std::min_element(t.series.begin(), t.series.end()), -30.0);
    }
  }
  EXPECT_EQ(right, 19u);
}

TEST(Turns, ClassifyWithSpeedGating) {
  const auto tr = drive({{SegmentKind::Straight, 8, 4}, {SegmentKind::RightTurn, 8, 0, 0, 90, 25},
                         {SegmentKind::Straight, 8, 4}},
                        8, {0.0, 0.0, 0.0, 0.5}, 9);
  const auto steering = steering_at(tr.channel(ingest::kSteeringDeg), 5.0);
  const auto w = segment_turns(steering);
  ASSERT_EQ(w.size(), 1u);
  const auto moving = constant_speed(8.0, 100.0);
  const auto parked = constant_speed(0.0, 100.0);
  const auto ev = classify_turn(steering, w[0], corpus(), moving, 0.5);
  EXPECT_EQ(ev.label, TurnLabel::Right);
  EXPECT_EQ(ev.source, EventSource::Steering);
  EXPECT_EQ(ev.neighbor_distances.size(), 3u);
  EXPECT_EQ(classify_turn(steering, w[0], corpus(), parked, 0.5).label, TurnLabel::NoTurn);
  EXPECT_TRUE(steering_turns(steering, corpus(), parked, 0.5).empty());

  auto mirrored = steering;
  for (auto& s : mirrored) s.value = -s.value;
  const auto wm = segment_turns(mirrored);
  ASSERT_EQ(wm.size(), 1u);
  EXPECT_EQ(wm[0].begin, w[0].begin);
  EXPECT_EQ(wm[0].end, w[0].end);
  EXPECT_EQ(classify_turn(mirrored, wm[0], corpus(), moving, 0.5).label, TurnLabel::Left);
}

TEST(Turns, MirroringSwapsLabelsWithSymmetricCorpus) {
  std::vector<dtw::LabeledTemplate> sym;
  for (const auto& t : corpus()) {
    sym.push_back(t);
    dtw::LabeledTemplate m{t.series, mirrored(t.label)};
    for (auto& v : m.series) v = -v;
    sym.push_back(std::move(m));
  }
  const auto tr = drive({{SegmentKind::Straight, 8, 3}, {SegmentKind::LeftTurn, 7, 0, 0, 85, 22},
                         {SegmentKind::Straight, 8, 12}, {SegmentKind::RightTurn, 8, 0, 0, 95, 28},
                         {SegmentKind::Straight, 8, 3}},
                        8, {0.0, 0.0, 0.0, 0.5}, 4);
  const auto steering = steering_at(tr.channel(ingest::kSteeringDeg), 5.0);
  auto neg = steering;
  for (auto& s : neg) s.value = -s.value;
  const auto speed = constant_speed(8.0, 100.0);
  const auto a = steering_turns(steering, sym, speed, 0.5);
  const auto b = steering_turns(neg, sym, speed, 0.5);
  ASSERT_EQ(a.size(), 2u);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(a[0].label, TurnLabel::Left);
  EXPECT_EQ(a[1].label, TurnLabel::Right);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(b[i].label, mirrored(a[i].label));
    EXPECT_EQ(b[i].start_s, a[i].start_s);
    EXPECT_EQ(b[i].end_s, a[i].end_s);
    EXPECT_EQ(b[i].neighbor_distances, a[i].neighbor_distances);
  }
}

TEST(Turns, GroundTruthTurnsRecoveredFromSteering) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    auto script = simgen::random_route(seed, 70.0, true);
    const auto tr = simgen::generate_trace(script);
    const auto steering = steering_at(tr.channel(ingest::kSteeringDeg), 5.0);
    const auto events = steering_turns(steering, corpus(), tr.channel(ingest::kSpeed).samples, 0.5);
    std::size_t expected = 0;
    for (const auto& gt : tr.turns) {
      if (std::abs(gt.angle_rad) < 60.0 * geo::kDegToRad || gt.speed_mps <= 0.5) continue;
      ++expected;
      std::size_t hits = 0;
      for (const auto& ev : events) {
        if (ev.start_s <= gt.end_s && gt.start_s <= ev.end_s) {
          ++hits;
          EXPECT_EQ(ev.label, gt.label);
        }
      }
      EXPECT_EQ(hits, 1u) << "seed " << seed << " turn at " << gt.start_s;
    }
    EXPECT_EQ(events.size(), expected);
  }
}

TEST(Turns, GnssStraightTrackHasNoEvents) {
  const auto tr = drive({{SegmentKind::Straight, 10, 30}}, 10, {0.02, 0, 0, 0}, 3);
  EXPECT_TRUE(infer_gnss_turns(tr.gnss_track()).empty());
}

TEST(Turns, GnssRightArc) {
  for (double noise : {0.0, 0.02}) {
    const auto tr = drive({{SegmentKind::Straight, 8, 4}, {SegmentKind::RightTurn, 8, 0, 0, 90, 25},
                           {SegmentKind::Straight, 8, 4}},
                          8, {noise, 0, 0, 0}, 2);
    const auto ev = infer_gnss_turns(tr.gnss_track());
    ASSERT_EQ(ev.size(), 1u) << "noise " << noise;
    EXPECT_EQ(ev[0].label, TurnLabel::Right);
    EXPECT_EQ(ev[0].source, EventSource::Gnss);
    EXPECT_LE(ev[0].start_s, tr.turns[0].end_s);
    EXPECT_GE(ev[0].end_s, tr.turns[0].start_s);
    EXPECT_NEAR(ev[0].evidence, 90.0, 5.0);
    EXPECT_GE(ev[0].detected_at_s, ev[0].start_s);
    EXPECT_LE(ev[0].detected_at_s, ev[0].end_s);
  }
}

TEST(Turns, GnssSameDirectionTurnsStaySeparate) {
  const auto tr = drive({{SegmentKind::Straight, 8, 3}, {SegmentKind::LeftTurn, 8, 0, 0, 90, 25},
                         {SegmentKind::Straight, 8, 6}, {SegmentKind::LeftTurn, 8, 0, 0, 90, 25},
                         {SegmentKind::Straight, 8, 3}},
                        8, {0.02, 0, 0, 0}, 6);
  const auto ev = infer_gnss_turns(tr.gnss_track());
  ASSERT_EQ(ev.size(), 2u);
  EXPECT_EQ(ev[0].label, TurnLabel::Left);
  EXPECT_EQ(ev[1].label, TurnLabel::Left);
  EXPECT_LT(ev[0].end_s, ev[1].start_s);
}

TEST(Turns, GnssNeedsTwoPoints) {
  std::vector<geo::TimedPoint> one{{0.0, geo::GeoPoint{}}};
  EXPECT_THROW(infer_gnss_turns(one), InsufficientDataError);
}

TEST(Turns, TemplatesRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "spoofguard_templates_test";
  std::filesystem::remove_all(dir);
  save_templates(dir, corpus(), 5.0);
  const auto back = load_templates(dir);
  ASSERT_EQ(back.size(), corpus().size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].label, corpus()[i].label);
    EXPECT_EQ(back[i].series, corpus()[i].series);
  }
  std::filesystem::remove_all(dir);
}

TEST(Turns, ReportFormat) {
  std::vector<TurnEvent> ev{{1.0, 5.5, TurnLabel::Right, EventSource::Gnss, 88.5, {}, 3.0}};
  std::ostringstream out;
  write_turn_report(out, ev);
  EXPECT_EQ(out.str(), "start_s,end_s,label,source,evidence\n1,5.5,Right,gnss,88.5\n");
}

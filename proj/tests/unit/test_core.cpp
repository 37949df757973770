#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "montage/core.hpp"
#include "oracles.hpp"

using namespace montage;

namespace {

Clip clip(const std::string& src, double a, double b) { return Clip{src, a, b, "", ""}; }

MediaRef music(double d) { return MediaRef{"music", "", d, MediaKind::audio}; }

std::vector<Clip> random_clips(std::mt19937_64& rng, std::size_t n, std::size_t n_sources) {
  std::uniform_real_distribution<double> start(0.0, 40.0), len(0.25, 6.0);
  std::uniform_int_distribution<std::size_t> src(0, n_sources - 1);
  std::vector<Clip> out;
  for (std::size_t i = 0; i < n; ++i) {
    double a = std::round(start(rng) * 4) / 4;  // quarter-second grid makes touching likely
    double l = std::round(len(rng) * 4) / 4;
    out.push_back(clip("v" + std::to_string(src(rng)), a, a + l));
  }
  return out;
}

}  // namespace

TEST(TimelineDuration, EmptyIsZero) { EXPECT_EQ(timeline_duration(Timeline{}), 0.0); }

TEST(TimelineDuration, TwoClips) {
  Timeline t{{clip("v", 0, 2), clip("v", 5, 7)}, "m"};
  EXPECT_DOUBLE_EQ(timeline_duration(t), 4.0);
}

TEST(TimelineDuration, MatchesPerClipLoop) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Timeline t{random_clips(rng, 50, 3), "m"};
    EXPECT_NEAR(timeline_duration(t), oracle::duration_sum(t.clips), 1e-9);
  }
}

TEST(TimelineDuration, AdditiveUnderSplit) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    auto clips = random_clips(rng, 10, 2);
    Timeline t{clips, "m"};
    const double before = timeline_duration(t);
    std::uniform_int_distribution<std::size_t> pick(0, clips.size() - 1);
    auto i = pick(rng);
    const double mid = (clips[i].t_in + clips[i].t_out) / 2;
    Clip tail = clips[i];
    tail.t_in = mid;
    t.clips[i].t_out = mid;
    t.clips.insert(t.clips.begin() + static_cast<long>(i) + 1, tail);
    EXPECT_NEAR(timeline_duration(t), before, 1e-9);
  }
}

TEST(ValidateTimeline, TouchingIntervalsAreDisjoint) {
  Timeline t{{clip("v", 0, 2), clip("v", 2, 4)}, "m"};
  EXPECT_TRUE(validate_timeline(t, music(4.0), 0.05).ok());
}

TEST(ValidateTimeline, OverlapReportedOnPair) {
  Timeline t{{clip("v", 0, 3), clip("v", 2, 4)}, "m"};
  auto r = validate_timeline(t, music(5.0), 0.05);
  auto pairs = r.overlap_pairs();
  ASSERT_EQ(pairs.size(), 1u);
  // Clips 1 and 2 in one-based terms.
  EXPECT_EQ(pairs[0], (std::pair<std::size_t, std::size_t>{0, 1}));
}

TEST(ValidateTimeline, DurationMismatch) {
  Timeline t{{clip("v", 0, 2)}, "m"};
  auto r = validate_timeline(t, music(2.2), 0.05);
  ASSERT_EQ(r.violations.size(), 1u);
  EXPECT_EQ(r.violations[0].kind, ViolationKind::duration_mismatch);
  EXPECT_TRUE(validate_timeline(t, music(2.04), 0.05).ok());
}

TEST(ValidateTimeline, InvalidClipAndSourceBound) {
  Timeline t{{clip("v", 3, 2), clip("w", 0, 5)}, "m"};
  MediaRef w{"w", "", 4.0, MediaKind::video};
  auto r = validate_timeline(t, music(4.0), 10.0, std::span<const MediaRef>(&w, 1));
  long invalid = std::count_if(r.violations.begin(), r.violations.end(),
                               [](const auto& v) { return v.kind == ViolationKind::invalid_clip; });
  EXPECT_EQ(invalid, 2);
}

TEST(ValidateTimeline, DifferentSourcesNeverOverlap) {
  Timeline t{{clip("a", 0, 3), clip("b", 0, 3)}, "m"};
  EXPECT_TRUE(validate_timeline(t, music(6.0)).ok());
}

TEST(ValidateTimeline, MatchesPairwiseOracle) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    std::uniform_int_distribution<std::size_t> n(1, 20);
    Timeline t{random_clips(rng, n(rng), 3), "m"};
    auto got = validate_timeline(t, music(timeline_duration(t)), 0.05).overlap_pairs();
    std::set<std::pair<std::size_t, std::size_t>> got_set(got.begin(), got.end());
    ASSERT_EQ(got_set, oracle::overlap_pairs(t.clips)) << "trial " << trial;
  }
}

TEST(ValidateTimeline, InvariantUnderReordering) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 200; ++trial) {
    auto clips = random_clips(rng, 12, 2);
    std::vector<std::size_t> perm(clips.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Clip> shuffled;
    for (auto p : perm) shuffled.push_back(clips[p]);
    auto a = validate_timeline({clips, "m"}, music(1.0), 0.05);
    auto b = validate_timeline({shuffled, "m"}, music(1.0), 0.05);
    // Map the shuffled pairs back to original indices.
    std::set<std::pair<std::size_t, std::size_t>> pa, pb;
    for (auto [i, j] : a.overlap_pairs()) pa.insert({i, j});
    for (auto [i, j] : b.overlap_pairs()) pb.insert({std::min(perm[i], perm[j]), std::max(perm[i], perm[j])});
    ASSERT_EQ(pa, pb);
    ASSERT_EQ(a.violations.size(), b.violations.size());
  }
}

TEST(ValidatedTimeline, RequireThrowsOnViolation) {
  Timeline bad{{clip("v", 0, 3), clip("v", 2, 4)}, "m"};
  EXPECT_THROW(ValidatedTimeline::require(bad, music(5.0)), UserError);
  Timeline good{{clip("v", 0, 2), clip("v", 2, 4)}, "m"};
  EXPECT_NO_THROW(ValidatedTimeline::require(good, music(4.0)));
}

TEST(ObjectiveScore, ZeroTerms) { EXPECT_EQ(objective_score({}, ObjectiveWeights{}), 0.0); }

TEST(ObjectiveScore, Uniform) {
  EXPECT_DOUBLE_EQ(objective_score({0.5, 0.5, 0.5, 0.5}, ObjectiveWeights{1, 1, 1, 1}), 2.0);
}

TEST(ObjectiveScore, MatchesDotProductOracle) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0), wd(0.0, 3.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> w{wd(rng), wd(rng), wd(rng), wd(rng) + 0.01};
    std::vector<double> q{u(rng), u(rng), u(rng), u(rng)};
    double expect = 0;
    for (int i = 0; i < 4; ++i) expect += w[i] * q[i];
    EXPECT_NEAR(objective_score({q[0], q[1], q[2], q[3]}, ObjectiveWeights{w[0], w[1], w[2], w[3]}), expect, 1e-12);
  }
}

TEST(ObjectiveScore, MonotoneInEachTerm) {
  ObjectiveWeights w{0.3, 1.2, 0.0, 2.0};
  ObjectiveTerms q{0.2, 0.4, 0.6, 0.8};
  double base = objective_score(q, w);
  for (int i = 0; i < 4; ++i) {
    ObjectiveTerms r = q;
    double* fields[] = {&r.vis, &r.narr, &r.cond, &r.sync};
    *fields[i] += 0.1;
    EXPECT_GE(objective_score(r, w), base);
  }
}

TEST(ObjectiveWeights, RejectsNegativeAndAllZero) {
  EXPECT_THROW(ObjectiveWeights(-1, 1, 1, 1), PreconditionError);
  EXPECT_THROW(ObjectiveWeights(0, 0, 0, 0), PreconditionError);
}

TEST(UsedIntervals, AddRejectsIntersectionAndReportsFreeSpans) {
  UsedIntervals u;
  EXPECT_TRUE(u.add("v", {2, 4}));
  EXPECT_TRUE(u.add("v", {4, 5}));  // touching
  EXPECT_FALSE(u.add("v", {4.5, 6}));
  EXPECT_TRUE(u.add("w", {2, 4}));
  EXPECT_TRUE(u.intersects("v", {3.9, 4.1}));
  EXPECT_FALSE(u.intersects("v", {5, 6}));
  auto spans = u.free_spans("v", {0, 10});
  ASSERT_EQ(spans.size(), 2u);
  EXPECT_EQ(spans[0], (Interval{0, 2}));
  EXPECT_EQ(spans[1], (Interval{5, 10}));
}

TEST(UsedIntervals, StaysDisjointUnderRandomInserts) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> a(0, 50), l(0.1, 5);
  for (int trial = 0; trial < 200; ++trial) {
    UsedIntervals u;
    std::vector<std::pair<double, double>> kept;
    for (int k = 0; k < 30; ++k) {
      double s = a(rng), e = s + l(rng);
      bool clash = std::any_of(kept.begin(), kept.end(), [&](auto p) { return std::max(s, p.first) < std::min(e, p.second); });
      ASSERT_EQ(u.add("v", {s, e}), !clash);
      if (!clash) kept.push_back({s, e});
    }
    // Free span lengths agree with the sweep oracle.
    double longest = 0;
    for (auto iv : u.free_spans("v", {0, 60})) longest = std::max(longest, iv.length());
    ASSERT_NEAR(longest, oracle::longest_free(0, 60, kept), 1e-9);
  }
}

TEST(CoreJson, TimelineRoundTrip) {
  Timeline t{{Clip{"v", 1.5, 3.25, "v_S0001", "U1.1"}}, "music"};
  Json j = t;
  EXPECT_EQ(j.get<Timeline>(), t);
}

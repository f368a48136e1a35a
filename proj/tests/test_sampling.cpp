#include <gtest/gtest.h>

#include <random>

#include "fgcn/sampling.hpp"
#include "fgcn/verify.hpp"

using namespace fgcn;

TEST(Plan, ExactFitEval) {
  const auto p = plan_stages(320, 5, 64, SamplingMode::eval_deterministic);
  EXPECT_EQ(p.offsets, (std::vector<std::size_t>{0, 64, 128, 192, 256}));
  for (std::size_t t = 0; t < 5; ++t) {
    EXPECT_EQ(p.boundaries[t].begin, 64 * t);
    EXPECT_EQ(p.boundaries[t].end, 64 * (t + 1));
  }
}

TEST(Plan, ExactFitClipIsVerbatim) {
  SkeletonSequence s(320, 1, 1);
  for (std::size_t t = 0; t < 320; ++t) s.at(t, 0, 0, 0) = static_cast<double>(t);
  const auto p = plan_stages(320, 5, 64, SamplingMode::eval_deterministic);
  const auto clip = extract_clip(s, p, 1);
  ASSERT_EQ(clip.frames, 64u);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(clip.at(i, 0, 0, 0), 64.0 + i);
}

TEST(Plan, ShortSequenceCyclesSingleFrameStages) {
  SkeletonSequence s(5, 1, 1);
  for (std::size_t t = 0; t < 5; ++t) s.at(t, 0, 0, 0) = static_cast<double>(t);
  const auto p = plan_stages(5, 5, 64, SamplingMode::eval_deterministic);
  for (std::size_t t = 0; t < 5; ++t) {
    const auto clip = extract_clip(s, p, t);
    ASSERT_EQ(clip.frames, 64u);
    for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(clip.at(i, 0, 0, 0), static_cast<double>(t));
  }
}

TEST(Plan, SingleFrameSequence) {
  for (auto mode : {SamplingMode::eval_deterministic, SamplingMode::train_random}) {
    const auto p = plan_stages(1, 5, 8, mode, 3);
    for (std::size_t t = 0; t < 5; ++t)
      for (std::size_t f : p.clip_frames(t)) EXPECT_EQ(f, 0u);
  }
}

TEST(Plan, StageCoverAndBalance) {
  for (std::size_t len : {1, 2, 7, 63, 64, 100, 321})
    for (std::size_t T : {1, 3, 5, 7}) {
      const auto p = plan_stages(len, T, 16, SamplingMode::eval_deterministic);
      const std::size_t L = std::max(len, T);
      EXPECT_EQ(p.boundaries.front().begin, 0u);
      EXPECT_EQ(p.boundaries.back().end, L);
      std::size_t lo = L, hi = 0;
      for (std::size_t t = 0; t < T; ++t) {
        if (t) {
          EXPECT_EQ(p.boundaries[t].begin, p.boundaries[t - 1].end);
        }
        lo = std::min(lo, p.boundaries[t].length());
        hi = std::max(hi, p.boundaries[t].length());
        EXPECT_GE(p.offsets[t], p.boundaries[t].begin);
        EXPECT_LT(p.offsets[t], p.boundaries[t].end);
        EXPECT_EQ(p.clip_frames(t).size(), 16u);
      }
      EXPECT_LE(hi - lo, 1u);
    }
}

TEST(Plan, EvalIgnoresSeedTrainReproducible) {
  const auto a = plan_stages(200, 5, 16, SamplingMode::eval_deterministic, 1);
  const auto b = plan_stages(200, 5, 16, SamplingMode::eval_deterministic, 99);
  EXPECT_EQ(a.offsets, b.offsets);
  const auto c = plan_stages(200, 5, 16, SamplingMode::train_random, 7);
  const auto d = plan_stages(200, 5, 16, SamplingMode::train_random, 7);
  EXPECT_EQ(c.offsets, d.offsets);
}

TEST(Plan, RandomPlanMatchesIndexArithmetic) {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t len = 1 + rng() % 150, T = 1 + rng() % 7, clip = 1 + rng() % 40;
    const auto p = plan_stages(len, T, clip, SamplingMode::train_random, rng());
    SkeletonSequence s(len, 1, 1);
    for (std::size_t t = 0; t < len; ++t) s.at(t, 0, 0, 0) = static_cast<double>(t);
    const std::size_t L = std::max(len, T);
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t b = t * L / T, e = (t + 1) * L / T, span = e - b;
      const auto c = extract_clip(s, p, t);
      for (std::size_t i = 0; i < clip; ++i) {
        const std::size_t virt = span >= clip ? p.offsets[t] + i : b + (p.offsets[t] - b + i) % span;
        EXPECT_EQ(c.at(i, 0, 0, 0), static_cast<double>(virt % len));
      }
    }
  }
}

TEST(Plan, Errors) {
  EXPECT_THROW(plan_stages(10, 0, 4, SamplingMode::eval_deterministic), ConfigError);
  EXPECT_THROW(plan_stages(10, 2, 0, SamplingMode::eval_deterministic), ConfigError);
  const auto p = plan_stages(10, 2, 4, SamplingMode::eval_deterministic);
  EXPECT_THROW(p.clip_frames(2), ShapeError);
  EXPECT_THROW(extract_clip(SkeletonSequence(11, 1, 1), p, 0), ShapeError);
  EXPECT_THROW(parse_sampling_mode("sometimes"), ConfigError);
}

TEST(Plan, VerifySuitePasses) {
  for (const auto& r : verify_sampling()) EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
}

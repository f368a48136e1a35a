#pragma once

// Multi-stage temporal sampling: split a sequence into T equal stages and
// take one clip of clip_len frames from each.
//
// Stage s covers virtual frames [floor(s*L/T), floor((s+1)*L/T)) with
// L = max(len, T); virtual frame i maps to real frame i mod len, so a
// sequence shorter than T is cyclically padded first. A stage shorter than
// clip_len is cycled from its first frame.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fgcn/error.hpp"
#include "fgcn/skeleton.hpp"

namespace fgcn {

enum class SamplingMode { train_random, eval_deterministic };

inline SamplingMode parse_sampling_mode(const std::string& s) {
  if (s == "train" || s == "train-random" || s == "random") return SamplingMode::train_random;
  if (s == "eval" || s == "eval-deterministic" || s == "center") return SamplingMode::eval_deterministic;
  throw ConfigError("unknown sampling_mode '" + s + "' (expected train-random or eval-deterministic)");
}

struct StageInterval {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t length() const { return end - begin; }
};

struct StagePlan {
  std::size_t sequence_length = 0;
  std::size_t virtual_length = 0;
  std::size_t stages = 0;
  std::size_t clip_len = 0;
  SamplingMode mode = SamplingMode::eval_deterministic;
  std::vector<StageInterval> boundaries;
  std::vector<std::size_t> offsets;

  // Real frame indices of clip `t` (0-based stage index).
  std::vector<std::size_t> clip_frames(std::size_t t) const {
    if (t >= stages)
      throw ShapeError("stage index " + std::to_string(t) + " out of range [0, " +
                       std::to_string(stages) + ")");
    const auto& b = boundaries[t];
    std::vector<std::size_t> out(clip_len);
    const std::size_t span = b.length();
    for (std::size_t i = 0; i < clip_len; ++i) {
      const std::size_t rel = offsets[t] - b.begin + i;
      const std::size_t virt = b.begin + (span >= clip_len ? rel : rel % span);
      out[i] = virt % sequence_length;
    }
    return out;
  }
};

// SplitMix64 finalizer; used to derive independent per-sample seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline StagePlan plan_stages(std::size_t len, std::size_t stages, std::size_t clip_len,
                             SamplingMode mode, std::uint64_t seed = 0) {
  if (stages == 0) throw ConfigError("stage count must be at least 1");
  if (clip_len == 0) throw ConfigError("clip length must be at least 1");
  if (len == 0) throw ShapeError("cannot sample an empty sequence");
  StagePlan p;
  p.sequence_length = len;
  p.virtual_length = std::max(len, stages);
  p.stages = stages;
  p.clip_len = clip_len;
  p.mode = mode;
  std::mt19937_64 rng(seed);
  for (std::size_t s = 0; s < stages; ++s) {
    StageInterval b{s * p.virtual_length / stages, (s + 1) * p.virtual_length / stages};
    p.boundaries.push_back(b);
    std::size_t offset = b.begin;
    if (b.length() > clip_len) {
      const std::size_t slack = b.length() - clip_len;
      if (mode == SamplingMode::train_random)
        offset += std::uniform_int_distribution<std::size_t>(0, slack)(rng);
      else
        offset += slack / 2;
    }
    p.offsets.push_back(offset);
  }
  return p;
}

// Copies clip `t` out of `s` as a clip_len-frame sequence.
inline SkeletonSequence extract_clip(const SkeletonSequence& s, const StagePlan& plan, std::size_t t) {
  if (plan.sequence_length != s.frames)
    throw ShapeError("plan was built for " + std::to_string(plan.sequence_length) +
                     " frames, sequence has " + std::to_string(s.frames));
  const auto frames = plan.clip_frames(t);
  SkeletonSequence out = s.like();
  out.frames = plan.clip_len;
  out.coords.assign(plan.clip_len * s.bodies * s.joints * 3, 0.0);
  const std::size_t stride = s.bodies * s.joints * 3;
  for (std::size_t i = 0; i < frames.size(); ++i)
    std::copy_n(s.coords.begin() + frames[i] * stride, stride, out.coords.begin() + i * stride);
  return out;
}

}  // namespace fgcn

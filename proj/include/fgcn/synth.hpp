#pragma once

// Synthetic labeled skeleton datasets: each class rotates one limb about its
// root joint with a class-specific frequency and amplitude. Per-sample
// latent parameters (phase, jitter, length) come from a seeded generator,
// so a seed reproduces the dataset exactly.

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "fgcn/graph.hpp"
#include "fgcn/sampling.hpp"
#include "fgcn/skeleton.hpp"

namespace fgcn {

using Vec3 = std::array<double, 3>;

struct SynthConfig {
  std::string topology = "ntu-rgbd";
  std::size_t classes = 4;
  std::size_t train_per_class = 16;
  std::size_t test_per_class = 8;
  std::size_t min_len = 40;
  std::size_t max_len = 80;
  std::size_t bodies = 1;
  double noise = 0.01;

  void validate() const {
    if (classes < 2) throw ConfigError("synthetic dataset needs at least 2 classes");
    if (min_len < 1 || max_len < min_len) throw ConfigError("invalid synthetic length range");
    if (bodies < 1) throw ConfigError("synthetic dataset needs at least one body");
    if (!(noise >= 0)) throw ConfigError("noise must be nonnegative");
  }
};

// Per-class motion primitive.
struct ClassMotion {
  std::size_t limb_root = 0;
  std::vector<std::size_t> limb;  // joints moved with the root's child subtree
  Vec3 axis{0, 0, 1};
  double cycles = 1;     // oscillations per sequence
  double amplitude = 1;  // radians
};

// Per-sample latent draw.
struct SampleLatent {
  std::size_t length = 64;
  double phase = 0;
  double amplitude_scale = 1;
  double cycles_scale = 1;
  Vec3 offset{0, 0, 0};
};

// Standing rest pose in meters, y up. NTU joints use a hand-placed layout;
// other graphs get a deterministic tree layout grown from the center.
inline std::vector<Vec3> rest_pose(const GraphTopology& g) {
  if (g.name == "ntu-rgbd" && g.num_joints == 25) {
    return {{0, 0, 0},        {0, 0.25, 0},      {0, 0.5, 0},       {0, 0.65, 0},
            {-0.18, 0.45, 0}, {-0.2, 0.2, 0},    {-0.22, -0.02, 0}, {-0.22, -0.1, 0},
            {0.18, 0.45, 0},  {0.2, 0.2, 0},     {0.22, -0.02, 0},  {0.22, -0.1, 0},
            {-0.1, -0.05, 0}, {-0.1, -0.45, 0},  {-0.1, -0.85, 0},  {-0.1, -0.9, 0.1},
            {0.1, -0.05, 0},  {0.1, -0.45, 0},   {0.1, -0.85, 0},   {0.1, -0.9, 0.1},
            {0, 0.45, 0},     {-0.22, -0.17, 0}, {-0.2, -0.1, 0.03}, {0.22, -0.17, 0},
            {0.2, -0.1, 0.03}};
  }
  std::vector<Vec3> pose(g.num_joints, Vec3{0, 0, 0});
  const auto d = g.hop_distances();
  std::vector<std::size_t> order(g.num_joints);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
  constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::vector<std::size_t> parent(g.num_joints, npos);
  for (auto [p, c] : oriented_edges(g)) parent[c] = p;
  for (std::size_t j : order) {
    if (parent[j] == npos) continue;
    const double angle = 2.0 * std::numbers::pi * static_cast<double>((j * 7) % 12) / 12.0;
    const Vec3& base = pose[parent[j]];
    pose[j] = {base[0] + 0.2 * std::cos(angle), base[1] + 0.2 * std::sin(angle), base[2] + 0.02};
  }
  return pose;
}

// Joints in the subtree below `root` (root included), walking away from the
// center.
inline std::vector<std::size_t> subtree(const GraphTopology& g, std::size_t root) {
  std::vector<std::vector<std::size_t>> children(g.num_joints);
  for (auto [p, c] : oriented_edges(g)) children[p].push_back(c);
  std::vector<std::size_t> out{root}, stack{root};
  while (!stack.empty()) {
    const std::size_t u = stack.back();
    stack.pop_back();
    for (std::size_t v : children[u]) {
      out.push_back(v);
      stack.push_back(v);
    }
  }
  return out;
}

inline std::vector<ClassMotion> class_motions(const GraphTopology& g, std::size_t classes) {
  std::vector<std::size_t> roots;
  if (g.name == "ntu-rgbd" && g.num_joints == 25) {
    roots = {8, 4, 16, 12, 2};  // right shoulder, left shoulder, right hip, left hip, neck
  } else {
    const auto d = g.hop_distances();
    for (std::size_t j = 0; j < g.num_joints; ++j)
      if (j != g.center && subtree(g, j).size() > 1) roots.push_back(j);
    std::stable_sort(roots.begin(), roots.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
    if (roots.empty()) roots.push_back(g.center);
  }
  const auto pose = rest_pose(g);
  std::vector<ClassMotion> out;
  for (std::size_t c = 0; c < classes; ++c) {
    ClassMotion m;
    m.limb_root = roots[c % roots.size()];
    m.limb = subtree(g, m.limb_root);
    // Rotate about the axis perpendicular to the limb and the depth axis.
    Vec3 dir{0, -1, 0};
    if (m.limb.size() > 1) {
      const Vec3& a = pose[m.limb[0]];
      const Vec3& b = pose[m.limb[1]];
      dir = {b[0] - a[0], b[1] - a[1], b[2] - a[2]};
    }
    Vec3 axis{dir[1], -dir[0], 0};
    double n = std::hypot(axis[0], axis[1], axis[2]);
    if (n < 1e-9) {
      axis = {1, 0, 0};
      n = 1;
    }
    m.axis = {axis[0] / n, axis[1] / n, axis[2] / n};
    const std::size_t round = c / roots.size();
    m.cycles = 1.0 + 0.75 * static_cast<double>(c % 3) + 1.5 * static_cast<double>(round);
    m.amplitude = 0.9 + 0.3 * static_cast<double>((c + round) % 2);
    out.push_back(m);
  }
  return out;
}

inline Vec3 rotate(const Vec3& v, const Vec3& axis, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  const double dot = axis[0] * v[0] + axis[1] * v[1] + axis[2] * v[2];
  const Vec3 cross{axis[1] * v[2] - axis[2] * v[1], axis[2] * v[0] - axis[0] * v[2],
                   axis[0] * v[1] - axis[1] * v[0]};
  Vec3 out;
  for (int i = 0; i < 3; ++i) out[i] = v[i] * c + cross[i] * s + axis[i] * dot * (1 - c);
  return out;
}

// Deterministic given its arguments; `noise_rng` is only drawn from when
// noise > 0.
inline SkeletonSequence synthesize_sequence(const GraphTopology& g, const std::vector<Vec3>& pose,
                                            const ClassMotion& motion, const SampleLatent& latent,
                                            std::size_t label, std::size_t classes, std::size_t bodies,
                                            double noise, std::mt19937_64& noise_rng, std::string id) {
  SkeletonSequence s(latent.length, bodies, g.num_joints);
  s.id = std::move(id);
  s.label = label;
  s.num_classes = classes;
  std::normal_distribution<double> gauss(0.0, noise > 0 ? noise : 1.0);
  const double len = static_cast<double>(latent.length);
  std::vector<bool> moving(g.num_joints, false);
  for (std::size_t j : motion.limb)
    if (j != motion.limb_root) moving[j] = true;
  const Vec3& pivot = pose[motion.limb_root];
  for (std::size_t t = 0; t < latent.length; ++t) {
    const double u = static_cast<double>(t) / len;
    // Oscillates between 30% and 100% of the amplitude, never back to rest.
    const double angle = motion.amplitude * latent.amplitude_scale *
                         (0.65 - 0.35 * std::cos(2.0 * std::numbers::pi * motion.cycles * latent.cycles_scale * u + latent.phase));
    for (std::size_t m = 0; m < bodies; ++m)
      for (std::size_t j = 0; j < g.num_joints; ++j) {
        Vec3 p = pose[j];
        if (moving[j]) {
          const Vec3 rel{p[0] - pivot[0], p[1] - pivot[1], p[2] - pivot[2]};
          const Vec3 r = rotate(rel, motion.axis, angle);
          p = {pivot[0] + r[0], pivot[1] + r[1], pivot[2] + r[2]};
        }
        for (std::size_t c = 0; c < 3; ++c) {
          double v = p[c] + latent.offset[c] + 0.5 * static_cast<double>(m) * (c == 0);
          if (noise > 0) v += gauss(noise_rng);
          s.at(t, m, j, c) = v;
        }
      }
  }
  return s;
}

struct SyntheticSplits {
  Dataset train;
  Dataset test;
};

inline SyntheticSplits synth_dataset(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const GraphTopology g = resolve_topology(cfg.topology);
  const auto pose = rest_pose(g);
  const auto motions = class_motions(g, cfg.classes);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> len_dist(cfg.min_len, cfg.max_len);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> jitter(0.85, 1.15);
  std::uniform_real_distribution<double> shift(-0.2, 0.2);

  SyntheticSplits out;
  auto fill = [&](Dataset& d, const std::string& split, std::size_t per_class) {
    d.split = split;
    d.num_classes = cfg.classes;
    d.source = "synthetic seed=" + std::to_string(seed);
    for (std::size_t i = 0; i < per_class; ++i)
      for (std::size_t c = 0; c < cfg.classes; ++c) {
        SampleLatent lat;
        lat.length = len_dist(rng);
        lat.phase = phase(rng);
        lat.amplitude_scale = jitter(rng);
        lat.cycles_scale = jitter(rng);
        lat.offset = {shift(rng), shift(rng), shift(rng)};
        const std::string id = split + "_c" + std::to_string(c) + "_" + std::to_string(i);
        d.samples.push_back(synthesize_sequence(g, pose, motions[c], lat, c, cfg.classes, cfg.bodies,
                                                cfg.noise, rng, id));
      }
  };
  fill(out.train, "train", cfg.train_per_class);
  fill(out.test, "test", cfg.test_per_class);
  return out;
}

// Nearest-centroid classifier on raw coordinates resampled to `frames`
// evenly spaced frames. A model-free separability check for a dataset.
inline double nearest_centroid_accuracy(const Dataset& train, const Dataset& test,
                                        std::size_t frames = 16) {
  auto featurize = [&](const SkeletonSequence& s) {
    std::vector<double> f;
    f.reserve(frames * s.bodies * s.joints * 3);
    for (std::size_t i = 0; i < frames; ++i) {
      const std::size_t t = i * s.frames / frames;
      for (std::size_t m = 0; m < s.bodies; ++m)
        for (std::size_t j = 0; j < s.joints; ++j)
          for (std::size_t c = 0; c < 3; ++c) f.push_back(s.at(t, m, j, c));
    }
    return f;
  };
  const std::size_t C = train.num_classes;
  std::vector<std::vector<double>> centroid(C);
  std::vector<std::size_t> count(C, 0);
  for (const auto& s : train.samples) {
    const auto f = featurize(s);
    if (centroid[s.label].empty()) centroid[s.label].assign(f.size(), 0.0);
    for (std::size_t i = 0; i < f.size(); ++i) centroid[s.label][i] += f[i];
    ++count[s.label];
  }
  for (std::size_t c = 0; c < C; ++c)
    for (auto& x : centroid[c]) x /= static_cast<double>(std::max<std::size_t>(1, count[c]));
  std::size_t hits = 0;
  for (const auto& s : test.samples) {
    const auto f = featurize(s);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < C; ++c) {
      if (centroid[c].size() != f.size()) continue;
      double d = 0;
      for (std::size_t i = 0; i < f.size(); ++i) d += (f[i] - centroid[c][i]) * (f[i] - centroid[c][i]);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    hits += best == s.label;
  }
  return static_cast<double>(hits) / static_cast<double>(std::max<std::size_t>(1, test.size()));
}

}  // namespace fgcn

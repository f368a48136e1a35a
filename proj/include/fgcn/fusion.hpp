#pragma once

// Temporal fusion of per-stage class distributions into a video-level one:
// P_S = Σ_t w_t P_t with nonnegative weights summing to one.

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "fgcn/error.hpp"

namespace fgcn {

enum class FusionStrategy { last_win_all, average, weighted };

struct FusionSpec {
  FusionStrategy strategy = FusionStrategy::average;
  std::string name = "average";
  std::vector<double> weights;

  void validate(std::size_t stages) const {
    if (weights.size() != stages)
      throw ConfigError("fusion '" + name + "' has " + std::to_string(weights.size()) +
                        " weights but the model has " + std::to_string(stages) + " stages");
    double s = 0;
    for (double w : weights) {
      if (!(w >= 0) || !std::isfinite(w)) throw ConfigError("fusion weights must be nonnegative");
      s += w;
    }
    if (std::abs(s - 1.0) > 1e-12) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "fusion weights sum to " << s << ", expected 1";
      throw ConfigError(msg.str());
    }
  }
};

inline FusionSpec last_win_all_fusion(std::size_t stages) {
  FusionSpec f{FusionStrategy::last_win_all, "last-win-all", std::vector<double>(stages, 0.0)};
  f.weights.back() = 1.0;
  return f;
}

inline FusionSpec average_fusion(std::size_t stages) {
  return {FusionStrategy::average, "average",
          std::vector<double>(stages, 1.0 / static_cast<double>(stages))};
}

inline FusionSpec weighted_fusion(std::vector<double> weights, std::string name = "weighted") {
  FusionSpec f{FusionStrategy::weighted, std::move(name), std::move(weights)};
  f.validate(f.weights.size());
  return f;
}

// The two five-stage weightings evaluated alongside last-win-all and average.
inline FusionSpec weight_fusion_1() {
  return weighted_fusion({0.05, 0.05, 0.1, 0.2, 0.6}, "weight-fusion-1");
}
inline FusionSpec weight_fusion_2() {
  return weighted_fusion({0.1, 0.15, 0.2, 0.25, 0.3}, "weight-fusion-2");
}

// Resolves a strategy name for `stages` stages. "weighted" takes explicit
// weights; the named five-stage weightings require stages == 5.
inline FusionSpec make_fusion(const std::string& name, std::size_t stages,
                              const std::vector<double>& weights = {}) {
  if (stages == 0) throw ConfigError("fusion needs at least one stage");
  FusionSpec f;
  if (name == "last-win-all" || name == "last")
    f = last_win_all_fusion(stages);
  else if (name == "average" || name == "avg")
    f = average_fusion(stages);
  else if (name == "weight-fusion-1")
    f = weight_fusion_1();
  else if (name == "weight-fusion-2")
    f = weight_fusion_2();
  else if (name == "weighted")
    f = FusionSpec{FusionStrategy::weighted, "weighted", weights};
  else
    throw ConfigError("unknown fusion strategy '" + name + "'");
  f.validate(stages);
  return f;
}

inline std::vector<double> fuse(const std::vector<std::vector<double>>& stage_probs,
                                const FusionSpec& spec) {
  spec.validate(stage_probs.size());
  const std::size_t C = stage_probs.front().size();
  std::vector<double> out(C, 0.0);
  for (std::size_t t = 0; t < stage_probs.size(); ++t) {
    if (stage_probs[t].size() != C) throw ShapeError("fuse: stage distributions differ in length");
    for (std::size_t c = 0; c < C; ++c) out[c] += spec.weights[t] * stage_probs[t][c];
  }
  return out;
}

// alpha * spatial + (1 - alpha) * motion.
inline std::vector<double> two_stream_combine(const std::vector<double>& spatial,
                                              const std::vector<double>& motion, double alpha) {
  if (spatial.size() != motion.size())
    throw ShapeError("two-stream scores differ in length: " + std::to_string(spatial.size()) +
                     " vs " + std::to_string(motion.size()));
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  std::vector<double> out(spatial.size());
  for (std::size_t c = 0; c < out.size(); ++c)
    out[c] = alpha * spatial[c] + (1.0 - alpha) * motion[c];
  return out;
}

inline std::size_t argmax(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace fgcn

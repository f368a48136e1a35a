#pragma once

// The feedback graph convolutional network.
//
//   F_t = GConvs(c_t)                       shared spatial-temporal extractor
//   H_t = FGCB(H_{t-1}, F_t), H_0 = F_1     dense feedback block
//   P_t = softmax(W pool(H_t) + b)          per-stage prediction
//   P_S = Σ_t w_t P_t                       temporal fusion
//
// Inside FGCB, layer 1 sees [F_t, H_{t-1}] and layer l > 1 sees the
// concatenation [h^1, ..., h^{l-1}]; H_t = h^L.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fgcn/checkpoint.hpp"
#include "fgcn/fusion.hpp"
#include "fgcn/graph.hpp"
#include "fgcn/ops.hpp"
#include "fgcn/sampling.hpp"
#include "fgcn/skeleton.hpp"

namespace fgcn {

enum class Stream { spatial, motion };
// Which skeleton quantities feed a stream: joints (or joint motion), bones
// (or bone motion), or both as two 3-channel groups.
enum class Features { joint, bone, both };

inline std::string to_string(Stream s) { return s == Stream::spatial ? "spatial" : "motion"; }

inline Features parse_features(const std::string& s) {
  if (s == "joint") return Features::joint;
  if (s == "bone") return Features::bone;
  if (s == "both" || s == "joint+bone" || s == "joint_bone") return Features::both;
  throw ConfigError("unknown input features '" + s + "' (expected joint, bone or both)");
}

// GConv(k_s, k_t, m) with a temporal stride.
struct LayerConfig {
  std::size_t in_channels = 0;
  std::size_t k_s = 3;
  std::size_t k_t = 3;
  std::size_t m = 0;
  std::size_t stride = 1;
  bool residual = false;

  void validate() const {
    if (k_t % 2 == 0) throw ConfigError("temporal kernel size must be odd, got " + std::to_string(k_t));
    if (m < 1) throw ConfigError("layer output channels must be at least 1");
    if (stride != 1 && stride != 2) throw ConfigError("temporal stride must be 1 or 2");
    if (k_s != 3) throw ConfigError("spatial kernel size must equal the subset count 3");
  }
};

struct ModelConfig {
  std::string topology = "ntu-rgbd";
  Features features = Features::both;
  std::size_t stages = 5;
  std::size_t clip_len = 64;
  std::size_t fgcb_layers = 4;
  std::size_t k_t = 3;         // FGCB temporal kernel
  std::size_t gconvs_k_t = 9;  // GConvs temporal kernel
  std::vector<std::size_t> channels{64, 64, 64, 64, 128, 128, 128, 256, 256, 256};
  std::vector<std::size_t> strides;  // empty: stride 2 wherever the width grows
  bool residual = true;
  bool norm = true;
  double norm_eps = 1e-5;
  double degree_eps = default_degree_epsilon;
  std::string fusion = "average";
  std::vector<double> fusion_weights;
  double alpha = 0.5;
  std::size_t bodies = 2;
  std::uint64_t init_seed = 7;

  std::size_t m() const { return channels.back(); }

  std::vector<std::size_t> resolved_strides() const {
    if (!strides.empty()) return strides;
    std::vector<std::size_t> s(channels.size(), 1);
    for (std::size_t i = 1; i < channels.size(); ++i)
      if (channels[i] > channels[i - 1]) s[i] = 2;
    return s;
  }

  FusionSpec fusion_spec() const { return make_fusion(fusion, stages, fusion_weights); }

  void validate() const {
    if (stages == 0) throw ConfigError("stages must be at least 1");
    if (clip_len == 0) throw ConfigError("clip_len must be at least 1");
    if (fgcb_layers == 0) throw ConfigError("fgcb layer count L must be at least 1");
    if (channels.empty()) throw ConfigError("channel plan must not be empty");
    if (!strides.empty() && strides.size() != channels.size())
      throw ConfigError("strides list length must match the channel plan");
    if (bodies == 0) throw ConfigError("bodies must be at least 1");
    if (!(alpha >= 0 && alpha <= 1)) throw ConfigError("alpha must lie in [0, 1]");
    for (std::size_t i = 0; i < channels.size(); ++i)
      LayerConfig{1, 3, gconvs_k_t, channels[i], resolved_strides()[i]}.validate();
    LayerConfig{1, 3, k_t, m(), 1}.validate();
    fusion_spec();
  }
};

// ---------------------------------------------------------------------------
// Stream inputs

struct InputSpec {
  Stream stream = Stream::spatial;
  Features features = Features::both;
  std::size_t bodies = 2;
  std::size_t joints = 0;
  // parent[j] for bones on child joint j; npos for joints without a parent.
  std::vector<std::size_t> parent;

  std::size_t channels() const { return features == Features::both ? 6 : 3; }
};

inline constexpr std::size_t no_parent = static_cast<std::size_t>(-1);

inline InputSpec make_input_spec(const GraphTopology& g, Stream stream, Features features,
                                 std::size_t bodies) {
  InputSpec in{stream, features, bodies, g.num_joints, std::vector<std::size_t>(g.num_joints, no_parent)};
  for (auto [p, c] : oriented_edges(g)) in.parent[c] = p;
  return in;
}

namespace detail {

// Spatial quantity (joint or bone) of joint j at frame t, body m.
inline void spatial_value(const SkeletonSequence& s, const InputSpec& in, bool bone, std::size_t t,
                          std::size_t m, std::size_t j, double out[3]) {
  for (std::size_t c = 0; c < 3; ++c) {
    if (!bone)
      out[c] = s.at(t, m, j, c);
    else
      out[c] = in.parent[j] == no_parent ? 0.0 : s.at(t, m, j, c) - s.at(t, m, in.parent[j], c);
  }
}

}  // namespace detail

// Stream features of frame t for body m, joint j. Motion at the last frame
// is zero. Only frames t and t + 1 are read.
inline void frame_features(const SkeletonSequence& s, const InputSpec& in, std::size_t t,
                           std::size_t m, std::size_t j, double* out) {
  std::size_t k = 0;
  for (int group = 0; group < 2; ++group) {
    const bool bone = group == 1;
    if (in.features == Features::joint && bone) continue;
    if (in.features == Features::bone && !bone) continue;
    double cur[3];
    detail::spatial_value(s, in, bone, t, m, j, cur);
    if (in.stream == Stream::spatial) {
      for (double v : cur) out[k++] = v;
    } else if (t + 1 < s.frames) {
      double next[3];
      detail::spatial_value(s, in, bone, t + 1, m, j, next);
      for (std::size_t c = 0; c < 3; ++c) out[k++] = next[c] - cur[c];
    } else {
      for (std::size_t c = 0; c < 3; ++c) out[k++] = 0.0;
    }
  }
}

// Batch clip tensor (B * bodies, C_in, clip_len, N) for stage `t`, sample b
// body m at row b * bodies + m. Missing body slots stay zero.
template <typename T>
Tensor<T> clip_tensor(const std::vector<const SkeletonSequence*>& batch,
                      const std::vector<StagePlan>& plans, std::size_t t, const InputSpec& in) {
  if (batch.size() != plans.size()) throw ShapeError("one stage plan per sample required");
  const std::size_t B = batch.size(), M = in.bodies, C = in.channels(), N = in.joints;
  const std::size_t L = plans.empty() ? 0 : plans[0].clip_len;
  Tensor<T> out({B * M, C, L, N});
  double feat[6];
  for (std::size_t b = 0; b < B; ++b) {
    const SkeletonSequence& s = *batch[b];
    if (s.joints != N)
      throw ShapeError("sequence " + s.id + " has " + std::to_string(s.joints) +
                       " joints, model expects " + std::to_string(N));
    if (s.bodies > M)
      throw ShapeError("sequence " + s.id + " has " + std::to_string(s.bodies) +
                       " body slots, model accepts " + std::to_string(M));
    const auto frames = plans[b].clip_frames(t);
    for (std::size_t m = 0; m < s.bodies; ++m)
      for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < N; ++j) {
          frame_features(s, in, frames[i], m, j, feat);
          for (std::size_t c = 0; c < C; ++c) out.at(b * M + m, c, i, j) = static_cast<T>(feat[c]);
        }
  }
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
struct StagedOutput {
  std::vector<Var<T>> features;  // F_t
  std::vector<Var<T>> hidden;    // H_t
  std::vector<Var<T>> logits;
  std::vector<Var<T>> probs;     // P_t, (B, C)
  std::optional<Var<T>> fused;   // P_S, (B, C)
};

template <typename T = double>
class FgcnModel {
 public:
  FgcnModel(const ModelConfig& cfg, GraphTopology topology, Stream stream, std::size_t num_classes)
      : cfg_(cfg), topo_(std::move(topology)), stream_(stream), classes_(num_classes) {
    cfg_.validate();
    if (num_classes < 1) throw ConfigError("model needs at least one class");
    input_ = make_input_spec(topo_, stream_, cfg_.features, cfg_.bodies);
    adjacency_ = normalize<T>(partition_spatial(topo_), cfg_.degree_eps);
    fusion_ = cfg_.fusion_spec();
    build();
  }

  const ModelConfig& config() const { return cfg_; }
  const GraphTopology& topology() const { return topo_; }
  const InputSpec& input_spec() const { return input_; }
  const Tensor<T>& adjacency() const { return adjacency_; }
  const FusionSpec& fusion() const { return fusion_; }
  void set_fusion(FusionSpec f) {
    f.validate(cfg_.stages);
    fusion_ = std::move(f);
  }
  Stream stream() const { return stream_; }
  std::size_t num_classes() const { return classes_; }
  const std::vector<LayerConfig>& gconvs_layers() const { return gconvs_; }
  const std::vector<LayerConfig>& fgcb_layers() const { return fgcb_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  Tensor<T> input_clip(const std::vector<const SkeletonSequence*>& batch,
                       const std::vector<StagePlan>& plans, std::size_t t) const {
    return clip_tensor<T>(batch, plans, t, input_);
  }

  // F_t = GConvs(c_t).
  Var<T> gconvs_forward(Tape<T>& tape, Var<T> clip, Mode mode) {
    if (clip.shape().size() != 4 || clip.dim(3) != topo_.num_joints)
      throw ShapeError("clip " + shape_string(clip.shape()) + " does not match topology '" +
                       topo_.name + "' with " + std::to_string(topo_.num_joints) + " joints");
    Var<T> x = clip;
    for (std::size_t i = 0; i < gconvs_.size(); ++i)
      x = layer_forward(tape, x, "gconvs." + std::to_string(i), gconvs_[i], mode);
    return x;
  }

  // H_t = FGCB(H_{t-1}, F_t).
  Var<T> fgcb_forward(Tape<T>& tape, Var<T> h_prev, Var<T> f, Mode mode) {
    if (h_prev.shape() != f.shape())
      throw ShapeError("FGCB inputs differ in shape: H_prev " + shape_string(h_prev.shape()) +
                       " vs F " + shape_string(f.shape()));
    std::vector<Var<T>> outs;
    for (std::size_t l = 0; l < fgcb_.size(); ++l) {
      Var<T> in = l == 0 ? concat_channels<T>({f, h_prev})
                         : concat_channels<T>(std::span<const Var<T>>(outs));
      outs.push_back(layer_forward(tape, in, "fgcb." + std::to_string(l), fgcb_[l], mode));
    }
    return outs.back();
  }

  // Class logits from H_t, averaging over time, joints and body slots.
  Var<T> head_logits(Tape<T>& tape, Var<T> h) {
    Var<T> pooled = global_average_pool(h, cfg_.bodies);
    return linear(pooled, tape.param(params_.get("head.weight")), tape.param(params_.get("head.bias")));
  }

  // P_t = softmax(head(H_t)).
  Var<T> predict_stage(Tape<T>& tape, Var<T> h) { return softmax(head_logits(tape, h)); }

  // Incremental evaluation: one call per stage, in order.
  struct StageRunner {
    FgcnModel* model;
    Tape<T>* tape;
    Mode mode;
    StagedOutput<T> out;

    Var<T> step(const Tensor<T>& clip) {
      Var<T> c = tape->constant(clip);
      Var<T> f = model->gconvs_forward(*tape, c, mode);
      Var<T> h_prev = out.hidden.empty() ? f : out.hidden.back();
      Var<T> h = model->fgcb_forward(*tape, h_prev, f, mode);
      Var<T> z = model->head_logits(*tape, h);
      Var<T> p = softmax(z);
      out.features.push_back(f);
      out.hidden.push_back(h);
      out.logits.push_back(z);
      out.probs.push_back(p);
      return p;
    }

    Var<T> finish() {
      if (out.probs.size() != model->cfg_.stages)
        throw ShapeError("expected " + std::to_string(model->cfg_.stages) + " stages, ran " +
                         std::to_string(out.probs.size()));
      std::vector<T> w(model->fusion_.weights.begin(), model->fusion_.weights.end());
      out.fused = weighted_sum<T>(std::span<const Var<T>>(out.probs), std::span<const T>(w));
      return *out.fused;
    }
  };

  StageRunner runner(Tape<T>& tape, Mode mode) { return StageRunner{this, &tape, mode, {}}; }

  StagedOutput<T> forward(Tape<T>& tape, const std::vector<Tensor<T>>& clips, Mode mode) {
    if (clips.size() != cfg_.stages)
      throw ShapeError("expected " + std::to_string(cfg_.stages) + " clips, got " +
                       std::to_string(clips.size()));
    auto run = runner(tape, mode);
    for (const auto& c : clips) run.step(c);
    run.finish();
    return std::move(run.out);
  }

  StagedOutput<T> forward(Tape<T>& tape, const std::vector<const SkeletonSequence*>& batch,
                          const std::vector<StagePlan>& plans, Mode mode) {
    std::vector<Tensor<T>> clips;
    for (std::size_t t = 0; t < cfg_.stages; ++t) clips.push_back(input_clip(batch, plans, t));
    return forward(tape, clips, mode);
  }

  std::vector<NamedTensor> export_state(const std::string& prefix = "") const {
    return export_params(params_, prefix);
  }

  // Loads parameters; rejects checkpoints built for another graph.
  void import_state(const std::vector<NamedTensor>& records, const std::string& prefix = "") {
    const auto expected = params_.get("graph.edges").value;
    import_params(params_, records, prefix);
    if (params_.get("graph.edges").value.data != expected.data) {
      params_.get("graph.edges").value = expected;
      throw ConfigError("checkpoint tensor " + prefix + "graph.edges describes a different topology than '" +
                        topo_.name + "'");
    }
  }

 private:
  Var<T> layer_forward(Tape<T>& tape, Var<T> x, const std::string& name, const LayerConfig& lc,
                       Mode mode) {
    Var<T> g = graph_conv(x, adjacency_, tape.param(params_.get(name + ".gcn.mask")),
                          tape.param(params_.get(name + ".gcn.weight")));
    if (cfg_.norm) {
      NormState<T> st;
      st.running_mean = &params_.get(name + ".norm.running_mean");
      st.running_var = &params_.get(name + ".norm.running_var");
      st.eps = static_cast<T>(cfg_.norm_eps);
      st.update_running = tape.recording();
      g = channel_norm(g, tape.param(params_.get(name + ".norm.gamma")),
                       tape.param(params_.get(name + ".norm.beta")), st, mode);
    }
    g = relu(g);
    Var<T> y = temporal_conv(g, tape.param(params_.get(name + ".tcn.weight")), lc.stride);
    if (lc.residual && lc.in_channels == lc.m && lc.stride == 1) y = add(y, x);
    return relu(y);
  }

  void add_layer(std::mt19937_64& rng, const std::string& name, const LayerConfig& lc) {
    const std::size_t K = adjacency_.shape[0], N = topo_.num_joints;
    params_.add(name + ".gcn.weight",
                random_tensor(rng, {K, lc.m, lc.in_channels}, std::sqrt(2.0 / double(lc.in_channels * K))));
    params_.add(name + ".gcn.mask", Tensor<T>({K, N, N}, T(1)));
    if (cfg_.norm) {
      params_.add(name + ".norm.gamma", Tensor<T>({lc.m}, T(1)));
      params_.add(name + ".norm.beta", Tensor<T>({lc.m}, T(0)));
      params_.add(name + ".norm.running_mean", Tensor<T>({lc.m}, T(0)), false);
      params_.add(name + ".norm.running_var", Tensor<T>({lc.m}, T(1)), false);
    }
    params_.add(name + ".tcn.weight",
                random_tensor(rng, {lc.m, lc.m, lc.k_t}, std::sqrt(2.0 / double(lc.m * lc.k_t))));
  }

  Tensor<T> random_tensor(std::mt19937_64& rng, Shape shape, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    Tensor<T> t(std::move(shape));
    for (auto& x : t.data) x = static_cast<T>(dist(rng));
    return t;
  }

  void build() {
    std::mt19937_64 rng(cfg_.init_seed + (stream_ == Stream::motion ? 1 : 0));
    const auto strides = cfg_.resolved_strides();
    std::size_t in = input_.channels();
    for (std::size_t i = 0; i < cfg_.channels.size(); ++i) {
      LayerConfig lc{in, 3, cfg_.gconvs_k_t, cfg_.channels[i], strides[i], cfg_.residual};
      lc.validate();
      gconvs_.push_back(lc);
      in = lc.m;
    }
    const std::size_t m = cfg_.m();
    for (std::size_t l = 0; l < cfg_.fgcb_layers; ++l) {
      LayerConfig lc{l == 0 ? 2 * m : l * m, 3, cfg_.k_t, m, 1, false};
      lc.validate();
      fgcb_.push_back(lc);
    }
    for (std::size_t i = 0; i < gconvs_.size(); ++i) add_layer(rng, "gconvs." + std::to_string(i), gconvs_[i]);
    for (std::size_t l = 0; l < fgcb_.size(); ++l) add_layer(rng, "fgcb." + std::to_string(l), fgcb_[l]);
    params_.add("head.weight", random_tensor(rng, {classes_, m}, std::sqrt(1.0 / double(m))));
    params_.add("head.bias", Tensor<T>({classes_}, T(0)));
    Tensor<T> edges({topo_.edges.size(), 2});
    for (std::size_t e = 0; e < topo_.edges.size(); ++e) {
      edges.data[2 * e] = static_cast<T>(topo_.edges[e].first);
      edges.data[2 * e + 1] = static_cast<T>(topo_.edges[e].second);
    }
    params_.add("graph.edges", std::move(edges), false);
  }

  ModelConfig cfg_;
  GraphTopology topo_;
  Stream stream_;
  std::size_t classes_;
  InputSpec input_;
  Tensor<T> adjacency_;
  FusionSpec fusion_;
  std::vector<LayerConfig> gconvs_;
  std::vector<LayerConfig> fgcb_;
  ParamStore<T> params_;
};

// ---------------------------------------------------------------------------

struct TwoStreamScore {
  std::vector<double> scores;
  std::size_t label = 0;
};

// alpha * spatial + (1 - alpha) * motion, and its argmax.
inline TwoStreamScore two_stream_predict(const std::vector<double>& spatial,
                                         const std::vector<double>& motion, double alpha) {
  TwoStreamScore s;
  s.scores = two_stream_combine(spatial, motion, alpha);
  s.label = argmax(s.scores);
  return s;
}

}  // namespace fgcn

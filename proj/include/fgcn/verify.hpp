#pragma once

// Oracle suites: finite-difference gradient checks, adjacency partition and
// normalization, permutation equivariance, fusion identities, feedback
// causality and the sampling contract. Each check reports pass/fail with a
// short measurement.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <streambuf>
#include <string>
#include <vector>

#include "fgcn/predict.hpp"
#include "fgcn/synth.hpp"
#include "fgcn/training.hpp"

namespace fgcn {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

inline std::string format_check(const CheckResult& c) {
  return std::string(c.passed ? "PASS " : "FAIL ") + c.name + (c.detail.empty() ? "" : "  " + c.detail);
}

inline bool all_passed(const std::vector<CheckResult>& v) {
  return std::all_of(v.begin(), v.end(), [](const CheckResult& c) { return c.passed; });
}

namespace detail {

inline std::string sci(double x) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << x;
  return os.str();
}

inline Tensor<double> random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(std::move(shape));
  for (auto& x : t.data) x = u(rng);
  return t;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Gradient checks

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  double floor = 1e-6;  // denominator floor of the relative error
};

// Relative error |a - n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// `loss` builds a scalar on a fresh tape from the trainable entries of
// `store`. Every trainable element is perturbed by ±step.
inline CheckResult gradcheck(const std::string& name, ParamStore<double>& store,
                             const std::function<Var<double>(Tape<double>&)>& loss,
                             const GradcheckOptions& opt = {}) {
  store.zero_grad();
  {
    Tape<double> tape;
    tape.backward(loss(tape));
  }
  double worst = 0, largest = 0;
  std::size_t checked = 0;
  std::string worst_at;
  auto eval = [&]() {
    Tape<double> tape(false);
    return loss(tape).value()[0];
  };
  for (std::size_t p = 0; p < store.size(); ++p) {
    auto& prm = store[p];
    if (!prm.trainable) continue;
    for (std::size_t i = 0; i < prm.value.size(); ++i) {
      const double saved = prm.value.data[i];
      prm.value.data[i] = saved + opt.step;
      const double up = eval();
      prm.value.data[i] = saved - opt.step;
      const double down = eval();
      prm.value.data[i] = saved;
      const double numeric = (up - down) / (2 * opt.step);
      const double err = relative_error(prm.grad.data[i], numeric, opt.floor);
      ++checked;
      largest = std::max(largest, std::abs(prm.grad.data[i]));
      if (err > worst) {
        worst = err;
        worst_at = prm.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  std::string detail = "params=" + std::to_string(checked) + " max_rel_err=" + detail::sci(worst);
  if (!worst_at.empty()) detail += " at " + worst_at;
  detail += " max_abs_grad=" + detail::sci(largest);
  return {name, checked > 0 && largest > 0 && worst < opt.tolerance, detail};
}

// Toy model used by the gradient, equivariance and causality suites.
inline ModelConfig toy_model_config(std::string topology, std::size_t stages, std::size_t clip_len,
                                    std::vector<std::size_t> channels) {
  ModelConfig c;
  c.topology = std::move(topology);
  c.stages = stages;
  c.clip_len = clip_len;
  c.channels = std::move(channels);
  c.gconvs_k_t = 3;
  c.k_t = 3;
  c.fgcb_layers = 2;
  c.bodies = 1;
  return c;
}

inline SkeletonSequence random_sequence(std::mt19937_64& rng, std::size_t len, std::size_t bodies,
                                        std::size_t joints, std::size_t classes, std::size_t label) {
  SkeletonSequence s(len, bodies, joints);
  s.num_classes = classes;
  s.label = label;
  s.id = "rand";
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& x : s.coords) x = u(rng);
  return s;
}

inline std::vector<CheckResult> verify_gradcheck(const GradcheckOptions& opt = {}) {
  std::vector<CheckResult> out;
  std::mt19937_64 rng(2024);
  using T = double;

  auto op_check = [&](const std::string& name, std::vector<Tensor<T>> inputs,
                      const std::function<Var<T>(Tape<T>&, std::vector<Var<T>>&)>& f) {
    ParamStore<T> store;
    for (std::size_t i = 0; i < inputs.size(); ++i) store.add("in" + std::to_string(i), inputs[i]);
    // Contract non-scalar outputs with a fixed random tensor.
    std::optional<Tensor<T>> probe;
    auto loss = [&](Tape<T>& tape) {
      std::vector<Var<T>> vars;
      for (std::size_t i = 0; i < store.size(); ++i) vars.push_back(tape.param(store[i]));
      Var<T> y = f(tape, vars);
      if (y.size() == 1) return y;
      if (!probe) probe = detail::random_tensor(rng, y.shape());
      return sum(mul(y, tape.constant(*probe)));
    };
    out.push_back(gradcheck("gradcheck " + name, store, loss, opt));
  };

  auto R = [&](Shape s, double lo = -1, double hi = 1) { return detail::random_tensor(rng, std::move(s), lo, hi); };

  op_check("matmul", {R({4, 5}), R({5, 3})}, [](Tape<T>&, auto& v) { return matmul(v[0], v[1]); });
  op_check("add", {R({2, 3}), R({2, 3})}, [](Tape<T>&, auto& v) { return add(v[0], v[1]); });
  op_check("mul", {R({2, 3}), R({2, 3})}, [](Tape<T>&, auto& v) { return mul(v[0], v[1]); });
  op_check("scale", {R({2, 3})}, [](Tape<T>&, auto& v) { return scale(v[0], 2.5); });
  {
    // Keep inputs away from the kink at zero.
    auto x = R({2, 3, 4, 2});
    for (auto& e : x.data) e = e < 0 ? e - 0.1 : e + 0.1;
    op_check("relu", {x}, [](Tape<T>&, auto& v) { return relu(v[0]); });
  }
  op_check("concat_channels", {R({2, 2, 3, 4}), R({2, 3, 3, 4})},
           [](Tape<T>&, auto& v) { return concat_channels<T>({v[0], v[1]}); });
  op_check("temporal_conv stride 1", {R({2, 3, 7, 4}), R({2, 3, 3})},
           [](Tape<T>&, auto& v) { return temporal_conv(v[0], v[1], 1); });
  op_check("temporal_conv stride 2", {R({2, 3, 7, 4}), R({2, 3, 5})},
           [](Tape<T>&, auto& v) { return temporal_conv(v[0], v[1], 2); });
  {
    const auto adj = normalize<T>(partition_spatial(path_topology(3, 1)));
    op_check("graph_conv", {R({2, 2, 3, 3}), R({3, 3, 3}, 0.5, 1.5), R({3, 4, 2})},
             [adj](Tape<T>&, auto& v) { return graph_conv(v[0], adj, v[1], v[2]); });
  }
  op_check("channel_norm train", {R({2, 3, 4, 3}), R({3}, 0.5, 1.5), R({3})}, [](Tape<T>&, auto& v) {
    return channel_norm(v[0], v[1], v[2], NormState<T>{}, Mode::train);
  });
  op_check("channel_norm eval", {R({2, 3, 4, 3}), R({3}, 0.5, 1.5), R({3})}, [](Tape<T>&, auto& v) {
    return channel_norm(v[0], v[1], v[2], NormState<T>{}, Mode::eval);
  });
  op_check("global_average_pool", {R({4, 3, 2, 5})}, [](Tape<T>&, auto& v) { return global_average_pool(v[0], 2); });
  op_check("linear", {R({3, 4}), R({2, 4}), R({2})}, [](Tape<T>&, auto& v) { return linear(v[0], v[1], v[2]); });
  op_check("softmax", {R({3, 4})}, [](Tape<T>&, auto& v) { return softmax(v[0]); });
  op_check("weighted_sum", {R({2, 3}), R({2, 3}), R({2, 3})}, [](Tape<T>&, auto& v) {
    const std::vector<T> w{0.2, 0.3, 0.5};
    return weighted_sum<T>(std::span<const Var<T>>(v), std::span<const T>(w));
  });
  op_check("cross_entropy", {R({3, 4})}, [](Tape<T>&, auto& v) {
    const std::vector<std::size_t> y{0, 3, 1};
    return cross_entropy<T>(softmax(v[0]), std::span<const std::size_t>(y));
  });

  // Full network: 3-joint path, T=2 stages, clip_len=4, C=2 classes, B=2,
  // channel plan 4-4-8, loss on the fused prediction.
  for (bool norm : {true, false}) {
    ModelConfig cfg = toy_model_config("path3:1", 2, 4, {4, 4, 8});
    cfg.norm = norm;
    FgcnModel<T> model(cfg, resolve_topology(cfg.topology), Stream::spatial, 2);
    // Move masks off their all-ones initialization so M_k gradients are generic.
    for (std::size_t i = 0; i < model.params().size(); ++i) {
      auto& p = model.params()[i];
      if (p.name.ends_with(".gcn.mask"))
        for (auto& x : p.value.data) x = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
    }
    std::vector<Tensor<T>> clips{R({2, 6, 4, 3}), R({2, 6, 4, 3})};
    // Without batch statistics activations grow quickly with depth and across
    // stages; the network is positively homogeneous in its input, so a small
    // input keeps the softmax out of saturation.
    if (!norm)
      for (auto& c : clips)
        for (auto& x : c.data) x *= 1e-7;
    const std::vector<std::size_t> labels{0, 1};
    auto loss = [&](Tape<T>& tape) {
      auto res = model.forward(tape, clips, Mode::train);
      return cross_entropy<T>(*res.fused, std::span<const std::size_t>(labels));
    };
    out.push_back(gradcheck(std::string("gradcheck fgcn forward") + (norm ? "" : " (no norm)"),
                            model.params(), loss, opt));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Topology

inline std::vector<CheckResult> verify_topology() {
  std::vector<CheckResult> out;
  const double eps = default_degree_epsilon;
  for (const auto& g : {path_topology(3, 1), star_topology(5), ntu_rgbd_topology(), nw_ucla_topology()}) {
    const auto p = partition_spatial(g);
    const auto a = g.adjacency();
    const std::size_t n = g.num_joints;
    bool complete = true, dual = true;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const int s = p.at(root, i, j) + p.at(centripetal, i, j) + p.at(centrifugal, i, j);
        complete = complete && s == a[i * n + j] + (i == j ? 1 : 0);
        dual = dual && p.at(centripetal, i, j) == p.at(centrifugal, j, i);
      }
    out.push_back({"partition completeness " + g.name, complete, "sum_k A_k == A + I"});
    out.push_back({"transpose duality " + g.name, dual, "A_centripetal^T == A_centrifugal"});
  }

  // Hand-computed normalized adjacency, Λ_ii = Σ_j A_ij + ε.
  auto compare = [&](const std::string& name, const Tensor<double>& got, const std::vector<double>& want) {
    double err = 0;
    for (std::size_t i = 0; i < want.size(); ++i) err = std::max(err, std::abs(got.data[i] - want[i]));
    out.push_back({"normalized adjacency " + name, err <= 1e-12, "max_abs_err=" + detail::sci(err)});
  };
  {
    // 0 - 1 - 2, center 1.
    const double r = 1 / (1 + eps);
    const double in = 1 / std::sqrt((1 + eps) * eps);
    const double outw = 1 / std::sqrt((2 + eps) * eps);
    compare("path3", normalize<double>(partition_spatial(path_topology(3, 1)), eps),
            {r, 0, 0, 0, r, 0, 0, 0, r,           //
             0, in, 0, 0, 0, 0, 0, in, 0,         //
             0, 0, 0, outw, 0, outw, 0, 0, 0});
  }
  {
    // Hub 0 with leaves 1..4.
    const double r = 1 / (1 + eps);
    const double in = 1 / std::sqrt((1 + eps) * eps);
    const double outw = 1 / std::sqrt((4 + eps) * eps);
    std::vector<double> want(3 * 25, 0.0);
    for (std::size_t i = 0; i < 5; ++i) want[i * 5 + i] = r;
    for (std::size_t i = 1; i < 5; ++i) {
      want[25 + i * 5] = in;
      want[50 + i] = outw;
    }
    compare("star5", normalize<double>(partition_spatial(star_topology(5)), eps), want);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Permutation equivariance

inline SkeletonSequence permute_joints(const SkeletonSequence& s, const std::vector<std::size_t>& perm) {
  SkeletonSequence out = s;
  for (std::size_t t = 0; t < s.frames; ++t)
    for (std::size_t m = 0; m < s.bodies; ++m)
      for (std::size_t j = 0; j < s.joints; ++j)
        for (std::size_t c = 0; c < 3; ++c) out.at(t, m, perm[j], c) = s.at(t, m, j, c);
  return out;
}

inline std::vector<CheckResult> verify_equivariance(std::size_t permutations = 20) {
  std::vector<CheckResult> out;
  std::mt19937_64 rng(99);
  ModelConfig cfg = toy_model_config("ntu-rgbd", 3, 8, {8, 8, 16});
  const GraphTopology g = resolve_topology(cfg.topology);
  std::vector<SkeletonSequence> seqs;
  for (std::size_t b = 0; b < 2; ++b) seqs.push_back(random_sequence(rng, 30, 1, g.num_joints, 3, b));
  for (Stream stream : {Stream::spatial, Stream::motion}) {
    FgcnModel<double> base(cfg, g, stream, 3);
    std::vector<const SkeletonSequence*> batch{&seqs[0], &seqs[1]};
    const auto plans = eval_plans(batch, cfg);
    Tape<double> tape(false);
    const auto ref = base.forward(tape, batch, plans, Mode::train);
    double worst = 0;
    for (std::size_t r = 0; r < permutations; ++r) {
      std::vector<std::size_t> perm(g.num_joints);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      std::shuffle(perm.begin(), perm.end(), rng);
      FgcnModel<double> model(cfg, permute_topology(g, perm), stream, 3);
      std::vector<SkeletonSequence> ps{permute_joints(seqs[0], perm), permute_joints(seqs[1], perm)};
      std::vector<const SkeletonSequence*> pb{&ps[0], &ps[1]};
      Tape<double> t2(false);
      const auto res = model.forward(t2, pb, plans, Mode::train);
      for (std::size_t s = 0; s < cfg.stages; ++s)
        for (std::size_t i = 0; i < res.probs[s].size(); ++i)
          worst = std::max(worst, std::abs(res.probs[s].value()[i] - ref.probs[s].value()[i]));
    }
    out.push_back({"permutation equivariance " + to_string(stream), worst <= 1e-10,
                   std::to_string(permutations) + " permutations max_abs_diff=" + detail::sci(worst)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fusion

inline std::vector<double> random_distribution(std::mt19937_64& rng, std::size_t C) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(C);
  double s = 0;
  for (auto& x : p) s += (x = e(rng));
  for (auto& x : p) x /= s;
  return p;
}

inline std::vector<CheckResult> verify_fusion(std::size_t trials = 1000) {
  std::vector<CheckResult> out;
  const auto w1 = make_fusion("weight-fusion-1", 5);
  const auto w2 = make_fusion("weight-fusion-2", 5);
  const auto last = make_fusion("last-win-all", 5);
  const auto avg = make_fusion("average", 5);
  out.push_back({"weights last-win-all", last.weights == std::vector<double>{0, 0, 0, 0, 1}, "0,0,0,0,1"});
  out.push_back({"weights average", avg.weights == std::vector<double>(5, 0.2), "0.2 x5"});
  out.push_back({"weights weight-fusion-1", w1.weights == std::vector<double>{0.05, 0.05, 0.1, 0.2, 0.6},
                 "0.05,0.05,0.1,0.2,0.6"});
  out.push_back({"weights weight-fusion-2", w2.weights == std::vector<double>{0.1, 0.15, 0.2, 0.25, 0.3},
                 "0.1,0.15,0.2,0.25,0.3"});

  std::mt19937_64 rng(7);
  double fixed_err = 0, convex_err = 0, mass_err = 0;
  bool last_exact = true;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const std::size_t C = 2 + trial % 9;
    std::vector<std::vector<double>> ps;
    for (std::size_t t = 0; t < 5; ++t) ps.push_back(random_distribution(rng, C));
    const std::vector<std::vector<double>> same(5, ps[0]);
    for (const auto* spec : {&last, &avg, &w1, &w2}) {
      const auto fixed = fuse(same, *spec);
      const auto f = fuse(ps, *spec);
      double mass = 0;
      for (std::size_t c = 0; c < C; ++c) {
        fixed_err = std::max(fixed_err, std::abs(fixed[c] - ps[0][c]));
        double lo = ps[0][c], hi = ps[0][c];
        for (const auto& p : ps) lo = std::min(lo, p[c]), hi = std::max(hi, p[c]);
        convex_err = std::max({convex_err, lo - f[c], f[c] - hi});
        mass += f[c];
      }
      mass_err = std::max(mass_err, std::abs(mass - 1));
    }
    last_exact = last_exact && fuse(ps, last) == ps.back();
  }
  out.push_back({"identical-stage fixed point", fixed_err <= 1e-12, "max_abs_err=" + detail::sci(fixed_err)});
  out.push_back({"last-win-all equals P_T", last_exact, "bit-exact over " + std::to_string(trials) + " sets"});
  out.push_back({"convexity bounds", convex_err <= 1e-12,
                 std::to_string(trials) + " sets max_violation=" + detail::sci(std::max(0.0, convex_err))});
  out.push_back({"fused mass", mass_err <= 1e-12, "max |sum - 1|=" + detail::sci(mass_err)});
  bool rejects = false;
  try {
    make_fusion("weighted", 3, {0.5, 0.5, 0.1});
  } catch (const ConfigError&) {
    rejects = true;
  }
  out.push_back({"rejects weights not summing to one", rejects, ""});
  return out;
}

// ---------------------------------------------------------------------------
// Feedback causality

// Serves a string one byte per underflow and records how far it has been read.
class CountingStreambuf : public std::streambuf {
 public:
  explicit CountingStreambuf(std::string data) : data_(std::move(data)) {}
  std::size_t consumed() const { return pos_; }

 protected:
  int_type underflow() override {
    if (gptr() && gptr() < egptr()) return traits_type::to_int_type(*gptr());
    if (pos_ >= data_.size()) return traits_type::eof();
    ch_ = data_[pos_++];
    setg(&ch_, &ch_, &ch_ + 1);
    return traits_type::to_int_type(ch_);
  }

 private:
  std::string data_;
  std::size_t pos_ = 0;
  char ch_ = 0;
};

inline std::vector<CheckResult> verify_causality() {
  std::vector<CheckResult> out;
  std::mt19937_64 rng(5);
  ModelConfig cfg = toy_model_config("ntu-rgbd", 5, 8, {8, 8, 16});
  const GraphTopology g = resolve_topology(cfg.topology);
  const std::size_t T = cfg.stages;

  // Perturbing clip t+1 leaves P_1..P_t bit-identical.
  for (Mode mode : {Mode::eval, Mode::train}) {
    FgcnModel<double> model(cfg, g, Stream::spatial, 4);
    std::vector<Tensor<double>> clips;
    for (std::size_t t = 0; t < T; ++t) clips.push_back(detail::random_tensor(rng, {2, 6, 8, g.num_joints}));
    Tape<double> tape(false);
    const auto ref = model.forward(tape, clips, mode);
    bool ok = true;
    for (std::size_t t = 0; t + 1 < T; ++t) {
      auto pert = clips;
      for (std::size_t s = t + 1; s < T; ++s)
        for (auto& x : pert[s].data) x += std::normal_distribution<double>(0, 1)(rng);
      Tape<double> t2(false);
      const auto res = model.forward(t2, pert, mode);
      for (std::size_t s = 0; s <= t; ++s) ok = ok && res.probs[s].value() == ref.probs[s].value();
      ok = ok && res.logits[t + 1].value() != ref.logits[t + 1].value();
    }
    out.push_back({std::string("feedback causality ") + (mode == Mode::eval ? "eval" : "train"), ok,
                   "P_1..P_t bit-identical under perturbation of clips t+1..T"});
  }

  // Streaming: P_t is emitted before frames after its clip are read.
  {
    cfg.bodies = 1;
    Network<double> net(cfg, StreamSelection::two, 4);
    SkeletonSequence seq = random_sequence(rng, 100, 1, g.num_joints, 4, 2);
    std::ostringstream os;
    write_sequence(os, seq);
    const std::string text = os.str();
    // Byte offset just past the row of each frame (one body per frame).
    std::vector<std::size_t> row_end;
    for (std::size_t i = text.find('\n'); i != std::string::npos; i = text.find('\n', i + 1)) row_end.push_back(i + 1);
    CountingStreambuf buf(text);
    std::istream in(&buf);
    bool ok = true;
    std::size_t events = 0;
    const auto res = predict_streaming<double>(net, in, "<stream>", PreprocessOptions{true, false, g.center},
                                               [&](const StageEvent& e) {
                                                 ++events;
                                                 // row_end[0] is the header line.
                                                 ok = ok && buf.consumed() <= row_end[e.last_frame_used + 1];
                                                 ok = ok && e.frames_read == e.last_frame_used + 1;
                                               });
    // Compare against the batch path on the fully loaded sequence.
    const SkeletonSequence full = preprocess(seq, PreprocessOptions{true, false, g.center});
    const std::vector<const SkeletonSequence*> batch{&full};
    const auto pred = predict_batch(net, batch, eval_plans(batch, cfg));
    double diff = 0;
    for (std::size_t c = 0; c < 4; ++c) diff = std::max(diff, std::abs(pred.fused_scores[0][c] - res.fused[c]));
    out.push_back({"streaming emission order", ok && events == T,
                   std::to_string(events) + " stage records before later frames were read"});
    out.push_back({"streaming matches batch evaluation", diff == 0.0, "max_abs_diff=" + detail::sci(diff)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sampling contract

inline std::vector<CheckResult> verify_sampling(std::size_t draws = 10000) {
  std::vector<CheckResult> out;
  {
    const auto p = plan_stages(320, 5, 64, SamplingMode::eval_deterministic);
    out.push_back({"exact-fit offsets", p.offsets == std::vector<std::size_t>{0, 64, 128, 192, 256},
                   "len=320 T=5 clip_len=64"});
  }
  {
    // len=100, T=5: stages of 20 frames, clip 8, slack 12 -> 13 offsets each.
    const std::size_t len = 100, T = 5, clip = 8;
    std::vector<std::vector<std::size_t>> counts(T, std::vector<std::size_t>(13, 0));
    for (std::size_t d = 0; d < draws; ++d) {
      const auto p = plan_stages(len, T, clip, SamplingMode::train_random, mix_seed(d));
      for (std::size_t t = 0; t < T; ++t) ++counts[t][p.offsets[t] - p.boundaries[t].begin];
    }
    const double pr = 1.0 / 13.0, mean = draws * pr, sigma = std::sqrt(draws * pr * (1 - pr));
    double worst = 0;
    for (const auto& row : counts)
      for (std::size_t c : row) worst = std::max(worst, std::abs(static_cast<double>(c) - mean) / sigma);
    out.push_back({"train offsets uniform", worst < 5.0,
                   std::to_string(draws) + " draws max_dev=" + detail::sci(worst) + " sigma"});
  }
  {
    bool ok = true;
    std::string what;
    try {
      SkeletonSequence s(1, 1, 3);
      for (auto mode : {SamplingMode::eval_deterministic, SamplingMode::train_random}) {
        const auto p = plan_stages(1, 5, 64, mode, 3);
        for (std::size_t t = 0; t < 5; ++t) {
          const auto c = extract_clip(s, p, t);
          ok = ok && c.frames == 64;
          for (std::size_t f : p.clip_frames(t)) ok = ok && f == 0;
        }
      }
    } catch (const std::exception& e) {
      ok = false;
      what = e.what();
    }
    out.push_back({"single-frame sequence cycles", ok, what});
  }
  {
    bool ok = true;
    for (std::size_t len : {3, 7, 33, 64, 321, 1000})
      for (auto mode : {SamplingMode::eval_deterministic, SamplingMode::train_random}) {
        const auto p = plan_stages(len, 5, 16, mode, len);
        for (std::size_t t = 0; t < 5; ++t) {
          ok = ok && p.boundaries[t].length() >= 1;
          for (std::size_t f : p.clip_frames(t)) ok = ok && f < len;
          if (t) ok = ok && p.boundaries[t].begin == p.boundaries[t - 1].end;
        }
        ok = ok && p.boundaries.back().end == p.virtual_length;
      }
    out.push_back({"stages partition the sequence", ok, "contiguous cover, frames in range"});
  }
  return out;
}

inline const std::vector<std::string>& verify_suites() {
  static const std::vector<std::string> names{"gradcheck", "topology", "equivariance", "fusion", "causality", "sampling"};
  return names;
}

inline std::vector<CheckResult> run_verify_suite(const std::string& suite) {
  if (suite == "gradcheck") return verify_gradcheck();
  if (suite == "topology") return verify_topology();
  if (suite == "equivariance") return verify_equivariance();
  if (suite == "fusion") return verify_fusion();
  if (suite == "causality") return verify_causality();
  if (suite == "sampling") return verify_sampling();
  if (suite == "all") {
    std::vector<CheckResult> all;
    for (const auto& s : verify_suites()) {
      auto part = run_verify_suite(s);
      all.insert(all.end(), part.begin(), part.end());
    }
    return all;
  }
  throw ConfigError("unknown verify suite '" + suite + "'");
}

}  // namespace fgcn

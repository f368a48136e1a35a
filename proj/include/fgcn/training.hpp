#pragma once

// End-to-end training on the fused prediction, evaluation with per-stage
// (early prediction) accuracies, and the stage-count / clip-length sweep.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <chrono>
#include <functional>
#include <memory>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fgcn/checkpoint.hpp"
#include "fgcn/model.hpp"
#include "fgcn/optim.hpp"
#include "fgcn/sampling.hpp"
#include "fgcn/skeleton.hpp"

namespace fgcn {

enum class StreamSelection { spatial, motion, two };

inline StreamSelection parse_streams(const std::string& s) {
  if (s == "spatial") return StreamSelection::spatial;
  if (s == "motion") return StreamSelection::motion;
  if (s == "two" || s == "two-stream" || s == "both") return StreamSelection::two;
  throw ConfigError("unknown streams '" + s + "' (expected spatial, motion or two)");
}

struct TrainConfig {
  std::size_t batch_size = 32;
  double lr = 0.1;
  double momentum = 0.9;
  std::vector<int> lr_drops{40, 60};
  double lr_factor = 10.0;
  int epochs = 80;
  std::uint64_t seed = 1;
  SamplingMode sampling = SamplingMode::train_random;
  double weight_decay = 0.0;
  double grad_clip = 0.0;
  int checkpoint_every = 0;
  int eval_every = 0;

  StepSchedule schedule() const { return {lr, lr_drops, lr_factor}; }

  void validate() const {
    if (!(lr > 0)) throw ConfigError("lr must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (!(lr_factor > 0)) throw ConfigError("lr_factor must be positive");
    for (std::size_t i = 0; i < lr_drops.size(); ++i) {
      if (i && lr_drops[i] <= lr_drops[i - 1])
        throw ConfigError("lr_drops must be strictly increasing");
      if (lr_drops[i] >= epochs)
        throw ConfigError("lr drop epoch " + std::to_string(lr_drops[i]) +
                          " is not before the final epoch " + std::to_string(epochs));
    }
  }
};

// One model per stream; scores are combined as alpha * spatial +
// (1 - alpha) * motion when both are present.
template <typename T = double>
class Network {
 public:
  Network(const ModelConfig& cfg, StreamSelection sel, std::size_t num_classes)
      : cfg_(cfg), selection_(sel) {
    const GraphTopology topo = resolve_topology(cfg.topology);
    if (sel != StreamSelection::motion)
      models_.push_back(std::make_unique<FgcnModel<T>>(cfg, topo, Stream::spatial, num_classes));
    if (sel != StreamSelection::spatial)
      models_.push_back(std::make_unique<FgcnModel<T>>(cfg, topo, Stream::motion, num_classes));
  }

  const ModelConfig& config() const { return cfg_; }
  StreamSelection selection() const { return selection_; }
  std::size_t size() const { return models_.size(); }
  FgcnModel<T>& stream(std::size_t i) { return *models_[i]; }
  const FgcnModel<T>& stream(std::size_t i) const { return *models_[i]; }
  std::size_t num_classes() const { return models_[0]->num_classes(); }
  std::size_t stages() const { return cfg_.stages; }
  bool uses_motion() const { return selection_ != StreamSelection::spatial; }

  std::vector<double> stream_weights() const {
    if (models_.size() == 1) return {1.0};
    return {cfg_.alpha, 1.0 - cfg_.alpha};
  }

  void set_fusion(const FusionSpec& f) {
    for (auto& m : models_) m->set_fusion(f);
  }

  std::string prefix(std::size_t i) const { return to_string(models_[i]->stream()) + "."; }

  std::vector<NamedTensor> export_state() const {
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < models_.size(); ++i) {
      auto part = models_[i]->export_state(prefix(i));
      out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    return out;
  }

  void import_state(const std::vector<NamedTensor>& records) {
    for (std::size_t i = 0; i < models_.size(); ++i) models_[i]->import_state(records, prefix(i));
  }

  void save(const std::string& path) const { save_checkpoint(path, export_state()); }
  void load(const std::string& path) { import_state(load_checkpoint(path)); }

 private:
  ModelConfig cfg_;
  StreamSelection selection_;
  std::vector<std::unique_ptr<FgcnModel<T>>> models_;
};

// Per-sample predictions of a batch: combined across streams, per stage and
// fused.
struct BatchPrediction {
  std::vector<std::vector<std::vector<double>>> stage_scores;  // [sample][stage][class]
  std::vector<std::vector<double>> fused_scores;               // [sample][class]
};

inline std::vector<double> row_of(const std::vector<double>& m, std::size_t row, std::size_t cols) {
  return std::vector<double>(m.begin() + static_cast<std::ptrdiff_t>(row * cols),
                             m.begin() + static_cast<std::ptrdiff_t>((row + 1) * cols));
}

template <typename T>
BatchPrediction predict_batch(Network<T>& net, const std::vector<const SkeletonSequence*>& batch,
                              const std::vector<StagePlan>& plans) {
  const std::size_t B = batch.size(), C = net.num_classes(), S = net.stages();
  BatchPrediction out;
  out.stage_scores.assign(B, std::vector<std::vector<double>>(S, std::vector<double>(C, 0.0)));
  out.fused_scores.assign(B, std::vector<double>(C, 0.0));
  const auto w = net.stream_weights();
  for (std::size_t s = 0; s < net.size(); ++s) {
    Tape<T> tape(false);
    auto res = net.stream(s).forward(tape, batch, plans, Mode::eval);
    for (std::size_t t = 0; t < S; ++t) {
      const auto& p = res.probs[t].value();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
          out.stage_scores[b][t][c] += w[s] * static_cast<double>(p[b * C + c]);
    }
    const auto& f = res.fused->value();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c) out.fused_scores[b][c] += w[s] * static_cast<double>(f[b * C + c]);
  }
  return out;
}

// -log(max(P_S[y], clamp)) for one video-level distribution.
inline double cross_entropy_loss(const std::vector<double>& p, std::size_t y, double clamp = 1e-12) {
  if (y >= p.size())
    throw ShapeError("label " + std::to_string(y) + " outside [0, " + std::to_string(p.size()) + ")");
  return -std::log(std::max(p[y], clamp));
}

struct EvalResult {
  double fused_accuracy = 0;
  std::vector<double> stage_accuracy;
  std::vector<std::size_t> predictions;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::size_t samples = 0;
};

inline std::vector<StagePlan> eval_plans(const std::vector<const SkeletonSequence*>& batch,
                                         const ModelConfig& cfg) {
  std::vector<StagePlan> plans;
  for (const auto* s : batch)
    plans.push_back(plan_stages(s->frames, cfg.stages, cfg.clip_len, SamplingMode::eval_deterministic));
  return plans;
}

// Top-1 accuracy of P_S and of every P_t, with deterministic stage-centered
// clips.
template <typename T>
EvalResult evaluate(Network<T>& net, const Dataset& data, std::size_t batch_size = 32) {
  const std::size_t C = net.num_classes(), S = net.stages();
  EvalResult r;
  r.samples = data.size();
  r.stage_accuracy.assign(S, 0.0);
  r.confusion.assign(C, std::vector<std::size_t>(C, 0));
  std::size_t fused_hits = 0;
  std::vector<std::size_t> stage_hits(S, 0);
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::vector<const SkeletonSequence*> batch;
    for (std::size_t i = start; i < std::min(start + batch_size, data.size()); ++i)
      batch.push_back(&data.samples[i]);
    const auto pred = predict_batch(net, batch, eval_plans(batch, net.config()));
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const std::size_t y = batch[b]->label;
      const std::size_t yhat = argmax(pred.fused_scores[b]);
      r.predictions.push_back(yhat);
      if (y < C && yhat < C) ++r.confusion[y][yhat];
      fused_hits += yhat == y;
      for (std::size_t t = 0; t < S; ++t) stage_hits[t] += argmax(pred.stage_scores[b][t]) == y;
    }
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, data.size()));
  r.fused_accuracy = static_cast<double>(fused_hits) / n;
  for (std::size_t t = 0; t < S; ++t) r.stage_accuracy[t] = static_cast<double>(stage_hits[t]) / n;
  return r;
}

struct EpochRecord {
  int epoch = 0;
  double lr = 0;
  double loss = 0;
  double train_accuracy = 0;
  double eval_accuracy = -1;  // negative when not evaluated this epoch
  double seconds = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  EvalResult train_eval;
  EvalResult test_eval;
  bool has_test = false;
  std::string checkpoint;
  std::size_t parameters = 0;
};

namespace detail {

inline std::string fmt(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

}  // namespace detail

// key=value line for one epoch.
inline std::string format_epoch(const EpochRecord& e, bool with_time = true) {
  std::ostringstream os;
  os << "epoch=" << e.epoch << " lr=" << detail::fmt(e.lr) << " loss=" << detail::fmt(e.loss)
     << " train_acc=" << detail::fmt(e.train_accuracy);
  if (e.eval_accuracy >= 0) os << " eval_acc=" << detail::fmt(e.eval_accuracy);
  if (with_time) os << " seconds=" << detail::fmt(e.seconds);
  return os.str();
}

inline std::string format_eval(const EvalResult& r, const std::string& split) {
  std::ostringstream os;
  os << split << "_samples=" << r.samples << '\n';
  os << split << "_fused_acc=" << detail::fmt(r.fused_accuracy) << '\n';
  for (std::size_t t = 0; t < r.stage_accuracy.size(); ++t)
    os << split << "_stage" << (t + 1) << "_acc=" << detail::fmt(r.stage_accuracy[t]) << '\n';
  return os.str();
}

// Deterministic summary: no timings, so identical runs give identical bytes.
inline std::string format_summary(const TrainReport& rep) {
  std::ostringstream os;
  os << "epochs=" << rep.epochs.size() << '\n';
  os << "parameters=" << rep.parameters << '\n';
  if (!rep.epochs.empty()) {
    os << "final_lr=" << detail::fmt(rep.epochs.back().lr) << '\n';
    os << "final_loss=" << detail::fmt(rep.epochs.back().loss) << '\n';
  }
  os << format_eval(rep.train_eval, "train");
  if (rep.has_test) os << format_eval(rep.test_eval, "test");
  return os.str();
}

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(int epoch)> on_checkpoint;
};

template <typename T>
TrainReport train(Network<T>& net, const Dataset& train_set, const Dataset* test_set,
                  const TrainConfig& tc, const TrainHooks& hooks = {}) {
  tc.validate();
  if (train_set.samples.empty()) throw DataError("training set is empty");
  if (train_set.num_classes != net.num_classes())
    throw DataError("dataset has " + std::to_string(train_set.num_classes) +
                    " classes but the network predicts " + std::to_string(net.num_classes()));
  const ModelConfig& cfg = net.config();
  const StepSchedule sched = tc.schedule();
  const auto weights = net.stream_weights();
  const std::size_t C = net.num_classes();
  TrainReport rep;
  for (std::size_t s = 0; s < net.size(); ++s) rep.parameters += net.stream(s).params().trainable_count();

  std::vector<std::size_t> order(train_set.size());
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = sched.lr_at(epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(mix_seed(tc.seed * 1000003ULL + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0;
    std::size_t hits = 0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      std::vector<const SkeletonSequence*> batch;
      std::vector<std::size_t> labels;
      std::vector<StagePlan> plans;
      for (std::size_t i = start; i < std::min(start + tc.batch_size, order.size()); ++i) {
        const auto& s = train_set.samples[order[i]];
        batch.push_back(&s);
        labels.push_back(s.label);
        const std::uint64_t seed = mix_seed(mix_seed(tc.seed) ^ (static_cast<std::uint64_t>(epoch) << 32) ^ order[i]);
        plans.push_back(plan_stages(s.frames, cfg.stages, cfg.clip_len, tc.sampling, seed));
      }
      std::vector<double> combined(batch.size() * C, 0.0);
      double batch_loss = 0;
      for (std::size_t si = 0; si < net.size(); ++si) {
        auto& model = net.stream(si);
        model.params().zero_grad();
        Tape<T> tape;
        auto out = model.forward(tape, batch, plans, Mode::train);
        Var<T> loss = cross_entropy<T>(*out.fused, std::span<const std::size_t>(labels));
        const double lv = static_cast<double>(loss.value()[0]);
        if (!std::isfinite(lv))
          throw NumericalError("non-finite loss in epoch " + std::to_string(epoch) + " (" +
                               to_string(model.stream()) + " stream)");
        const auto& pf = out.fused->value();
        for (std::size_t i = 0; i < combined.size(); ++i) combined[i] += weights[si] * static_cast<double>(pf[i]);
        tape.backward(loss);
        sgd_momentum_step(model.params(), SgdOptions{rec.lr, tc.momentum, tc.weight_decay, tc.grad_clip});
        batch_loss += lv / static_cast<double>(net.size());
      }
      loss_sum += batch_loss * static_cast<double>(batch.size());
      for (std::size_t b = 0; b < batch.size(); ++b)
        hits += argmax(row_of(combined, b, C)) == labels[b];
    }
    rec.loss = loss_sum / static_cast<double>(train_set.size());
    rec.train_accuracy = static_cast<double>(hits) / static_cast<double>(train_set.size());
    if (test_set && tc.eval_every > 0 && epoch % tc.eval_every == 0)
      rec.eval_accuracy = evaluate(net, *test_set, tc.batch_size).fused_accuracy;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rep.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (hooks.on_checkpoint && tc.checkpoint_every > 0 && epoch % tc.checkpoint_every == 0)
      hooks.on_checkpoint(epoch);
  }
  rep.train_eval = evaluate(net, train_set, tc.batch_size);
  if (test_set) {
    rep.test_eval = evaluate(net, *test_set, tc.batch_size);
    rep.has_test = true;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Ablation sweep over the stage count or the clip length.

struct AblationRow {
  std::size_t value = 0;
  double final_loss = 0;
  EvalResult eval;
};

struct AblationResult {
  std::string key;
  std::vector<AblationRow> rows;
};

template <typename T = double>
AblationResult run_ablation(const std::string& key, const std::vector<std::size_t>& values,
                           const ModelConfig& base, StreamSelection streams, const Dataset& train_set,
                           const Dataset& test_set, const TrainConfig& tc) {
  if (key != "stages" && key != "clip_len")
    throw ConfigError("ablation key must be 'stages' or 'clip_len', got '" + key + "'");
  AblationResult table{key, {}};
  for (std::size_t v : values) {
    ModelConfig cfg = base;
    (key == "stages" ? cfg.stages : cfg.clip_len) = v;
    if (key == "stages" && cfg.fusion != "last-win-all" && cfg.fusion != "average") cfg.fusion = "average";
    Network<T> net(cfg, streams, train_set.num_classes);
    const auto rep = train(net, train_set, &test_set, tc);
    table.rows.push_back({v, rep.epochs.back().loss, rep.test_eval});
  }
  return table;
}

inline std::string format_ablation(const AblationResult& t) {
  std::size_t max_stages = 0;
  for (const auto& r : t.rows) max_stages = std::max(max_stages, r.eval.stage_accuracy.size());
  std::ostringstream os;
  os << t.key << "\tfinal_loss\tfused_acc";
  for (std::size_t s = 0; s < max_stages; ++s) os << "\tstage" << (s + 1) << "_acc";
  os << '\n';
  for (const auto& r : t.rows) {
    os << r.value << '\t' << detail::fmt(r.final_loss) << '\t' << detail::fmt(r.eval.fused_accuracy);
    for (std::size_t s = 0; s < max_stages; ++s)
      os << '\t' << (s < r.eval.stage_accuracy.size() ? detail::fmt(r.eval.stage_accuracy[s]) : "-");
    os << '\n';
  }
  return os.str();
}

}  // namespace fgcn

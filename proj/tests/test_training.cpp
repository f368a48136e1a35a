#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "fgcn/synth.hpp"
#include "fgcn/training.hpp"
#include "fgcn/verify.hpp"

using namespace fgcn;

namespace {

ModelConfig tiny_config(std::size_t stages = 2) {
  auto cfg = toy_model_config("ntu-rgbd", stages, 4, {4, 8});
  cfg.fgcb_layers = 1;
  return cfg;
}

Dataset tiny_dataset(std::size_t per_class, std::uint64_t seed, std::size_t classes = 3) {
  SynthConfig sc;
  sc.classes = classes;
  sc.train_per_class = per_class;
  sc.test_per_class = 1;
  sc.min_len = 12;
  sc.max_len = 20;
  auto d = synth_dataset(sc, seed).train;
  for (auto& s : d.samples) s = preprocess(s, PreprocessOptions{true, false, 1});
  return d;
}

}  // namespace

TEST(Loss, ClosedForms) {
  EXPECT_EQ(cross_entropy_loss({0, 1, 0}, 1), 0.0);
  EXPECT_NEAR(cross_entropy_loss(std::vector<double>(10, 0.1), 3), 2.302585092994046, 1e-12);
  EXPECT_NEAR(cross_entropy_loss({1, 0}, 1), -std::log(1e-12), 1e-9);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.01, 1);
  for (int i = 0; i < 20; ++i) {
    std::vector<double> p(5);
    double s = 0;
    for (auto& x : p) s += (x = u(rng));
    for (auto& x : p) x /= s;
    EXPECT_NEAR(cross_entropy_loss(p, i % 5), -std::log(p[i % 5]), 1e-12);
  }
}

TEST(Loss, TapeMatchesScalarForm) {
  Tape<double> tape(false);
  const std::vector<std::size_t> y{2, 0};
  const auto p = tape.constant({2, 3}, {0.2, 0.3, 0.5, 0.6, 0.3, 0.1});
  EXPECT_NEAR(cross_entropy<double>(p, std::span<const std::size_t>(y)).value()[0],
              (-std::log(0.5) - std::log(0.6)) / 2, 1e-15);
}

TEST(Schedule, RecordedLearningRates) {
  TrainConfig tc;
  const auto s = tc.schedule();
  for (int e = 1; e <= 80; ++e) EXPECT_EQ(s.lr_at(e), e < 40 ? 0.1 : e < 60 ? 0.01 : 0.001);
}

TEST(Schedule, ValidationRejectsBadDrops) {
  TrainConfig tc;
  tc.lr_drops = {60, 40};
  EXPECT_THROW(tc.validate(), ConfigError);
  tc.lr_drops = {40, 80};
  EXPECT_THROW(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.lr = 0;
  EXPECT_THROW(tc.validate(), ConfigError);
}

TEST(Train, ReportRecordsEveryEpoch) {
  const auto d = tiny_dataset(2, 1);
  Network<double> net(tiny_config(), StreamSelection::spatial, 3);
  TrainConfig tc;
  tc.epochs = 5;
  tc.lr_drops = {2, 4};
  tc.batch_size = 4;
  std::vector<int> seen;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r) { seen.push_back(r.epoch); };
  const auto rep = train(net, d, nullptr, tc, hooks);
  ASSERT_EQ(rep.epochs.size(), 5u);
  EXPECT_EQ(seen, (std::vector<int>{1, 2, 3, 4, 5}));
  const double want[] = {0.1, 0.01, 0.01, 0.001, 0.001};
  for (int e = 0; e < 5; ++e) {
    EXPECT_EQ(rep.epochs[e].lr, want[e]);
    EXPECT_GE(rep.epochs[e].train_accuracy, 0.0);
    EXPECT_LE(rep.epochs[e].train_accuracy, 1.0);
    EXPECT_TRUE(std::isfinite(rep.epochs[e].loss));
  }
  EXPECT_FALSE(rep.has_test);
}

TEST(Train, DeterministicGivenSeed) {
  const auto d = tiny_dataset(2, 2);
  TrainConfig tc;
  tc.epochs = 2;
  tc.lr_drops = {};
  tc.batch_size = 3;
  std::string summaries[2];
  std::vector<NamedTensor> states[2];
  for (int i = 0; i < 2; ++i) {
    Network<double> net(tiny_config(), StreamSelection::two, 3);
    summaries[i] = format_summary(train(net, d, &d, tc));
    states[i] = net.export_state();
  }
  EXPECT_EQ(summaries[0], summaries[1]);
  ASSERT_EQ(states[0].size(), states[1].size());
  for (std::size_t i = 0; i < states[0].size(); ++i) EXPECT_EQ(states[0][i].tensor.data, states[1][i].tensor.data);
}

TEST(Train, MemorizesSingleSample) {
  auto d = tiny_dataset(1, 3, 2);
  d.samples.resize(1);
  Network<double> net(tiny_config(1), StreamSelection::spatial, 2);
  TrainConfig tc;
  tc.epochs = 60;
  tc.lr_drops = {};
  tc.batch_size = 1;
  tc.sampling = SamplingMode::eval_deterministic;
  const auto rep = train(net, d, nullptr, tc);
  EXPECT_LT(rep.epochs.back().loss, 1e-3);
}

TEST(Train, SmallStepDecreasesLoss) {
  auto d = tiny_dataset(1, 4, 2);
  d.samples.resize(1);
  Network<double> net(tiny_config(), StreamSelection::spatial, 2);
  auto& model = net.stream(0);
  const std::vector<const SkeletonSequence*> batch{&d.samples[0]};
  const auto plans = eval_plans(batch, net.config());
  const std::vector<std::size_t> y{d.samples[0].label};
  auto loss_now = [&](bool step) {
    model.params().zero_grad();
    Tape<double> tape;
    auto out = model.forward(tape, batch, plans, Mode::eval);
    auto loss = cross_entropy<double>(*out.fused, std::span<const std::size_t>(y));
    const double v = loss.value()[0];
    if (step) {
      tape.backward(loss);
      sgd_momentum_step(model.params(), SgdOptions{1e-4, 0.0});
    }
    return v;
  };
  const double before = loss_now(true);
  EXPECT_LT(loss_now(false), before);
}

TEST(Train, AverageFusionIgnoresStageOrderOfIdenticalClips) {
  auto cfg = tiny_config(3);
  FgcnModel<double> model(cfg, resolve_topology(cfg.topology), Stream::spatial, 3);
  std::mt19937_64 rng(5);
  const auto clip = detail::random_tensor(rng, {1, 6, 4, 25});
  const std::vector<std::size_t> y{1};
  Tape<double> tape(false);
  const auto out = model.forward(tape, std::vector<Tensor<double>>(3, clip), Mode::eval);
  const double l = cross_entropy<double>(*out.fused, std::span<const std::size_t>(y)).value()[0];
  std::vector<std::vector<double>> probs;
  for (const auto& p : out.probs) probs.push_back(p.value());
  std::reverse(probs.begin(), probs.end());
  EXPECT_NEAR(cross_entropy_loss(fuse(probs, average_fusion(3)), 1), l, 1e-10);
}

TEST(Train, RejectsClassMismatchAndEmptySet) {
  const auto d = tiny_dataset(1, 5);
  Network<double> net(tiny_config(), StreamSelection::spatial, 4);
  EXPECT_THROW(train(net, d, nullptr, TrainConfig{}), DataError);
  Dataset empty;
  empty.num_classes = 4;
  EXPECT_THROW(train(net, empty, nullptr, TrainConfig{}), DataError);
}

TEST(Train, DivergenceAbortsWithNumericalError) {
  const auto d = tiny_dataset(1, 6);
  Network<double> net(tiny_config(), StreamSelection::spatial, 3);
  auto& w = net.stream(0).params().get("head.bias").value.data;
  w[0] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig tc;
  tc.epochs = 1;
  tc.lr_drops = {};
  EXPECT_THROW(train(net, d, nullptr, tc), NumericalError);
}

TEST(Evaluate, RepeatableAndLastWinAllMatchesFinalStage) {
  const auto d = tiny_dataset(3, 7);
  Network<double> net(tiny_config(3), StreamSelection::two, 3);
  const auto a = evaluate(net, d, 4), b = evaluate(net, d, 4);
  EXPECT_EQ(a.predictions, b.predictions);
  EXPECT_EQ(a.fused_accuracy, b.fused_accuracy);
  EXPECT_EQ(a.stage_accuracy, b.stage_accuracy);
  net.set_fusion(last_win_all_fusion(3));
  const auto c = evaluate(net, d, 4);
  EXPECT_EQ(c.fused_accuracy, c.stage_accuracy.back());
  std::size_t total = 0;
  for (const auto& row : c.confusion)
    for (std::size_t n : row) total += n;
  EXPECT_EQ(total, d.size());
}

TEST(Evaluate, UntrainedModelNearChance) {
  SynthConfig sc;
  sc.classes = 4;
  sc.train_per_class = 1;
  sc.test_per_class = 30;
  sc.min_len = 12;
  sc.max_len = 16;
  const auto d = synth_dataset(sc, 8).test;
  std::size_t hits = 0, n = 0;
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    auto cfg = tiny_config();
    cfg.init_seed = seed;
    Network<double> net(cfg, StreamSelection::spatial, 4);
    hits += static_cast<std::size_t>(evaluate(net, d).fused_accuracy * d.size() + 0.5);
    n += d.size();
  }
  const double p = 0.25, sd = std::sqrt(p * (1 - p) / n);
  EXPECT_NEAR(static_cast<double>(hits) / n, p, 3 * sd + 1.0 / n);
}

TEST(Checkpoint, NetworkRoundTripReproducesEvaluation) {
  const auto d = tiny_dataset(2, 9);
  Network<double> a(tiny_config(), StreamSelection::two, 3);
  TrainConfig tc;
  tc.epochs = 1;
  tc.lr_drops = {};
  train(a, d, nullptr, tc);
  std::stringstream ss;
  write_checkpoint(ss, a.export_state());
  auto cfg = tiny_config();
  cfg.init_seed = 99;
  Network<double> b(cfg, StreamSelection::two, 3);
  b.import_state(read_checkpoint(ss));
  const auto ea = evaluate(a, d), eb = evaluate(b, d);
  EXPECT_EQ(ea.predictions, eb.predictions);
  EXPECT_EQ(ea.stage_accuracy, eb.stage_accuracy);
  EXPECT_EQ(format_eval(ea, "x"), format_eval(eb, "x"));
}

TEST(Checkpoint, RejectsOtherTopology) {
  Network<double> a(tiny_config(), StreamSelection::spatial, 3);
  auto cfg = tiny_config();
  cfg.topology = "nw-ucla";
  Network<double> b(cfg, StreamSelection::spatial, 3);
  EXPECT_THROW(b.import_state(a.export_state()), ConfigError);
}

TEST(Ablation, OneRowPerValue) {
  const auto d = tiny_dataset(1, 10);
  TrainConfig tc;
  tc.epochs = 1;
  tc.lr_drops = {};
  const auto t = run_ablation<double>("stages", {1, 2}, tiny_config(), StreamSelection::spatial, d, d, tc);
  ASSERT_EQ(t.rows.size(), 2u);
  const auto text = format_ablation(t);
  EXPECT_EQ(text.substr(0, text.find('\n')), "stages\tfinal_loss\tfused_acc\tstage1_acc\tstage2_acc");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  EXPECT_THROW(run_ablation<double>("lr", {1}, tiny_config(), StreamSelection::spatial, d, d, tc), ConfigError);
}

// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when
// every criterion passes.

#include <chrono>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "fgcn/fgcn.hpp"

using namespace fgcn;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool passed = false;
  std::string detail;
};

Outcome from_checks(const std::vector<CheckResult>& rs) {
  Outcome o{all_passed(rs), std::to_string(rs.size()) + " checks"};
  for (const auto& r : rs)
    if (!r.passed) o.detail += "; failed " + r.name + " (" + r.detail + ")";
  return o;
}

RunConfig toy_config() { return load_config(std::string(FGCN_SOURCE_DIR) + "/configs/toy.cfg"); }

void preprocess_all(Dataset& d, const PreprocessOptions& pre) {
  for (auto& s : d.samples) s = preprocess(s, pre);
}

// Recorded learning rates of the first learning run, for the schedule check.
std::vector<EpochRecord> recorded_epochs;

Outcome gradient_oracle() {
  const auto t0 = Clock::now();
  auto o = from_checks(verify_gradcheck());
  const double s = seconds_since(t0);
  o.passed = o.passed && s < 60;
  o.detail += ", " + detail::fmt(std::round(s * 10) / 10) + " s";
  return o;
}

Outcome learning_smoke_test() {
  const auto t0 = Clock::now();
  Outcome o{true, ""};
  for (std::uint64_t seed : {1, 2, 3}) {
    RunConfig rc = toy_config();
    rc.train.seed = seed;
    auto data = synth_dataset(SynthConfig{}, seed);
    const double centroid = nearest_centroid_accuracy(data.train, data.test);
    const auto g = resolve_topology(rc.model.topology);
    preprocess_all(data.train, effective_preprocess(rc, g));
    preprocess_all(data.test, effective_preprocess(rc, g));
    Network<double> net(rc.model, rc.streams, data.train.num_classes);
    const auto rep = train(net, data.train, &data.test, rc.train);
    if (seed == 1) recorded_epochs = rep.epochs;
    const bool ok = centroid > 0.25 && rep.train_eval.fused_accuracy >= 0.95 && rep.test_eval.fused_accuracy >= 0.80;
    o.passed = o.passed && ok;
    o.detail += "seed " + std::to_string(seed) + ": centroid " + detail::fmt(centroid) + " train " +
                detail::fmt(rep.train_eval.fused_accuracy) + " test " + detail::fmt(rep.test_eval.fused_accuracy) +
                " epochs " + std::to_string(rep.epochs.size()) + "; ";
  }
  const double s = seconds_since(t0);
  o.passed = o.passed && s < 600;
  o.detail += detail::fmt(std::round(s)) + " s";
  return o;
}

Outcome schedule_fidelity() {
  const TrainConfig defaults;
  Outcome o{defaults.lr == 0.1 && defaults.lr_drops == std::vector<int>{40, 60} && defaults.epochs == 80, ""};
  if (recorded_epochs.size() != 80) return {false, "expected 80 recorded epochs, got " + std::to_string(recorded_epochs.size())};
  std::size_t bad = 0;
  for (const auto& e : recorded_epochs) {
    const double want = e.epoch < 40 ? 0.1 : e.epoch < 60 ? 0.01 : 0.001;
    bad += e.lr != want;
  }
  o.passed = o.passed && bad == 0;
  o.detail = "80 epochs recorded, " + std::to_string(bad) + " mismatches";
  return o;
}

Outcome ablation_harness() {
  RunConfig rc = toy_config();
  SynthConfig sc;
  sc.train_per_class = 2;
  sc.test_per_class = 2;
  auto data = synth_dataset(sc, 4);
  const auto g = resolve_topology(rc.model.topology);
  preprocess_all(data.train, effective_preprocess(rc, g));
  preprocess_all(data.test, effective_preprocess(rc, g));
  TrainConfig tc = rc.train;
  tc.epochs = 1;
  tc.lr_drops.clear();
  tc.eval_every = 0;
  Outcome o{true, ""};
  const std::pair<std::string, std::vector<std::size_t>> sweeps[] = {{"stages", {1, 3, 5, 7}}, {"clip_len", {16, 32, 64}}};
  for (const auto& [key, values] : sweeps) {
    const auto table = run_ablation<double>(key, values, rc.model, rc.streams, data.train, data.test, tc);
    const std::string text = format_ablation(table);
    const auto lines = std::count(text.begin(), text.end(), '\n');
    std::cout << text;
    o.passed = o.passed && table.rows.size() == values.size() && lines == static_cast<long>(values.size()) + 1;
    o.detail += key + " " + std::to_string(table.rows.size()) + " rows; ";
  }
  return o;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

Outcome round_trips() {
  const auto dir = fs::temp_directory_path() / "fgcn_acceptance";
  fs::remove_all(dir);
  auto data = synth_dataset(SynthConfig{}, 5);
  bool dataset_ok = true;
  for (Dataset* d : {&data.train, &data.test}) {
    const auto back = load_manifest(write_dataset(dir.string(), *d), ParseOptions{1});
    dataset_ok = dataset_ok && back.size() == d->size();
    for (std::size_t i = 0; dataset_ok && i < back.size(); ++i)
      dataset_ok = back.samples[i].id == d->samples[i].id && back.samples[i].label == d->samples[i].label &&
                   bit_equal(back.samples[i].coords, d->samples[i].coords);
  }

  RunConfig rc = toy_config();
  const auto g = resolve_topology(rc.model.topology);
  preprocess_all(data.train, effective_preprocess(rc, g));
  preprocess_all(data.test, effective_preprocess(rc, g));
  Network<double> net(rc.model, rc.streams, data.train.num_classes);
  TrainConfig tc = rc.train;
  tc.epochs = 2;
  tc.lr_drops.clear();
  train(net, data.train, nullptr, tc);
  const auto path = (dir / "net.fgcn").string();
  net.save(path);
  auto loaded_cfg = rc.model;
  loaded_cfg.init_seed += 100;
  Network<double> loaded(loaded_cfg, rc.streams, data.train.num_classes);
  loaded.load(path);
  const auto a = net.export_state(), b = loaded.export_state();
  bool ckpt_ok = a.size() == b.size();
  for (std::size_t i = 0; ckpt_ok && i < a.size(); ++i)
    ckpt_ok = a[i].name == b[i].name && a[i].tensor.shape == b[i].tensor.shape && bit_equal(a[i].tensor.data, b[i].tensor.data);
  const auto path2 = (dir / "net2.fgcn").string();
  loaded.save(path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::stringstream s1, s2;
  s1 << f1.rdbuf();
  s2 << f2.rdbuf();
  ckpt_ok = ckpt_ok && s1.str() == s2.str();

  const std::string e1 = format_eval(evaluate(net, data.test), "test");
  const std::string e2 = format_eval(evaluate(net, data.test), "test");
  const std::string e3 = format_eval(evaluate(loaded, data.test), "test");
  const bool eval_ok = e1 == e2 && e1 == e3;
  fs::remove_all(dir);
  return {dataset_ok && ckpt_ok && eval_ok, std::string("dataset ") + (dataset_ok ? "exact" : "differs") +
                                                ", checkpoint " + (ckpt_ok ? "exact" : "differs") + ", eval " +
                                                (eval_ok ? "byte-identical" : "differs")};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"gradient oracle", gradient_oracle},
      {"topology oracle", [] { return from_checks(verify_topology()); }},
      {"permutation equivariance", [] { return from_checks(verify_equivariance(20)); }},
      {"fusion identities", [] { return from_checks(verify_fusion(1000)); }},
      {"feedback causality", [] { return from_checks(verify_causality()); }},
      {"sampling contract", [] { return from_checks(verify_sampling()); }},
      {"learning smoke test", learning_smoke_test},
      {"schedule fidelity", schedule_fidelity},
      {"ablation harness", ablation_harness},
      {"round-trips", round_trips},
  };
  int failed = 0, index = 0;
  for (const auto& [name, run] : criteria) {
    ++index;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.passed;
    std::cout << (o.passed ? "PASS " : "FAIL ") << index << ' ' << name << "  " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}

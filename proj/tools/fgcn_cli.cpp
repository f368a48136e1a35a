// fgcn: train, evaluate and query feedback graph convolutional networks.
//
//   fgcn synth   --out DIR [--seed N] [--classes C] ...
//   fgcn train   --config FILE [--set key=value ...] [--sweep key=v1,v2,...]
//   fgcn eval    --checkpoint FILE [--config FILE] [--data MANIFEST] [--confusion FILE]
//   fgcn predict --checkpoint FILE [--config FILE] --input SEQUENCE|-
//   fgcn verify  [gradcheck|topology|equivariance|fusion|causality|sampling|all]
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 numerical failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fgcn/fgcn.hpp"

namespace fs = std::filesystem;
using namespace fgcn;

namespace {

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
};

RunConfig make_config(const CommonOptions& o) {
  RunConfig rc = o.config.empty() ? RunConfig{} : load_config(o.config);
  for (const auto& s : o.overrides) apply_override(rc, s);
  rc.validate();
  return rc;
}

Dataset load_split(const std::string& manifest, const RunConfig& rc, const GraphTopology& g) {
  if (manifest.empty()) throw ConfigError("no dataset manifest configured");
  if (!fs::exists(manifest)) throw DataError("dataset manifest not found: " + manifest);
  Dataset d = load_manifest(manifest, rc.parse_options());
  const auto pre = effective_preprocess(rc, g);
  for (auto& s : d.samples) {
    if (s.joints != g.num_joints)
      throw DataError("sequence " + s.id + " has " + std::to_string(s.joints) + " joints, topology '" +
                      g.name + "' has " + std::to_string(g.num_joints));
    s = preprocess(s, pre);
  }
  return d;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::vector<std::size_t> parse_sweep(const std::string& spec, std::string& key) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) throw ConfigError("--sweep expects key=v1,v2,...");
  key = spec.substr(0, eq);
  std::vector<std::size_t> values;
  for (const auto& tok : detail::split_list(spec.substr(eq + 1))) values.push_back(detail::parse_count(key, tok));
  if (values.empty()) throw ConfigError("--sweep lists no values");
  return values;
}

template <typename T>
int run_train(const RunConfig& rc, const std::string& sweep) {
  const GraphTopology g = resolve_topology(rc.model.topology);
  for (const auto& w : g.warnings) std::cerr << "warning: " << w << '\n';
  const Dataset train_set = load_split(rc.train_manifest, rc, g);
  std::optional<Dataset> test_set;
  if (!rc.test_manifest.empty()) test_set = load_split(rc.test_manifest, rc, g);
  const fs::path out_dir(rc.output_dir);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory " + out_dir.string() + ": " + ec.message());

  if (!sweep.empty()) {
    if (!test_set) throw ConfigError("--sweep needs a test_manifest");
    std::string key;
    const auto values = parse_sweep(sweep, key);
    const auto table = run_ablation<T>(key, values, rc.model, rc.streams, train_set, *test_set, rc.train);
    const std::string text = format_ablation(table);
    write_text(out_dir / ("ablation_" + key + ".tsv"), text);
    std::cout << text;
    return 0;
  }

  Network<T> net(rc.model, rc.streams, train_set.num_classes);
  std::ofstream report(out_dir / "report.txt");
  if (!report) throw DataError("cannot write " + (out_dir / "report.txt").string());
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& e) {
    std::cout << format_epoch(e) << std::endl;
    report << format_epoch(e) << '\n';
  };
  hooks.on_checkpoint = [&](int epoch) {
    net.save((out_dir / ("checkpoint_epoch" + std::to_string(epoch) + ".fgcn")).string());
  };
  TrainReport rep = train(net, train_set, test_set ? &*test_set : nullptr, rc.train, hooks);
  rep.checkpoint = (out_dir / "checkpoint.fgcn").string();
  net.save(rep.checkpoint);
  const std::string summary = format_summary(rep);
  write_text(out_dir / "summary.txt", summary);
  std::cout << summary << "checkpoint=" << rep.checkpoint << '\n';
  return 0;
}

template <typename T>
int run_eval(const RunConfig& rc, const std::string& checkpoint, const std::string& data,
             const std::string& confusion) {
  const GraphTopology g = resolve_topology(rc.model.topology);
  const std::string manifest = data.empty() ? rc.test_manifest : data;
  const Dataset d = load_split(manifest, rc, g);
  Network<T> net(rc.model, rc.streams, d.num_classes);
  net.load(checkpoint);
  const EvalResult r = evaluate(net, d, rc.train.batch_size);
  std::cout << "fusion=" << net.stream(0).fusion().name << '\n';
  std::cout << "samples=" << r.samples << '\n';
  std::cout << "fused_acc=" << detail::fmt(r.fused_accuracy) << '\n';
  std::cout << "stage\tacc\n";
  for (std::size_t t = 0; t < r.stage_accuracy.size(); ++t)
    std::cout << (t + 1) << '\t' << detail::fmt(r.stage_accuracy[t]) << '\n';
  if (!confusion.empty()) {
    std::ostringstream os;
    for (const auto& row : r.confusion) {
      for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "\t" : "") << row[c];
      os << '\n';
    }
    write_text(confusion, os.str());
  }
  return 0;
}

template <typename T>
int run_predict(const RunConfig& rc, const std::string& checkpoint, const std::string& input,
                std::size_t classes) {
  const GraphTopology g = resolve_topology(rc.model.topology);
  std::ifstream file;
  std::istream* in = &std::cin;
  if (input != "-") {
    file.open(input);
    if (!file) throw DataError("cannot open sequence file: " + input);
    in = &file;
  }
  // The class count comes from the checkpoint's head.
  if (classes == 0) {
    for (const auto& rec : load_checkpoint(checkpoint))
      if (rec.name.ends_with("head.bias")) classes = rec.tensor.size();
    if (classes == 0) throw ConfigError("checkpoint " + checkpoint + " has no head.bias tensor");
  }
  Network<T> net(rc.model, rc.streams, classes);
  net.load(checkpoint);
  const auto res = predict_streaming<T>(net, *in, input, effective_preprocess(rc, g), [](const StageEvent& e) {
    std::cout << "stage=" << e.stage << " frames_read=" << e.frames_read << " argmax=" << argmax(e.probs)
              << " probs=" << format_probs(e.probs) << std::endl;
  });
  std::cout << "fused id=" << res.id << " argmax=" << res.label << " probs=" << format_probs(res.fused) << std::endl;
  return 0;
}

template <typename F>
int guarded(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::usage);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feedback graph convolutional networks for skeleton action recognition"};
  app.require_subcommand(1);

  auto add_common = [](CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--config,-c", o.config, "key = value config file (also searched in $FGCN_CONFIG_DIR)");
    cmd->add_option("--set", o.overrides, "override config keys: --set key=value ...");
  };

  CommonOptions train_opt;
  std::string sweep;
  auto* train_cmd = app.add_subcommand("train", "train a network and write checkpoint, report and summary");
  add_common(train_cmd, train_opt);
  train_cmd->add_option("--sweep", sweep, "ablation sweep, e.g. stages=1,3,5,7 or clip_len=16,32,64");

  CommonOptions eval_opt;
  std::string eval_ckpt, eval_data, confusion;
  auto* eval_cmd = app.add_subcommand("eval", "report fused and per-stage accuracy");
  add_common(eval_cmd, eval_opt);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "dataset manifest (default: test_manifest)");
  eval_cmd->add_option("--confusion", confusion, "write the confusion matrix here");

  CommonOptions pred_opt;
  std::string pred_ckpt, pred_input;
  std::size_t pred_classes = 0;
  auto* pred_cmd = app.add_subcommand("predict", "stream one sequence and print P_t after every stage");
  add_common(pred_cmd, pred_opt);
  pred_cmd->add_option("--checkpoint", pred_ckpt, "checkpoint file")->required();
  pred_cmd->add_option("--input,-i", pred_input, "sequence file, or - for stdin")->required();
  pred_cmd->add_option("--classes", pred_classes, "class count (default: read from the checkpoint)");

  std::string suite = "all";
  auto* verify_cmd = app.add_subcommand("verify", "run oracle suites and print pass/fail per property");
  verify_cmd->add_option("suite", suite, "gradcheck, topology, equivariance, fusion, causality, sampling or all");

  SynthConfig synth_cfg;
  std::string synth_out;
  std::uint64_t synth_seed = 1;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic dataset plus manifests");
  synth_cmd->add_option("--out,-o", synth_out, "output directory")->required();
  synth_cmd->add_option("--seed", synth_seed, "generator seed");
  synth_cmd->add_option("--topology", synth_cfg.topology, "named topology or topology file");
  synth_cmd->add_option("--classes", synth_cfg.classes, "number of classes");
  synth_cmd->add_option("--train-per-class", synth_cfg.train_per_class, "training samples per class");
  synth_cmd->add_option("--test-per-class", synth_cfg.test_per_class, "test samples per class");
  synth_cmd->add_option("--min-len", synth_cfg.min_len, "shortest sequence");
  synth_cmd->add_option("--max-len", synth_cfg.max_len, "longest sequence");
  synth_cmd->add_option("--bodies", synth_cfg.bodies, "bodies per sequence");
  synth_cmd->add_option("--noise", synth_cfg.noise, "coordinate noise standard deviation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::usage);
  }

  if (*train_cmd)
    return guarded([&] {
      const RunConfig rc = make_config(train_opt);
      return rc.precision == "float" ? run_train<float>(rc, sweep) : run_train<double>(rc, sweep);
    });
  if (*eval_cmd)
    return guarded([&] {
      const RunConfig rc = make_config(eval_opt);
      return rc.precision == "float" ? run_eval<float>(rc, eval_ckpt, eval_data, confusion)
                                     : run_eval<double>(rc, eval_ckpt, eval_data, confusion);
    });
  if (*pred_cmd)
    return guarded([&] {
      const RunConfig rc = make_config(pred_opt);
      return rc.precision == "float" ? run_predict<float>(rc, pred_ckpt, pred_input, pred_classes)
                                     : run_predict<double>(rc, pred_ckpt, pred_input, pred_classes);
    });
  if (*verify_cmd)
    return guarded([&] {
      const auto results = run_verify_suite(suite);
      for (const auto& r : results) std::cout << format_check(r) << '\n';
      const bool ok = all_passed(results);
      std::cout << (ok ? "all checks passed" : "some checks FAILED") << '\n';
      return ok ? 0 : static_cast<int>(ExitCode::numerical);
    });
  if (*synth_cmd)
    return guarded([&] {
      const auto splits = synth_dataset(synth_cfg, synth_seed);
      const std::string a = write_dataset(synth_out, splits.train);
      const std::string b = write_dataset(synth_out, splits.test);
      std::cout << "classes=" << synth_cfg.classes << '\n'
                << "train=" << splits.train.size() << " manifest=" << a << '\n'
                << "test=" << splits.test.size() << " manifest=" << b << '\n'
                << "nearest_centroid_acc=" << detail::fmt(nearest_centroid_accuracy(splits.train, splits.test))
                << '\n';
      return 0;
    });
  return static_cast<int>(ExitCode::usage);
}

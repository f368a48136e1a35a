#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  static fs::path dir;

  static void SetUpTestSuite() {
    dir = fs::temp_directory_path() / "fgcn_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto r = run("synth --out " + (dir / "data").string() + " --seed 5 --classes 3 --train-per-class 3 "
                       "--test-per-class 2 --min-len 12 --max-len 20");
    ASSERT_EQ(r.code, 0) << r.out;
    std::ofstream(dir / "tiny.cfg") << "train_manifest = data/train.manifest\n"
                                       "test_manifest = data/test.manifest\n"
                                       "output_dir = " << (dir / "run").string() << "\n"
                                       "stages = 3\nclip_len = 4\nchannels = 4,8\ngconvs_k_t = 3\n"
                                       "fgcb_layers = 1\nbodies = 1\nbatch_size = 4\nepochs = 3\n"
                                       "lr_drops = 2\ncheckpoint_every = 2\n";
  }
  static void TearDownTestSuite() { fs::remove_all(dir); }

  static CliResult run(const std::string& args, const std::string& stdin_file = "") {
    const auto out = dir / "cli_out.txt";
    std::string cmd = std::string("\"") + FGCN_CLI + "\" " + args + " > \"" + out.string() + "\" 2>&1";
    if (!stdin_file.empty()) cmd += " < \"" + stdin_file + "\"";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out)};
  }

  static std::string cfg() { return "--config " + (dir / "tiny.cfg").string(); }
};

fs::path Cli::dir;

}  // namespace

TEST_F(Cli, SynthIsDeterministic) {
  const auto again = dir / "data2";
  ASSERT_EQ(run("synth --out " + again.string() + " --seed 5 --classes 3 --train-per-class 3 "
                "--test-per-class 2 --min-len 12 --max-len 20").code, 0);
  EXPECT_EQ(slurp(dir / "data/train.manifest"), slurp(again / "train.manifest"));
  for (const auto& e : fs::directory_iterator(dir / "data/train"))
    EXPECT_EQ(slurp(e.path()), slurp(again / "train" / e.path().filename())) << e.path();
}

TEST_F(Cli, SynthRejectsSingleClass) {
  EXPECT_EQ(run("synth --out " + (dir / "bad").string() + " --classes 1").code, 1);
}

TEST_F(Cli, MissingDatasetIsDataError) {
  const auto t = run("train " + cfg() + " --set train_manifest=/nonexistent/train.manifest");
  EXPECT_EQ(t.code, 2) << t.out;
  EXPECT_NE(t.out.find("/nonexistent/train.manifest"), std::string::npos) << t.out;
}

TEST_F(Cli, UnknownKeyIsUsageError) {
  const auto r = run("train " + cfg() + " --set bogus=1");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("bogus"), std::string::npos) << r.out;
  EXPECT_EQ(run("train --config /nonexistent.cfg").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
}

TEST_F(Cli, TrainEvalPredictRoundTrip) {
  const auto t = run("train " + cfg());
  ASSERT_EQ(t.code, 0) << t.out;
  EXPECT_TRUE(fs::exists(dir / "run/checkpoint.fgcn"));
  EXPECT_TRUE(fs::exists(dir / "run/checkpoint_epoch2.fgcn"));
  EXPECT_TRUE(fs::exists(dir / "run/summary.txt"));
  const auto report = slurp(dir / "run/report.txt");
  EXPECT_NE(report.find("epoch=1 lr=0.1 "), std::string::npos) << report;
  EXPECT_NE(report.find("epoch=3 lr=0.01 "), std::string::npos) << report;

  const auto ckpt = (dir / "run/checkpoint.fgcn").string();
  const auto e1 = run("eval " + cfg() + " --checkpoint " + ckpt);
  const auto e2 = run("eval " + cfg() + " --checkpoint " + ckpt + " --confusion " + (dir / "conf.tsv").string());
  ASSERT_EQ(e1.code, 0) << e1.out;
  EXPECT_EQ(e1.out, e2.out);
  EXPECT_NE(e1.out.find("samples=6"), std::string::npos) << e1.out;
  EXPECT_NE(e1.out.find("stage\tacc\n1\t"), std::string::npos) << e1.out;
  const auto conf = slurp(dir / "conf.tsv");
  EXPECT_EQ(std::count(conf.begin(), conf.end(), '\n'), 3);

  const auto seq = (dir / "data/test/test_c1_0.skel").string();
  const auto p = run("predict " + cfg() + " --checkpoint " + ckpt + " --input " + seq);
  ASSERT_EQ(p.code, 0) << p.out;
  std::istringstream lines(p.out);
  std::string line;
  int stage_lines = 0, fused_lines = 0;
  while (std::getline(lines, line)) {
    if (line.rfind("stage=", 0) == 0) {
      ++stage_lines;
      EXPECT_NE(line.find("stage=" + std::to_string(stage_lines) + " "), std::string::npos) << line;
    }
    if (line.rfind("fused id=test_c1_0 ", 0) == 0) ++fused_lines;
  }
  EXPECT_EQ(stage_lines, 3);
  EXPECT_EQ(fused_lines, 1);
  const auto piped = run("predict " + cfg() + " --checkpoint " + ckpt + " --input -", seq);
  EXPECT_EQ(piped.code, 0);
  EXPECT_EQ(piped.out.substr(piped.out.find("argmax")), p.out.substr(p.out.find("argmax")));

  const auto bad_ckpt = run("eval " + cfg() + " --checkpoint " + (dir / "tiny.cfg").string());
  EXPECT_EQ(bad_ckpt.code, 2);
  const auto mismatch = run("eval " + cfg() + " --set channels=4,4,8 --checkpoint " + ckpt);
  EXPECT_EQ(mismatch.code, 1) << mismatch.out;
}

TEST_F(Cli, TrainingIsReproducible) {
  const auto a = run("train " + cfg() + " --set output_dir=" + (dir / "ra").string());
  const auto b = run("train " + cfg() + " --set output_dir=" + (dir / "rb").string());
  ASSERT_EQ(a.code, 0) << a.out;
  ASSERT_EQ(b.code, 0) << b.out;
  EXPECT_EQ(slurp(dir / "ra/summary.txt"), slurp(dir / "rb/summary.txt"));
  EXPECT_EQ(slurp(dir / "ra/checkpoint.fgcn"), slurp(dir / "rb/checkpoint.fgcn"));
}

TEST_F(Cli, AblationSweepWritesTsv) {
  const auto r = run("train " + cfg() + " --set epochs=1 --set lr_drops= --sweep stages=1,2");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto table = slurp(dir / "run/ablation_stages.tsv");
  EXPECT_EQ(table.substr(0, table.find('\n')), "stages\tfinal_loss\tfused_acc\tstage1_acc\tstage2_acc");
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 3);
}

TEST_F(Cli, MalformedSequenceReportsLine) {
  std::ofstream(dir / "bad.skel") << "2 1 25 3 0 bad\n1 2 3\n";
  const auto t = run("train " + cfg() + " --set epochs=1 --set lr_drops=");
  ASSERT_EQ(t.code, 0);
  const auto p = run("predict " + cfg() + " --checkpoint " + (dir / "run/checkpoint.fgcn").string() + " --input " +
                     (dir / "bad.skel").string());
  EXPECT_EQ(p.code, 2);
  EXPECT_NE(p.out.find("bad.skel:2"), std::string::npos) << p.out;
}

TEST_F(Cli, VerifySuite) {
  const auto r = run("verify fusion");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("PASS "), std::string::npos);
  EXPECT_EQ(run("verify nonsense").code, 1);
}

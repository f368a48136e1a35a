#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <random>
#include <sstream>

#include "fgcn/synth.hpp"

using namespace fgcn;

namespace {

SkeletonSequence random_sequence(std::mt19937_64& rng, std::size_t len, std::size_t m, std::size_t n) {
  std::uniform_real_distribution<double> u(-2, 2);
  SkeletonSequence s(len, m, n);
  s.id = "rand";
  s.num_classes = 3;
  s.label = 2;
  for (auto& x : s.coords) x = u(rng);
  return s;
}

SkeletonSequence round_trip(const SkeletonSequence& s) {
  std::stringstream ss;
  write_sequence(ss, s);
  return parse_sequence(ss, "<mem>", ParseOptions{s.bodies});
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST(Parse, SingleFrameRoundTrip) {
  SkeletonSequence s(1, 1, 3);
  s.id = "one";
  s.num_classes = 2;
  s.coords = {0.1, -0.2, 1e-300, 3, 4, 5, 1.0 / 3, 2.0 / 3, -7.25};
  const auto back = round_trip(s);
  EXPECT_TRUE(bit_equal(back.coords, s.coords));
  EXPECT_EQ(back.id, "one");
  EXPECT_EQ(back.frames, 1u);
}

TEST(Parse, RandomFilesRoundTripExactly) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto s = random_sequence(rng, 1 + i % 7, 1 + i % 2, 5 + i % 3);
    const auto back = round_trip(s);
    EXPECT_TRUE(bit_equal(back.coords, s.coords));
    EXPECT_EQ(back.label, s.label);
    EXPECT_EQ(back.num_classes, s.num_classes);
  }
}

TEST(Parse, DefaultPadsToTwoBodies) {
  std::istringstream in("1 1 2 2 0 x\n1 2 3 4 5 6\n");
  const auto s = parse_sequence(in);
  EXPECT_EQ(s.bodies, 2u);
  EXPECT_TRUE(s.body_present[0]);
  EXPECT_FALSE(s.body_present[1]);
  EXPECT_EQ(s.at(0, 1, 1, 2), 0.0);
}

TEST(Parse, ShortRowReportsLine) {
  std::ostringstream text;
  text << "1 1 25 2 0 bad\n# comment\n";
  for (int i = 0; i < 74; ++i) text << "0 ";
  text << '\n';
  std::istringstream in(text.str());
  try {
    parse_sequence(in, "bad.skel");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("74"), std::string::npos);
  }
}

TEST(Parse, MalformedInputs) {
  for (const char* text : {"1 1 1 2\n", "1 1 1 2 5 id\n0 0 0\n", "1 1 1 2 0 id\n0 abc 0\n",
                           "2 1 1 2 0 id\n0 0 0\n", "1 1 1 2 0 id\n0 0 0\n1 1 1\n", "0 1 1 2 0 id\n"}) {
    std::istringstream in(text);
    EXPECT_THROW(parse_sequence(in), DataError) << text;
  }
}

TEST(Bones, HandCaseAndDegenerate) {
  const auto g = path_topology(2, 0);
  SkeletonSequence s(1, 1, 2);
  s.coords = {0, 0, 0, 1, 2, 3};
  const auto b = compute_bones(s, g);
  EXPECT_EQ(b.vectors, (std::vector<double>{1, 2, 3}));
  SkeletonSequence same(2, 1, 2);
  for (auto& x : same.coords) x = 0.5;
  for (double x : compute_bones(same, g).vectors) EXPECT_EQ(x, 0.0);
}

TEST(Bones, LoopOracleAndAntisymmetry) {
  const auto g = ntu_rgbd_topology();
  std::mt19937_64 rng(2);
  const auto s = random_sequence(rng, 4, 2, 25);
  const auto b = compute_bones(s, g);
  const auto hops = g.hop_distances();
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    auto [i, j] = g.edges[e];
    const bool flip = hops[j] < hops[i];
    const std::size_t parent = flip ? j : i, child = flip ? i : j;
    EXPECT_LT(hops[parent], hops[child]);
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t m = 0; m < 2; ++m)
        for (std::size_t c = 0; c < 3; ++c) {
          EXPECT_EQ(b.at(t, m, e, c), s.at(t, m, child, c) - s.at(t, m, parent, c));
          EXPECT_EQ(-b.at(t, m, e, c), s.at(t, m, parent, c) - s.at(t, m, child, c));
        }
  }
}

TEST(Bones, JointCountMismatch) {
  SkeletonSequence s(1, 1, 3);
  EXPECT_THROW(compute_bones(s, ntu_rgbd_topology()), ShapeError);
}

TEST(Motion, ConstantLinearAndLoopOracle) {
  SkeletonSequence c(5, 1, 2);
  for (auto& x : c.coords) x = 1.5;
  for (double x : compute_joint_motion(c).coords) EXPECT_EQ(x, 0.0);

  SkeletonSequence lin(6, 1, 1);
  for (std::size_t t = 0; t < 6; ++t) lin.at(t, 0, 0, 0) = static_cast<double>(t);
  const auto mv = compute_joint_motion(lin);
  for (std::size_t t = 0; t < 5; ++t) {
    EXPECT_EQ(mv.at(t, 0, 0, 0), 1.0);
    EXPECT_EQ(mv.at(t, 0, 0, 1), 0.0);
  }
  EXPECT_EQ(mv.at(5, 0, 0, 0), 0.0);

  std::mt19937_64 rng(3);
  const auto s = random_sequence(rng, 7, 2, 4);
  const auto m = compute_joint_motion(s);
  for (std::size_t t = 0; t + 1 < 7; ++t)
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(m.at(t, b, j, k), s.at(t + 1, b, j, k) - s.at(t, b, j, k));
}

TEST(Motion, TelescopingSum) {
  SkeletonSequence s(9, 1, 2);
  for (std::size_t i = 0; i < s.coords.size(); ++i) s.coords[i] = static_cast<double>((i * 7) % 11) * 0.25;
  const auto m = compute_joint_motion(s);
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t k = 0; k < 3; ++k) {
      double sum = 0;
      for (std::size_t t = 0; t + 1 < 9; ++t) sum += m.at(t, 0, j, k);
      EXPECT_EQ(sum, s.at(8, 0, j, k) - s.at(0, 0, j, k));
    }
}

TEST(Motion, SingleFrameIsZero) {
  SkeletonSequence s(1, 1, 2);
  s.coords = {1, 2, 3, 4, 5, 6};
  for (double x : compute_joint_motion(s).coords) EXPECT_EQ(x, 0.0);
}

TEST(Motion, BoneMotionMatchesDifferenceOfBones) {
  const auto g = nw_ucla_topology();
  std::mt19937_64 rng(4);
  const auto s = random_sequence(rng, 5, 1, 20);
  const auto b = compute_bones(s, g);
  const auto bm = compute_bone_motion(b);
  for (std::size_t t = 0; t + 1 < 5; ++t)
    for (std::size_t e = 0; e < b.edges.size(); ++e)
      for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(bm.at(t, 0, e, c), b.at(t + 1, 0, e, c) - b.at(t, 0, e, c));
  for (std::size_t e = 0; e < b.edges.size(); ++e) EXPECT_EQ(bm.at(4, 0, e, 0), 0.0);
}

TEST(Preprocess, CenteringProperties) {
  const auto g = ntu_rgbd_topology();
  std::mt19937_64 rng(5);
  auto s = random_sequence(rng, 3, 2, 25);
  std::fill(s.coords.begin() + 2 * 25 * 3, s.coords.begin() + 3 * 25 * 3, 0.0);  // frame 1 body 0 padding
  PreprocessOptions opt{true, false, 1};
  const auto once = preprocess(s, opt);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(once.at(0, 0, 1, c), 0.0);
  for (std::size_t n = 0; n < 25; ++n) EXPECT_EQ(once.at(1, 0, n, 0), 0.0);
  const auto twice = preprocess(once, opt);
  EXPECT_EQ(twice.coords, once.coords);
  EXPECT_EQ(once.label, s.label);
  EXPECT_EQ(once.frames, s.frames);
  EXPECT_EQ(once.joints, s.joints);
  ASSERT_EQ(once.transforms.size(), 1u);

  const auto b0 = compute_bones(s, g), b1 = compute_bones(once, g);
  for (std::size_t t = 0; t < 3; ++t) {
    if (t == 1) continue;
    for (std::size_t m = 0; m < 2; ++m)
      for (std::size_t e = 0; e < b0.edges.size(); ++e)
        for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(b0.at(t, m, e, c), b1.at(t, m, e, c), 1e-12);
  }
}

TEST(Preprocess, ScaleNormalizesMeanRadius) {
  SkeletonSequence s(1, 1, 3);
  s.coords = {0, 0, 0, 2, 0, 0, 0, 4, 0};
  const auto out = preprocess(s, PreprocessOptions{true, true, 0});
  EXPECT_DOUBLE_EQ(out.at(0, 0, 1, 0), 1.0);
  EXPECT_DOUBLE_EQ(out.at(0, 0, 2, 1), 2.0);
  EXPECT_EQ(out.transforms.size(), 2u);
}

TEST(Dataset, ValidationRejectsBadLabelsAndDuplicates) {
  Dataset d;
  d.num_classes = 2;
  SkeletonSequence a(1, 1, 1);
  a.id = "a";
  d.samples = {a, a};
  EXPECT_THROW(validate_dataset(d), DataError);
  d.samples[1].id = "b";
  d.samples[1].label = 2;
  EXPECT_THROW(validate_dataset(d), DataError);
}

TEST(Dataset, WriteAndLoadManifestRoundTrip) {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "fgcn_test_manifest";
  fs::remove_all(dir);
  SynthConfig cfg;
  cfg.train_per_class = 2;
  cfg.test_per_class = 1;
  const auto splits = synth_dataset(cfg, 9);
  const auto manifest = write_dataset(dir.string(), splits.train);
  const auto back = load_manifest(manifest, ParseOptions{1});
  ASSERT_EQ(back.size(), splits.train.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back.samples[i].id, splits.train.samples[i].id);
    EXPECT_TRUE(bit_equal(back.samples[i].coords, splits.train.samples[i].coords));
  }
  EXPECT_THROW(load_manifest((dir / "missing.manifest").string()), DataError);
  fs::remove_all(dir);
}

TEST(Synth, DeterministicAndDisjoint) {
  SynthConfig cfg;
  const auto a = synth_dataset(cfg, 3), b = synth_dataset(cfg, 3), c = synth_dataset(cfg, 4);
  ASSERT_EQ(a.train.size(), 64u);
  ASSERT_EQ(a.test.size(), 32u);
  for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_TRUE(bit_equal(a.train.samples[i].coords, b.train.samples[i].coords));
  EXPECT_FALSE(bit_equal(a.train.samples[0].coords, c.train.samples[0].coords));
  std::set<std::string> ids;
  for (const auto& s : a.train.samples) ids.insert(s.id);
  for (const auto& s : a.test.samples) EXPECT_EQ(ids.count(s.id), 0u);
  for (const auto& s : a.train.samples) EXPECT_TRUE(std::all_of(s.coords.begin(), s.coords.end(), [](double x) { return std::isfinite(x); }));
}

TEST(Synth, ZeroNoiseSameLatentIdentical) {
  const auto g = ntu_rgbd_topology();
  const auto pose = rest_pose(g);
  const auto motions = class_motions(g, 4);
  SampleLatent lat;
  lat.length = 30;
  lat.phase = 0.7;
  std::mt19937_64 r1(1), r2(2);
  const auto a = synthesize_sequence(g, pose, motions[2], lat, 2, 4, 1, 0.0, r1, "a");
  const auto b = synthesize_sequence(g, pose, motions[2], lat, 2, 4, 1, 0.0, r2, "b");
  EXPECT_EQ(a.coords, b.coords);
}

TEST(Synth, RejectsSingleClass) {
  SynthConfig cfg;
  cfg.classes = 1;
  EXPECT_THROW(synth_dataset(cfg, 1), ConfigError);
}

TEST(Synth, NearestCentroidBeatsChance) {
  const auto d = synth_dataset(SynthConfig{}, 1);
  EXPECT_GT(nearest_centroid_accuracy(d.train, d.test), 0.25);
}

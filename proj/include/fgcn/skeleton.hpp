#pragma once

// Skeleton sequences, their canonical text format, bones and motion.
//
// Canonical sequence file:
//   line 1            len M N C y id
//   len * M rows      3N decimals (x y z per joint), frame-major then body-major
// '#' starts a comment anywhere on a line; blank lines are ignored. Values
// are written in shortest round-trip form so write -> read is bit-exact.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "fgcn/error.hpp"
#include "fgcn/graph.hpp"

namespace fgcn {

struct SkeletonSequence {
  std::string id;
  std::size_t frames = 0;
  std::size_t bodies = 0;
  std::size_t joints = 0;
  std::size_t num_classes = 0;
  std::size_t label = 0;
  // frames x bodies x joints x 3
  std::vector<double> coords;
  std::vector<bool> body_present;
  std::vector<std::string> transforms;

  SkeletonSequence() = default;
  SkeletonSequence(std::size_t len, std::size_t m, std::size_t n)
      : frames(len), bodies(m), joints(n), coords(len * m * n * 3, 0.0), body_present(m, true) {}

  double& at(std::size_t t, std::size_t m, std::size_t n, std::size_t c) {
    return coords[((t * bodies + m) * joints + n) * 3 + c];
  }
  double at(std::size_t t, std::size_t m, std::size_t n, std::size_t c) const {
    return coords[((t * bodies + m) * joints + n) * 3 + c];
  }

  // Same dimensions and labels, zero coordinates.
  SkeletonSequence like() const {
    SkeletonSequence s(frames, bodies, joints);
    s.id = id;
    s.num_classes = num_classes;
    s.label = label;
    s.body_present = body_present;
    s.transforms = transforms;
    return s;
  }
};

// One 3-vector per oriented edge (parent -> child) per body per frame.
struct BoneSequence {
  std::size_t frames = 0;
  std::size_t bodies = 0;
  std::vector<Edge> edges;  // (parent, child)
  std::vector<double> vectors;

  double& at(std::size_t t, std::size_t m, std::size_t e, std::size_t c) {
    return vectors[((t * bodies + m) * edges.size() + e) * 3 + c];
  }
  double at(std::size_t t, std::size_t m, std::size_t e, std::size_t c) const {
    return vectors[((t * bodies + m) * edges.size() + e) * 3 + c];
  }
};

struct ParseOptions {
  // Body slots are zero-padded up to this count.
  std::size_t min_bodies = 2;
};

namespace detail {

inline std::string_view strip_comment(std::string_view line) {
  if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
  return line;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline bool parse_double(std::string_view tok, double& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && ptr == tok.data() + tok.size() && std::isfinite(out);
}

inline bool parse_size(std::string_view tok, std::size_t& out) {
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && ptr == tok.data() + tok.size();
}

inline void write_double(std::ostream& os, double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  os.write(buf, ptr - buf);
}

}  // namespace detail

// Incremental reader: parses the header eagerly and frame rows on demand, so
// a consumer can act on early frames before later ones are read.
class SequenceReader {
 public:
  SequenceReader(std::istream& in, std::string source = "<sequence>", ParseOptions opt = {})
      : in_(in), source_(std::move(source)) {
    std::string line;
    while (next_line(line)) {
      const auto toks = detail::split_ws(detail::strip_comment(line));
      if (toks.empty()) continue;
      if (toks.size() != 6)
        throw DataError(source_, lineno_, "header must be 'len M N C y id', got " +
                                              std::to_string(toks.size()) + " fields");
      std::size_t len = 0, m = 0, n = 0, c = 0, y = 0;
      if (!detail::parse_size(toks[0], len) || !detail::parse_size(toks[1], m) ||
          !detail::parse_size(toks[2], n) || !detail::parse_size(toks[3], c) ||
          !detail::parse_size(toks[4], y))
        throw DataError(source_, lineno_, "header fields len M N C y must be non-negative integers");
      if (len == 0) throw DataError(source_, lineno_, "sequence must have at least one frame");
      if (m == 0 || n == 0) throw DataError(source_, lineno_, "body and joint counts must be positive");
      if (c == 0 || y >= c)
        throw DataError(source_, lineno_, "label " + std::to_string(y) + " not in [0, " +
                                              std::to_string(c) + ")");
      file_bodies_ = m;
      seq_ = SkeletonSequence(len, std::max(m, opt.min_bodies), n);
      seq_.num_classes = c;
      seq_.label = y;
      seq_.id = std::string(toks[5]);
      std::fill(seq_.body_present.begin(), seq_.body_present.end(), false);
      return;
    }
    throw DataError(source_, lineno_, "missing header line");
  }

  const SkeletonSequence& sequence() const { return seq_; }
  std::size_t frames_loaded() const { return rows_ / file_bodies_; }
  std::size_t total_frames() const { return seq_.frames; }
  std::size_t line() const { return lineno_; }

  // Reads rows until frame `frame` (0-based) is complete.
  void load_through(std::size_t frame) {
    frame = std::min(frame, seq_.frames - 1);
    std::string line;
    while (frames_loaded() <= frame) {
      if (!next_line(line))
        throw DataError(source_, lineno_, "unexpected end of file: expected " +
                                              std::to_string(seq_.frames * file_bodies_) +
                                              " rows, found " + std::to_string(rows_));
      const auto toks = detail::split_ws(detail::strip_comment(line));
      if (toks.empty()) continue;
      if (toks.size() != 3 * seq_.joints)
        throw DataError(source_, lineno_, "row has " + std::to_string(toks.size()) +
                                              " values, expected " + std::to_string(3 * seq_.joints));
      const std::size_t t = rows_ / file_bodies_, m = rows_ % file_bodies_;
      bool nonzero = false;
      for (std::size_t i = 0; i < toks.size(); ++i) {
        double v = 0;
        if (!detail::parse_double(toks[i], v))
          throw DataError(source_, lineno_, "invalid number '" + std::string(toks[i]) + "'");
        seq_.at(t, m, i / 3, i % 3) = v;
        nonzero = nonzero || v != 0.0;
      }
      if (nonzero) seq_.body_present[m] = true;
      ++rows_;
    }
  }

  // Loads the remaining rows and rejects trailing data.
  SkeletonSequence finish() {
    load_through(seq_.frames - 1);
    std::string line;
    while (next_line(line))
      if (!detail::split_ws(detail::strip_comment(line)).empty())
        throw DataError(source_, lineno_, "unexpected data after the last frame");
    return seq_;
  }

 private:
  bool next_line(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++lineno_;
    return true;
  }

  std::istream& in_;
  std::string source_;
  std::size_t lineno_ = 0;
  std::size_t rows_ = 0;
  std::size_t file_bodies_ = 1;
  SkeletonSequence seq_;
};

inline SkeletonSequence parse_sequence(std::istream& in, const std::string& source = "<sequence>",
                                       ParseOptions opt = {}) {
  SequenceReader r(in, source, opt);
  return r.finish();
}

inline SkeletonSequence load_sequence(const std::string& path, ParseOptions opt = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open sequence file: " + path);
  return parse_sequence(in, path, opt);
}

inline void write_sequence(std::ostream& os, const SkeletonSequence& s) {
  os << s.frames << ' ' << s.bodies << ' ' << s.joints << ' ' << s.num_classes << ' ' << s.label
     << ' ' << (s.id.empty() ? "-" : s.id) << '\n';
  for (std::size_t t = 0; t < s.frames; ++t)
    for (std::size_t m = 0; m < s.bodies; ++m) {
      for (std::size_t n = 0; n < s.joints; ++n)
        for (std::size_t c = 0; c < 3; ++c) {
          if (n || c) os << ' ';
          detail::write_double(os, s.at(t, m, n, c));
        }
      os << '\n';
    }
}

inline void save_sequence(const std::string& path, const SkeletonSequence& s) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write sequence file: " + path);
  write_sequence(os, s);
  if (!os) throw DataError("failed writing sequence file: " + path);
}

// ---------------------------------------------------------------------------
// Bones and motion

// Edges oriented (parent, child) with the parent the endpoint nearer the
// center joint; ties keep the listed order.
inline std::vector<Edge> oriented_edges(const GraphTopology& g) {
  const auto d = g.hop_distances();
  std::vector<Edge> out;
  for (auto [i, j] : g.edges) out.push_back(d[j] < d[i] ? Edge{j, i} : Edge{i, j});
  return out;
}

inline BoneSequence compute_bones(const SkeletonSequence& s, const GraphTopology& g) {
  if (s.joints != g.num_joints)
    throw ShapeError("sequence has " + std::to_string(s.joints) + " joints but topology '" +
                     g.name + "' has " + std::to_string(g.num_joints));
  BoneSequence b;
  b.frames = s.frames;
  b.bodies = s.bodies;
  b.edges = oriented_edges(g);
  b.vectors.assign(s.frames * s.bodies * b.edges.size() * 3, 0.0);
  for (std::size_t t = 0; t < s.frames; ++t)
    for (std::size_t m = 0; m < s.bodies; ++m)
      for (std::size_t e = 0; e < b.edges.size(); ++e)
        for (std::size_t c = 0; c < 3; ++c)
          b.at(t, m, e, c) = s.at(t, m, b.edges[e].second, c) - s.at(t, m, b.edges[e].first, c);
  return b;
}

// Bones placed on their child joint; joints that are nobody's child get zero.
inline SkeletonSequence bones_as_joints(const BoneSequence& b, const SkeletonSequence& like) {
  SkeletonSequence out = like.like();
  for (std::size_t t = 0; t < b.frames; ++t)
    for (std::size_t m = 0; m < b.bodies; ++m)
      for (std::size_t e = 0; e < b.edges.size(); ++e)
        for (std::size_t c = 0; c < 3; ++c) out.at(t, m, b.edges[e].second, c) = b.at(t, m, e, c);
  return out;
}

// Frame t holds v(t+1) - v(t); the last frame is zero so length is preserved.
inline SkeletonSequence compute_joint_motion(const SkeletonSequence& s) {
  SkeletonSequence out = s.like();
  const std::size_t stride = s.bodies * s.joints * 3;
  for (std::size_t t = 0; t + 1 < s.frames; ++t)
    for (std::size_t i = 0; i < stride; ++i)
      out.coords[t * stride + i] = s.coords[(t + 1) * stride + i] - s.coords[t * stride + i];
  return out;
}

inline BoneSequence compute_bone_motion(const BoneSequence& b) {
  BoneSequence out = b;
  std::fill(out.vectors.begin(), out.vectors.end(), 0.0);
  const std::size_t stride = b.bodies * b.edges.size() * 3;
  for (std::size_t t = 0; t + 1 < b.frames; ++t)
    for (std::size_t i = 0; i < stride; ++i)
      out.vectors[t * stride + i] = b.vectors[(t + 1) * stride + i] - b.vectors[t * stride + i];
  return out;
}

// ---------------------------------------------------------------------------
// Preprocessing

struct PreprocessOptions {
  bool center = true;
  bool scale = false;
  std::size_t center_joint = 0;
};

// Centering subtracts body 0's first-frame center joint from every
// (frame, body) row that is not all-zero padding. Scaling divides by the mean
// first-frame distance of body 0's joints from its center joint. Both read
// only frame 0, so a partially loaded sequence preprocesses identically.
// Each applied step is appended to `transforms`.
inline SkeletonSequence preprocess(const SkeletonSequence& s, const PreprocessOptions& opt) {
  SkeletonSequence out = s;
  if (opt.center_joint >= s.joints) throw ShapeError("center joint out of range");
  if (opt.center) {
    double origin[3];
    for (std::size_t c = 0; c < 3; ++c) origin[c] = s.at(0, 0, opt.center_joint, c);
    const std::size_t row = s.joints * 3;
    for (std::size_t t = 0; t < s.frames; ++t)
      for (std::size_t m = 0; m < s.bodies; ++m) {
        const auto first = s.coords.begin() + static_cast<std::ptrdiff_t>((t * s.bodies + m) * row);
        if (std::all_of(first, first + static_cast<std::ptrdiff_t>(row), [](double x) { return x == 0.0; }))
          continue;
        for (std::size_t n = 0; n < s.joints; ++n)
          for (std::size_t c = 0; c < 3; ++c) out.at(t, m, n, c) -= origin[c];
      }
    std::ostringstream note;
    note << "center joint=" << opt.center_joint << " origin=" << origin[0] << ',' << origin[1]
         << ',' << origin[2];
    out.transforms.push_back(note.str());
  }
  if (opt.scale) {
    double total = 0;
    for (std::size_t n = 0; n < s.joints; ++n) {
      double d2 = 0;
      for (std::size_t c = 0; c < 3; ++c) {
        const double d = out.at(0, 0, n, c) - out.at(0, 0, opt.center_joint, c);
        d2 += d * d;
      }
      total += std::sqrt(d2);
    }
    const double scale = total / static_cast<double>(s.joints);
    if (scale > 0) {
      for (auto& x : out.coords) x /= scale;
      std::ostringstream note;
      note << "scale divisor=" << scale;
      out.transforms.push_back(note.str());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Datasets

struct Dataset {
  std::vector<SkeletonSequence> samples;
  std::size_t num_classes = 0;
  std::string split;
  std::string source;

  std::size_t size() const { return samples.size(); }
};

inline void validate_dataset(const Dataset& d) {
  std::set<std::string> ids;
  for (const auto& s : d.samples) {
    if (s.label >= d.num_classes)
      throw DataError("sample " + s.id + " has label " + std::to_string(s.label) +
                      " outside [0, " + std::to_string(d.num_classes) + ")");
    if (!ids.insert(s.id).second) throw DataError("duplicate sample id " + s.id);
  }
}

// A manifest lists one sequence path per line, relative to the manifest's
// own directory unless absolute.
inline Dataset load_manifest(const std::string& path, ParseOptions opt = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset manifest: " + path);
  const auto base = std::filesystem::path(path).parent_path();
  Dataset d;
  d.source = path;
  d.split = std::filesystem::path(path).stem().string();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto toks = detail::split_ws(detail::strip_comment(line));
    if (toks.empty()) continue;
    std::filesystem::path p{std::string(toks[0])};
    if (p.is_relative()) p = base / p;
    auto s = load_sequence(p.string(), opt);
    if (d.num_classes == 0) d.num_classes = s.num_classes;
    if (s.num_classes != d.num_classes)
      throw DataError(path, lineno, "class count " + std::to_string(s.num_classes) +
                                        " disagrees with " + std::to_string(d.num_classes));
    d.samples.push_back(std::move(s));
  }
  if (d.samples.empty()) throw DataError("dataset manifest lists no sequences: " + path);
  validate_dataset(d);
  return d;
}

// Writes every sample under dir/<split>/<id>.skel plus dir/<split>.manifest.
inline std::string write_dataset(const std::string& dir, const Dataset& d) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(dir) / d.split, ec);
  if (ec) throw DataError("cannot create directory " + (fs::path(dir) / d.split).string() + ": " + ec.message());
  const auto manifest = (fs::path(dir) / (d.split + ".manifest")).string();
  std::ofstream mf(manifest);
  if (!mf) throw DataError("cannot write manifest: " + manifest);
  for (const auto& s : d.samples) {
    const auto rel = fs::path(d.split) / (s.id + ".skel");
    save_sequence((fs::path(dir) / rel).string(), s);
    mf << rel.generic_string() << '\n';
  }
  return manifest;
}

}  // namespace fgcn

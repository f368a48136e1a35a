#pragma once

// Skeleton graphs: validated topology, spatial-configuration partition of
// each 1-hop neighborhood into K = 3 subsets (root, centripetal,
// centrifugal), and the degree-normalized subset adjacency
//   Abar_k = Λ_k^{-1/2} A_k Λ_k^{-1/2},   Λ_k^{ii} = Σ_j A_k^{ij} + ε.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fgcn/error.hpp"
#include "fgcn/tensor.hpp"

namespace fgcn {

using Edge = std::pair<std::size_t, std::size_t>;

struct GraphTopology {
  std::string name = "custom";
  std::size_t num_joints = 0;
  std::vector<Edge> edges;
  std::size_t center = 0;
  std::size_t subsets = 3;
  std::vector<std::string> warnings;

  // Symmetric 0/1 adjacency of the edge set, no self loops.
  std::vector<int> adjacency() const {
    std::vector<int> a(num_joints * num_joints, 0);
    for (auto [i, j] : edges) {
      a[i * num_joints + j] = 1;
      a[j * num_joints + i] = 1;
    }
    return a;
  }

  // Hop distance of every joint from the center; unreachable joints get max().
  std::vector<std::size_t> hop_distances() const {
    constexpr auto inf = std::numeric_limits<std::size_t>::max();
    std::vector<std::vector<std::size_t>> nbr(num_joints);
    for (auto [i, j] : edges) {
      nbr[i].push_back(j);
      nbr[j].push_back(i);
    }
    std::vector<std::size_t> d(num_joints, inf);
    std::queue<std::size_t> q;
    d[center] = 0;
    q.push(center);
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      for (std::size_t v : nbr[u])
        if (d[v] == inf) {
          d[v] = d[u] + 1;
          q.push(v);
        }
    }
    return d;
  }

  bool connected() const {
    const auto d = hop_distances();
    return std::none_of(d.begin(), d.end(),
                        [](std::size_t x) { return x == std::numeric_limits<std::size_t>::max(); });
  }
};

inline GraphTopology build_topology(std::size_t num_joints, std::vector<Edge> edges,
                                    std::size_t center, std::string name = "custom") {
  if (num_joints == 0) throw ConfigError("topology needs at least one joint");
  if (center >= num_joints)
    throw ConfigError("center joint " + std::to_string(center) + " out of range [0, " +
                      std::to_string(num_joints) + ")");
  std::set<Edge> seen;
  for (auto [i, j] : edges) {
    if (i >= num_joints || j >= num_joints)
      throw ConfigError("edge (" + std::to_string(i) + ", " + std::to_string(j) +
                        ") has an endpoint out of range [0, " + std::to_string(num_joints) + ")");
    if (i == j) throw ConfigError("self edge at joint " + std::to_string(i));
    const Edge key{std::min(i, j), std::max(i, j)};
    if (!seen.insert(key).second)
      throw ConfigError("duplicate edge (" + std::to_string(i) + ", " + std::to_string(j) + ")");
  }
  GraphTopology g;
  g.name = std::move(name);
  g.num_joints = num_joints;
  g.edges = std::move(edges);
  g.center = center;
  if (!g.connected()) g.warnings.push_back("topology '" + g.name + "' is not connected");
  return g;
}

// NTU-RGB+D Kinect v2 layout, 25 joints, center at the middle of the spine.
inline GraphTopology ntu_rgbd_topology() {
  static constexpr std::array<std::pair<int, int>, 24> one_based{{
      {1, 2},   {2, 21},  {3, 21},  {4, 3},   {5, 21},  {6, 5},   {7, 6},   {8, 7},
      {9, 21},  {10, 9},  {11, 10}, {12, 11}, {13, 1},  {14, 13}, {15, 14}, {16, 15},
      {17, 1},  {18, 17}, {19, 18}, {20, 19}, {22, 23}, {23, 8},  {24, 25}, {25, 12},
  }};
  std::vector<Edge> e;
  for (auto [a, b] : one_based) e.emplace_back(a - 1, b - 1);
  return build_topology(25, std::move(e), 1, "ntu-rgbd");
}

// Northwestern-UCLA Kinect v1 layout, 20 joints, center at the spine.
inline GraphTopology nw_ucla_topology() {
  static constexpr std::array<std::pair<int, int>, 19> one_based{{
      {1, 2},  {2, 3},   {4, 3},   {5, 3},   {6, 5},   {7, 6},   {8, 7},
      {9, 3},  {10, 9},  {11, 10}, {12, 11}, {13, 1},  {14, 13}, {15, 14},
      {16, 15}, {17, 1}, {18, 17}, {19, 18}, {20, 19},
  }};
  std::vector<Edge> e;
  for (auto [a, b] : one_based) e.emplace_back(a - 1, b - 1);
  return build_topology(20, std::move(e), 1, "nw-ucla");
}

inline GraphTopology path_topology(std::size_t n, std::size_t center) {
  std::vector<Edge> e;
  for (std::size_t i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  return build_topology(n, std::move(e), center, "path" + std::to_string(n));
}

// Star with the hub at joint 0 and n - 1 leaves.
inline GraphTopology star_topology(std::size_t n) {
  std::vector<Edge> e;
  for (std::size_t i = 1; i < n; ++i) e.emplace_back(0, i);
  return build_topology(n, std::move(e), 0, "star" + std::to_string(n));
}

// Plain-text topology: first line "N center", then one "i j" pair per line.
// '#' starts a comment.
inline GraphTopology parse_topology(std::istream& in, const std::string& source = "<topology>") {
  std::string line;
  std::size_t lineno = 0;
  std::optional<std::pair<std::size_t, std::size_t>> header;
  std::vector<Edge> edges;
  auto numbers = [&](const std::string& text) {
    std::istringstream ss(text);
    std::vector<long long> out;
    std::string tok;
    while (ss >> tok) {
      std::size_t used = 0;
      long long v = 0;
      try {
        v = std::stoll(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size() || v < 0)
        throw DataError(source, lineno, "expected a non-negative integer, got '" + tok + "'");
      out.push_back(v);
    }
    return out;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto nums = numbers(line);
    if (nums.empty()) continue;
    if (nums.size() != 2) throw DataError(source, lineno, "expected two integers");
    if (!header)
      header.emplace(static_cast<std::size_t>(nums[0]), static_cast<std::size_t>(nums[1]));
    else
      edges.emplace_back(static_cast<std::size_t>(nums[0]), static_cast<std::size_t>(nums[1]));
  }
  if (!header) throw DataError(source, lineno, "missing 'N center' header");
  try {
    return build_topology(header->first, std::move(edges), header->second, source);
  } catch (const ConfigError& e) {
    throw DataError(source + ": " + e.what());
  }
}

// A built-in name ("ntu-rgbd", "nw-ucla", "pathN:c", "starN") or a file path.
inline GraphTopology resolve_topology(const std::string& name_or_path) {
  if (name_or_path == "ntu-rgbd" || name_or_path == "ntu") return ntu_rgbd_topology();
  if (name_or_path == "nw-ucla" || name_or_path == "ucla") return nw_ucla_topology();
  if (name_or_path.rfind("path", 0) == 0 && name_or_path.find('/') == std::string::npos) {
    const auto colon = name_or_path.find(':');
    const std::size_t n = std::stoul(name_or_path.substr(4, colon - 4));
    const std::size_t c = colon == std::string::npos ? n / 2 : std::stoul(name_or_path.substr(colon + 1));
    return path_topology(n, c);
  }
  if (name_or_path.rfind("star", 0) == 0 && name_or_path.find('/') == std::string::npos)
    return star_topology(std::stoul(name_or_path.substr(4)));
  std::ifstream in(name_or_path);
  if (!in) throw DataError("cannot open topology file: " + name_or_path);
  return parse_topology(in, name_or_path);
}

// Relabels joints: joint i of `g` becomes joint perm[i].
inline GraphTopology permute_topology(const GraphTopology& g, const std::vector<std::size_t>& perm) {
  if (perm.size() != g.num_joints) throw ShapeError("permutation length does not match joint count");
  std::vector<Edge> e;
  for (auto [i, j] : g.edges) e.emplace_back(perm[i], perm[j]);
  return build_topology(g.num_joints, std::move(e), perm[g.center], g.name + "-permuted");
}

// ---------------------------------------------------------------------------

enum Subset : std::size_t { root = 0, centripetal = 1, centrifugal = 2 };

struct SubsetPartition {
  std::size_t num_joints = 0;
  // subsets x N x N, 0/1 entries; row = receiving joint, column = neighbor.
  std::vector<std::vector<int>> adjacency;
  // Z: cardinality[k][i] = number of neighbors of joint i in subset k.
  std::vector<std::vector<int>> cardinality;

  int at(std::size_t k, std::size_t i, std::size_t j) const {
    return adjacency[k][i * num_joints + j];
  }
};

// Spatial-configuration labelling. The distance to the center is the hop
// distance, or the Euclidean distance to the center joint of
// `reference_pose` when one is given. A neighbor no farther from the center
// than the joint itself is centripetal; strictly farther is centrifugal.
inline SubsetPartition partition_spatial(
    const GraphTopology& g,
    const std::optional<std::vector<std::array<double, 3>>>& reference_pose = std::nullopt) {
  const std::size_t n = g.num_joints;
  std::vector<double> dist(n);
  if (reference_pose) {
    if (reference_pose->size() != n) throw ShapeError("reference pose joint count mismatch");
    const auto& c = (*reference_pose)[g.center];
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = (*reference_pose)[i];
      dist[i] = std::hypot(p[0] - c[0], p[1] - c[1], p[2] - c[2]);
    }
  } else {
    const auto hops = g.hop_distances();
    for (std::size_t i = 0; i < n; ++i)
      dist[i] = hops[i] == std::numeric_limits<std::size_t>::max()
                    ? std::numeric_limits<double>::infinity()
                    : static_cast<double>(hops[i]);
  }
  SubsetPartition p;
  p.num_joints = n;
  p.adjacency.assign(3, std::vector<int>(n * n, 0));
  p.cardinality.assign(3, std::vector<int>(n, 0));
  for (std::size_t i = 0; i < n; ++i) p.adjacency[root][i * n + i] = 1;
  const auto a = g.adjacency();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (!a[i * n + j]) continue;
      const std::size_t k = dist[j] <= dist[i] ? centripetal : centrifugal;
      p.adjacency[k][i * n + j] = 1;
    }
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) p.cardinality[k][i] += p.adjacency[k][i * n + j];
  return p;
}

inline constexpr double default_degree_epsilon = 1e-3;

// (K, N, N) tensor of Λ_k^{-1/2} A_k Λ_k^{-1/2}.
template <typename T = double>
Tensor<T> normalize(const SubsetPartition& p, double epsilon = default_degree_epsilon) {
  if (!(epsilon > 0)) throw ConfigError("degree epsilon must be positive");
  const std::size_t n = p.num_joints, K = p.adjacency.size();
  Tensor<T> out({K, n, n});
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> inv_sqrt(n);
    for (std::size_t i = 0; i < n; ++i) {
      double deg = epsilon;
      for (std::size_t j = 0; j < n; ++j) deg += p.at(k, i, j);
      inv_sqrt[i] = 1.0 / std::sqrt(deg);
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        out.data[(k * n + i) * n + j] = static_cast<T>(p.at(k, i, j) * inv_sqrt[i] * inv_sqrt[j]);
  }
  return out;
}

}  // namespace fgcn

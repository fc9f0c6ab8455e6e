#pragma once

#include <Eigen/Dense>
#include <array>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "riverfuse/date.hpp"
#include "riverfuse/network.hpp"
#include "riverfuse/observation.hpp"

namespace rft {

using namespace riverfuse;

/// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<unsigned> counter{0};
    std::random_device rd;
    std::ostringstream name;
    name << "riverfuse-test-" << rd() << "-" << counter++;
    path_ = std::filesystem::temp_directory_path() / name.str();
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

using NetworkRecords = std::pair<std::vector<NodeRecord>, std::vector<EdgeRecord>>;

/// Straight chain: n0 (source) -> n1 -> ... -> nK (mouth), edge ei from
/// n_i to n_{i+1} with the given length. One sub-basin unless ids are
/// provided per node.
inline NetworkRecords chain_network_records(const std::vector<double>& lengths,
                                            const std::vector<std::string>& node_basins = {},
                                            const std::vector<NodeKind>& kinds = {}) {
  const std::size_t n = lengths.size() + 1;
  double total = 0;
  for (const double l : lengths) total += l;
  std::vector<NodeRecord> nodes;
  double dist = total;  // distance to mouth of node i
  for (std::size_t i = 0; i < n; ++i) {
    NodeRecord node;
    node.id = "n" + std::to_string(i);
    node.x_km = total - dist;
    node.y_km = 0;
    node.kind = i == 0 ? NodeKind::source : (i + 1 == n ? NodeKind::mouth : NodeKind::confluence);
    if (!kinds.empty()) node.kind = kinds[i];
    node.sub_basin_id = node_basins.empty() ? "sb0" : node_basins[i];
    nodes.push_back(node);
    if (i < lengths.size()) dist -= lengths[i];
  }
  std::vector<EdgeRecord> edges;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    EdgeRecord e;
    e.id = "e" + std::to_string(i);
    e.up_node = "n" + std::to_string(i);
    e.down_node = "n" + std::to_string(i + 1);
    e.length_km = lengths[i];
    e.river_id = "main";
    e.trib_class = TribClass::main_stem;
    e.catchment_weight = 1.0;
    edges.push_back(e);
  }
  return {std::move(nodes), std::move(edges)};
}

inline RiverNetwork chain_network(const std::vector<double>& lengths,
                                  const std::vector<std::string>& node_basins = {},
                                  const std::vector<NodeKind>& kinds = {}) {
  auto [nodes, edges] = chain_network_records(lengths, node_basins, kinds);
  return RiverNetwork::build(std::move(nodes), std::move(edges));
}

/// Two headwater branches joining at a confluence: edges "a" (s1->c,
/// weight wa), "b" (s2->c, weight wb) and "d" (c->m, weight wa+wb).
inline NetworkRecords y_network_records(double wa = 1.0, double wb = 3.0, double len_a = 100,
                                        double len_b = 80, double len_d = 60,
                                        const std::string& basin_a = "sbA",
                                        const std::string& basin_b = "sbB",
                                        const std::string& basin_d = "sbD") {
  std::vector<NodeRecord> nodes{
      {"s1", len_d + len_a, 10, NodeKind::source, basin_a},
      {"s2", len_d + len_b, -12, NodeKind::source, basin_b},
      {"c", len_d, 0, NodeKind::confluence, basin_d},
      {"m", 0, 0, NodeKind::mouth, basin_d},
  };
  std::vector<EdgeRecord> edges{
      {"a", "s1", "c", len_a, "main", TribClass::main_stem, wa},
      {"b", "s2", "c", len_b, "tribB", TribClass::major_tributary, wb},
      {"d", "c", "m", len_d, "main", TribClass::main_stem, wa + wb},
  };
  return {std::move(nodes), std::move(edges)};
}

inline RiverNetwork y_network(double wa = 1.0, double wb = 3.0, double len_a = 100,
                              double len_b = 80, double len_d = 60,
                              const std::string& basin_a = "sbA",
                              const std::string& basin_b = "sbB",
                              const std::string& basin_d = "sbD") {
  auto [nodes, edges] = y_network_records(wa, wb, len_a, len_b, len_d, basin_a, basin_b, basin_d);
  return RiverNetwork::build(std::move(nodes), std::move(edges));
}

inline std::vector<NodeRecord> network_nodes(const RiverNetwork& net) {
  std::vector<NodeRecord> nodes;
  for (int v = 0; v < net.node_count(); ++v) nodes.push_back(net.node(v));
  return nodes;
}

inline std::vector<EdgeRecord> network_edges(const RiverNetwork& net) {
  std::vector<EdgeRecord> edges;
  for (int e = 0; e < net.edge_count(); ++e) edges.push_back(net.edge(e));
  return edges;
}

inline Observation make_obs(NetworkLocation loc, Date epoch, double height,
                            const std::string& mission = "m0",
                            OrbitClass orbit = OrbitClass::short_repeat, int track = 0,
                            std::optional<double> at_std = std::nullopt, double quality = 1.0) {
  Observation o;
  o.location = loc;
  o.epoch = epoch;
  o.height_m = height;
  o.mission = mission;
  o.orbit_class = orbit;
  o.track_id = track;
  o.along_track_std_m = at_std;
  o.quality_factor = quality;
  return o;
}

// ---------------------------------------------------------------------------
// Independent oracles, written against the file-format records rather than
// the production data structures.

/// Textbook B-spline by the plain two-term recursion. Half-open spans,
/// with the final span closed at the global right end.
inline double bspline_recursive(const std::vector<double>& t, int i, int d, double x) {
  if (d == 0) {
    const bool last = t[i + 1] >= t.back() && x == t.back();
    return (t[i] <= x && (x < t[i + 1] || last)) ? 1.0 : 0.0;
  }
  double left = 0, right = 0;
  if (t[i + d] > t[i]) {
    left = (x - t[i]) / (t[i + d] - t[i]) * bspline_recursive(t, i, d - 1, x);
  }
  if (t[i + d + 1] > t[i + 1]) {
    right = (t[i + d + 1] - x) / (t[i + d + 1] - t[i + 1]) *
            bspline_recursive(t, i + 1, d - 1, x);
  }
  return left + right;
}

/// Kriging weights from the dense bordered (KKT) system
/// [Sigma F; F^T 0] [lambda; -gamma] = [c; f], solved by full-pivot LU.
inline Eigen::VectorXd kkt_lambda(const Eigen::MatrixXd& sigma_tot, const Eigen::MatrixXd& F,
                                  const Eigen::VectorXd& c, const Eigen::VectorXd& f) {
  const Eigen::Index n = sigma_tot.rows();
  const Eigen::Index m = F.cols();
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + m, n + m);
  kkt.topLeftCorner(n, n) = sigma_tot;
  kkt.topRightCorner(n, m) = F;
  kkt.bottomLeftCorner(m, n) = F.transpose();
  Eigen::VectorXd rhs(n + m);
  rhs.head(n) = c;
  rhs.tail(m) = f;
  const Eigen::VectorXd x = kkt.fullPivLu().solve(rhs);
  return x.head(n);
}

/// Flow distance by literal path walking over the records: nullopt when
/// the two locations are not on one flow path or a dam node lies strictly
/// between them.
inline std::optional<double> oracle_river_distance(const std::vector<NodeRecord>& nodes,
                                                   const std::vector<EdgeRecord>& edges,
                                                   const std::string& edge_a, double off_a,
                                                   const std::string& edge_b, double off_b) {
  std::map<std::string, const EdgeRecord*> by_id;
  std::map<std::string, const EdgeRecord*> by_up_node;
  std::map<std::string, const NodeRecord*> node_by_id;
  for (const auto& e : edges) {
    by_id[e.id] = &e;
    by_up_node[e.up_node] = &e;
  }
  for (const auto& n : nodes) node_by_id[n.id] = &n;

  // Path of edges from an edge down to the mouth.
  const auto walk = [&](const std::string& id) {
    std::vector<const EdgeRecord*> path{by_id.at(id)};
    while (true) {
      const auto next = by_up_node.find(path.back()->down_node);
      if (next == by_up_node.end()) break;
      path.push_back(next->second);
    }
    return path;
  };

  const auto path_a = walk(edge_a);
  const auto path_b = walk(edge_b);
  if (edge_a == edge_b) return std::abs(off_a - off_b);

  // Determine which location is upstream: its path must contain the other
  // edge.
  const auto contains = [](const std::vector<const EdgeRecord*>& path, const std::string& id) {
    for (std::size_t i = 0; i < path.size(); ++i) {
      if (path[i]->id == id) return static_cast<int>(i);
    }
    return -1;
  };

  const EdgeRecord* up_edge;
  const EdgeRecord* down_edge;
  const std::vector<const EdgeRecord*>* up_path;
  int down_pos;
  double up_off, down_off;
  if (int pos = contains(path_a, edge_b); pos > 0) {
    up_edge = by_id.at(edge_a);
    down_edge = by_id.at(edge_b);
    up_path = &path_a;
    down_pos = pos;
    up_off = off_a;
    down_off = off_b;
  } else if (int pos2 = contains(path_b, edge_a); pos2 > 0) {
    up_edge = by_id.at(edge_b);
    down_edge = by_id.at(edge_a);
    up_path = &path_b;
    down_pos = pos2;
    up_off = off_b;
    down_off = off_a;
  } else {
    return std::nullopt;
  }

  // Dam nodes strictly between: the down nodes of every path edge above
  // the downstream edge.
  for (int i = 0; i < down_pos; ++i) {
    if (node_by_id.at((*up_path)[static_cast<std::size_t>(i)]->down_node)->kind ==
        NodeKind::dam) {
      return std::nullopt;
    }
  }

  double dist = up_edge->length_km - up_off;  // to the up edge's down node
  for (int i = 1; i < down_pos; ++i) dist += (*up_path)[static_cast<std::size_t>(i)]->length_km;
  dist += down_off;
  return dist;
}

/// Sub-basin centroids recomputed directly from the records.
inline std::map<std::string, std::pair<double, double>> oracle_centroids(
    const std::vector<NodeRecord>& nodes, const std::vector<EdgeRecord>& edges) {
  std::map<std::string, double> node_weight;
  std::map<std::string, bool> has_out;
  for (const auto& e : edges) {
    node_weight[e.up_node] = e.catchment_weight;
    has_out[e.up_node] = true;
  }
  for (const auto& e : edges) {
    if (!has_out[e.down_node]) node_weight[e.down_node] += e.catchment_weight;
  }
  std::map<std::string, std::array<double, 3>> acc;  // wsum, wx, wy
  std::map<std::string, std::array<double, 3>> plain;
  for (const auto& n : nodes) {
    const double w = node_weight[n.id];
    auto& a = acc[n.sub_basin_id];
    a[0] += w;
    a[1] += w * n.x_km;
    a[2] += w * n.y_km;
    auto& p = plain[n.sub_basin_id];
    p[0] += 1;
    p[1] += n.x_km;
    p[2] += n.y_km;
  }
  std::map<std::string, std::pair<double, double>> centroids;
  for (const auto& [basin, a] : acc) {
    if (a[0] > 0) {
      centroids[basin] = {a[1] / a[0], a[2] / a[0]};
    } else {
      const auto& p = plain[basin];
      centroids[basin] = {p[1] / p[0], p[2] / p[0]};
    }
  }
  return centroids;
}

}  // namespace rft

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "riverfuse/csv.hpp"

namespace riverfuse {

enum class NodeKind { source, confluence, mouth, dam, gauge_site };
enum class TribClass { main_stem, major_tributary, minor_tributary };

inline std::string to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::source: return "source";
    case NodeKind::confluence: return "confluence";
    case NodeKind::mouth: return "mouth";
    case NodeKind::dam: return "dam";
    case NodeKind::gauge_site: return "gauge-site";
  }
  throw std::logic_error("unreachable node kind");
}

inline NodeKind parse_node_kind(std::string_view s) {
  if (s == "source") return NodeKind::source;
  if (s == "confluence") return NodeKind::confluence;
  if (s == "mouth") return NodeKind::mouth;
  if (s == "dam") return NodeKind::dam;
  if (s == "gauge-site") return NodeKind::gauge_site;
  throw std::invalid_argument("unknown node kind '" + std::string(s) + "'");
}

inline std::string to_string(TribClass c) {
  switch (c) {
    case TribClass::main_stem: return "main-stem";
    case TribClass::major_tributary: return "major-tributary";
    case TribClass::minor_tributary: return "minor-tributary";
  }
  throw std::logic_error("unreachable tributary class");
}

inline TribClass parse_trib_class(std::string_view s) {
  if (s == "main-stem") return TribClass::main_stem;
  if (s == "major-tributary") return TribClass::major_tributary;
  if (s == "minor-tributary") return TribClass::minor_tributary;
  throw std::invalid_argument("unknown tributary class '" + std::string(s) + "'");
}

struct NodeRecord {
  std::string id;
  double x_km = 0;
  double y_km = 0;
  NodeKind kind = NodeKind::source;
  std::string sub_basin_id;
};

struct EdgeRecord {
  std::string id;
  std::string up_node;
  std::string down_node;
  double length_km = 0;
  std::string river_id;
  TribClass trib_class = TribClass::main_stem;
  double catchment_weight = 0;
};

/// A point on the network: an edge plus the distance from the edge's
/// upstream node, in km. Offsets are compared exactly; two locations
/// coincide only if edge and offset are bit-identical.
struct NetworkLocation {
  int edge = -1;
  double offset_km = 0;

  friend bool operator==(const NetworkLocation& a, const NetworkLocation& b) {
    return a.edge == b.edge && a.offset_km == b.offset_km;
  }
};

/// Directed tree of river reaches draining to a single mouth.
///
/// Flow direction follows the edges; every node has at most one downstream
/// edge and exactly one node (the mouth) has none. Dams are nodes that sever
/// flow connectivity without changing distances or topology. Build()-time
/// validation rejects cycles, multiple mouths, non-positive reach lengths
/// and catchment weights that fail to add up across confluences.
class RiverNetwork {
 public:
  static RiverNetwork build(std::vector<NodeRecord> nodes, std::vector<EdgeRecord> edges) {
    RiverNetwork net;
    net.node_records_ = std::move(nodes);
    net.edge_records_ = std::move(edges);
    net.index();
    net.validate_topology();
    net.compute_distances();
    net.compute_euler_tour();
    net.compute_dam_counts();
    net.compute_sub_basins();
    return net;
  }

  int node_count() const { return static_cast<int>(node_records_.size()); }
  int edge_count() const { return static_cast<int>(edge_records_.size()); }

  const NodeRecord& node(int i) const { return node_records_[i]; }
  const EdgeRecord& edge(int i) const { return edge_records_[i]; }

  int node_index(std::string_view id) const {
    const auto it = node_by_id_.find(std::string(id));
    return it == node_by_id_.end() ? -1 : it->second;
  }

  int edge_index(std::string_view id) const {
    const auto it = edge_by_id_.find(std::string(id));
    return it == edge_by_id_.end() ? -1 : it->second;
  }

  /// Resolves an (edge id, offset) pair, checking 0 <= offset <= length.
  NetworkLocation locate(std::string_view edge_id, double offset_km) const {
    const int e = edge_index(edge_id);
    if (e < 0) throw std::invalid_argument("unknown edge id '" + std::string(edge_id) + "'");
    if (!(offset_km >= 0.0) || offset_km > edge_records_[e].length_km) {
      throw std::invalid_argument("offset " + std::to_string(offset_km) +
                                  " outside edge '" + std::string(edge_id) + "' of length " +
                                  std::to_string(edge_records_[e].length_km));
    }
    return NetworkLocation{e, offset_km};
  }

  int mouth_node() const { return mouth_node_; }

  double node_distance_to_mouth(int node) const { return node_dist_mouth_[node]; }

  /// Along-stream distance from a location to the mouth (the chainage
  /// coordinate used by the trend model).
  double chainage_km(NetworkLocation loc) const {
    const auto& e = edge_records_[loc.edge];
    return node_dist_mouth_[down_node_[loc.edge]] + (e.length_km - loc.offset_km);
  }

  int edge_river(int edge) const { return edge_river_[edge]; }
  int river_count() const { return static_cast<int>(river_ids_.size()); }
  const std::string& river_id(int r) const { return river_ids_[r]; }

  int edge_sub_basin(int edge) const { return node_sub_basin_[up_node_[edge]]; }
  int sub_basin_count() const { return static_cast<int>(sub_basin_ids_.size()); }
  const std::string& sub_basin_id(int b) const { return sub_basin_ids_[b]; }

  /// True when water from `a` flows through `b` or vice versa and no dam
  /// sits strictly between them on the flow path. Locations on the same
  /// edge are always connected.
  bool flow_connected(NetworkLocation a, NetworkLocation b) const {
    if (a.edge == b.edge) return true;
    if (is_ancestor_edge(b.edge, a.edge)) return dams_between(a.edge, b.edge) == 0;
    if (is_ancestor_edge(a.edge, b.edge)) return dams_between(b.edge, a.edge) == 0;
    return false;
  }

  /// Along-stream distance when the pair is flow-connected, nullopt
  /// otherwise (including pairs severed by a dam).
  std::optional<double> river_distance(NetworkLocation a, NetworkLocation b) const {
    if (a.edge == b.edge) return std::abs(a.offset_km - b.offset_km);
    if (!flow_connected(a, b)) return std::nullopt;
    return std::abs(chainage_km(a) - chainage_km(b));
  }

  /// Euclidean distance between sub-basin centroids; exactly zero for
  /// locations in the same sub-basin.
  double basin_distance(NetworkLocation a, NetworkLocation b) const {
    const int ba = edge_sub_basin(a.edge);
    const int bb = edge_sub_basin(b.edge);
    if (ba == bb) return 0.0;
    const double dx = sub_basin_x_[ba] - sub_basin_x_[bb];
    const double dy = sub_basin_y_[ba] - sub_basin_y_[bb];
    return std::sqrt(dx * dx + dy * dy);
  }

  double catchment_weight(NetworkLocation loc) const {
    return edge_records_[loc.edge].catchment_weight;
  }

  double sub_basin_centroid_x(int b) const { return sub_basin_x_[b]; }
  double sub_basin_centroid_y(int b) const { return sub_basin_y_[b]; }

  /// True when a dam lies on the flow path from the location to the mouth
  /// (the location itself being upstream of the dam).
  bool blocked_by_dam(NetworkLocation loc) const { return dams_below_[loc.edge] > 0; }

  /// Removes every element whose `.location` is upstream of a dam.
  /// Idempotent; preserves order.
  template <typename T>
  std::vector<T> mask_upstream_of_dams(std::vector<T> items) const {
    std::vector<T> kept;
    kept.reserve(items.size());
    for (auto& item : items) {
      if (!blocked_by_dam(item.location)) kept.push_back(std::move(item));
    }
    return kept;
  }

  int up_node(int edge) const { return up_node_[edge]; }
  int down_node(int edge) const { return down_node_[edge]; }
  int down_edge(int edge) const { return down_edge_[edge]; }

 private:
  void index() {
    for (std::size_t i = 0; i < node_records_.size(); ++i) {
      if (!node_by_id_.emplace(node_records_[i].id, static_cast<int>(i)).second) {
        throw std::invalid_argument("duplicate node id '" + node_records_[i].id + "'");
      }
    }
    up_node_.resize(edge_records_.size());
    down_node_.resize(edge_records_.size());
    edge_river_.resize(edge_records_.size());
    for (std::size_t i = 0; i < edge_records_.size(); ++i) {
      const auto& e = edge_records_[i];
      if (!edge_by_id_.emplace(e.id, static_cast<int>(i)).second) {
        throw std::invalid_argument("duplicate edge id '" + e.id + "'");
      }
      const int up = node_index(e.up_node);
      const int down = node_index(e.down_node);
      if (up < 0) throw std::invalid_argument("edge '" + e.id + "' references unknown node '" + e.up_node + "'");
      if (down < 0) throw std::invalid_argument("edge '" + e.id + "' references unknown node '" + e.down_node + "'");
      if (up == down) throw std::invalid_argument("edge '" + e.id + "' is a self-loop");
      if (!(e.length_km > 0) || !std::isfinite(e.length_km)) {
        throw std::invalid_argument("edge '" + e.id + "' has non-positive length");
      }
      if (!(e.catchment_weight >= 0) || !std::isfinite(e.catchment_weight)) {
        throw std::invalid_argument("edge '" + e.id + "' has negative catchment weight");
      }
      up_node_[i] = up;
      down_node_[i] = down;
      auto [it, inserted] = river_by_id_.emplace(e.river_id, static_cast<int>(river_ids_.size()));
      if (inserted) river_ids_.push_back(e.river_id);
      edge_river_[i] = it->second;
    }
  }

  void validate_topology() {
    const int n = node_count();
    std::vector<int> out_edge(n, -1);
    std::vector<int> in_degree(n, 0);
    for (int e = 0; e < edge_count(); ++e) {
      const int up = up_node_[e];
      if (out_edge[up] != -1) {
        throw std::invalid_argument("node '" + node_records_[up].id +
                                    "' has multiple downstream edges");
      }
      out_edge[up] = e;
      ++in_degree[down_node_[e]];
    }

    mouth_node_ = -1;
    for (int v = 0; v < n; ++v) {
      if (out_edge[v] == -1 && in_degree[v] == 0) {
        throw std::invalid_argument("node '" + node_records_[v].id +
                                    "' is not connected to any edge");
      }
      if (out_edge[v] == -1) {
        if (mouth_node_ != -1) {
          throw std::invalid_argument("network must drain to a single mouth, found both '" +
                                      node_records_[mouth_node_].id + "' and '" +
                                      node_records_[v].id + "'");
        }
        mouth_node_ = v;
      }
    }
    if (mouth_node_ == -1 && n > 0) {
      throw std::invalid_argument("cycle detected: no node without a downstream edge");
    }
    if (n == 0 || edge_count() == 0) {
      throw std::invalid_argument("network must contain at least one edge");
    }

    // Walk downstream from every node; exceeding n steps means a cycle.
    for (int v = 0; v < n; ++v) {
      int cur = v;
      int steps = 0;
      while (out_edge[cur] != -1) {
        cur = down_node_[out_edge[cur]];
        if (++steps > n) {
          throw std::invalid_argument("cycle detected downstream of node '" +
                                      node_records_[v].id + "'");
        }
      }
      if (cur != mouth_node_) {
        throw std::invalid_argument("node '" + node_records_[v].id +
                                    "' does not drain to the mouth");
      }
    }

    // Catchment weights: additive at confluences, never decreasing along flow.
    for (int v = 0; v < n; ++v) {
      if (out_edge[v] == -1) continue;
      double inflow = 0;
      int n_in = 0;
      for (int e = 0; e < edge_count(); ++e) {
        if (down_node_[e] == v) {
          inflow += edge_records_[e].catchment_weight;
          ++n_in;
        }
      }
      const double out = edge_records_[out_edge[v]].catchment_weight;
      if (n_in >= 2) {
        const double tol = 1e-9 * std::max(1.0, std::abs(out));
        if (std::abs(inflow - out) > tol) {
          throw std::invalid_argument("catchment weight non-additive at node '" +
                                      node_records_[v].id + "' (inflow " +
                                      std::to_string(inflow) + ", downstream " +
                                      std::to_string(out) + ")");
        }
      } else if (n_in == 1) {
        if (out < inflow - 1e-9 * std::max(1.0, std::abs(inflow))) {
          throw std::invalid_argument("catchment weight decreases downstream at node '" +
                                      node_records_[v].id + "'");
        }
      }
    }

    down_edge_.assign(edge_count(), -1);
    for (int e = 0; e < edge_count(); ++e) down_edge_[e] = out_edge[down_node_[e]];
  }

  void compute_distances() {
    node_dist_mouth_.assign(node_count(), -1.0);
    node_dist_mouth_[mouth_node_] = 0.0;
    // Repeatedly relax upstream nodes; the tree is shallow enough that a
    // simple depth-ordered pass is clearest. Order edges by walking from
    // roots outward.
    std::vector<int> order;
    order.reserve(edge_count());
    std::vector<std::vector<int>> children(edge_count());
    std::vector<int> roots;
    for (int e = 0; e < edge_count(); ++e) {
      if (down_edge_[e] == -1) roots.push_back(e);
      else children[down_edge_[e]].push_back(e);
    }
    std::vector<int> stack = roots;
    while (!stack.empty()) {
      const int e = stack.back();
      stack.pop_back();
      order.push_back(e);
      for (int c : children[e]) stack.push_back(c);
    }
    for (int e : order) {
      node_dist_mouth_[up_node_[e]] =
          node_dist_mouth_[down_node_[e]] + edge_records_[e].length_km;
    }
    edge_children_ = std::move(children);
    edge_roots_ = std::move(roots);
  }

  void compute_euler_tour() {
    tin_.assign(edge_count(), 0);
    tout_.assign(edge_count(), 0);
    int clock = 0;
    // Iterative DFS over the edge tree rooted at the mouth-adjacent edges.
    std::vector<std::pair<int, std::size_t>> stack;
    for (int root : edge_roots_) {
      stack.emplace_back(root, 0);
      tin_[root] = clock++;
      while (!stack.empty()) {
        auto& [e, next_child] = stack.back();
        if (next_child < edge_children_[e].size()) {
          const int c = edge_children_[e][next_child++];
          tin_[c] = clock++;
          stack.emplace_back(c, 0);
        } else {
          tout_[e] = clock++;
          stack.pop_back();
        }
      }
    }
  }

  void compute_dam_counts() {
    dams_below_.assign(edge_count(), 0);
    // dams_below_[e] counts dam nodes on the path from down(e) to the
    // mouth, inclusive; parents are computed before children in the
    // traversal order from compute_distances().
    std::vector<int> stack = edge_roots_;
    std::vector<int> order;
    while (!stack.empty()) {
      const int e = stack.back();
      stack.pop_back();
      order.push_back(e);
      for (int c : edge_children_[e]) stack.push_back(c);
    }
    for (int e : order) {
      const int below = down_edge_[e] == -1 ? 0 : dams_below_[down_edge_[e]];
      dams_below_[e] = below + (node_records_[down_node_[e]].kind == NodeKind::dam ? 1 : 0);
    }
  }

  void compute_sub_basins() {
    node_sub_basin_.resize(node_count());
    for (int v = 0; v < node_count(); ++v) {
      const auto& id = node_records_[v].sub_basin_id;
      auto [it, inserted] = sub_basin_by_id_.emplace(id, static_cast<int>(sub_basin_ids_.size()));
      if (inserted) sub_basin_ids_.push_back(id);
      node_sub_basin_[v] = it->second;
    }

    // Centroid of each sub-basin: catchment-weighted mean of its node
    // coordinates. A node carries the weight of its downstream edge; the
    // mouth carries the total inflow weight.
    const int nb = sub_basin_count();
    std::vector<double> wsum(nb, 0), xsum(nb, 0), ysum(nb, 0);
    std::vector<double> cnt(nb, 0), xplain(nb, 0), yplain(nb, 0);
    std::vector<double> node_weight(node_count(), 0);
    for (int e = 0; e < edge_count(); ++e) {
      node_weight[up_node_[e]] = edge_records_[e].catchment_weight;
      if (down_node_[e] == mouth_node_) {
        node_weight[mouth_node_] += edge_records_[e].catchment_weight;
      }
    }
    for (int v = 0; v < node_count(); ++v) {
      const int b = node_sub_basin_[v];
      wsum[b] += node_weight[v];
      xsum[b] += node_weight[v] * node_records_[v].x_km;
      ysum[b] += node_weight[v] * node_records_[v].y_km;
      cnt[b] += 1;
      xplain[b] += node_records_[v].x_km;
      yplain[b] += node_records_[v].y_km;
    }
    sub_basin_x_.resize(nb);
    sub_basin_y_.resize(nb);
    for (int b = 0; b < nb; ++b) {
      if (wsum[b] > 0) {
        sub_basin_x_[b] = xsum[b] / wsum[b];
        sub_basin_y_[b] = ysum[b] / wsum[b];
      } else {
        sub_basin_x_[b] = xplain[b] / cnt[b];
        sub_basin_y_[b] = yplain[b] / cnt[b];
      }
    }
  }

  bool is_ancestor_edge(int anc, int desc) const {
    return tin_[anc] <= tin_[desc] && tout_[desc] <= tout_[anc];
  }

  // Number of dam nodes strictly between an upstream edge and a
  // downstream (ancestor) edge on the flow path.
  int dams_between(int up_edge, int anc_edge) const {
    return dams_below_[up_edge] - dams_below_[anc_edge];
  }

  std::vector<NodeRecord> node_records_;
  std::vector<EdgeRecord> edge_records_;
  std::map<std::string, int> node_by_id_;
  std::map<std::string, int> edge_by_id_;
  std::map<std::string, int> river_by_id_;
  std::map<std::string, int> sub_basin_by_id_;
  std::vector<std::string> river_ids_;
  std::vector<std::string> sub_basin_ids_;
  std::vector<int> up_node_, down_node_, down_edge_, edge_river_;
  std::vector<std::vector<int>> edge_children_;
  std::vector<int> edge_roots_;
  std::vector<int> node_sub_basin_;
  std::vector<double> node_dist_mouth_;
  std::vector<int> tin_, tout_, dams_below_;
  std::vector<double> sub_basin_x_, sub_basin_y_;
  int mouth_node_ = -1;
};

/// Reads the two-file network description: nodes.csv with columns
/// `node_id,x_km,y_km,kind,sub_basin_id` and edges.csv with columns
/// `edge_id,up_node,down_node,length_km,river_id,trib_class,catchment_weight`.
inline RiverNetwork load_network(const std::string& nodes_path, const std::string& edges_path) {
  const auto nodes_table = csv::read_table(
      nodes_path, {"node_id", "x_km", "y_km", "kind", "sub_basin_id"});
  std::vector<NodeRecord> nodes;
  nodes.reserve(nodes_table.rows.size());
  for (const auto& row : nodes_table.rows) {
    NodeRecord rec;
    rec.id = row.fields[0];
    rec.x_km = csv::parse_double(nodes_table, row, 1);
    rec.y_km = csv::parse_double(nodes_table, row, 2);
    try {
      rec.kind = parse_node_kind(row.fields[3]);
    } catch (const std::invalid_argument& err) {
      throw std::runtime_error(nodes_path + ":" + std::to_string(row.line) + ": " + err.what());
    }
    rec.sub_basin_id = row.fields[4];
    nodes.push_back(std::move(rec));
  }

  const auto edges_table = csv::read_table(
      edges_path, {"edge_id", "up_node", "down_node", "length_km", "river_id",
                   "trib_class", "catchment_weight"});
  std::vector<EdgeRecord> edges;
  edges.reserve(edges_table.rows.size());
  for (const auto& row : edges_table.rows) {
    EdgeRecord rec;
    rec.id = row.fields[0];
    rec.up_node = row.fields[1];
    rec.down_node = row.fields[2];
    rec.length_km = csv::parse_double(edges_table, row, 3);
    rec.river_id = row.fields[4];
    try {
      rec.trib_class = parse_trib_class(row.fields[5]);
    } catch (const std::invalid_argument& err) {
      throw std::runtime_error(edges_path + ":" + std::to_string(row.line) + ": " + err.what());
    }
    rec.catchment_weight = csv::parse_double(edges_table, row, 6);
    edges.push_back(std::move(rec));
  }

  return RiverNetwork::build(std::move(nodes), std::move(edges));
}

inline void save_network(const RiverNetwork& net, const std::string& nodes_path,
                         const std::string& edges_path) {
  csv::Writer nodes(nodes_path);
  nodes.row({"node_id", "x_km", "y_km", "kind", "sub_basin_id"});
  for (int v = 0; v < net.node_count(); ++v) {
    const auto& n = net.node(v);
    nodes.row({n.id, csv::format_fixed(n.x_km, 3), csv::format_fixed(n.y_km, 3),
               to_string(n.kind), n.sub_basin_id});
  }
  nodes.close();

  csv::Writer edges(edges_path);
  edges.row({"edge_id", "up_node", "down_node", "length_km", "river_id", "trib_class",
             "catchment_weight"});
  for (int e = 0; e < net.edge_count(); ++e) {
    const auto& rec = net.edge(e);
    edges.row({rec.id, rec.up_node, rec.down_node, csv::format_fixed(rec.length_km, 3),
               rec.river_id, to_string(rec.trib_class),
               csv::format_fixed(rec.catchment_weight, 6)});
  }
  edges.close();
}

}  // namespace riverfuse

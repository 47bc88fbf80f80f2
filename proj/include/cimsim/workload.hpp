// workload.hpp - DNN workload graph, weight tensors and reshaping.
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cimsim/common.hpp"

namespace cimsim {

enum class OpKind { conv, fc, depthwise_conv, elementwise, pool, activation };

inline const char* to_string(OpKind k) {
  switch (k) {
    case OpKind::conv: return "conv";
    case OpKind::fc: return "fc";
    case OpKind::depthwise_conv: return "depthwise_conv";
    case OpKind::elementwise: return "elementwise";
    case OpKind::pool: return "pool";
    case OpKind::activation: return "activation";
  }
  return "?";
}

inline OpKind parse_op_kind(const std::string& s) {
  if (s == "conv") return OpKind::conv;
  if (s == "fc") return OpKind::fc;
  if (s == "depthwise_conv") return OpKind::depthwise_conv;
  if (s == "elementwise") return OpKind::elementwise;
  if (s == "pool") return OpKind::pool;
  if (s == "activation") return OpKind::activation;
  throw SchemaError("workload: unknown op kind '" + s + "'");
}

inline bool is_mvm(OpKind k) {
  return k == OpKind::conv || k == OpKind::fc || k == OpKind::depthwise_conv;
}

struct OpNode {
  std::string id;
  OpKind kind = OpKind::fc;
  std::map<std::string, std::uint64_t> dims;
  std::vector<std::string> inputs;
  std::optional<std::string> weight_ref;

  std::uint64_t extent(const std::string& name) const {
    auto it = dims.find(name);
    if (it == dims.end()) throw SemanticError("node '" + id + "' has no extent '" + name + "'");
    return it->second;
  }
  std::uint64_t extent_or(const std::string& name, std::uint64_t fallback) const {
    auto it = dims.find(name);
    return it == dims.end() ? fallback : it->second;
  }
};

struct WeightTensor {
  std::string id;
  std::vector<std::size_t> shape;
  unsigned element_bitwidth = 8;
  std::vector<double> values;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    return n;
  }
  void check() const {
    if (element_bitwidth != 4 && element_bitwidth != 8 && element_bitwidth != 16)
      throw SemanticError("weight '" + id + "': bitwidth must be 4, 8 or 16");
    if (values.size() != element_count())
      throw SemanticError("weight '" + id + "': payload length does not match shape");
  }
};

inline const std::vector<std::string>& required_extents(OpKind kind) {
  static const std::vector<std::string> conv{"C_out", "C_in", "K_h", "K_w", "H_out", "W_out"};
  static const std::vector<std::string> dw{"C_in", "K_h", "K_w", "H_out", "W_out"};
  static const std::vector<std::string> fc{"M_in", "M_out"};
  static const std::vector<std::string> elem{"elements"};
  switch (kind) {
    case OpKind::conv: return conv;
    case OpKind::depthwise_conv: return dw;
    case OpKind::fc: return fc;
    default: return elem;
  }
}

class WorkloadGraph {
 public:
  WorkloadGraph() = default;

  // Validates and takes ownership of the node list; throws on structural
  // errors.
  explicit WorkloadGraph(std::vector<OpNode> nodes, std::string name = {})
      : name_(std::move(name)), nodes_(std::move(nodes)) {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const auto& n = nodes_[i];
      if (n.id.empty()) throw SemanticError("workload: node with empty id");
      if (!index_.emplace(n.id, i).second)
        throw SemanticError("workload: duplicate node id '" + n.id + "'");
    }
    for (const auto& n : nodes_) {
      for (const auto& e : required_extents(n.kind))
        if (!n.dims.count(e))
          throw SemanticError("workload: node '" + n.id + "' (" + to_string(n.kind) +
                              ") is missing extent '" + e + "'");
      for (const auto& [k, v] : n.dims)
        if (v < 1) throw SemanticError("workload: node '" + n.id + "' extent '" + k + "' < 1");
      for (const auto& in : n.inputs)
        if (!index_.count(in))
          throw SemanticError("workload: node '" + n.id + "' references dangling input '" + in +
                              "'");
    }
    topo_ = compute_topo();
  }

  const std::string& name() const { return name_; }
  const std::vector<OpNode>& nodes() const { return nodes_; }
  const OpNode& node(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw SemanticError("workload: unknown node '" + id + "'");
    return nodes_[it->second];
  }
  bool contains(const std::string& id) const { return index_.count(id) != 0; }

  std::size_t edge_count() const {
    std::size_t e = 0;
    for (const auto& n : nodes_) e += n.inputs.size();
    return e;
  }

  // Node indices in a topological order; ties resolve to listing order.
  const std::vector<std::size_t>& topo_order() const { return topo_; }

 private:
  std::vector<std::size_t> compute_topo() const {
    const std::size_t n = nodes_.size();
    std::vector<std::size_t> indeg(n, 0);
    std::vector<std::vector<std::size_t>> out(n);
    for (std::size_t i = 0; i < n; ++i)
      for (const auto& in : nodes_[i].inputs) {
        out[index_.at(in)].push_back(i);
        ++indeg[i];
      }
    std::vector<std::size_t> order;
    std::vector<bool> done(n, false);
    // Kahn's algorithm, always taking the lowest listed ready node.
    while (order.size() < n) {
      std::size_t pick = n;
      for (std::size_t i = 0; i < n; ++i)
        if (!done[i] && indeg[i] == 0) {
          pick = i;
          break;
        }
      if (pick == n) throw SemanticError("workload: cycle detected in graph");
      done[pick] = true;
      order.push_back(pick);
      for (auto o : out[pick]) --indeg[o];
    }
    return order;
  }

  std::string name_;
  std::vector<OpNode> nodes_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::size_t> topo_;
};

// Document shape:
//   {"name": "...", "nodes": [{"id", "kind", "dims": {...}, "inputs": [...], "weight": "..."}]}
inline WorkloadGraph parse_workload(const std::string& text) {
  const json doc = detail::parse_json(text, "workload");
  if (!doc.is_object() || !doc.contains("nodes") || !doc["nodes"].is_array())
    throw SchemaError("workload: document must be an object with a 'nodes' array");
  std::vector<OpNode> nodes;
  for (const auto& jn : doc["nodes"]) {
    OpNode n;
    n.id = detail::get_required<std::string>(jn, "id", "workload.node");
    const std::string where = "workload.node[" + n.id + "]";
    n.kind = parse_op_kind(detail::get_required<std::string>(jn, "kind", where));
    if (!jn.contains("dims") || !jn["dims"].is_object())
      throw SchemaError(where + ": missing 'dims' object");
    for (const auto& [k, v] : jn["dims"].items()) {
      if (!v.is_number_integer() || v.get<std::int64_t>() < 1)
        throw SemanticError(where + ": extent '" + k + "' must be an integer >= 1");
      n.dims[k] = v.get<std::uint64_t>();
    }
    n.inputs = detail::get_or<std::vector<std::string>>(jn, "inputs", {}, where);
    if (jn.contains("weight") && !jn["weight"].is_null())
      n.weight_ref = detail::get_required<std::string>(jn, "weight", where);
    nodes.push_back(std::move(n));
  }
  return WorkloadGraph(std::move(nodes), detail::get_or<std::string>(doc, "name", "", "workload"));
}

// Original weight tensor shape: conv [C_out, C_in, K_h, K_w], depthwise
// [C_in, 1, K_h, K_w], fc [M_out, M_in].
inline std::vector<std::size_t> weight_shape(const OpNode& node) {
  switch (node.kind) {
    case OpKind::conv:
      return {node.extent("C_out"), node.extent("C_in"), node.extent("K_h"), node.extent("K_w")};
    case OpKind::depthwise_conv:
      return {node.extent("C_in"), 1, node.extent("K_h"), node.extent("K_w")};
    case OpKind::fc: return {node.extent("M_out"), node.extent("M_in")};
    default: throw SemanticError("node '" + node.id + "' carries no weights");
  }
}

inline std::vector<std::string> default_flatten_order(OpKind kind) {
  switch (kind) {
    case OpKind::conv: return {"C_in", "K_h", "K_w"};
    case OpKind::depthwise_conv: return {"K_h", "K_w"};
    case OpKind::fc: return {"M_in"};
    default: return {};
  }
}

namespace detail {

// Row-side extents of the reshaped matrix; the column side is C_out, C_in
// (depthwise) or M_out.
inline std::vector<std::string> row_extents(OpKind kind) { return default_flatten_order(kind); }

inline void check_flatten(const OpNode& node, const std::vector<std::string>& order) {
  if (!is_mvm(node.kind))
    throw SemanticError("reshape: node '" + node.id + "' is not an MVM op");
  auto expected = row_extents(node.kind);
  for (const auto& name : order)
    if (std::find(expected.begin(), expected.end(), name) == expected.end())
      throw SemanticError("reshape: flatten order names extent '" + name + "' that node '" +
                          node.id + "' lacks");
  auto sorted_order = order;
  std::sort(sorted_order.begin(), sorted_order.end());
  std::sort(expected.begin(), expected.end());
  if (sorted_order != expected)
    throw SemanticError("reshape: flatten order for node '" + node.id +
                        "' must list each row extent exactly once");
}

}  // namespace detail

// Rows M and columns N of the 2-D weight matrix for the given flatten order.
inline Dims2 reshaped_dims(const OpNode& node, const std::vector<std::string>& flatten_order) {
  detail::check_flatten(node, flatten_order);
  std::size_t rows = 1;
  for (const auto& name : flatten_order) rows *= node.extent(name);
  switch (node.kind) {
    case OpKind::conv: return {rows, node.extent("C_out")};
    case OpKind::depthwise_conv: return {rows, node.extent("C_in")};
    default: return {rows, node.extent("M_out")};
  }
}

// Row of the reshaped matrix for a row-side coordinate assignment, with the
// last extent in flatten_order varying fastest.
inline std::size_t flattened_row(const OpNode& node, const std::vector<std::string>& flatten_order,
                                 const std::map<std::string, std::size_t>& coord) {
  std::size_t row = 0;
  for (const auto& name : flatten_order) row = row * node.extent(name) + coord.at(name);
  return row;
}

// Reshape a weight tensor (see weight_shape for layout) into its 2-D matrix.
inline Matrix reshape_weights(const OpNode& node, const WeightTensor& tensor,
                              const std::vector<std::string>& flatten_order) {
  const Dims2 d = reshaped_dims(node, flatten_order);
  if (tensor.shape != weight_shape(node))
    throw SemanticError("reshape: tensor '" + tensor.id + "' shape does not match node '" +
                        node.id + "'");
  tensor.check();
  Matrix m(d.rows, d.cols);
  if (node.kind == OpKind::fc) {
    for (std::size_t o = 0; o < d.cols; ++o)
      for (std::size_t i = 0; i < d.rows; ++i) m(i, o) = tensor.values[o * d.rows + i];
    return m;
  }
  const std::size_t kh = node.extent("K_h"), kw = node.extent("K_w");
  const std::size_t cin = node.kind == OpKind::conv ? node.extent("C_in") : 1;
  std::map<std::string, std::size_t> coord;
  for (std::size_t o = 0; o < d.cols; ++o)
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t y = 0; y < kh; ++y)
        for (std::size_t x = 0; x < kw; ++x) {
          coord["K_h"] = y;
          coord["K_w"] = x;
          if (node.kind == OpKind::conv) coord["C_in"] = c;
          const std::size_t row = flattened_row(node, flatten_order, coord);
          m(row, o) = tensor.values[((o * cin + c) * kh + y) * kw + x];
        }
  return m;
}

inline std::uint64_t mac_count(const OpNode& node) {
  switch (node.kind) {
    case OpKind::conv:
      return node.extent("C_out") * node.extent("C_in") * node.extent("K_h") *
             node.extent("K_w") * node.extent("H_out") * node.extent("W_out");
    case OpKind::depthwise_conv:
      return node.extent("C_in") * node.extent("K_h") * node.extent("K_w") *
             node.extent("H_out") * node.extent("W_out");
    case OpKind::fc: return node.extent("M_in") * node.extent("M_out") * node.extent_or("batch", 1);
    default: throw SemanticError("mac_count: unsupported op kind for node '" + node.id + "'");
  }
}

// Input vectors streamed through the weight matrix.
inline std::uint64_t feature_vectors(const OpNode& node) {
  switch (node.kind) {
    case OpKind::conv:
    case OpKind::depthwise_conv: return node.extent("H_out") * node.extent("W_out");
    case OpKind::fc: return node.extent_or("batch", 1);
    default: return 0;
  }
}

inline std::uint64_t output_elements(const OpNode& node) {
  switch (node.kind) {
    case OpKind::conv: return node.extent("C_out") * node.extent("H_out") * node.extent("W_out");
    case OpKind::depthwise_conv:
      return node.extent("C_in") * node.extent("H_out") * node.extent("W_out");
    case OpKind::fc: return node.extent("M_out") * node.extent_or("batch", 1);
    default: return node.extent("elements");
  }
}

}  // namespace cimsim

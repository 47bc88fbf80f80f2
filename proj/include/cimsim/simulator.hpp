// simulator.hpp - per-step latency, pipelined total latency, access counts
// and energy; `simulate` drives the whole flow for one configuration.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cimsim/common.hpp"
#include "cimsim/flexblock.hpp"
#include "cimsim/hardware.hpp"
#include "cimsim/mapper.hpp"
#include "cimsim/profiler.hpp"
#include "cimsim/pruner.hpp"
#include "cimsim/workload.hpp"

namespace cimsim {

struct StepLatency {
  std::uint64_t load = 0;
  std::uint64_t comp = 0;
  std::uint64_t wb = 0;
  bool operator==(const StepLatency&) const = default;
};

inline std::uint64_t cycles_for(std::uint64_t bytes, const MemoryUnit* buf) {
  if (bytes == 0) return 0;
  if (!buf) throw SemanticError("latency: no buffer serves this traffic");
  const long double c = static_cast<long double>(bytes) / buf->bytes_per_cycle();
  return static_cast<std::uint64_t>(std::ceil(c - 1e-9L));
}

// Bit-serial cycles for `passes` input vectors with a skippable fraction.
inline std::uint64_t compute_cycles(std::uint64_t passes, unsigned bits, double skip) {
  const long double c = static_cast<long double>(passes) * bits * (1.0L - skip);
  return static_cast<std::uint64_t>(std::ceil(c - 1e-9L));
}

inline std::vector<StepLatency> step_latencies(const Schedule& s, const HardwareSpec& hw) {
  const auto* wbuf = hw.buffer_for("weights");
  const auto* obuf = hw.buffer_for("outputs");
  std::vector<StepLatency> out;
  out.reserve(s.steps.size());
  for (const auto& st : s.steps)
    out.push_back({cycles_for(st.weight_bytes, wbuf), compute_cycles(st.passes, hw.feature_bits, st.skip_ratio),
                   cycles_for(st.wb_bytes + st.psum_merge_bytes + post_op_bytes(st, hw.feature_bits), obuf)});
  return out;
}

// Contribution of step i (i >= 1): ping-pong hides the load behind the
// previous step's compute; writeback hides behind the next compute only when
// overlap is enabled and it is no longer than that compute.
inline std::uint64_t pipeline_overlap(const StepLatency& prev, const StepLatency& cur, Banking banking,
                                      bool writeback_overlap) {
  if (banking == Banking::single) return prev.comp + prev.wb + cur.load;
  const std::uint64_t wb_term = (writeback_overlap && prev.wb <= cur.comp) ? 0 : prev.wb;
  return std::max(cur.load, prev.comp + wb_term);
}

inline std::uint64_t total_latency(const std::vector<StepLatency>& steps, Banking banking, bool writeback_overlap) {
  if (steps.empty()) return 0;
  std::uint64_t t = steps.front().load;
  for (std::size_t i = 1; i < steps.size(); ++i)
    t += pipeline_overlap(steps[i - 1], steps[i], banking, writeback_overlap);
  return t + steps.back().comp + steps.back().wb;
}

inline Banking weight_banking(const HardwareSpec& hw) {
  const auto* b = hw.buffer_for("weights");
  return b ? b->banking : Banking::single;
}

// ---------------------------------------------------------------------------
// Access counts

struct MemAccess {
  std::uint64_t reads = 0;
  std::uint64_t writes = 0;
};

struct AccessCounts {
  std::map<std::string, std::uint64_t> compute;  // by unit name
  std::map<std::string, MemAccess> memory;       // by buffer name
};

inline AccessCounts count_accesses(const Schedule& s, const HardwareSpec& hw) {
  AccessCounts a;
  for (const auto& u : hw.compute) a.compute[u.name] = 0;
  for (const auto& m : hw.memory) a.memory[m.name] = {};
  const unsigned fbits = hw.feature_bits;
  auto add_unit = [&](UnitKind k, std::uint64_t n, bool support_only = false) {
    for (const auto& u : hw.compute)
      if (u.kind == k && u.sparsity_support == support_only) {
        a.compute[u.name] += n;
        return;
      }
  };
  auto mem = [&](const std::string& role) -> MemAccess* {
    const auto* b = hw.buffer_for(role);
    return b ? &a.memory[b->name] : nullptr;
  };
  auto accesses = [&](const std::string& role, std::uint64_t bytes) -> std::uint64_t {
    const auto* b = hw.buffer_for(role);
    return b ? b->accesses_for_bytes(bytes) : 0;
  };
  auto post = [&](const PostOp& op) {
    add_unit(UnitKind::postprocess, op.elements);
    if (auto* m = mem("outputs")) {
      m->reads += accesses("outputs", ceil_div(op.reads * fbits, 8));
      m->writes += accesses("outputs", ceil_div(op.writes * fbits, 8));
    }
  };
  for (const auto& op : s.leading_post_ops) post(op);
  std::set<std::size_t> layers_done;
  const MemoryUnit* idx = nullptr;
  for (const auto& m : hw.memory)
    if (m.kind == MemKind::index_memory) idx = &m;
  for (const auto& st : s.steps) {
    for (const auto& op : st.post_ops) post(op);
    if (st.layer >= s.layers.size()) continue;
    const auto& layer = s.layers[st.layer];
    const bool intra = layer.inputs_per_row > 1;
    for (const auto& p : st.placements) {
      const auto& ti = layer.tiling.tiles[p.tile];
      const std::uint64_t cyc = compute_cycles(p.features, fbits, st.skip_ratio);
      add_unit(UnitKind::cim_subarray, ti.active_subarrays * cyc);
      add_unit(UnitKind::adder_tree, ti.used_cols * cyc);
      add_unit(UnitKind::shift_adder, ti.used_cols * cyc);
      add_unit(UnitKind::accumulator, ti.used_cols * p.features);
      if (intra) add_unit(UnitKind::index_mux, ti.used_rows * cyc, true);
      if (layer.misaligned) add_unit(UnitKind::accumulator, ti.used_cols * p.features, true);
    }
    add_unit(UnitKind::preprocess, st.input_elements);
    add_unit(UnitKind::zero_detect, st.input_elements, true);
    if (layers_done.insert(st.layer).second) add_unit(UnitKind::postprocess, layer.output_elements);
    if (auto* m = mem("weights")) m->reads += accesses("weights", st.weight_bytes);
    if (auto* m = mem("inputs")) m->reads += accesses("inputs", st.input_bytes);
    if (auto* m = mem("outputs")) {
      m->writes += accesses("outputs", st.wb_bytes);
      m->reads += accesses("outputs", st.psum_merge_bytes);
    }
    if (idx && st.index_bits) a.memory[idx->name].reads += ceil_div(st.index_bits, idx->width_bits);
  }
  return a;
}

// ---------------------------------------------------------------------------
// Energy

struct EnergyEntry {
  std::string name;
  bool is_memory = false;
  bool sparsity_support = false;
  std::uint64_t accesses = 0;  // compute accesses, or reads + writes
  double dynamic = 0.0;        // pJ
  double static_energy = 0.0;  // pJ
  double total() const { return dynamic + static_energy; }
};

struct EnergyBreakdown {
  std::vector<EnergyEntry> entries;
  double dynamic() const {
    double s = 0;
    for (const auto& e : entries) s += e.dynamic;
    return s;
  }
  double static_energy() const {
    double s = 0;
    for (const auto& e : entries) s += e.static_energy;
    return s;
  }
  double support() const {
    double s = 0;
    for (const auto& e : entries)
      if (e.sparsity_support) s += e.total();
    return s;
  }
  double total() const { return dynamic() + static_energy(); }
};

// Dynamic energy per access plus static power integrated over the latency.
inline EnergyBreakdown total_energy(const AccessCounts& counts, const HardwareSpec& hw, std::uint64_t latency) {
  EnergyBreakdown b;
  const double L = static_cast<double>(latency);
  for (const auto& u : hw.compute) {
    EnergyEntry e{u.name, false, u.sparsity_support, 0, 0.0, 0.0};
    auto it = counts.compute.find(u.name);
    if (it != counts.compute.end()) e.accesses = it->second;
    e.dynamic = u.energy_per_access * static_cast<double>(e.accesses);
    e.static_energy = u.static_power * static_cast<double>(u.count) * L;
    b.entries.push_back(e);
  }
  for (const auto& m : hw.memory) {
    EnergyEntry e{m.name, true, m.sparsity_support, 0, 0.0, 0.0};
    auto it = counts.memory.find(m.name);
    if (it != counts.memory.end()) {
      e.accesses = it->second.reads + it->second.writes;
      e.dynamic = m.energy_per_read * static_cast<double>(it->second.reads) +
                  m.energy_per_write * static_cast<double>(it->second.writes);
    }
    e.static_energy = m.static_power * L;
    b.entries.push_back(e);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Whole-workload simulation

struct SimulationInputs {
  const WorkloadGraph* graph = nullptr;
  HardwareSpec hardware;
  MappingSpec mapping;
  SparsityTemplate sparsity;  // empty patterns = dense
  std::map<std::string, WeightTensor> weights;  // keyed by weight ref or node id
  std::map<std::string, SparseMask> masks;      // precomputed masks by node id
  ActivationSet activations;                    // by node id
  std::uint64_t seed = 0;
  Criterion criterion = Criterion::l1;
  bool synthesize_inputs = true;
  double synth_zero_fraction = 0.5;
  std::size_t profile_features = 64;
};

struct LayerSummary {
  std::string node;
  Dims2 matrix;
  double sparsity = 0.0;
  std::uint64_t nnz = 0;
  std::uint64_t index_bits = 0;
  double skip_ratio = 0.0;
  std::size_t tiles = 0;
  std::size_t steps = 0;
  bool misaligned = false;
  bool dense_fallback = false;
  std::string orientation;
};

struct SimulationResult {
  std::string workload;
  std::string hardware;
  std::string sparsity;
  std::uint64_t latency = 0;
  EnergyBreakdown energy;
  AccessCounts accesses;
  std::vector<StepLatency> step_latency;
  std::size_t steps = 0;
  double utilization = 0.0;
  double realized_sparsity = 0.0;
  std::uint64_t index_bits = 0;
  std::uint64_t mac_work = 0;
  std::vector<LayerSummary> layers;
  ValidationReport diagnostics;
  SupportUnits support;
  double total_energy() const { return energy.total(); }
};

namespace detail {

inline bool full_misaligned(const BlockPattern& p, Dims2 m, const HwAlignment& a) {
  if (p.kind != PatternKind::full_block) return false;
  const bool col = p.n == m.cols || (a.broadcast_width > 0 && p.n % a.broadcast_width == 0);
  const bool row = p.m == m.rows || (a.array_rows > 0 && p.m % a.array_rows == 0);
  return !col && !row;
}

inline const WeightTensor* find_weights(const SimulationInputs& in, const OpNode& node) {
  if (node.weight_ref) {
    auto it = in.weights.find(*node.weight_ref);
    if (it != in.weights.end()) return &it->second;
  }
  auto it = in.weights.find(node.id);
  return it == in.weights.end() ? nullptr : &it->second;
}

}  // namespace detail

inline SimulationResult simulate(const SimulationInputs& in) {
  if (!in.graph) throw SemanticError("simulate: no workload");
  const WorkloadGraph& g = *in.graph;
  const HardwareSpec& hw = in.hardware;
  SimulationResult res;
  res.workload = g.name();
  res.hardware = hw.name;
  res.sparsity = in.sparsity.dense() ? "dense" : in.sparsity.name;
  res.diagnostics.merge(validate_hardware(hw));
  SpatialPlan plan;
  res.diagnostics.merge(validate_mapping(in.mapping, hw, &plan));
  if (!res.diagnostics.ok()) throw SemanticError(res.diagnostics.str());

  const Dims2 t = in.mapping.tile_for(hw);
  const HwAlignment align = hw.alignment();
  Schedule sched;
  sched.macros = hw.macro_count();
  sched.macro_cells = static_cast<std::uint64_t>(hw.macro_array.rows) * hw.macro_array.cols;
  SparsitySummary summary;
  std::uint64_t total_cells = 0, total_nnz = 0;

  for (std::size_t ni : g.topo_order()) {
    const OpNode& node = g.nodes()[ni];
    if (!is_mvm(node.kind) || in.mapping.destination(node.kind) == "postprocess") {
      const std::uint64_t e = is_mvm(node.kind) ? output_elements(node) : node.extent("elements");
      const std::uint64_t ins = std::max<std::size_t>(1, node.inputs.size());
      attach_post_op(sched, {node.id, e, e * ins, e});
      continue;
    }
    const auto order = in.mapping.flatten_for(node.kind);
    const Dims2 dims = reshaped_dims(node, order);
    LayerSummary ls;
    ls.node = node.id;
    ls.matrix = dims;

    FlexBlockSpec spec;
    if (!in.sparsity.dense() && in.sparsity.applies_to(node.kind) && !in.masks.count(node.id)) {
      spec = resolve(in.sparsity, dims, node.extent_or("C_in", dims.rows));
      auto rep = validate_spec(spec, dims, align);
      for (auto& d : rep.diagnostics) d.field = node.id + "." + d.field;
      if (!rep.ok()) {
        if (in.sparsity.on_incompatible == IncompatiblePolicy::dense) {
          res.diagnostics.warn("simulator", node.id, "sparsity incompatible with layer; kept dense");
          for (auto& d : rep.diagnostics) d.severity = Severity::warning;
          res.diagnostics.merge(rep);
          spec = {};
          ls.dense_fallback = true;
        } else {
          throw SemanticError(rep.str());
        }
      } else {
        res.diagnostics.merge(rep);
      }
    }

    SparseMask mask;
    if (auto it = in.masks.find(node.id); it != in.masks.end()) {
      mask = it->second;
      if (mask.dims != dims) throw SemanticError("mask for '" + node.id + "' has wrong dims");
    } else if (spec.patterns.empty()) {
      mask = SparseMask::dense(node.id, dims);
    } else if (const auto* wt = detail::find_weights(in, node)) {
      mask = prune_flexblock(reshape_weights(node, *wt, order), spec, in.criterion, node.id);
    } else {
      mask = random_mask(spec, dims, derive_seed(in.seed, hash_string(node.id)), node.id);
    }
    if (!spec.patterns.empty() && !verify_mask(mask, spec))
      throw SemanticError("mask for '" + node.id + "' violates its pattern constraints");

    LayerPlan lp;
    lp.node = node.id;
    lp.kind = node.kind;
    lp.matrix = dims;
    lp.features = feature_vectors(node);
    lp.output_elements = output_elements(node);
    lp.nnz = mask.nnz();
    lp.sparse = lp.nnz < static_cast<std::uint64_t>(dims.rows) * dims.cols;
    if (const auto* ip = spec.intra()) lp.inputs_per_row = ip->m;
    for (const auto& p : spec.patterns) lp.misaligned = lp.misaligned || detail::full_misaligned(p, dims, align);
    if (!spec.patterns.empty()) {
      const auto w = default_index_widths(spec, dims);
      lp.index_bits = index_storage(mask, spec, w.block_bits, w.elem_bits);
    }
    const FlexBlockSpec* sp = spec.patterns.empty() ? nullptr : &spec;
    Compression orient = resolve_orientation(in.mapping.compression, sp, dims);
    if (node.kind == OpKind::depthwise_conv) orient = Compression::column_wise;
    if (auto rep = check_orientation(orient, sp, dims); !rep.ok()) throw SemanticError(rep.str());
    auto cm = compress(mask, orient, sp, nullptr, false);
    cm = rearrange(cm, in.mapping.rearrange.method, in.mapping.rearrange.slice_size, in.mapping.rearrange.axis);
    lp.tiling = tile_layout(cm, t, hw, node.kind == OpKind::depthwise_conv);

    double skip = 0.0;
    if (hw.input_sparsity_enabled && lp.features > 0) {
      const std::size_t length =
          node.kind == OpKind::depthwise_conv ? dims.rows * dims.cols : dims.rows;
      ProfileOptions po{hw.feature_bits, false, t.rows, lp.inputs_per_row, in.profile_features};
      if (auto it = in.activations.find(node.id); it != in.activations.end()) {
        if (it->second.length != length)
          throw SemanticError("activations for '" + node.id + "' have length " +
                              std::to_string(it->second.length) + ", expected " + std::to_string(length));
        skip = skippable_ratio(it->second, po);
      } else if (in.synthesize_inputs) {
        const auto a = synth_activations(std::min<std::uint64_t>(lp.features, in.profile_features), length,
                                         hw.feature_bits, in.synth_zero_fraction,
                                         derive_seed(in.seed ^ 0x5eedULL, hash_string(node.id)));
        skip = skippable_ratio(a, po);
      }
    }

    summary.any_weight_sparsity = summary.any_weight_sparsity || lp.sparse;
    if (spec.has_intra()) {
      summary.any_intra = true;
      summary.max_intra_m = std::max(summary.max_intra_m, lp.inputs_per_row);
    }
    summary.any_misaligned_full = summary.any_misaligned_full || lp.misaligned;
    summary.max_index_bits = std::max(summary.max_index_bits, lp.index_bits);
    total_cells += static_cast<std::uint64_t>(dims.rows) * dims.cols;
    total_nnz += lp.nnz;

    ls.sparsity = mask.sparsity();
    ls.nnz = lp.nnz;
    ls.index_bits = lp.index_bits;
    ls.skip_ratio = skip;
    ls.tiles = lp.tiling.tiles.size();
    ls.misaligned = lp.misaligned;
    ls.orientation = to_string(orient);
    res.index_bits += lp.index_bits;

    sched.layers.push_back(std::move(lp));
    const std::size_t before = sched.steps.size();
    schedule_layer(sched, sched.layers.size() - 1, hw, plan);
    for (std::size_t i = before; i < sched.steps.size(); ++i) sched.steps[i].skip_ratio = skip;
    ls.steps = sched.steps.size() - before;
    res.layers.push_back(ls);
  }

  res.support = infer_sparsity_support(hw, summary);
  const HardwareSpec eff = with_support(hw, res.support);
  res.step_latency = step_latencies(sched, eff);
  if (!sched.leading_post_ops.empty()) {
    // post ops before the first MVM step form their own writeback-only step
    const std::uint64_t bytes = [&] {
      std::uint64_t e = 0;
      for (const auto& op : sched.leading_post_ops) e += op.reads + op.writes;
      return ceil_div(e * eff.feature_bits, 8);
    }();
    res.step_latency.insert(res.step_latency.begin(), StepLatency{0, 0, cycles_for(bytes, eff.buffer_for("outputs"))});
  }
  res.steps = res.step_latency.size();
  res.latency = total_latency(res.step_latency, weight_banking(eff), eff.writeback_overlap);
  res.accesses = count_accesses(sched, eff);
  res.energy = total_energy(res.accesses, eff, res.latency);
  res.utilization = utilization(sched);
  res.mac_work = sched.total_mac_work();
  res.realized_sparsity = total_cells ? 1.0 - static_cast<double>(total_nnz) / static_cast<double>(total_cells) : 0.0;
  return res;
}

// Same graph and architecture, no pruning and no sparsity support.
inline SimulationInputs dense_baseline(SimulationInputs in) {
  in.sparsity = SparsityTemplate{};
  in.masks.clear();
  in.hardware.input_sparsity_enabled = false;
  return in;
}

// Baseline (dense) against variant (sparse). Both ratios are baseline over
// variant, so values above 1 are improvements.
struct ComparisonResult {
  SimulationResult sparse;
  SimulationResult dense;
  double speedup() const {
    return sparse.latency ? static_cast<double>(dense.latency) / static_cast<double>(sparse.latency) : 0.0;
  }
  double energy_saving() const {
    const double e = sparse.total_energy();
    return e > 0 ? dense.total_energy() / e : 0.0;
  }
  double energy_reduction() const {
    const double d = dense.total_energy();
    return d > 0 ? 1.0 - sparse.total_energy() / d : 0.0;
  }
  double utilization_delta() const { return sparse.utilization - dense.utilization; }
};

inline ComparisonResult compare(const SimulationInputs& in) {
  return {simulate(in), simulate(dense_baseline(in))};
}

// Compares two stored results of the same workload.
inline ComparisonResult compare_results(const SimulationResult& baseline, const SimulationResult& variant) {
  if (baseline.workload != variant.workload)
    throw SemanticError("compare: workload mismatch ('" + baseline.workload + "' vs '" + variant.workload + "')");
  return {variant, baseline};
}

}  // namespace cimsim

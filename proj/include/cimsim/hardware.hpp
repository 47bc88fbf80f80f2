// hardware.hpp - CIM architecture description, unit-count inference and
// sparsity-support provisioning.
#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "cimsim/common.hpp"
#include "cimsim/flexblock.hpp"

namespace cimsim {

enum class UnitKind {
  cim_subarray,
  adder_tree,
  shift_adder,
  accumulator,
  preprocess,
  postprocess,
  index_mux,
  zero_detect
};
enum class Location { in_macro, outside };
enum class MemKind { global_buffer, local_buffer, index_memory };
enum class Banking { single, ping_pong };

inline const char* to_string(UnitKind k) {
  switch (k) {
    case UnitKind::cim_subarray: return "cim_subarray";
    case UnitKind::adder_tree: return "adder_tree";
    case UnitKind::shift_adder: return "shift_adder";
    case UnitKind::accumulator: return "accumulator";
    case UnitKind::preprocess: return "preprocess";
    case UnitKind::postprocess: return "postprocess";
    case UnitKind::index_mux: return "index_mux";
    case UnitKind::zero_detect: return "zero_detect";
  }
  return "?";
}

inline UnitKind parse_unit_kind(const std::string& s) {
  for (auto k : {UnitKind::cim_subarray, UnitKind::adder_tree, UnitKind::shift_adder,
                 UnitKind::accumulator, UnitKind::preprocess, UnitKind::postprocess,
                 UnitKind::index_mux, UnitKind::zero_detect})
    if (s == to_string(k)) return k;
  throw SchemaError("hardware: unknown unit kind '" + s + "'");
}

inline const char* to_string(MemKind k) {
  switch (k) {
    case MemKind::global_buffer: return "global_buffer";
    case MemKind::local_buffer: return "local_buffer";
    case MemKind::index_memory: return "index_memory";
  }
  return "?";
}

struct ComputeUnit {
  std::string name;
  UnitKind kind = UnitKind::cim_subarray;
  Dims2 dims{1, 1};
  double energy_per_access = 0.0;  // pJ
  double static_power = 0.0;       // pJ/cycle per instance
  Location location = Location::in_macro;
  std::optional<std::uint64_t> count_override;  // per macro if in_macro, else total
  std::uint64_t count = 0;                      // resolved total instances
  bool sparsity_support = false;
};

struct MemoryUnit {
  std::string name;
  MemKind kind = MemKind::global_buffer;
  std::uint64_t capacity_bits = 0;
  std::uint64_t width_bits = 64;
  double energy_per_read = 0.0;   // pJ per access of width_bits
  double energy_per_write = 0.0;  // pJ per access of width_bits
  double static_power = 0.0;      // pJ/cycle
  Banking banking = Banking::single;
  double bandwidth = 1.0;  // words (of width_bits) per cycle
  std::vector<std::string> roles;  // any of weights, inputs, outputs, index
  bool sparsity_support = false;

  double bytes_per_cycle() const { return bandwidth * static_cast<double>(width_bits) / 8.0; }
  std::uint64_t accesses_for_bytes(std::uint64_t bytes) const {
    return ceil_div(bytes * 8, width_bits);
  }
  bool has_role(const std::string& r) const {
    return std::find(roles.begin(), roles.end(), r) != roles.end();
  }
};

// Energy parameters for units inferred from the sparsity configuration.
struct SupportParams {
  std::uint64_t index_width_bits = 32;
  double index_energy_per_read = 0.0;
  double index_energy_per_write = 0.0;
  double index_static_power = 0.0;
  double mux_energy_per_access = 0.0;
  double mux_static_power = 0.0;
  double accumulator_energy_per_access = 0.0;
  double accumulator_static_power = 0.0;
  double zero_detect_energy_per_access = 0.0;
  double zero_detect_static_power = 0.0;
};

struct HardwareSpec {
  std::string name;
  Dims2 macro_array{1, 1};
  Dims2 subarray{1, 1};
  std::vector<std::size_t> organization{1};
  std::vector<ComputeUnit> compute;
  std::vector<MemoryUnit> memory;
  unsigned weight_bits = 8;
  unsigned feature_bits = 8;
  bool input_sparsity_enabled = false;
  std::size_t broadcast_width = 0;  // 0 = macro column count
  bool writeback_overlap = true;
  SupportParams support;
  std::size_t mux_ways = 0;  // inputs selectable per array row (intra multiplicity)

  std::size_t macro_count() const {
    return std::accumulate(organization.begin(), organization.end(), std::size_t{1},
                           std::multiplies<>());
  }
  std::size_t subarrays_per_macro() const {
    return (macro_array.rows / subarray.rows) * (macro_array.cols / subarray.cols);
  }
  std::size_t effective_broadcast_width() const {
    return broadcast_width ? broadcast_width : macro_array.cols;
  }
  HwAlignment alignment() const {
    return {subarray.rows, macro_array.cols, effective_broadcast_width()};
  }

  const MemoryUnit* buffer_for(const std::string& role) const {
    for (const auto& m : memory)
      if (m.has_role(role)) return &m;
    return nullptr;
  }
  const ComputeUnit* unit_of(UnitKind k) const {
    for (const auto& u : compute)
      if (u.kind == k) return &u;
    return nullptr;
  }
};

// Per-macro instance counts for in-macro units: one subarray per tile of the
// macro array, one adder tree, shift-adder and accumulator per macro column.
inline std::uint64_t default_units_per_macro(UnitKind kind, const HardwareSpec& hw) {
  switch (kind) {
    case UnitKind::cim_subarray: return hw.subarrays_per_macro();
    case UnitKind::adder_tree:
    case UnitKind::shift_adder:
    case UnitKind::accumulator:
    case UnitKind::index_mux: return hw.macro_array.cols;
    default: return 1;
  }
}

inline std::uint64_t default_units_outside(UnitKind kind, const HardwareSpec& hw) {
  switch (kind) {
    case UnitKind::preprocess:
    case UnitKind::zero_detect: return hw.macro_array.rows;
    default: return 1;
  }
}

// Resolves every unit's total instance count.
inline HardwareSpec infer_unit_counts(HardwareSpec hw) {
  const std::uint64_t macros = hw.macro_count();
  for (auto& u : hw.compute) {
    if (u.location == Location::in_macro)
      u.count = u.count_override.value_or(default_units_per_macro(u.kind, hw)) * macros;
    else
      u.count = u.count_override.value_or(default_units_outside(u.kind, hw));
  }
  return hw;
}

inline ValidationReport validate_hardware(const HardwareSpec& hw) {
  ValidationReport rep;
  const std::string mod = "hardware";
  if (hw.subarray.rows == 0 || hw.subarray.cols == 0 || hw.macro_array.rows == 0 ||
      hw.macro_array.cols == 0)
    rep.error(mod, "macro", "array and subarray extents must be >= 1");
  else if (hw.macro_array.rows % hw.subarray.rows != 0 || hw.macro_array.cols % hw.subarray.cols != 0)
    rep.error(mod, "macro.subarray",
              "subarray " + std::to_string(hw.subarray.rows) + "x" + std::to_string(hw.subarray.cols) +
                  " does not divide macro array " + std::to_string(hw.macro_array.rows) + "x" +
                  std::to_string(hw.macro_array.cols));
  if (hw.organization.empty()) rep.error(mod, "organization", "organization must list >= 1 extent");
  for (auto e : hw.organization)
    if (e < 1) rep.error(mod, "organization", "organization extents must be >= 1");
  if (!hw.unit_of(UnitKind::cim_subarray)) rep.error(mod, "units", "no cim_subarray unit described");
  for (const auto& u : hw.compute) {
    if (u.energy_per_access < 0 || u.static_power < 0)
      rep.error(mod, "units." + u.name, "energies must be >= 0");
    if (u.dims.rows < 1 || u.dims.cols < 1) rep.error(mod, "units." + u.name, "dims must be >= 1");
  }
  for (const auto& m : hw.memory) {
    if (m.width_bits == 0) rep.error(mod, "buffers." + m.name, "width must be >= 1 bit");
    if (m.capacity_bits < m.width_bits)
      rep.error(mod, "buffers." + m.name, "capacity must be >= access width");
    if (m.energy_per_read < 0 || m.energy_per_write < 0 || m.static_power < 0)
      rep.error(mod, "buffers." + m.name, "energies must be >= 0");
    if (!(m.bandwidth > 0)) rep.error(mod, "buffers." + m.name, "bandwidth must be > 0");
  }
  for (const char* role : {"weights", "inputs", "outputs"})
    if (!hw.buffer_for(role))
      rep.error(mod, "buffers", std::string("no buffer serves role '") + role + "'");
  if (hw.weight_bits < 1 || hw.feature_bits < 1 || hw.feature_bits > 32)
    rep.error(mod, "precision", "bit widths must lie in [1, 32]");
  return rep;
}

namespace detail {

inline Dims2 dims_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2) throw SchemaError(where + ": expected [rows, cols]");
  return {j[0].get<std::size_t>(), j[1].get<std::size_t>()};
}

}  // namespace detail

inline HardwareSpec hardware_from_json(const json& doc) {
  if (!doc.is_object()) throw SchemaError("hardware: document must be an object");
  HardwareSpec hw;
  hw.name = detail::get_or<std::string>(doc, "name", "", "hardware");
  if (!doc.contains("macro")) throw SchemaError("hardware: missing 'macro' section");
  const auto& mac = doc["macro"];
  hw.macro_array = detail::dims_from(mac.value("array", json()), "hardware.macro.array");
  hw.subarray = detail::dims_from(mac.value("subarray", json()), "hardware.macro.subarray");
  hw.organization = detail::get_required<std::vector<std::size_t>>(doc, "organization", "hardware");
  if (doc.contains("precision")) {
    hw.weight_bits = detail::get_or<unsigned>(doc["precision"], "weight_bits", 8, "hardware.precision");
    hw.feature_bits = detail::get_or<unsigned>(doc["precision"], "feature_bits", 8, "hardware.precision");
  }
  for (const auto& ju : doc.value("units", json::array())) {
    ComputeUnit u;
    u.name = detail::get_required<std::string>(ju, "name", "hardware.units");
    const std::string w = "hardware.units[" + u.name + "]";
    u.kind = parse_unit_kind(detail::get_required<std::string>(ju, "kind", w));
    if (ju.contains("dims")) u.dims = detail::dims_from(ju["dims"], w + ".dims");
    u.energy_per_access = detail::get_or<double>(ju, "energy_per_access", 0.0, w);
    u.static_power = detail::get_or<double>(ju, "static_power", 0.0, w);
    const auto loc = detail::get_or<std::string>(
        ju, "location",
        (u.kind == UnitKind::preprocess || u.kind == UnitKind::postprocess) ? "outside" : "in_macro", w);
    if (loc == "in_macro") u.location = Location::in_macro;
    else if (loc == "outside") u.location = Location::outside;
    else throw SchemaError(w + ": location must be in_macro or outside");
    if (ju.contains("count")) u.count_override = ju["count"].get<std::uint64_t>();
    hw.compute.push_back(std::move(u));
  }
  for (const auto& jb : doc.value("buffers", json::array())) {
    MemoryUnit m;
    m.name = detail::get_required<std::string>(jb, "name", "hardware.buffers");
    const std::string w = "hardware.buffers[" + m.name + "]";
    const auto kind = detail::get_or<std::string>(jb, "kind", "global_buffer", w);
    if (kind == "global_buffer") m.kind = MemKind::global_buffer;
    else if (kind == "local_buffer") m.kind = MemKind::local_buffer;
    else if (kind == "index_memory") m.kind = MemKind::index_memory;
    else throw SchemaError(w + ": unknown buffer kind '" + kind + "'");
    m.capacity_bits = detail::get_required<std::uint64_t>(jb, "capacity_bits", w);
    m.width_bits = detail::get_or<std::uint64_t>(jb, "width_bits", 64, w);
    m.energy_per_read = detail::get_or<double>(jb, "energy_per_read", 0.0, w);
    m.energy_per_write = detail::get_or<double>(jb, "energy_per_write", 0.0, w);
    m.static_power = detail::get_or<double>(jb, "static_power", 0.0, w);
    const auto bank = detail::get_or<std::string>(jb, "banking", "single", w);
    if (bank == "single") m.banking = Banking::single;
    else if (bank == "ping_pong") m.banking = Banking::ping_pong;
    else throw SchemaError(w + ": banking must be single or ping_pong");
    m.bandwidth = detail::get_or<double>(jb, "bandwidth", 1.0, w);
    m.roles = detail::get_or<std::vector<std::string>>(jb, "roles", {}, w);
    hw.memory.push_back(std::move(m));
  }
  // Unassigned roles fall to the first global buffer.
  for (const char* role : {"weights", "inputs", "outputs"}) {
    if (hw.buffer_for(role)) continue;
    for (auto& m : hw.memory)
      if (m.kind == MemKind::global_buffer) {
        m.roles.emplace_back(role);
        break;
      }
  }
  if (doc.contains("options")) {
    const auto& o = doc["options"];
    hw.input_sparsity_enabled = detail::get_or<bool>(o, "input_sparsity", false, "hardware.options");
    hw.broadcast_width = detail::get_or<std::size_t>(o, "broadcast_width", 0, "hardware.options");
    hw.writeback_overlap = detail::get_or<bool>(o, "writeback_overlap", true, "hardware.options");
  }
  if (doc.contains("sparsity_support")) {
    const auto& s = doc["sparsity_support"];
    const std::string w = "hardware.sparsity_support";
    auto& sp = hw.support;
    if (s.contains("index_memory")) {
      const auto& j = s["index_memory"];
      sp.index_width_bits = detail::get_or<std::uint64_t>(j, "width_bits", 32, w);
      sp.index_energy_per_read = detail::get_or<double>(j, "energy_per_read", 0.0, w);
      sp.index_energy_per_write = detail::get_or<double>(j, "energy_per_write", 0.0, w);
      sp.index_static_power = detail::get_or<double>(j, "static_power", 0.0, w);
    }
    if (s.contains("index_mux")) {
      sp.mux_energy_per_access = detail::get_or<double>(s["index_mux"], "energy_per_access", 0.0, w);
      sp.mux_static_power = detail::get_or<double>(s["index_mux"], "static_power", 0.0, w);
    }
    if (s.contains("accumulator")) {
      sp.accumulator_energy_per_access =
          detail::get_or<double>(s["accumulator"], "energy_per_access", 0.0, w);
      sp.accumulator_static_power = detail::get_or<double>(s["accumulator"], "static_power", 0.0, w);
    }
    if (s.contains("zero_detect")) {
      sp.zero_detect_energy_per_access =
          detail::get_or<double>(s["zero_detect"], "energy_per_access", 0.0, w);
      sp.zero_detect_static_power = detail::get_or<double>(s["zero_detect"], "static_power", 0.0, w);
    }
  }
  return hw;
}

// Parses, validates and resolves unit counts.
inline HardwareSpec parse_hardware(const std::string& text) {
  HardwareSpec hw = hardware_from_json(detail::parse_json(text, "hardware"));
  const auto rep = validate_hardware(hw);
  if (!rep.ok()) throw SemanticError(rep.str());
  return infer_unit_counts(std::move(hw));
}

// What the workload's sparsity asks of the hardware.
struct SparsitySummary {
  bool any_weight_sparsity = false;
  bool any_intra = false;
  std::size_t max_intra_m = 0;
  bool any_misaligned_full = false;
  std::uint64_t max_index_bits = 0;
};

struct SupportUnits {
  std::vector<ComputeUnit> compute;
  std::optional<MemoryUnit> index_memory;
  std::size_t mux_ways = 0;

  bool empty() const { return compute.empty() && !index_memory; }
};

inline SupportUnits infer_sparsity_support(const HardwareSpec& hw, const SparsitySummary& s) {
  SupportUnits out;
  const std::uint64_t macros = hw.macro_count();
  const auto& sp = hw.support;
  if (s.any_weight_sparsity) {
    MemoryUnit m;
    m.name = "index_memory";
    m.kind = MemKind::index_memory;
    m.width_bits = std::max<std::uint64_t>(1, sp.index_width_bits);
    m.capacity_bits = std::max<std::uint64_t>(m.width_bits, ceil_div(s.max_index_bits, m.width_bits) * m.width_bits);
    m.energy_per_read = sp.index_energy_per_read;
    m.energy_per_write = sp.index_energy_per_write;
    m.static_power = sp.index_static_power;
    m.roles = {"index"};
    m.sparsity_support = true;
    out.index_memory = std::move(m);
  }
  if (s.any_intra) {
    ComputeUnit u;
    u.name = "index_mux";
    u.kind = UnitKind::index_mux;
    u.dims = {s.max_intra_m, 1};
    u.energy_per_access = sp.mux_energy_per_access;
    u.static_power = sp.mux_static_power;
    u.location = Location::outside;
    u.count = hw.macro_array.rows * macros;  // one selector per array row
    u.sparsity_support = true;
    out.mux_ways = s.max_intra_m;
    out.compute.push_back(std::move(u));
  }
  if (s.any_misaligned_full) {
    ComputeUnit u;
    u.name = "extra_accumulator";
    u.kind = UnitKind::accumulator;
    u.energy_per_access = sp.accumulator_energy_per_access;
    u.static_power = sp.accumulator_static_power;
    u.location = Location::in_macro;
    u.count = hw.macro_array.cols * macros;
    u.sparsity_support = true;
    out.compute.push_back(std::move(u));
  }
  if (hw.input_sparsity_enabled) {
    ComputeUnit u;
    u.name = "zero_detect";
    u.kind = UnitKind::zero_detect;
    u.energy_per_access = sp.zero_detect_energy_per_access;
    u.static_power = sp.zero_detect_static_power;
    u.location = Location::outside;
    const auto* pre = hw.unit_of(UnitKind::preprocess);
    u.count = pre ? pre->count : default_units_outside(UnitKind::zero_detect, hw);
    u.sparsity_support = true;
    out.compute.push_back(std::move(u));
  }
  return out;
}

inline HardwareSpec with_support(HardwareSpec hw, const SupportUnits& s) {
  for (const auto& u : s.compute) hw.compute.push_back(u);
  if (s.index_memory) hw.memory.push_back(*s.index_memory);
  hw.mux_ways = s.mux_ways;
  return hw;
}

struct IndexWidths {
  std::uint32_t block_bits = 1;
  std::uint32_t elem_bits = 0;
};

// ceil(log2(total finest blocks)) and ceil(log2(m*n)) of the intra block.
inline IndexWidths default_index_widths(const FlexBlockSpec& spec, Dims2 matrix) {
  IndexWidths w;
  if (spec.patterns.empty()) return w;
  const auto& f = spec.finest();
  const std::uint64_t blocks = (matrix.rows / f.m) * (matrix.cols / f.n);
  w.block_bits = std::max<std::uint32_t>(1, ceil_log2(blocks));
  if (const auto* in = spec.intra()) w.elem_bits = std::max<std::uint32_t>(1, ceil_log2(in->area()));
  return w;
}

// Block-level plus element-level index bits for a conformant mask, counted
// at the finest block granularity of the spec.
inline std::uint64_t index_storage(const SparseMask& mask, const FlexBlockSpec& spec,
                                   std::uint64_t block_index_bits, std::uint64_t elem_index_bits) {
  if (spec.patterns.empty()) return 0;
  const auto& f = spec.finest();
  const bool intra = spec.has_intra();
  std::uint64_t blocks_nz = 0, elems_nz = 0;
  for (std::size_t r0 = 0; r0 < mask.dims.rows; r0 += f.m)
    for (std::size_t c0 = 0; c0 < mask.dims.cols; c0 += f.n) {
      std::uint64_t kept = 0;
      for (std::size_t r = r0; r < r0 + f.m; ++r)
        for (std::size_t c = c0; c < c0 + f.n; ++c) kept += mask.bit(r, c);
      if (kept) {
        ++blocks_nz;
        elems_nz += kept;
      }
    }
  return blocks_nz * block_index_bits + (intra ? elems_nz * elem_index_bits : 0);
}

}  // namespace cimsim

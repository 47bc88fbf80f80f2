// mapper.hpp - compression, rearrangement and tiling of sparse weight
// matrices, and expansion of a loopnest mapping into pipeline steps.
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cimsim/common.hpp"
#include "cimsim/flexblock.hpp"
#include "cimsim/hardware.hpp"
#include "cimsim/workload.hpp"

namespace cimsim {

enum class Compression { row_wise, column_wise, automatic };
enum class RearrangeMethod { none, pad, slice };
enum class LaneAxis { row, column };
enum class LoopDim { weight, feature };
enum class Binding { temporal, spatial };
enum class SpatialMode { unroll, duplicate };

inline const char* to_string(Compression c) {
  switch (c) {
    case Compression::row_wise: return "row_wise";
    case Compression::column_wise: return "column_wise";
    case Compression::automatic: return "auto";
  }
  return "?";
}

struct RearrangeSpec {
  RearrangeMethod method = RearrangeMethod::none;
  std::size_t slice_size = 0;
  LaneAxis axis = LaneAxis::column;
};

struct Loop {
  LoopDim dim = LoopDim::weight;
  std::size_t extent = 0;  // 0 = derived
  Binding binding = Binding::temporal;
  std::string target;  // spatial only: "org.<k>", "array.row", "array.col"
  SpatialMode mode = SpatialMode::unroll;
};

struct MappingSpec {
  std::string name;
  std::map<OpKind, std::vector<std::string>> flatten;
  Compression compression = Compression::automatic;
  Dims2 tile{0, 0};  // 0 = macro array extent
  RearrangeSpec rearrange;
  std::vector<Loop> loopnest;
  std::map<OpKind, std::string> mapping_dict;

  std::vector<std::string> flatten_for(OpKind k) const {
    auto it = flatten.find(k);
    return it == flatten.end() ? default_flatten_order(k) : it->second;
  }
  std::string destination(OpKind k) const {
    auto it = mapping_dict.find(k);
    if (it != mapping_dict.end()) return it->second;
    return (k == OpKind::conv || k == OpKind::fc || k == OpKind::depthwise_conv) ? "cim_macro"
                                                                                  : "postprocess";
  }
  Dims2 tile_for(const HardwareSpec& hw) const {
    return {tile.rows ? tile.rows : hw.macro_array.rows, tile.cols ? tile.cols : hw.macro_array.cols};
  }
};

// ---------------------------------------------------------------------------
// Compression

struct Lane {
  std::vector<std::uint32_t> columns;      // original columns
  std::size_t height = 0;                  // real rows
  std::size_t fill = 0;                    // explicit zero rows appended by rearrangement
  std::vector<std::uint32_t> source_rows;  // per real row; empty in shape-only mode
  std::vector<double> values;              // height x width row-major; optional

  std::size_t width() const { return columns.size(); }
  std::size_t filled_height() const { return height + fill; }
};

struct CompressedMatrix {
  Compression orientation = Compression::column_wise;
  Dims2 original;
  std::vector<Lane> lanes;
  bool has_values = false;
  bool has_sources = false;

  std::size_t max_height() const {
    std::size_t h = 0;
    for (const auto& l : lanes) h = std::max(h, l.filled_height());
    return h;
  }
  std::size_t real_cells() const {
    std::size_t n = 0;
    for (const auto& l : lanes) n += l.height * l.width();
    return n;
  }
  std::size_t fill_cells() const {
    std::size_t n = 0;
    for (const auto& l : lanes) n += l.fill * l.width();
    return n;
  }
};

// Orientation the mask structure supports; row-wise needs whole-row blocks.
inline Compression resolve_orientation(Compression requested, const FlexBlockSpec* spec, Dims2 d) {
  if (requested != Compression::automatic) return requested;
  if (!spec || spec->patterns.empty()) return Compression::row_wise;
  if (spec->has_intra()) return Compression::column_wise;
  std::size_t lane = d.cols;
  for (const auto& p : spec->patterns) lane = std::min(lane, p.n);
  return (lane > 1 || d.cols == 1) ? Compression::row_wise : Compression::column_wise;
}

inline std::size_t row_lane_width(const FlexBlockSpec* spec, Dims2 d) {
  std::size_t lane = d.cols;
  if (spec)
    for (const auto& p : spec->patterns) lane = std::min(lane, p.n);
  return std::max<std::size_t>(lane, 1);
}

// Diagnostics for an orientation that cannot represent the mask structure.
inline ValidationReport check_orientation(Compression orientation, const FlexBlockSpec* spec, Dims2 d) {
  ValidationReport rep;
  if (orientation != Compression::row_wise || !spec) return rep;
  if (spec->has_intra())
    rep.error("mapping", "compression",
              "row-wise compression cannot represent intra_block patterns; use column_wise");
  else if (row_lane_width(spec, d) == 1 && d.cols > 1)
    rep.error("mapping", "compression",
              "row-wise compression of a column-block pattern; use column_wise");
  return rep;
}

// Removes pruned cells along the orientation. `values` may be null for a
// shape-only result; `keep_sources` controls whether the relocation map is
// recorded.
inline CompressedMatrix compress(const SparseMask& mask, Compression orientation,
                                 const FlexBlockSpec* spec, const Matrix* values = nullptr,
                                 bool keep_sources = true) {
  const Dims2 d = mask.dims;
  orientation = resolve_orientation(orientation, spec, d);
  const auto diag = check_orientation(orientation, spec, d);
  if (!diag.ok()) throw SemanticError(diag.str());
  if (values && values->dims() != d) throw SemanticError("compress: values/mask dims differ");
  CompressedMatrix out;
  out.orientation = orientation;
  out.original = d;
  out.has_values = values != nullptr;
  out.has_sources = keep_sources || values;
  if (orientation == Compression::row_wise) {
    const std::size_t w = row_lane_width(spec, d);
    if (d.cols % w != 0) throw SemanticError("compress: lane width does not divide columns");
    for (std::size_t c0 = 0; c0 < d.cols; c0 += w) {
      Lane lane;
      for (std::size_t c = c0; c < c0 + w; ++c) lane.columns.push_back(static_cast<std::uint32_t>(c));
      for (std::size_t r = 0; r < d.rows; ++r) {
        const std::uint8_t first = mask.bit(r, c0);
        for (std::size_t c = c0 + 1; c < c0 + w; ++c)
          if (mask.bit(r, c) != first)
            throw SemanticError("compress: mask row segment is not uniform for row-wise lanes");
        if (!first) continue;
        ++lane.height;
        if (out.has_sources) lane.source_rows.push_back(static_cast<std::uint32_t>(r));
        if (values)
          for (std::size_t c = c0; c < c0 + w; ++c) lane.values.push_back((*values)(r, c));
      }
      out.lanes.push_back(std::move(lane));
    }
  } else {
    for (std::size_t c = 0; c < d.cols; ++c) {
      Lane lane;
      lane.columns.push_back(static_cast<std::uint32_t>(c));
      for (std::size_t r = 0; r < d.rows; ++r) {
        if (!mask.bit(r, c)) continue;
        ++lane.height;
        if (out.has_sources) lane.source_rows.push_back(static_cast<std::uint32_t>(r));
        if (values) lane.values.push_back((*values)(r, c));
      }
      out.lanes.push_back(std::move(lane));
    }
  }
  return out;
}

// Scatters compressed values back to their original coordinates.
inline Matrix decompress(const CompressedMatrix& cm) {
  if (!cm.has_values || !cm.has_sources) throw SemanticError("decompress: no values or sources recorded");
  Matrix m(cm.original.rows, cm.original.cols);
  for (const auto& lane : cm.lanes) {
    const std::size_t w = lane.width();
    for (std::size_t i = 0; i < lane.height; ++i)
      for (std::size_t j = 0; j < w; ++j) m(lane.source_rows[i], lane.columns[j]) = lane.values[i * w + j];
  }
  return m;
}

// Equalizes lane heights by padding with explicit zeros, or cuts lanes into
// slice_size pieces (the last piece zero-padded). With axis row, slicing cuts
// lane widths instead.
inline CompressedMatrix rearrange(const CompressedMatrix& in, RearrangeMethod method,
                                  std::size_t slice_size, LaneAxis axis = LaneAxis::column) {
  if (method == RearrangeMethod::none) return in;
  CompressedMatrix out = in;
  if (method == RearrangeMethod::pad) {
    const std::size_t h = in.max_height();
    for (auto& l : out.lanes) l.fill = h - l.height;
    return out;
  }
  if (slice_size == 0) throw SemanticError("rearrange: slice_size must be > 0");
  out.lanes.clear();
  for (const auto& l : in.lanes) {
    const std::size_t w = l.width();
    if (axis == LaneAxis::column) {
      for (std::size_t r0 = 0; r0 < l.filled_height(); r0 += slice_size) {
        Lane piece;
        piece.columns = l.columns;
        const std::size_t real_end = std::min(l.height, r0 + slice_size);
        piece.height = real_end > r0 ? real_end - r0 : 0;
        piece.fill = slice_size - piece.height;
        if (in.has_sources)
          piece.source_rows.assign(l.source_rows.begin() + static_cast<std::ptrdiff_t>(r0),
                                   l.source_rows.begin() + static_cast<std::ptrdiff_t>(r0 + piece.height));
        if (in.has_values)
          piece.values.assign(l.values.begin() + static_cast<std::ptrdiff_t>(r0 * w),
                              l.values.begin() + static_cast<std::ptrdiff_t>((r0 + piece.height) * w));
        out.lanes.push_back(std::move(piece));
      }
    } else {
      for (std::size_t c0 = 0; c0 < w; c0 += slice_size) {
        const std::size_t c1 = std::min(w, c0 + slice_size);
        Lane piece;
        piece.columns.assign(l.columns.begin() + static_cast<std::ptrdiff_t>(c0),
                             l.columns.begin() + static_cast<std::ptrdiff_t>(c1));
        piece.height = l.height;
        piece.fill = l.fill;
        piece.source_rows = l.source_rows;
        if (in.has_values)
          for (std::size_t i = 0; i < l.height; ++i)
            for (std::size_t c = c0; c < c1; ++c) piece.values.push_back(l.values[i * w + c]);
        out.lanes.push_back(std::move(piece));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tiling

struct TileGridSummary {
  std::size_t tile_rows = 0;  // grid extents
  std::size_t tile_cols = 0;
  std::size_t tiles = 0;
  std::size_t padded_tiles = 0;
  std::size_t padding_rows = 0;
  std::size_t padding_cols = 0;
  std::uint64_t padding_cells = 0;
};

// ceil(M/t_r) x ceil(N/t_c) tiles with edge tiles zero-padded.
inline TileGridSummary tile(Dims2 matrix, Dims2 t) {
  if (t.rows == 0 || t.cols == 0) throw SemanticError("tile: tile extents must be >= 1");
  TileGridSummary s;
  s.tile_rows = ceil_div(matrix.rows, t.rows);
  s.tile_cols = ceil_div(matrix.cols, t.cols);
  s.tiles = s.tile_rows * s.tile_cols;
  s.padding_rows = s.tile_rows * t.rows - matrix.rows;
  s.padding_cols = s.tile_cols * t.cols - matrix.cols;
  s.padding_cells = static_cast<std::uint64_t>(s.tile_rows * t.rows) * (s.tile_cols * t.cols) -
                    static_cast<std::uint64_t>(matrix.rows) * matrix.cols;
  for (std::size_t r = 0; r < s.tile_rows; ++r)
    for (std::size_t c = 0; c < s.tile_cols; ++c)
      if ((r + 1 == s.tile_rows && s.padding_rows) || (c + 1 == s.tile_cols && s.padding_cols))
        ++s.padded_tiles;
  return s;
}

struct LayoutColumn {
  std::size_t row_begin = 0;
  std::size_t real = 0;    // real weight rows
  std::size_t filled = 0;  // real + explicit zero rows
  std::uint32_t source_col = 0;
  bool logical = true;  // false for alignment filler columns
};

struct TileInfo {
  std::size_t row_block = 0;
  std::size_t col_block = 0;
  std::uint64_t real_cells = 0;
  std::uint64_t filled_cells = 0;
  std::size_t used_rows = 0;
  std::size_t used_cols = 0;
  std::size_t active_subarrays = 0;
};

struct LayerTiling {
  Dims2 tile_dims;
  Dims2 layout;  // height x columns
  std::vector<TileInfo> tiles;  // mapped (non-empty) tiles, row-major
  std::uint64_t real_cells = 0;
  std::uint64_t fill_cells = 0;
};

// Places lanes side by side; row-wise lanes narrower than the broadcast width
// are widened with filler columns. `block_diagonal` stacks lanes vertically
// as well (depthwise layers, whose columns see distinct inputs).
inline LayerTiling tile_layout(const CompressedMatrix& cm, Dims2 t, const HardwareSpec& hw,
                               bool block_diagonal = false) {
  if (t.rows == 0 || t.cols == 0) throw SemanticError("tile: tile extents must be >= 1");
  std::vector<LayoutColumn> cols;
  const std::size_t bw = hw.effective_broadcast_width();
  std::size_t height = 0, offset = 0;
  const std::size_t lane_h = cm.max_height();
  for (const auto& lane : cm.lanes) {
    if (lane.filled_height() == 0) continue;
    const std::size_t row_begin = block_diagonal ? offset : 0;
    for (auto c : lane.columns) cols.push_back({row_begin, lane.height, lane.filled_height(), c, true});
    if (cm.orientation == Compression::row_wise && bw > 1 && lane.width() % bw != 0 &&
        lane.width() < cm.original.cols) {
      const std::size_t extra = ceil_div(lane.width(), bw) * bw - lane.width();
      for (std::size_t k = 0; k < extra; ++k) cols.push_back({row_begin, 0, 0, 0, false});
    }
    height = std::max(height, row_begin + lane.filled_height());
    if (block_diagonal) offset += lane_h;
  }
  LayerTiling lt;
  lt.tile_dims = t;
  lt.layout = {height, cols.size()};
  lt.real_cells = cm.real_cells();
  lt.fill_cells = cm.fill_cells();
  if (height == 0 || cols.empty()) return lt;
  const std::size_t grid_r = ceil_div(height, t.rows), grid_c = ceil_div(cols.size(), t.cols);
  for (std::size_t rb = 0; rb < grid_r; ++rb)
    for (std::size_t cb = 0; cb < grid_c; ++cb) {
      TileInfo ti{rb, cb, 0, 0, 0, 0, 0};
      const std::size_t r0 = rb * t.rows, r1 = r0 + t.rows;
      std::size_t used_row_end = 0, used_row_begin = t.rows;
      std::vector<std::uint8_t> sub_col_used(ceil_div(t.cols, hw.subarray.cols), 0);
      for (std::size_t c = cb * t.cols; c < std::min(cols.size(), (cb + 1) * t.cols); ++c) {
        const auto& col = cols[c];
        auto overlap = [&](std::size_t len) -> std::size_t {
          const std::size_t a = std::max(r0, col.row_begin), b = std::min(r1, col.row_begin + len);
          return b > a ? b - a : 0;
        };
        const std::size_t real = overlap(col.real), filled = overlap(col.filled);
        ti.real_cells += real;
        ti.filled_cells += filled;
        if (filled) {
          ti.used_cols += col.logical;
          const std::size_t a = std::max(r0, col.row_begin) - r0;
          used_row_begin = std::min(used_row_begin, a);
          used_row_end = std::max(used_row_end, a + filled);
          sub_col_used[(c - cb * t.cols) / hw.subarray.cols] = 1;
        }
      }
      if (ti.filled_cells == 0) continue;
      ti.used_rows = used_row_end - used_row_begin;
      const std::size_t sub_rows =
          ceil_div(used_row_end, hw.subarray.rows) - used_row_begin / hw.subarray.rows;
      std::size_t sub_cols = 0;
      for (auto u : sub_col_used) sub_cols += u;
      ti.active_subarrays = sub_rows * sub_cols;
      lt.tiles.push_back(ti);
    }
  return lt;
}

// ---------------------------------------------------------------------------
// Mapping description

inline MappingSpec mapping_from_json(const json& doc) {
  if (!doc.is_object()) throw SchemaError("mapping: document must be an object");
  MappingSpec m;
  const std::string w = "mapping";
  m.name = detail::get_or<std::string>(doc, "name", "", w);
  if (doc.contains("flatten")) {
    const auto& f = doc["flatten"];
    if (f.is_array()) m.flatten[OpKind::conv] = f.get<std::vector<std::string>>();
    else if (f.is_object())
      for (const auto& [k, v] : f.items()) m.flatten[parse_op_kind(k)] = v.get<std::vector<std::string>>();
    else throw SchemaError("mapping.flatten must be a list or an object of lists");
  }
  const auto comp = detail::get_or<std::string>(doc, "compression", "auto", w);
  if (comp == "row_wise") m.compression = Compression::row_wise;
  else if (comp == "column_wise") m.compression = Compression::column_wise;
  else if (comp == "auto") m.compression = Compression::automatic;
  else throw SchemaError("mapping.compression must be row_wise, column_wise or auto");
  if (doc.contains("tile")) m.tile = detail::dims_from(doc["tile"], "mapping.tile");
  if (doc.contains("rearrange") && !doc["rearrange"].is_null()) {
    const auto& r = doc["rearrange"];
    const auto method = detail::get_required<std::string>(r, "method", "mapping.rearrange");
    if (method == "pad") m.rearrange.method = RearrangeMethod::pad;
    else if (method == "slice") m.rearrange.method = RearrangeMethod::slice;
    else if (method == "none") m.rearrange.method = RearrangeMethod::none;
    else throw SchemaError("mapping.rearrange.method must be pad, slice or none");
    const auto size = detail::get_or<std::int64_t>(r, "slice_size", 0, "mapping.rearrange");
    if (m.rearrange.method == RearrangeMethod::slice && size <= 0)
      throw SemanticError("mapping.rearrange.slice_size must be > 0");
    m.rearrange.slice_size = static_cast<std::size_t>(std::max<std::int64_t>(size, 0));
    const auto axis = detail::get_or<std::string>(r, "axis", "column", "mapping.rearrange");
    if (axis == "column") m.rearrange.axis = LaneAxis::column;
    else if (axis == "row") m.rearrange.axis = LaneAxis::row;
    else throw SchemaError("mapping.rearrange.axis must be row or column");
  }
  for (const auto& jl : doc.value("loopnest", json::array())) {
    Loop l;
    const std::string lw = "mapping.loopnest";
    const auto dim = detail::get_required<std::string>(jl, "dim", lw);
    if (dim == "W" || dim == "weight") l.dim = LoopDim::weight;
    else if (dim == "F" || dim == "feature") l.dim = LoopDim::feature;
    else throw SchemaError(lw + ": dim must be W (weight tiles) or F (feature vectors)");
    l.extent = detail::get_or<std::size_t>(jl, "extent", 0, lw);
    const auto b = detail::get_or<std::string>(jl, "binding", "temporal", lw);
    if (b == "temporal") l.binding = Binding::temporal;
    else if (b == "spatial") l.binding = Binding::spatial;
    else throw SchemaError(lw + ": binding must be temporal or spatial");
    l.target = detail::get_or<std::string>(jl, "target", "", lw);
    const auto mode = detail::get_or<std::string>(
        jl, "mode", l.dim == LoopDim::weight ? "unroll" : "duplicate", lw);
    if (mode == "unroll") l.mode = SpatialMode::unroll;
    else if (mode == "duplicate") l.mode = SpatialMode::duplicate;
    else throw SchemaError(lw + ": mode must be unroll or duplicate");
    m.loopnest.push_back(l);
  }
  if (doc.contains("mapping_dict"))
    for (const auto& [k, v] : doc["mapping_dict"].items()) m.mapping_dict[parse_op_kind(k)] = v.get<std::string>();
  return m;
}

inline MappingSpec parse_mapping(const std::string& text) {
  return mapping_from_json(detail::parse_json(text, "mapping"));
}

// Spatial capacity derived from the loopnest.
struct SpatialPlan {
  std::vector<std::size_t> unroll_axes;     // organization axes holding distinct tiles
  std::vector<std::size_t> duplicate_axes;  // organization axes holding weight replicas
  std::size_t unroll = 1;                   // product over unroll axes (bounded by extents)
  std::size_t duplicate = 1;
  std::size_t slots_per_macro = 1;
  std::vector<std::size_t> unroll_extent;
  std::vector<std::size_t> duplicate_extent;
  bool feature_outer = false;
  std::size_t feature_chunks = 1;
  std::size_t weight_temporal_extent = 0;
  bool has_weight_temporal = false;
};

inline std::vector<Loop> effective_loopnest(const MappingSpec& m, const HardwareSpec& hw) {
  if (!m.loopnest.empty()) return m.loopnest;
  std::vector<Loop> loops{{LoopDim::weight, 0, Binding::temporal, "", SpatialMode::unroll}};
  for (std::size_t k = 0; k < hw.organization.size(); ++k)
    loops.push_back({LoopDim::weight, 0, Binding::spatial, "org." + std::to_string(k), SpatialMode::unroll});
  return loops;
}

inline ValidationReport validate_mapping(const MappingSpec& m, const HardwareSpec& hw, SpatialPlan* plan_out = nullptr) {
  ValidationReport rep;
  const std::string mod = "mapping";
  const Dims2 t = m.tile_for(hw);
  if (t.rows < 1 || t.cols < 1) rep.error(mod, "tile", "tile extents must be >= 1");
  if (t.rows > hw.macro_array.rows || t.cols > hw.macro_array.cols)
    rep.error(mod, "tile",
              "tile " + std::to_string(t.rows) + "x" + std::to_string(t.cols) +
                  " is larger than the macro array " + std::to_string(hw.macro_array.rows) + "x" +
                  std::to_string(hw.macro_array.cols));
  for (const auto& [k, dest] : m.mapping_dict)
    if (dest != "cim_macro" && dest != "postprocess")
      rep.error(mod, "mapping_dict", "unknown destination '" + dest + "' for " + to_string(k));
  if (m.rearrange.method == RearrangeMethod::slice && m.rearrange.slice_size == 0)
    rep.error(mod, "rearrange.slice_size", "slice_size must be > 0");
  SpatialPlan plan;
  std::vector<std::string> used;
  int w_temporal = -1, f_temporal = -1;
  const auto loops = effective_loopnest(m, hw);
  for (std::size_t i = 0; i < loops.size(); ++i) {
    const auto& l = loops[i];
    const std::string f = "loopnest[" + std::to_string(i) + "]";
    if (l.binding == Binding::temporal) {
      int& slot = l.dim == LoopDim::weight ? w_temporal : f_temporal;
      if (slot >= 0) rep.error(mod, f, "at most one temporal loop per dimension");
      slot = static_cast<int>(i);
      if (l.dim == LoopDim::weight) {
        plan.has_weight_temporal = true;
        plan.weight_temporal_extent = l.extent;
      } else {
        plan.feature_chunks = std::max<std::size_t>(1, l.extent);
      }
      continue;
    }
    if (l.dim == LoopDim::weight && l.mode != SpatialMode::unroll)
      rep.error(mod, f, "weight loops may only unroll spatially");
    if (l.dim == LoopDim::feature && l.mode != SpatialMode::duplicate)
      rep.error(mod, f, "feature loops may only duplicate spatially");
    if (std::find(used.begin(), used.end(), l.target) != used.end())
      rep.error(mod, f, "axis '" + l.target + "' bound more than once");
    used.push_back(l.target);
    std::size_t axis_size = 0;
    if (l.target.rfind("org.", 0) == 0) {
      std::size_t k = 0;
      try {
        k = std::stoul(l.target.substr(4));
      } catch (...) {
        k = hw.organization.size();
      }
      if (k >= hw.organization.size()) {
        rep.error(mod, f, "target '" + l.target + "' names no organization axis");
        continue;
      }
      axis_size = hw.organization[k];
      const std::size_t ext = l.extent ? l.extent : axis_size;
      if (ext > axis_size)
        rep.error(mod, f,
                  "spatial extent " + std::to_string(ext) + " exceeds axis size " + std::to_string(axis_size));
      if (l.dim == LoopDim::weight) {
        plan.unroll_axes.push_back(k);
        plan.unroll_extent.push_back(std::min(ext, axis_size));
        plan.unroll *= std::min(ext, axis_size);
      } else {
        plan.duplicate_axes.push_back(k);
        plan.duplicate_extent.push_back(std::min(ext, axis_size));
        plan.duplicate *= std::min(ext, axis_size);
      }
    } else if (l.target == "array.row" || l.target == "array.col") {
      if (l.dim != LoopDim::weight) {
        rep.error(mod, f, "array axes hold distinct weight tiles only");
        continue;
      }
      axis_size = l.target == "array.row" ? (t.rows ? hw.macro_array.rows / t.rows : 0)
                                          : (t.cols ? hw.macro_array.cols / t.cols : 0);
      const std::size_t ext = l.extent ? l.extent : axis_size;
      if (ext > axis_size || ext == 0)
        rep.error(mod, f,
                  "spatial extent " + std::to_string(ext) + " exceeds axis size " + std::to_string(axis_size));
      plan.slots_per_macro *= std::max<std::size_t>(1, std::min(ext, axis_size));
    } else {
      rep.error(mod, f, "unknown spatial target '" + l.target + "'");
    }
  }
  plan.feature_outer = f_temporal >= 0 && w_temporal >= 0 && f_temporal < w_temporal;
  if (!plan.feature_outer) plan.feature_chunks = 1;
  if (plan_out) *plan_out = plan;
  return rep;
}

// ---------------------------------------------------------------------------
// Schedule

struct Placement {
  std::size_t macro = 0;
  std::size_t tile = 0;  // index into the layer's LayerTiling::tiles
  std::size_t replica = 0;
  std::uint64_t features = 0;
};

struct PostOp {
  std::string node;
  std::uint64_t elements = 0;
  std::uint64_t reads = 0;   // element reads
  std::uint64_t writes = 0;  // element writes
};

struct Step {
  std::size_t layer = 0;  // index into Schedule::layers
  std::vector<Placement> placements;
  std::uint64_t weight_bytes = 0;
  std::uint64_t index_bits = 0;
  std::uint64_t input_bytes = 0;
  std::uint64_t input_elements = 0;  // inputs converted for broadcast
  std::uint64_t wb_bytes = 0;
  std::uint64_t psum_merge_bytes = 0;  // output re-reads for partial-sum merging
  std::uint64_t passes = 0;            // feature vectors on the busiest replica
  std::uint64_t mac_work = 0;          // real (unpruned) MACs
  std::uint64_t occupied_cell_passes = 0;
  std::vector<PostOp> post_ops;
  double skip_ratio = 0.0;
};

struct LayerPlan {
  std::string node;
  OpKind kind = OpKind::fc;
  Dims2 matrix;
  std::uint64_t features = 0;
  std::uint64_t output_elements = 0;
  std::size_t inputs_per_row = 1;  // intra multiplicity
  bool misaligned = false;
  bool sparse = false;
  std::uint64_t index_bits = 0;
  std::uint64_t nnz = 0;
  LayerTiling tiling;
  std::vector<std::uint32_t> input_rows;  // original rows broadcast, for profiling
};

struct Schedule {
  std::vector<LayerPlan> layers;
  std::vector<Step> steps;
  std::size_t macros = 1;
  std::uint64_t macro_cells = 0;
  std::vector<PostOp> leading_post_ops;  // post ops preceding any MVM step

  std::uint64_t total_mac_work() const {
    std::uint64_t s = 0;
    for (const auto& st : steps) s += st.mac_work;
    return s;
  }
};

namespace detail {

// Linear macro index in row-major organization order.
inline std::size_t macro_index(const HardwareSpec& hw, const SpatialPlan& plan, std::size_t u,
                               std::size_t d) {
  std::vector<std::size_t> coord(hw.organization.size(), 0);
  for (std::size_t i = plan.unroll_axes.size(); i-- > 0;) {
    coord[plan.unroll_axes[i]] = u % plan.unroll_extent[i];
    u /= plan.unroll_extent[i];
  }
  for (std::size_t i = plan.duplicate_axes.size(); i-- > 0;) {
    coord[plan.duplicate_axes[i]] = d % plan.duplicate_extent[i];
    d /= plan.duplicate_extent[i];
  }
  std::size_t idx = 0;
  for (std::size_t k = 0; k < coord.size(); ++k) idx = idx * hw.organization[k] + coord[k];
  return idx;
}

}  // namespace detail

// Appends the steps of one MVM layer.
inline void schedule_layer(Schedule& sched, std::size_t layer_idx, const HardwareSpec& hw,
                           const SpatialPlan& plan) {
  const LayerPlan& layer = sched.layers[layer_idx];
  const auto& tiles = layer.tiling.tiles;
  if (tiles.empty()) return;
  const std::size_t per_step = plan.unroll * plan.slots_per_macro;
  const std::size_t wsteps = ceil_div(tiles.size(), per_step);
  if (!plan.has_weight_temporal && wsteps > 1)
    throw SemanticError("mapping: layer '" + layer.node + "' needs " + std::to_string(tiles.size()) +
                        " tiles but the spatial loops hold " + std::to_string(per_step) +
                        " and no temporal weight loop is given");
  if (plan.weight_temporal_extent && plan.weight_temporal_extent < wsteps)
    throw SemanticError("mapping: temporal weight extent " + std::to_string(plan.weight_temporal_extent) +
                        " too small for layer '" + layer.node + "' (needs " + std::to_string(wsteps) + ")");
  const std::uint64_t wbits = hw.weight_bits, fbits = hw.feature_bits;
  const std::size_t D = plan.duplicate;
  const std::uint64_t chunks = std::min<std::uint64_t>(plan.feature_chunks, std::max<std::uint64_t>(1, layer.features));
  for (std::uint64_t chunk = 0; chunk < chunks; ++chunk) {
    const std::uint64_t f_chunk = layer.features / chunks + (chunk < layer.features % chunks ? 1 : 0);
    std::vector<std::uint64_t> rep_features(D);
    for (std::size_t d = 0; d < D; ++d) rep_features[d] = f_chunk / D + (d < f_chunk % D ? 1 : 0);
    for (std::size_t ws = 0; ws < wsteps; ++ws) {
      Step st;
      st.layer = layer_idx;
      const std::size_t first = ws * per_step, last = std::min(tiles.size(), first + per_step);
      std::map<std::pair<std::size_t, std::size_t>, std::size_t> input_rows;  // (row_block, replica)
      std::uint64_t weight_bits_total = 0;
      for (std::size_t k = first; k < last; ++k) {
        const auto& ti = tiles[k];
        const std::size_t u = (k - first) / plan.slots_per_macro;
        for (std::size_t d = 0; d < D; ++d) {
          if (rep_features[d] == 0) continue;
          Placement p{detail::macro_index(hw, plan, u, d), k, d, rep_features[d]};
          st.placements.push_back(p);
          weight_bits_total += ti.filled_cells * wbits;
          st.index_bits += layer.nnz ? ceil_div(layer.index_bits * ti.real_cells, layer.nnz) : 0;
          st.mac_work += ti.real_cells * rep_features[d];
          st.occupied_cell_passes += ti.real_cells * rep_features[d];
          auto& rows = input_rows[{ti.row_block, d}];
          rows = std::max(rows, ti.used_rows);
          const std::uint64_t out_bytes = ceil_div(ti.used_cols * rep_features[d] * fbits, 8);
          st.wb_bytes += out_bytes;
          if (ti.row_block > 0) st.psum_merge_bytes += out_bytes;
        }
        st.passes = std::max<std::uint64_t>(st.passes, *std::max_element(rep_features.begin(), rep_features.end()));
      }
      st.weight_bytes = ceil_div(weight_bits_total, 8);
      for (const auto& [key, rows] : input_rows)
        st.input_elements += static_cast<std::uint64_t>(rows) * layer.inputs_per_row * rep_features[key.second];
      st.input_bytes = ceil_div(st.input_elements * fbits, 8);
      sched.steps.push_back(std::move(st));
    }
  }
}

// Post-processing work rides on the writeback of the most recent step.
inline void attach_post_op(Schedule& sched, PostOp op) {
  if (sched.steps.empty()) sched.leading_post_ops.push_back(std::move(op));
  else sched.steps.back().post_ops.push_back(std::move(op));
}

inline std::uint64_t post_op_bytes(const Step& st, unsigned feature_bits) {
  std::uint64_t e = 0;
  for (const auto& op : st.post_ops) e += op.reads + op.writes;
  return ceil_div(e * feature_bits, 8);
}

// Array utilization: occupied cell-passes over available cell-passes across
// all macros and compute steps. Bit-cycles cancel.
inline double utilization(const Schedule& sched) {
  long double occ = 0, avail = 0;
  for (const auto& st : sched.steps) {
    occ += static_cast<long double>(st.occupied_cell_passes);
    avail += static_cast<long double>(sched.macros) * sched.macro_cells * st.passes;
  }
  return avail > 0 ? static_cast<double>(occ / avail) : 0.0;
}

}  // namespace cimsim

// flexblock.hpp - block-composed sparsity patterns, structural validation and
// mask conformance.
#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "cimsim/common.hpp"
#include "cimsim/workload.hpp"

namespace cimsim {

enum class PatternKind { full_block, intra_block };

inline const char* to_string(PatternKind k) {
  return k == PatternKind::full_block ? "full_block" : "intra_block";
}

// Flattened m x n binary placement mask, column index varying fastest.
using PatternMask = std::vector<std::uint8_t>;

struct BlockPattern {
  PatternKind kind = PatternKind::full_block;
  std::size_t m = 1;
  std::size_t n = 1;
  double ratio = 0.5;
  std::vector<PatternMask> pattern_set;  // intra_block only; empty means default set

  std::size_t area() const { return m * n; }
};

struct FlexBlockSpec {
  std::vector<BlockPattern> patterns;

  bool has_intra() const {
    return std::any_of(patterns.begin(), patterns.end(),
                       [](const BlockPattern& p) { return p.kind == PatternKind::intra_block; });
  }
  // Pattern with the smallest block area; its blocks carry the block index.
  const BlockPattern& finest() const {
    return *std::min_element(patterns.begin(), patterns.end(),
                             [](const BlockPattern& a, const BlockPattern& b) {
                               return a.area() < b.area();
                             });
  }
  const BlockPattern* intra() const {
    for (const auto& p : patterns)
      if (p.kind == PatternKind::intra_block) return &p;
    return nullptr;
  }
};

// Hardware extents that block sizes are checked against.
struct HwAlignment {
  std::size_t array_rows = 1;       // rows accumulated along a bitline (subarray rows)
  std::size_t array_cols = 1;
  std::size_t broadcast_width = 1;  // columns sharing one broadcast input
};

struct StageIndex {
  PatternKind kind = PatternKind::full_block;
  std::size_t m = 1;
  std::size_t n = 1;
  // full_block: top-left corners of surviving blocks (I_B), row-major order.
  // intra_block: top-left corners of every block the stage was applied to.
  std::vector<std::pair<std::size_t, std::size_t>> block_index;
  // intra_block only: kept flattened offsets for each entry of block_index.
  std::vector<std::vector<std::uint16_t>> elem_index;
};

struct SparseMask {
  std::string tensor_id;
  Dims2 dims;
  std::vector<std::uint8_t> bits;  // row-major, 1 = kept
  std::vector<StageIndex> stages;

  static SparseMask dense(std::string id, Dims2 d) {
    SparseMask m;
    m.tensor_id = std::move(id);
    m.dims = d;
    m.bits.assign(d.rows * d.cols, 1);
    return m;
  }

  std::uint8_t bit(std::size_t r, std::size_t c) const { return bits[r * dims.cols + c]; }
  std::uint8_t& bit(std::size_t r, std::size_t c) { return bits[r * dims.cols + c]; }
  std::size_t nnz() const {
    std::size_t n = 0;
    for (auto b : bits) n += b;
    return n;
  }
  double sparsity() const {
    return bits.empty() ? 0.0 : 1.0 - static_cast<double>(nnz()) / static_cast<double>(bits.size());
  }
  bool has_elem_index() const {
    return std::any_of(stages.begin(), stages.end(),
                       [](const StageIndex& s) { return !s.elem_index.empty(); });
  }
};

// Number of surviving blocks, floor((1 - r) * (M/m) * (N/n)).
inline std::uint64_t nonzero_block_count(const BlockPattern& p, Dims2 matrix) {
  if (p.m == 0 || p.n == 0 || matrix.rows % p.m != 0 || matrix.cols % p.n != 0)
    throw SemanticError("block size (" + std::to_string(p.m) + "," + std::to_string(p.n) +
                        ") does not divide matrix " + std::to_string(matrix.rows) + "x" +
                        std::to_string(matrix.cols));
  const double blocks = static_cast<double>(matrix.rows / p.m) * static_cast<double>(matrix.cols / p.n);
  return floor_count((1.0 - p.ratio) * blocks);
}

// Kept elements per block, floor((1 - r) * m * n).
inline std::uint64_t nonzero_elem_count(const BlockPattern& p) {
  return floor_count((1.0 - p.ratio) * static_cast<double>(p.m * p.n));
}

inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

inline constexpr std::size_t kDefaultPatternCap = 4096;

// All masks with exactly phi ones, in lexicographic order of the flattened
// bit string.
inline std::vector<PatternMask> default_pattern_set(std::size_t m, std::size_t n, double ratio,
                                                    std::size_t cap = kDefaultPatternCap) {
  if (m * n <= 1) throw SemanticError("pattern set: block area must exceed 1");
  BlockPattern p{PatternKind::intra_block, m, n, ratio, {}};
  const std::size_t len = m * n;
  const std::size_t phi = nonzero_elem_count(p);
  const std::uint64_t count = binomial(len, phi);
  if (count > cap)
    throw SemanticError("pattern set: " + std::to_string(count) + " candidate masks exceed cap " +
                        std::to_string(cap) + "; give an explicit pattern set");
  std::vector<PatternMask> out;
  out.reserve(count);
  PatternMask cur(len, 0);
  auto rec = [&](auto&& self, std::size_t pos, std::size_t ones_left) -> void {
    if (pos == len) {
      if (ones_left == 0) out.push_back(cur);
      return;
    }
    const std::size_t remaining = len - pos;
    if (remaining > ones_left) {
      cur[pos] = 0;
      self(self, pos + 1, ones_left);
    }
    if (ones_left > 0) {
      cur[pos] = 1;
      self(self, pos + 1, ones_left - 1);
      cur[pos] = 0;
    }
  };
  rec(rec, 0, phi);
  return out;
}

inline std::string mask_to_string(const PatternMask& m) {
  std::string s;
  for (auto b : m) s.push_back(b ? '1' : '0');
  return s;
}

inline PatternMask mask_from_string(const std::string& s) {
  PatternMask m;
  for (char c : s) {
    if (c != '0' && c != '1') throw SchemaError("pattern mask '" + s + "' must be a bit string");
    m.push_back(c == '1');
  }
  return m;
}

// Pattern set in effect: explicit set or the default enumeration.
inline std::vector<PatternMask> effective_pattern_set(const BlockPattern& p,
                                                      std::size_t cap = kDefaultPatternCap) {
  if (!p.pattern_set.empty()) return p.pattern_set;
  return default_pattern_set(p.m, p.n, p.ratio, cap);
}

inline ValidationReport validate_spec(const FlexBlockSpec& spec, Dims2 matrix, const HwAlignment& hw) {
  ValidationReport rep;
  const std::string mod = "sparsity";
  if (spec.patterns.empty()) rep.error(mod, "patterns", "at least one pattern is required");
  if (spec.patterns.size() > 2)
    rep.error(mod, "patterns",
              "composition of " + std::to_string(spec.patterns.size()) +
                  " patterns exceeds the maximum of two");
  for (std::size_t i = 0; i < spec.patterns.size(); ++i) {
    const auto& p = spec.patterns[i];
    const std::string f = "patterns[" + std::to_string(i) + "]";
    if (p.m < 1 || p.n < 1) {
      rep.error(mod, f + ".block", "block extents must be >= 1");
      continue;
    }
    if (p.m * p.n <= 1) rep.error(mod, f + ".block", "block area m*n must exceed 1");
    if (!(p.ratio > 0.0 && p.ratio < 1.0)) rep.error(mod, f + ".ratio", "ratio must lie in (0, 1)");
    if (p.m > matrix.rows || p.n > matrix.cols || matrix.rows % p.m != 0 || matrix.cols % p.n != 0)
      rep.error(mod, f + ".block",
                "block (" + std::to_string(p.m) + "," + std::to_string(p.n) +
                    ") does not divide matrix " + std::to_string(matrix.rows) + "x" +
                    std::to_string(matrix.cols));
    if (p.kind == PatternKind::intra_block) {
      if (p.n != 1)
        rep.error(mod, f + ".block",
                  "intra_block patterns must be column-wise one-dimensional blocks (n = 1)");
      const std::size_t phi = nonzero_elem_count(p);
      std::set<PatternMask> seen;
      for (const auto& mask : p.pattern_set) {
        if (mask.size() != p.m * p.n) {
          rep.error(mod, f + ".patterns", "mask " + mask_to_string(mask) + " has wrong length");
          continue;
        }
        const auto ones = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
        if (ones != phi)
          rep.error(mod, f + ".patterns",
                    "mask " + mask_to_string(mask) + " must keep exactly " + std::to_string(phi) +
                        " elements");
        if (!seen.insert(mask).second)
          rep.error(mod, f + ".patterns", "duplicate mask " + mask_to_string(mask));
      }
      if (p.pattern_set.empty() && p.m * p.n > 1 &&
          binomial(p.m * p.n, phi) > kDefaultPatternCap)
        rep.error(mod, f + ".patterns", "default pattern set too large; list patterns explicitly");
    } else {
      const bool col_aligned = p.n == matrix.cols || (hw.broadcast_width > 0 && p.n % hw.broadcast_width == 0);
      const bool row_aligned = p.m == matrix.rows || (hw.array_rows > 0 && p.m % hw.array_rows == 0);
      if (!col_aligned && !row_aligned)
        rep.warn(mod, f + ".block",
                 "full_block (" + std::to_string(p.m) + "," + std::to_string(p.n) +
                     ") is not an integral multiple of the hardware dimensions; expect fragmentation");
    }
  }
  if (spec.patterns.size() == 2) {
    const auto& a = spec.patterns[0];
    const auto& b = spec.patterns[1];
    const auto& fine = a.area() <= b.area() ? a : b;
    const auto& coarse = a.area() <= b.area() ? b : a;
    if (fine.m == 0 || fine.n == 0 || coarse.m % fine.m != 0 || coarse.n % fine.n != 0)
      rep.error(mod, "patterns",
                "coarser block must be an integral multiple of the finer block in both dimensions");
  }
  if (rep.ok()) {
    for (std::size_t i = 0; i < spec.patterns.size(); ++i) {
      const auto& p = spec.patterns[i];
      const double achieved = p.kind == PatternKind::full_block
                                  ? static_cast<double>(nonzero_block_count(p, matrix)) /
                                        static_cast<double>((matrix.rows / p.m) * (matrix.cols / p.n))
                                  : static_cast<double>(nonzero_elem_count(p)) / static_cast<double>(p.area());
      if (std::abs((1.0 - achieved) - p.ratio) > 1e-9)
        rep.warn(mod, "patterns[" + std::to_string(i) + "].ratio",
                 "realized ratio " + std::to_string(1.0 - achieved) + " differs from requested " +
                     std::to_string(p.ratio));
    }
  }
  return rep;
}

namespace detail {

inline bool block_all_zero(const SparseMask& mask, std::size_t r0, std::size_t c0, std::size_t m,
                           std::size_t n) {
  for (std::size_t r = r0; r < r0 + m; ++r)
    for (std::size_t c = c0; c < c0 + n; ++c)
      if (mask.bit(r, c)) return false;
  return true;
}

}  // namespace detail

// Structural conformance of a mask to a spec.
inline bool verify_mask(const SparseMask& mask, const FlexBlockSpec& spec) {
  const Dims2 d = mask.dims;
  if (mask.bits.size() != d.rows * d.cols) return false;
  if (spec.patterns.empty()) return false;
  if (mask.stages.size() != spec.patterns.size()) return false;
  for (std::size_t s = 0; s < spec.patterns.size(); ++s) {
    const auto& p = spec.patterns[s];
    const auto& st = mask.stages[s];
    if (st.kind != p.kind || st.m != p.m || st.n != p.n) return false;
    if (p.m == 0 || p.n == 0 || d.rows % p.m != 0 || d.cols % p.n != 0) return false;
    const std::size_t brows = d.rows / p.m, bcols = d.cols / p.n;
    std::vector<std::uint8_t> listed(brows * bcols, 0);
    for (const auto& [r, c] : st.block_index) {
      if (r % p.m != 0 || c % p.n != 0 || r >= d.rows || c >= d.cols) return false;
      auto& slot = listed[(r / p.m) * bcols + c / p.n];
      if (slot) return false;
      slot = 1;
    }
    if (p.kind == PatternKind::full_block) {
      if (!st.elem_index.empty()) return false;
      if (st.block_index.size() != nonzero_block_count(p, d)) return false;
      for (std::size_t br = 0; br < brows; ++br)
        for (std::size_t bc = 0; bc < bcols; ++bc)
          if (!listed[br * bcols + bc] && !detail::block_all_zero(mask, br * p.m, bc * p.n, p.m, p.n))
            return false;
    } else {
      if (st.elem_index.size() != st.block_index.size()) return false;
      const auto set = effective_pattern_set(p);
      const std::size_t phi = nonzero_elem_count(p);
      for (std::size_t br = 0; br < brows; ++br)
        for (std::size_t bc = 0; bc < bcols; ++bc) {
          const std::size_t r0 = br * p.m, c0 = bc * p.n;
          if (!listed[br * bcols + bc]) {
            if (!detail::block_all_zero(mask, r0, c0, p.m, p.n)) return false;
            continue;
          }
          bool matched = false;
          for (const auto& pat : set) {
            bool ok = true;
            for (std::size_t x = 0; x < p.m && ok; ++x)
              for (std::size_t y = 0; y < p.n && ok; ++y)
                if (mask.bit(r0 + x, c0 + y) && !pat[x * p.n + y]) ok = false;
            if (ok) {
              matched = true;
              break;
            }
          }
          if (!matched) return false;
        }
      for (std::size_t k = 0; k < st.block_index.size(); ++k) {
        const auto& kept = st.elem_index[k];
        if (kept.size() != phi) return false;
        const auto [r0, c0] = st.block_index[k];
        PatternMask m(p.area(), 0);
        for (auto off : kept) {
          if (off >= p.area()) return false;
          m[off] = 1;
        }
        if (std::find(set.begin(), set.end(), m) == set.end()) return false;
        for (std::size_t x = 0; x < p.m; ++x)
          for (std::size_t y = 0; y < p.n; ++y)
            if (mask.bit(r0 + x, c0 + y) && !m[x * p.n + y]) return false;
      }
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Sparsity description documents. Block extents may be integers or the
// symbols "M", "N" or "C_in", resolved per layer.

using BlockExtent = std::variant<std::size_t, std::string>;

struct PatternTemplate {
  PatternKind kind = PatternKind::full_block;
  BlockExtent m = std::size_t{1};
  BlockExtent n = std::size_t{1};
  double ratio = 0.5;
  std::vector<PatternMask> pattern_set;
};

enum class IncompatiblePolicy { error, dense };

struct SparsityTemplate {
  std::string name;
  std::vector<PatternTemplate> patterns;  // empty = dense
  std::vector<OpKind> apply_to{OpKind::conv, OpKind::fc};
  IncompatiblePolicy on_incompatible = IncompatiblePolicy::error;

  bool dense() const { return patterns.empty(); }
  bool applies_to(OpKind k) const {
    return std::find(apply_to.begin(), apply_to.end(), k) != apply_to.end();
  }
};

inline std::size_t resolve_extent(const BlockExtent& e, Dims2 matrix, std::size_t c_in) {
  if (std::holds_alternative<std::size_t>(e)) return std::get<std::size_t>(e);
  const auto& s = std::get<std::string>(e);
  if (s == "M") return matrix.rows;
  if (s == "N") return matrix.cols;
  if (s == "C_in") return c_in;
  throw SchemaError("sparsity: unknown block extent symbol '" + s + "'");
}

inline FlexBlockSpec resolve(const SparsityTemplate& t, Dims2 matrix, std::size_t c_in) {
  FlexBlockSpec spec;
  for (const auto& pt : t.patterns)
    spec.patterns.push_back({pt.kind, resolve_extent(pt.m, matrix, c_in),
                             resolve_extent(pt.n, matrix, c_in), pt.ratio, pt.pattern_set});
  return spec;
}

namespace detail {

inline BlockExtent parse_extent(const json& j, const std::string& where) {
  if (j.is_number_integer()) {
    if (j.get<std::int64_t>() < 1) throw SemanticError(where + ": block extent must be >= 1");
    return j.get<std::size_t>();
  }
  if (j.is_string()) return j.get<std::string>();
  throw SchemaError(where + ": block extent must be an integer or one of M, N, C_in");
}

inline json extent_json(const BlockExtent& e) {
  if (std::holds_alternative<std::size_t>(e)) return std::get<std::size_t>(e);
  return std::get<std::string>(e);
}

}  // namespace detail

inline SparsityTemplate sparsity_from_json(const json& doc) {
  SparsityTemplate t;
  const std::string where = "sparsity";
  if (!doc.is_object() || !doc.contains("patterns") || !doc["patterns"].is_array())
    throw SchemaError("sparsity: document must be an object with a 'patterns' array");
  t.name = detail::get_or<std::string>(doc, "name", "", where);
  std::size_t i = 0;
  for (const auto& jp : doc["patterns"]) {
    const std::string w = where + ".patterns[" + std::to_string(i++) + "]";
    PatternTemplate p;
    const auto kind = detail::get_required<std::string>(jp, "kind", w);
    if (kind == "full_block") p.kind = PatternKind::full_block;
    else if (kind == "intra_block") p.kind = PatternKind::intra_block;
    else throw SchemaError(w + ": unknown kind '" + kind + "'");
    if (!jp.contains("block") || !jp["block"].is_array() || jp["block"].size() != 2)
      throw SchemaError(w + ": 'block' must be a two-element array");
    p.m = detail::parse_extent(jp["block"][0], w);
    p.n = detail::parse_extent(jp["block"][1], w);
    p.ratio = detail::get_required<double>(jp, "ratio", w);
    for (const auto& s : detail::get_or<std::vector<std::string>>(jp, "patterns", {}, w))
      p.pattern_set.push_back(mask_from_string(s));
    t.patterns.push_back(std::move(p));
  }
  if (doc.contains("apply_to")) {
    t.apply_to.clear();
    for (const auto& k : doc["apply_to"]) t.apply_to.push_back(parse_op_kind(k.get<std::string>()));
  }
  const auto pol = detail::get_or<std::string>(doc, "on_incompatible", "error", where);
  if (pol == "dense") t.on_incompatible = IncompatiblePolicy::dense;
  else if (pol == "error") t.on_incompatible = IncompatiblePolicy::error;
  else throw SchemaError("sparsity: on_incompatible must be 'error' or 'dense'");
  return t;
}

inline SparsityTemplate parse_sparsity(const std::string& text) {
  return sparsity_from_json(detail::parse_json(text, "sparsity"));
}

inline json to_json(const SparsityTemplate& t) {
  json j;
  j["name"] = t.name;
  j["patterns"] = json::array();
  for (const auto& p : t.patterns) {
    json jp{{"kind", to_string(p.kind)},
            {"block", {detail::extent_json(p.m), detail::extent_json(p.n)}},
            {"ratio", p.ratio}};
    if (!p.pattern_set.empty()) {
      jp["patterns"] = json::array();
      for (const auto& m : p.pattern_set) jp["patterns"].push_back(mask_to_string(m));
    }
    j["patterns"].push_back(jp);
  }
  j["apply_to"] = json::array();
  for (auto k : t.apply_to) j["apply_to"].push_back(to_string(k));
  j["on_incompatible"] = t.on_incompatible == IncompatiblePolicy::dense ? "dense" : "error";
  return j;
}

}  // namespace cimsim

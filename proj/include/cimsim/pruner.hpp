// pruner.hpp - loss-driven and random mask generation for block patterns.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "cimsim/common.hpp"
#include "cimsim/flexblock.hpp"

namespace cimsim {

enum class Criterion { l1, l2 };

inline Criterion parse_criterion(const std::string& s) {
  if (s == "l1") return Criterion::l1;
  if (s == "l2") return Criterion::l2;
  throw SchemaError("criterion must be 'l1' or 'l2'");
}

inline long double rho(double w, Criterion c) {
  const long double x = w;
  return c == Criterion::l1 ? std::fabs(x) : x * x;
}

// Sum of the criterion over the m x n block at (i, j).
inline long double block_loss(const Matrix& w, std::size_t i, std::size_t j, std::size_t m,
                              std::size_t n, Criterion crit) {
  if (i + m > w.rows() || j + n > w.cols())
    throw SemanticError("block_loss: block out of bounds");
  long double acc = 0;
  for (std::size_t x = i; x < i + m; ++x)
    for (std::size_t y = j; y < j + n; ++y) acc += rho(w(x, y), crit);
  return acc;
}

// Sum of the criterion over the elements a pattern prunes (its zeros).
inline long double intra_loss(const Matrix& w, std::size_t i, std::size_t j,
                              const PatternMask& pattern, std::size_t m, std::size_t n,
                              Criterion crit) {
  if (pattern.size() != m * n) throw SemanticError("intra_loss: pattern size mismatch");
  if (i + m > w.rows() || j + n > w.cols())
    throw SemanticError("intra_loss: block out of bounds");
  long double acc = 0;
  for (std::size_t x = 0; x < m; ++x)
    for (std::size_t y = 0; y < n; ++y)
      if (!pattern[x * n + y]) acc += rho(w(i + x, j + y), crit);
  return acc;
}

namespace detail {

inline Matrix apply_mask(const Matrix& w, const SparseMask& mask) {
  Matrix out = w;
  for (std::size_t k = 0; k < out.data().size(); ++k)
    if (!mask.bits[k]) out.data()[k] = 0.0;
  return out;
}

inline bool block_any(const SparseMask& mask, std::size_t r0, std::size_t c0, std::size_t m,
                      std::size_t n) {
  return !block_all_zero(mask, r0, c0, m, n);
}

// Keeps `survivors` (sorted block ordinals) and zeroes the rest.
inline void commit_full_stage(SparseMask& mask, const BlockPattern& p,
                              const std::vector<std::size_t>& survivors) {
  const std::size_t bcols = mask.dims.cols / p.n;
  const std::size_t total = (mask.dims.rows / p.m) * bcols;
  std::vector<std::uint8_t> keep(total, 0);
  for (auto b : survivors) keep[b] = 1;
  StageIndex st{PatternKind::full_block, p.m, p.n, {}, {}};
  for (std::size_t b = 0; b < total; ++b) {
    const std::size_t r0 = (b / bcols) * p.m, c0 = (b % bcols) * p.n;
    if (keep[b]) {
      st.block_index.emplace_back(r0, c0);
      continue;
    }
    for (std::size_t r = r0; r < r0 + p.m; ++r)
      for (std::size_t c = c0; c < c0 + p.n; ++c) mask.bit(r, c) = 0;
  }
  mask.stages.push_back(std::move(st));
}

inline void full_stage(const Matrix& w, SparseMask& mask, const BlockPattern& p, Criterion crit) {
  const Dims2 d = mask.dims;
  const std::size_t phi = nonzero_block_count(p, d);
  const Matrix masked = apply_mask(w, mask);
  const std::size_t bcols = d.cols / p.n;
  const std::size_t total = (d.rows / p.m) * bcols;
  std::vector<long double> loss(total);
  for (std::size_t b = 0; b < total; ++b)
    loss[b] = block_loss(masked, (b / bcols) * p.m, (b % bcols) * p.n, p.m, p.n, crit);
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  // Lowest loss pruned first; equal losses prune the lower block ordinal.
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return loss[a] < loss[b]; });
  std::vector<std::size_t> survivors(order.begin() + static_cast<std::ptrdiff_t>(total - phi), order.end());
  std::sort(survivors.begin(), survivors.end());
  commit_full_stage(mask, p, survivors);
}

inline void commit_intra_block(SparseMask& mask, StageIndex& st, const BlockPattern& p,
                               std::size_t r0, std::size_t c0, const PatternMask& pat) {
  std::vector<std::uint16_t> kept;
  for (std::size_t x = 0; x < p.m; ++x)
    for (std::size_t y = 0; y < p.n; ++y) {
      const std::size_t off = x * p.n + y;
      if (pat[off]) kept.push_back(static_cast<std::uint16_t>(off));
      else mask.bit(r0 + x, c0 + y) = 0;
    }
  st.block_index.emplace_back(r0, c0);
  st.elem_index.push_back(std::move(kept));
}

inline void intra_stage(const Matrix& w, SparseMask& mask, const BlockPattern& p, Criterion crit) {
  const Dims2 d = mask.dims;
  if (d.rows % p.m != 0 || d.cols % p.n != 0)
    throw SemanticError("prune_intrablock: block does not divide matrix");
  const auto set = effective_pattern_set(p);
  if (set.empty()) throw SemanticError("prune_intrablock: empty pattern set");
  const Matrix masked = apply_mask(w, mask);
  StageIndex st{PatternKind::intra_block, p.m, p.n, {}, {}};
  for (std::size_t r0 = 0; r0 < d.rows; r0 += p.m)
    for (std::size_t c0 = 0; c0 < d.cols; c0 += p.n) {
      if (!block_any(mask, r0, c0, p.m, p.n)) continue;
      std::size_t best = 0;
      long double best_loss = intra_loss(masked, r0, c0, set[0], p.m, p.n, crit);
      for (std::size_t k = 1; k < set.size(); ++k) {
        const long double l = intra_loss(masked, r0, c0, set[k], p.m, p.n, crit);
        if (l < best_loss) {
          best_loss = l;
          best = k;
        }
      }
      commit_intra_block(mask, st, p, r0, c0, set[best]);
    }
  mask.stages.push_back(std::move(st));
}

}  // namespace detail

inline SparseMask prune_fullblock(const Matrix& w, const BlockPattern& p, Criterion crit,
                                  std::string tensor_id = {}) {
  auto mask = SparseMask::dense(std::move(tensor_id), w.dims());
  detail::full_stage(w, mask, p, crit);
  return mask;
}

inline SparseMask prune_intrablock(const Matrix& w, const BlockPattern& p, Criterion crit,
                                   std::string tensor_id = {}) {
  if (p.n != 1) throw SemanticError("prune_intrablock: block must be column-wise (n = 1)");
  auto mask = SparseMask::dense(std::move(tensor_id), w.dims());
  detail::intra_stage(w, mask, p, crit);
  return mask;
}

// Applies the patterns in listed order; each stage scores the matrix as masked
// by the stages before it.
inline SparseMask prune_flexblock(const Matrix& w, const FlexBlockSpec& spec, Criterion crit,
                                  std::string tensor_id = {}) {
  auto mask = SparseMask::dense(std::move(tensor_id), w.dims());
  for (const auto& p : spec.patterns) {
    if (p.kind == PatternKind::full_block) detail::full_stage(w, mask, p, crit);
    else detail::intra_stage(w, mask, p, crit);
  }
  return mask;
}

inline SparseMask random_mask(const FlexBlockSpec& spec, Dims2 dims, std::uint64_t seed,
                              std::string tensor_id = {}) {
  Rng rng(seed);
  auto mask = SparseMask::dense(std::move(tensor_id), dims);
  for (const auto& p : spec.patterns) {
    if (p.kind == PatternKind::full_block) {
      const std::size_t phi = nonzero_block_count(p, dims);
      const std::size_t total = (dims.rows / p.m) * (dims.cols / p.n);
      std::vector<std::size_t> all(total);
      std::iota(all.begin(), all.end(), 0);
      // Partial Fisher-Yates: the first phi slots are a uniform sample.
      for (std::size_t i = 0; i < phi; ++i) std::swap(all[i], all[i + rng.below(total - i)]);
      std::vector<std::size_t> survivors(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(phi));
      std::sort(survivors.begin(), survivors.end());
      detail::commit_full_stage(mask, p, survivors);
    } else {
      if (dims.rows % p.m != 0 || dims.cols % p.n != 0)
        throw SemanticError("random_mask: block does not divide matrix");
      const auto set = effective_pattern_set(p);
      StageIndex st{PatternKind::intra_block, p.m, p.n, {}, {}};
      for (std::size_t r0 = 0; r0 < dims.rows; r0 += p.m)
        for (std::size_t c0 = 0; c0 < dims.cols; c0 += p.n) {
          if (!detail::block_any(mask, r0, c0, p.m, p.n)) continue;
          detail::commit_intra_block(mask, st, p, r0, c0, set[rng.below(set.size())]);
        }
      mask.stages.push_back(std::move(st));
    }
  }
  return mask;
}

}  // namespace cimsim

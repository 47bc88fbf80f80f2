// profiler.hpp - bit-level input sparsity: which bit-serial cycles can be
// skipped because every broadcast input is zero at that bit.
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cimsim/common.hpp"

namespace cimsim {

// Quantized input vectors of one layer: `features` vectors of `length`
// elements, feature-major. Element order follows the weight-matrix rows.
struct Activations {
  std::size_t features = 0;
  std::size_t length = 0;
  std::vector<std::int64_t> values;

  std::int64_t at(std::size_t f, std::size_t i) const { return values[f * length + i]; }
};

using ActivationSet = std::map<std::string, Activations>;

struct ProfileOptions {
  unsigned bits = 8;
  bool is_signed = false;
  std::size_t rows_per_group = 1;   // array rows receiving one broadcast at once
  std::size_t inputs_per_row = 1;   // candidate inputs per row (intra multiplicity)
  std::size_t max_features = 0;     // 0 = all
};

// Two's-complement (signed) or plain binary code of v in `bits` bits.
inline std::uint64_t input_code(std::int64_t v, unsigned bits, bool is_signed) {
  if (bits == 0 || bits > 32) throw SemanticError("profiler: bit width must be 1..32");
  const std::int64_t hi = is_signed ? (std::int64_t{1} << (bits - 1)) - 1 : (std::int64_t{1} << bits) - 1;
  const std::int64_t lo = is_signed ? -(std::int64_t{1} << (bits - 1)) : 0;
  if (v < lo || v > hi)
    throw SemanticError("profiler: value " + std::to_string(v) + " outside the " + std::to_string(bits) +
                        "-bit " + (is_signed ? "signed" : "unsigned") + " range");
  return static_cast<std::uint64_t>(v) & ((std::uint64_t{1} << bits) - 1);
}

// OR of the codes in each group; a zero bit in the OR is a skippable cycle.
inline std::vector<std::uint64_t> bit_planes(const Activations& a, std::size_t feature,
                                             const ProfileOptions& o) {
  const std::size_t g = std::max<std::size_t>(1, o.rows_per_group * o.inputs_per_row);
  std::vector<std::uint64_t> out(ceil_div(a.length, g), 0);
  for (std::size_t i = 0; i < a.length; ++i) out[i / g] |= input_code(a.at(feature, i), o.bits, o.is_signed);
  return out;
}

struct ProfileResult {
  std::uint64_t total_cycles = 0;
  std::uint64_t skippable_cycles = 0;
  double ratio() const {
    return total_cycles ? static_cast<double>(skippable_cycles) / static_cast<double>(total_cycles) : 0.0;
  }
};

inline ProfileResult profile(const Activations& a, const ProfileOptions& o) {
  if (a.values.size() != a.features * a.length) throw SemanticError("profiler: activation size mismatch");
  ProfileResult r;
  const std::size_t nf = o.max_features ? std::min(o.max_features, a.features) : a.features;
  for (std::size_t f = 0; f < nf; ++f)
    for (auto plane : bit_planes(a, f, o)) {
      r.total_cycles += o.bits;
      r.skippable_cycles += o.bits - static_cast<unsigned>(std::popcount(plane));
    }
  return r;
}

inline double skippable_ratio(const Activations& a, const ProfileOptions& o) { return profile(a, o).ratio(); }

// ReLU-style synthetic inputs: round(zero_fraction * n) zeros at random
// positions, the rest half-normal magnitudes clipped to the code range.
inline Activations synth_activations(std::size_t features, std::size_t length, unsigned bits,
                                     double zero_fraction, std::uint64_t seed, bool is_signed = false) {
  if (!(zero_fraction >= 0.0 && zero_fraction <= 1.0))
    throw SemanticError("profiler: zero_fraction must lie in [0, 1]");
  Rng rng(seed);
  Activations a{features, length, std::vector<std::int64_t>(features * length, 0)};
  const double hi = is_signed ? std::ldexp(1.0, static_cast<int>(bits) - 1) - 1 : std::ldexp(1.0, static_cast<int>(bits)) - 1;
  const double sigma = std::max(1.0, hi / 4.0);
  const auto zeros = static_cast<std::size_t>(std::llround(zero_fraction * static_cast<double>(a.values.size())));
  std::vector<std::uint8_t> is_zero(a.values.size(), 0);
  std::fill(is_zero.begin(), is_zero.begin() + static_cast<std::ptrdiff_t>(zeros), 1);
  rng.shuffle(is_zero);
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    if (is_zero[i]) continue;
    auto& v = a.values[i];
    const double u1 = std::max(rng.unit(), 1e-12), u2 = rng.unit();
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    double mag = std::min(hi, std::max(1.0, std::floor(std::fabs(z) * sigma)));
    if (is_signed && rng.unit() < 0.5) mag = -mag;
    v = static_cast<std::int64_t>(mag);
  }
  return a;
}

}  // namespace cimsim

// tensor_io.hpp - CIMT tensor container.
//
// Layout (all integers little-endian):
//   offset 0  : 4 bytes  magic "CIMT"
//   offset 4  : 1 byte   version (1)
//   offset 5  : 1 byte   dtype code (see DType)
//   offset 6  : 1 byte   rank R
//   offset 7  : R x u64  extents, outermost first
//   then      : prod(extents) elements, row-major, element size per dtype
//
// int4 elements are stored one per byte, sign-extended.
#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "cimsim/common.hpp"
#include "cimsim/workload.hpp"

namespace cimsim {

enum class DType : std::uint8_t { u8 = 1, i8 = 2, u16 = 3, i16 = 4, f32 = 5, f64 = 6, i4 = 7 };

inline constexpr std::array<char, 4> kTensorMagic{'C', 'I', 'M', 'T'};
inline constexpr std::uint8_t kTensorVersion = 1;

struct Tensor {
  DType dtype = DType::f32;
  std::vector<std::size_t> shape;
  std::vector<double> values;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    return n;
  }
};

inline std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::u8:
    case DType::i8:
    case DType::i4: return 1;
    case DType::u16:
    case DType::i16: return 2;
    case DType::f32: return 4;
    case DType::f64: return 8;
  }
  throw SchemaError("tensor: bad dtype");
}

inline unsigned dtype_bitwidth(DType t) {
  switch (t) {
    case DType::i4: return 4;
    case DType::u16:
    case DType::i16: return 16;
    default: return 8;
  }
}

namespace detail {

template <typename T>
void put_le(std::ostream& os, T v) {
  std::array<unsigned char, sizeof(T)> b{};
  std::memcpy(b.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  os.write(reinterpret_cast<const char*>(b.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  std::array<unsigned char, sizeof(T)> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), sizeof(T)))
    throw SchemaError("tensor: truncated container");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  T v;
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

template <typename T>
T checked_cast(double v) {
  if (v != std::floor(v) || v < static_cast<double>(std::numeric_limits<T>::lowest()) ||
      v > static_cast<double>(std::numeric_limits<T>::max()))
    throw SemanticError("tensor: value " + std::to_string(v) + " not representable in dtype");
  return static_cast<T>(v);
}

}  // namespace detail

inline void write_tensor(std::ostream& os, const Tensor& t) {
  if (t.values.size() != t.element_count())
    throw SemanticError("tensor: payload length does not match shape");
  if (t.shape.size() > 255) throw SemanticError("tensor: rank exceeds 255");
  os.write(kTensorMagic.data(), 4);
  detail::put_le<std::uint8_t>(os, kTensorVersion);
  detail::put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.dtype));
  detail::put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.shape.size()));
  for (auto e : t.shape) detail::put_le<std::uint64_t>(os, e);
  for (double v : t.values) {
    switch (t.dtype) {
      case DType::u8: detail::put_le(os, detail::checked_cast<std::uint8_t>(v)); break;
      case DType::i8: detail::put_le(os, detail::checked_cast<std::int8_t>(v)); break;
      case DType::i4:
        if (v < -8 || v > 7) throw SemanticError("tensor: value out of int4 range");
        detail::put_le(os, detail::checked_cast<std::int8_t>(v));
        break;
      case DType::u16: detail::put_le(os, detail::checked_cast<std::uint16_t>(v)); break;
      case DType::i16: detail::put_le(os, detail::checked_cast<std::int16_t>(v)); break;
      case DType::f32: detail::put_le(os, std::bit_cast<std::uint32_t>(static_cast<float>(v))); break;
      case DType::f64: detail::put_le(os, std::bit_cast<std::uint64_t>(v)); break;
    }
  }
  if (!os) throw SchemaError("tensor: write failed");
}

inline Tensor read_tensor(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), 4) || magic != kTensorMagic)
    throw SchemaError("tensor: bad magic (expected CIMT)");
  const auto version = detail::get_le<std::uint8_t>(is);
  if (version != kTensorVersion)
    throw SchemaError("tensor: unsupported version " + std::to_string(version));
  Tensor t;
  const auto code = detail::get_le<std::uint8_t>(is);
  if (code < 1 || code > 7) throw SchemaError("tensor: unknown dtype code " + std::to_string(code));
  t.dtype = static_cast<DType>(code);
  const auto rank = detail::get_le<std::uint8_t>(is);
  for (unsigned i = 0; i < rank; ++i) t.shape.push_back(detail::get_le<std::uint64_t>(is));
  const std::size_t n = t.element_count();
  t.values.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (t.dtype) {
      case DType::u8: t.values.push_back(detail::get_le<std::uint8_t>(is)); break;
      case DType::i8:
      case DType::i4: t.values.push_back(detail::get_le<std::int8_t>(is)); break;
      case DType::u16: t.values.push_back(detail::get_le<std::uint16_t>(is)); break;
      case DType::i16: t.values.push_back(detail::get_le<std::int16_t>(is)); break;
      case DType::f32:
        t.values.push_back(std::bit_cast<float>(detail::get_le<std::uint32_t>(is)));
        break;
      case DType::f64:
        t.values.push_back(std::bit_cast<double>(detail::get_le<std::uint64_t>(is)));
        break;
    }
  }
  return t;
}

inline void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw SchemaError("cannot open '" + path + "' for writing");
  write_tensor(os, t);
}

inline Tensor load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw SchemaError("cannot open '" + path + "'");
  return read_tensor(is);
}

inline WeightTensor to_weight_tensor(std::string id, const Tensor& t) {
  WeightTensor w;
  w.id = std::move(id);
  w.shape = t.shape;
  w.element_bitwidth = dtype_bitwidth(t.dtype);
  w.values = t.values;
  return w;
}

}  // namespace cimsim

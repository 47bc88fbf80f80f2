// common.hpp - shared value types, errors and small numeric helpers.
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace cimsim {

using json = nlohmann::json;

// Thrown for malformed documents and I/O failures.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown when a well-formed input violates a semantic rule.
class SemanticError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Severity { warning, error };

struct Diagnostic {
  Severity severity = Severity::error;
  std::string module;
  std::string field;
  std::string message;

  std::string str() const {
    return std::string(severity == Severity::error ? "error" : "warning") + " [" + module + "." +
           field + "] " + message;
  }
};

struct ValidationReport {
  std::vector<Diagnostic> diagnostics;

  bool ok() const {
    for (const auto& d : diagnostics)
      if (d.severity == Severity::error) return false;
    return true;
  }
  std::size_t error_count() const {
    std::size_t n = 0;
    for (const auto& d : diagnostics) n += d.severity == Severity::error;
    return n;
  }
  void error(std::string module, std::string field, std::string msg) {
    diagnostics.push_back({Severity::error, std::move(module), std::move(field), std::move(msg)});
  }
  void warn(std::string module, std::string field, std::string msg) {
    diagnostics.push_back({Severity::warning, std::move(module), std::move(field), std::move(msg)});
  }
  void merge(const ValidationReport& other) {
    diagnostics.insert(diagnostics.end(), other.diagnostics.begin(), other.diagnostics.end());
  }
  std::string str() const {
    std::string out;
    for (const auto& d : diagnostics) out += d.str() + "\n";
    return out;
  }
};

struct Dims2 {
  std::size_t rows = 0;
  std::size_t cols = 0;
  friend bool operator==(const Dims2&, const Dims2&) = default;
};

// Row-major dense matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw SemanticError("matrix payload size mismatch");
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  Dims2 dims() const { return {rows_, cols_}; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

constexpr std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

// Floor of a product that is mathematically exact for decimal ratios such as
// 0.1..0.9; absorbs the binary rounding of (1 - r).
inline std::uint64_t floor_count(double x) {
  if (x <= 0.0) return 0;
  return static_cast<std::uint64_t>(std::floor(x + 1e-9));
}

inline std::uint32_t ceil_log2(std::uint64_t v) {
  std::uint32_t bits = 0;
  while ((std::uint64_t{1} << bits) < v) ++bits;
  return bits;
}

// Portable, seed-stable integer draws (std distributions are
// implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, bound).
  std::uint64_t below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % bound;
  }

  // Uniform in [0, 1).
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

// SplitMix64 step, used to derive per-item seeds from a top-level seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t hash_string(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

namespace detail {

template <typename T>
T get_required(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key))
    throw SchemaError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw SchemaError(where + ": field '" + key + "' has wrong type (" + e.what() + ")");
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw SchemaError(where + ": field '" + key + "' has wrong type (" + e.what() + ")");
  }
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(what + ": " + e.what());
  }
}

}  // namespace detail

}  // namespace cimsim

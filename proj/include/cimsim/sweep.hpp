// sweep.hpp - named pattern families and a parallel (pattern x ratio) sweep.
#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cimsim/common.hpp"
#include "cimsim/flexblock.hpp"
#include "cimsim/simulator.hpp"

namespace cimsim {

inline const std::vector<std::string>& pattern_family_names() {
  static const std::vector<std::string> names{"row_wise",     "row_block",     "column_wise",
                                              "channel_wise", "column_block",  "1:2+row_block",
                                              "1:2+row_wise", "1:4+row_block"};
  return names;
}

// Template for a named family at overall sparsity r. Hybrids keep one element
// per intra block and set the full ratio so the product hits r; ratios that
// leave nothing for the full stage are rejected.
inline SparsityTemplate pattern_family(const std::string& name, double r) {
  auto full = [](BlockExtent m, BlockExtent n, double ratio) {
    return PatternTemplate{PatternKind::full_block, std::move(m), std::move(n), ratio, {}};
  };
  SparsityTemplate t;
  t.name = name + "@" + std::to_string(r).substr(0, 4);
  t.on_incompatible = IncompatiblePolicy::dense;  // e.g. a 1000-wide classifier under 16-wide blocks
  if (name == "row_wise") t.patterns = {full(std::size_t{1}, std::string("N"), r)};
  else if (name == "row_block") t.patterns = {full(std::size_t{1}, std::size_t{16}, r)};
  else if (name == "column_wise") t.patterns = {full(std::string("M"), std::size_t{1}, r)};
  else if (name == "channel_wise") t.patterns = {full(std::string("C_in"), std::size_t{1}, r)};
  else if (name == "column_block") t.patterns = {full(std::size_t{16}, std::size_t{1}, r)};
  else if (name.size() > 4 && name[1] == ':' && name[3] == '+') {
    const std::size_t m = static_cast<std::size_t>(name[2] - '0');
    if (name[0] != '1' || (m != 2 && m != 4)) throw SchemaError("unknown pattern family '" + name + "'");
    const double full_ratio = 1.0 - (1.0 - r) * static_cast<double>(m);
    if (full_ratio <= 1e-9)
      throw SemanticError("pattern family '" + name + "' cannot reach sparsity " + std::to_string(r) +
                          ": intra stage alone prunes " + std::to_string(1.0 - 1.0 / static_cast<double>(m)));
    const std::string rest = name.substr(4);
    BlockExtent n;
    if (rest == "row_block") n = std::size_t{16};
    else if (rest == "row_wise") n = std::string("N");
    else throw SchemaError("unknown pattern family '" + name + "'");
    t.patterns = {PatternTemplate{PatternKind::intra_block, m, std::size_t{1}, 1.0 - 1.0 / static_cast<double>(m), {}},
                  full(m, n, full_ratio)};
  } else {
    throw SchemaError("unknown pattern family '" + name + "'");
  }
  return t;
}

struct NamedMapping {
  std::string name;
  MappingSpec mapping;
};

// Axes of a sweep. An empty axis means "use the base configuration".
struct SweepPlan {
  std::vector<std::string> patterns;
  std::vector<double> ratios;
  std::vector<std::vector<std::size_t>> organizations;
  std::vector<NamedMapping> mappings;

  std::size_t size() const {
    const std::size_t pr = patterns.empty() ? 1 : patterns.size() * ratios.size();
    return pr * std::max<std::size_t>(1, organizations.size()) * std::max<std::size_t>(1, mappings.size());
  }
};

inline SweepPlan sweep_plan_from_json(const json& j) {
  SweepPlan p;
  const std::string w = "sweep";
  p.patterns = detail::get_or<std::vector<std::string>>(j, "patterns", {}, w);
  p.ratios = detail::get_or<std::vector<double>>(j, "ratios", {0.5, 0.6, 0.7, 0.8, 0.9}, w);
  p.organizations = detail::get_or<std::vector<std::vector<std::size_t>>>(j, "organizations", {}, w);
  if (j.contains("mappings")) {
    if (!j["mappings"].is_object()) throw SchemaError("sweep.mappings must map names to mapping documents");
    for (const auto& [name, doc] : j["mappings"].items()) p.mappings.push_back({name, mapping_from_json(doc)});
  }
  for (const char* axis : {"patterns", "ratios", "organizations", "mappings"})
    if (j.contains(axis) && j[axis].empty()) throw SchemaError(std::string("sweep: axis '") + axis + "' is empty");
  if (!p.patterns.empty() && p.ratios.empty()) throw SchemaError("sweep: ratios must be non-empty");
  for (const auto& name : p.patterns) (void)pattern_family(name, 0.95);
  for (const auto& o : p.organizations)
    if (o.empty() || std::find(o.begin(), o.end(), std::size_t{0}) != o.end())
      throw SchemaError("sweep: organizations need extents >= 1");
  return p;
}

inline std::string organization_label(const std::vector<std::size_t>& org) {
  std::string s;
  for (std::size_t i = 0; i < org.size(); ++i) s += (i ? "x" : "") + std::to_string(org[i]);
  return s;
}

struct SweepPoint {
  std::string organization;
  std::string mapping;
  std::string pattern;
  double ratio = 0.0;
  bool ok = false;
  std::string error;
  ComparisonResult result;
};

// Inputs of one grid point; also what a user would run by hand to
// reproduce the row.
inline SimulationInputs sweep_point_inputs(const SimulationInputs& base, const SweepPlan& plan, std::size_t org,
                                           std::size_t map, const std::string& pattern, double ratio) {
  SimulationInputs in = base;
  if (!plan.organizations.empty()) {
    in.hardware.organization = plan.organizations[org];
    in.hardware = infer_unit_counts(in.hardware);
  }
  if (!plan.mappings.empty()) in.mapping = plan.mappings[map].mapping;
  if (!pattern.empty()) {
    in.sparsity = pattern_family(pattern, ratio);
    in.masks.clear();
  }
  return in;
}

// Grid order: organization, mapping, pattern, ratio (outermost first). Rows
// are filled by index so completion order does not matter; failures stay in
// their row.
inline std::vector<SweepPoint> run_sweep(const SimulationInputs& base, const SweepPlan& plan,
                                         unsigned threads = 0) {
  struct Key {
    std::size_t org, map;
  };
  std::vector<SweepPoint> pts;
  std::vector<Key> keys;
  const std::size_t n_org = std::max<std::size_t>(1, plan.organizations.size());
  const std::size_t n_map = std::max<std::size_t>(1, plan.mappings.size());
  for (std::size_t o = 0; o < n_org; ++o)
    for (std::size_t m = 0; m < n_map; ++m) {
      const std::string ol = plan.organizations.empty() ? organization_label(base.hardware.organization)
                                                        : organization_label(plan.organizations[o]);
      const std::string ml = plan.mappings.empty() ? base.mapping.name : plan.mappings[m].name;
      if (plan.patterns.empty()) {
        pts.push_back({ol, ml, base.sparsity.dense() ? "dense" : base.sparsity.name, 0.0, false, {}, {}});
        keys.push_back({o, m});
      }
      for (const auto& p : plan.patterns)
        for (double r : plan.ratios) {
          pts.push_back({ol, ml, p, r, false, {}, {}});
          keys.push_back({o, m});
        }
    }
  // one dense baseline per (organization, mapping)
  std::vector<std::optional<SimulationResult>> dense(n_org * n_map);
  std::vector<std::string> dense_error(n_org * n_map);
  std::atomic<std::size_t> next{0};
  auto dense_worker = [&] {
    for (std::size_t i = next++; i < dense.size(); i = next++) {
      try {
        dense[i] = simulate(dense_baseline(sweep_point_inputs(base, plan, i / n_map, i % n_map, "", 0.0)));
      } catch (const std::exception& e) {
        dense_error[i] = e.what();
      }
    }
  };
  auto worker = [&] {
    for (std::size_t i = next++; i < pts.size(); i = next++) {
      auto& pt = pts[i];
      const std::size_t di = keys[i].org * n_map + keys[i].map;
      try {
        if (!dense[di]) throw SemanticError("dense baseline failed: " + dense_error[di]);
        const auto in = sweep_point_inputs(base, plan, keys[i].org, keys[i].map,
                                           plan.patterns.empty() ? std::string() : pt.pattern, pt.ratio);
        pt.result.sparse = simulate(in);
        pt.result.dense = *dense[di];
        pt.ok = true;
      } catch (const std::exception& e) {
        pt.error = e.what();
      }
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  auto run = [&](auto& fn, std::size_t jobs) {
    next = 0;
    const auto n = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(1, jobs)));
    std::vector<std::thread> pool;
    for (unsigned k = 1; k < n; ++k) pool.emplace_back(fn);
    fn();
    for (auto& th : pool) th.join();
  };
  run(dense_worker, dense.size());
  run(worker, pts.size());
  return pts;
}

}  // namespace cimsim

// report.hpp - human-readable and CSV renderings of results.
#pragma once

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "cimsim/simulator.hpp"
#include "cimsim/sweep.hpp"

namespace cimsim {

inline std::string fmt_double(double v, int prec = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string format_report(const SimulationResult& r) {
  std::ostringstream os;
  os << "workload      " << r.workload << "\n"
     << "hardware      " << r.hardware << "\n"
     << "sparsity      " << r.sparsity << "\n"
     << "steps         " << r.steps << "\n"
     << "latency       " << r.latency << " cycles\n"
     << "energy        " << fmt_double(r.total_energy()) << " pJ (dynamic " << fmt_double(r.energy.dynamic())
     << ", static " << fmt_double(r.energy.static_energy()) << ", sparsity support "
     << fmt_double(r.energy.support()) << ")\n"
     << "utilization   " << fmt_double(r.utilization, 4) << "\n"
     << "sparsity      " << fmt_double(r.realized_sparsity, 4) << " realized\n"
     << "index bits    " << r.index_bits << "\n";
  if (!r.support.empty()) {
    os << "support units";
    for (const auto& u : r.support.compute) os << " " << u.name;
    if (r.support.index_memory) os << " " << r.support.index_memory->name;
    os << "\n";
  }
  os << "\nlayers\n";
  for (const auto& l : r.layers) {
    os << "  " << l.node << " " << l.matrix.rows << "x" << l.matrix.cols << " sparsity "
       << fmt_double(l.sparsity, 4) << " tiles " << l.tiles << " steps " << l.steps << " skip "
       << fmt_double(l.skip_ratio, 4) << " " << l.orientation;
    if (l.misaligned) os << " misaligned";
    if (l.dense_fallback) os << " dense-fallback";
    os << "\n";
  }
  os << "\nenergy by unit (pJ)\n";
  for (const auto& e : r.energy.entries)
    os << "  " << e.name << (e.sparsity_support ? "*" : "") << " accesses " << e.accesses << " dynamic "
       << fmt_double(e.dynamic) << " static " << fmt_double(e.static_energy) << "\n";
  for (const auto& d : r.diagnostics.diagnostics) os << d.str() << "\n";
  return os.str();
}

inline std::string simulation_csv_header() {
  return "workload,hardware,sparsity,steps,latency_cycles,energy_pj,dynamic_pj,static_pj,support_pj,"
         "utilization,realized_sparsity,index_bits";
}

inline std::string simulation_csv_row(const SimulationResult& r) {
  std::ostringstream os;
  os << csv_escape(r.workload) << "," << csv_escape(r.hardware) << "," << csv_escape(r.sparsity) << "," << r.steps
     << "," << r.latency << "," << fmt_double(r.total_energy(), 10) << "," << fmt_double(r.energy.dynamic(), 10)
     << "," << fmt_double(r.energy.static_energy(), 10) << "," << fmt_double(r.energy.support(), 10) << ","
     << fmt_double(r.utilization, 6) << "," << fmt_double(r.realized_sparsity, 6) << "," << r.index_bits;
  return os.str();
}

inline std::string format_comparison(const ComparisonResult& c) {
  std::ostringstream os;
  os << "variant:  " << c.sparse.sparsity << ", " << c.sparse.latency << " cycles, "
     << fmt_double(c.sparse.total_energy()) << " pJ\n"
     << "baseline: " << c.dense.sparsity << ", " << c.dense.latency << " cycles, "
     << fmt_double(c.dense.total_energy()) << " pJ\n"
     << "speedup            " << fmt_double(c.speedup(), 6) << "\n"
     << "energy saving      " << fmt_double(c.energy_saving(), 6) << " (baseline/variant)\n"
     << "energy reduction   " << fmt_double(c.energy_reduction() * 100.0, 4) << " %\n"
     << "utilization delta  " << fmt_double(c.utilization_delta(), 4) << "\n";
  return os.str();
}

inline std::string comparison_csv_header() {
  return "baseline,variant,baseline_latency,variant_latency,speedup,baseline_energy_pj,variant_energy_pj,"
         "energy_saving,energy_reduction,utilization_delta";
}

inline std::string comparison_csv_row(const ComparisonResult& c) {
  return csv_escape(c.dense.sparsity) + "," + csv_escape(c.sparse.sparsity) + "," + std::to_string(c.dense.latency) +
         "," + std::to_string(c.sparse.latency) + "," + fmt_double(c.speedup(), 10) + "," +
         fmt_double(c.dense.total_energy(), 10) + "," + fmt_double(c.sparse.total_energy(), 10) + "," +
         fmt_double(c.energy_saving(), 10) + "," + fmt_double(c.energy_reduction(), 10) + "," +
         fmt_double(c.utilization_delta(), 10);
}

// Axis columns, then the exact simulate CSV row of the point, then the
// comparison against the dense baseline.
inline std::string sweep_csv(const std::vector<SweepPoint>& pts, std::uint64_t seed) {
  std::ostringstream os;
  os << "organization,mapping,pattern,ratio,seed,status," << simulation_csv_header()
     << ",speedup,energy_saving,energy_reduction,utilization_delta,error\n";
  const std::size_t sim_cols = 12;
  for (const auto& p : pts) {
    os << csv_escape(p.organization) << "," << csv_escape(p.mapping) << "," << csv_escape(p.pattern) << ","
       << fmt_double(p.ratio, 4) << "," << seed << "," << (p.ok ? "ok" : "error") << ",";
    if (p.ok)
      os << simulation_csv_row(p.result.sparse) << "," << fmt_double(p.result.speedup(), 10) << ","
         << fmt_double(p.result.energy_saving(), 10) << "," << fmt_double(p.result.energy_reduction(), 10) << ","
         << fmt_double(p.result.utilization_delta(), 10) << ",";
    else
      os << std::string(sim_cols + 4, ',') << csv_escape(p.error);
    os << "\n";
  }
  return os.str();
}

inline std::string format_sweep(const std::vector<SweepPoint>& pts) {
  std::ostringstream os;
  char line[512];
  std::snprintf(line, sizeof line, "%-8s %-12s %-16s %6s %12s %10s %10s %9s\n", "org", "mapping", "pattern", "ratio",
                "latency", "speedup", "saving", "util");
  os << line;
  for (const auto& p : pts) {
    if (p.ok)
      std::snprintf(line, sizeof line, "%-8s %-12s %-16s %6.2f %12llu %10.4f %10.4f %9.4f\n", p.organization.c_str(),
                    p.mapping.c_str(), p.pattern.c_str(), p.ratio,
                    static_cast<unsigned long long>(p.result.sparse.latency), p.result.speedup(),
                    p.result.energy_saving(), p.result.sparse.utilization);
    else
      std::snprintf(line, sizeof line, "%-8s %-12s %-16s %6.2f   error: %.300s\n", p.organization.c_str(),
                    p.mapping.c_str(), p.pattern.c_str(), p.ratio, p.error.c_str());
    os << line;
  }
  return os.str();
}

// Stored results for later comparison.
inline json result_to_json(const SimulationResult& r, std::uint64_t seed) {
  json j;
  j["workload"] = r.workload;
  j["hardware"] = r.hardware;
  j["sparsity"] = r.sparsity;
  j["seed"] = seed;
  j["steps"] = r.steps;
  j["latency_cycles"] = r.latency;
  j["utilization"] = r.utilization;
  j["realized_sparsity"] = r.realized_sparsity;
  j["index_bits"] = r.index_bits;
  j["energy"] = json::array();
  for (const auto& e : r.energy.entries)
    j["energy"].push_back({{"name", e.name},
                           {"memory", e.is_memory},
                           {"sparsity_support", e.sparsity_support},
                           {"accesses", e.accesses},
                           {"dynamic_pj", e.dynamic},
                           {"static_pj", e.static_energy}});
  j["energy_total_pj"] = r.total_energy();
  return j;
}

inline SimulationResult result_from_json(const json& j) {
  const std::string w = "result";
  SimulationResult r;
  r.workload = detail::get_required<std::string>(j, "workload", w);
  r.hardware = detail::get_or<std::string>(j, "hardware", "", w);
  r.sparsity = detail::get_or<std::string>(j, "sparsity", "", w);
  r.steps = detail::get_or<std::size_t>(j, "steps", 0, w);
  r.latency = detail::get_required<std::uint64_t>(j, "latency_cycles", w);
  r.utilization = detail::get_or<double>(j, "utilization", 0.0, w);
  r.realized_sparsity = detail::get_or<double>(j, "realized_sparsity", 0.0, w);
  r.index_bits = detail::get_or<std::uint64_t>(j, "index_bits", 0, w);
  if (!j.contains("energy") || !j["energy"].is_array()) throw SchemaError("result: missing 'energy' array");
  for (const auto& je : j["energy"])
    r.energy.entries.push_back({detail::get_required<std::string>(je, "name", w + ".energy"),
                                detail::get_or<bool>(je, "memory", false, w),
                                detail::get_or<bool>(je, "sparsity_support", false, w),
                                detail::get_or<std::uint64_t>(je, "accesses", 0, w),
                                detail::get_required<double>(je, "dynamic_pj", w + ".energy"),
                                detail::get_required<double>(je, "static_pj", w + ".energy")});
  return r;
}

}  // namespace cimsim

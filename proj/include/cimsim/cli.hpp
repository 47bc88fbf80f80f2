// cli.hpp - the cimsim command line: validate, prune, profile, simulate,
// compare, sweep. Exit codes: 0 ok, 1 semantic failure, 2 I/O, schema or
// usage error.
#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cimsim/common.hpp"
#include "cimsim/flexblock.hpp"
#include "cimsim/hardware.hpp"
#include "cimsim/mapper.hpp"
#include "cimsim/profiler.hpp"
#include "cimsim/pruner.hpp"
#include "cimsim/report.hpp"
#include "cimsim/simulator.hpp"
#include "cimsim/sweep.hpp"
#include "cimsim/tensor_io.hpp"
#include "cimsim/workload.hpp"

namespace cimsim::cli {

enum ExitCode : int { kOk = 0, kSemantic = 1, kIo = 2 };

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw SchemaError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline bool is_tensor_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  char magic[4] = {};
  return is.read(magic, 4) && std::string(magic, 4) == "CIMT";
}

// A manifest maps names to tensor files relative to the manifest; a bare
// tensor file binds to the first MVM layer.
inline std::map<std::string, std::string> tensor_manifest(const std::string& path, const WorkloadGraph& g) {
  std::map<std::string, std::string> out;
  if (is_tensor_file(path)) {
    for (std::size_t i : g.topo_order())
      if (is_mvm(g.nodes()[i].kind)) {
        out[g.nodes()[i].id] = path;
        return out;
      }
    throw SemanticError("workload has no layer to bind '" + path + "' to");
  }
  const json doc = detail::parse_json(read_file(path), "manifest '" + path + "'");
  if (!doc.is_object()) throw SchemaError("manifest '" + path + "' must map names to tensor files");
  const auto base = std::filesystem::path(path).parent_path();
  for (const auto& [k, v] : doc.items()) {
    if (!v.is_string()) throw SchemaError("manifest '" + path + "': entry '" + k + "' must be a path");
    out[k] = (base / v.get<std::string>()).string();
  }
  return out;
}

inline std::map<std::string, WeightTensor> load_weights(const std::string& path, const WorkloadGraph& g) {
  std::map<std::string, WeightTensor> out;
  for (const auto& [name, file] : tensor_manifest(path, g)) {
    auto w = to_weight_tensor(name, load_tensor(file));
    out.emplace(name, std::move(w));
  }
  return out;
}

inline ActivationSet load_activations(const std::string& path, const WorkloadGraph& g) {
  ActivationSet out;
  for (const auto& [name, file] : tensor_manifest(path, g)) {
    const Tensor t = load_tensor(file);
    Activations a;
    if (t.shape.size() == 1) a = {1, t.shape[0], {}};
    else if (t.shape.size() == 2) a = {t.shape[0], t.shape[1], {}};
    else throw SchemaError("activations '" + file + "' must have rank 1 or 2");
    for (double v : t.values) {
      if (v != std::floor(v)) throw SemanticError("activations '" + file + "' must hold integer codes");
      a.values.push_back(static_cast<std::int64_t>(v));
    }
    out[name] = std::move(a);
  }
  return out;
}

struct Options {
  std::string workload, hardware, mapping, sparsity, weights, activations, out, format = "report";
  std::string criterion = "l1";
  std::string result_json, plan;
  std::vector<std::string> results;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

struct Loaded {
  std::optional<WorkloadGraph> graph;
  std::optional<HardwareSpec> hardware;
  MappingSpec mapping;
  SparsityTemplate sparsity;
};

inline Loaded load_configs(const Options& o, bool need_workload, bool need_hardware) {
  Loaded l;
  if (need_workload && o.workload.empty()) throw SchemaError("--workload is required");
  if (need_hardware && o.hardware.empty()) throw SchemaError("--hardware is required");
  if (!o.workload.empty()) l.graph.emplace(parse_workload(read_file(o.workload)));
  if (!o.hardware.empty()) l.hardware = parse_hardware(read_file(o.hardware));
  if (!o.mapping.empty()) l.mapping = parse_mapping(read_file(o.mapping));
  if (!o.sparsity.empty()) l.sparsity = parse_sparsity(read_file(o.sparsity));
  return l;
}

inline SimulationInputs make_inputs(const Options& o, const Loaded& l) {
  SimulationInputs in;
  in.graph = &*l.graph;
  in.hardware = *l.hardware;
  in.mapping = l.mapping;
  in.sparsity = l.sparsity;
  in.seed = o.seed;
  in.criterion = parse_criterion(o.criterion);
  if (!o.weights.empty()) in.weights = load_weights(o.weights, *l.graph);
  if (!o.activations.empty()) in.activations = load_activations(o.activations, *l.graph);
  return in;
}

inline void emit(const Options& o, std::ostream& out, const std::string& text) {
  if (o.out.empty()) {
    out << text;
    return;
  }
  std::ofstream os(o.out, std::ios::binary);
  if (!os) throw SchemaError("cannot open '" + o.out + "' for writing");
  os << text;
}

// --- subcommands -----------------------------------------------------------

inline int cmd_validate(const Options& o, std::ostream& out) {
  const Loaded l = load_configs(o, false, false);
  ValidationReport rep;
  if (l.hardware) rep.merge(validate_hardware(*l.hardware));
  if (l.hardware && !o.mapping.empty()) rep.merge(validate_mapping(l.mapping, *l.hardware));
  if (l.graph && !l.sparsity.dense()) {
    const HwAlignment align = l.hardware ? l.hardware->alignment() : HwAlignment{};
    for (std::size_t i : l.graph->topo_order()) {
      const auto& node = l.graph->nodes()[i];
      if (!is_mvm(node.kind) || !l.sparsity.applies_to(node.kind)) continue;
      const Dims2 d = reshaped_dims(node, l.mapping.flatten_for(node.kind));
      auto r = validate_spec(resolve(l.sparsity, d, node.extent_or("C_in", d.rows)), d, align);
      for (auto& diag : r.diagnostics) {
        diag.field = node.id + "." + diag.field;
        if (l.sparsity.on_incompatible == IncompatiblePolicy::dense) diag.severity = Severity::warning;
      }
      rep.merge(r);
    }
  }
  std::string text;
  if (o.format == "csv") {
    text = "severity,module,field,message\n";
    for (const auto& d : rep.diagnostics)
      text += std::string(d.severity == Severity::error ? "error" : "warning") + "," + csv_escape(d.module) + "," +
              csv_escape(d.field) + "," + csv_escape(d.message) + "\n";
  } else {
    text = rep.str();
    text += rep.ok() ? "valid\n" : "invalid: " + std::to_string(rep.error_count()) + " error(s)\n";
  }
  emit(o, out, text);
  return rep.ok() ? kOk : kSemantic;
}

inline int cmd_prune(const Options& o, std::ostream& out) {
  const Loaded l = load_configs(o, true, false);
  if (o.sparsity.empty()) throw SchemaError("--sparsity is required");
  const auto crit = parse_criterion(o.criterion);
  std::map<std::string, WeightTensor> weights;
  if (!o.weights.empty()) weights = load_weights(o.weights, *l.graph);
  if (!o.out.empty()) std::filesystem::create_directories(o.out);
  const HwAlignment align = l.hardware ? l.hardware->alignment() : HwAlignment{};
  std::ostringstream rep;
  if (o.format == "csv") rep << "node,rows,cols,source,requested_patterns,realized_sparsity,nnz,index_bits,mask_file\n";
  std::uint64_t cells = 0, nnz = 0;
  for (std::size_t i : l.graph->topo_order()) {
    const auto& node = l.graph->nodes()[i];
    if (!is_mvm(node.kind) || !l.sparsity.applies_to(node.kind)) continue;
    const auto order = l.mapping.flatten_for(node.kind);
    const Dims2 d = reshaped_dims(node, order);
    const FlexBlockSpec spec = resolve(l.sparsity, d, node.extent_or("C_in", d.rows));
    const auto v = validate_spec(spec, d, align);
    if (!v.ok()) {
      if (l.sparsity.on_incompatible == IncompatiblePolicy::dense) continue;
      throw SemanticError(v.str());
    }
    SparseMask mask;
    std::string source = "random";
    const WeightTensor* wt = nullptr;
    if (node.weight_ref && weights.count(*node.weight_ref)) wt = &weights.at(*node.weight_ref);
    else if (weights.count(node.id)) wt = &weights.at(node.id);
    if (wt) {
      mask = prune_flexblock(reshape_weights(node, *wt, order), spec, crit, node.id);
      source = "weights";
    } else {
      mask = random_mask(spec, d, derive_seed(o.seed, hash_string(node.id)), node.id);
    }
    if (!verify_mask(mask, spec)) throw SemanticError("mask for '" + node.id + "' failed verification");
    const auto w = default_index_widths(spec, d);
    const auto idx = index_storage(mask, spec, w.block_bits, w.elem_bits);
    std::string file;
    if (!o.out.empty()) {
      Tensor t{DType::u8, {d.rows, d.cols}, std::vector<double>(mask.bits.begin(), mask.bits.end())};
      file = (std::filesystem::path(o.out) / (node.id + ".mask.cimt")).string();
      save_tensor(file, t);
    }
    cells += static_cast<std::uint64_t>(d.rows) * d.cols;
    nnz += mask.nnz();
    if (o.format == "csv")
      rep << csv_escape(node.id) << "," << d.rows << "," << d.cols << "," << source << "," << spec.patterns.size()
          << "," << fmt_double(mask.sparsity(), 8) << "," << mask.nnz() << "," << idx << "," << csv_escape(file)
          << "\n";
    else
      rep << node.id << " " << d.rows << "x" << d.cols << " (" << source << ") sparsity "
          << fmt_double(mask.sparsity(), 6) << " nnz " << mask.nnz() << " index bits " << idx << "\n";
  }
  if (o.format != "csv")
    rep << "overall realized sparsity "
        << fmt_double(cells ? 1.0 - static_cast<double>(nnz) / static_cast<double>(cells) : 0.0, 6) << " (seed "
        << o.seed << ")\n";
  if (o.out.empty()) out << rep.str();
  else {
    std::ofstream os((std::filesystem::path(o.out) / (o.format == "csv" ? "summary.csv" : "summary.txt")).string());
    os << rep.str();
    out << rep.str();
  }
  return kOk;
}

inline int cmd_profile(const Options& o, std::ostream& out) {
  const Loaded l = load_configs(o, true, true);
  ActivationSet acts;
  if (!o.activations.empty()) acts = load_activations(o.activations, *l.graph);
  const HardwareSpec& hw = *l.hardware;
  const Dims2 t = l.mapping.tile_for(hw);
  std::ostringstream rep;
  rep << (o.format == "csv" ? "node,source,group_inputs,skip_ratio\n" : "");
  for (std::size_t i : l.graph->topo_order()) {
    const auto& node = l.graph->nodes()[i];
    if (!is_mvm(node.kind)) continue;
    const Dims2 d = reshaped_dims(node, l.mapping.flatten_for(node.kind));
    std::size_t ipr = 1;
    if (!l.sparsity.dense() && l.sparsity.applies_to(node.kind))
      if (const auto* ip = resolve(l.sparsity, d, node.extent_or("C_in", d.rows)).intra()) ipr = ip->m;
    const std::size_t length = node.kind == OpKind::depthwise_conv ? d.rows * d.cols : d.rows;
    ProfileOptions po{hw.feature_bits, false, t.rows, ipr, 0};
    double skip = 0.0;
    std::string source = "disabled";
    if (hw.input_sparsity_enabled) {
      if (auto it = acts.find(node.id); it != acts.end()) {
        if (it->second.length != length)
          throw SemanticError("activations for '" + node.id + "' have length " + std::to_string(it->second.length) +
                              ", expected " + std::to_string(length));
        skip = skippable_ratio(it->second, po);
        source = "activations";
      } else {
        const auto a = synth_activations(std::min<std::uint64_t>(feature_vectors(node), 64), length, hw.feature_bits,
                                         0.5, derive_seed(o.seed ^ 0x5eedULL, hash_string(node.id)));
        skip = skippable_ratio(a, po);
        source = "synthetic";
      }
    }
    if (o.format == "csv")
      rep << csv_escape(node.id) << "," << source << "," << t.rows * ipr << "," << fmt_double(skip, 8) << "\n";
    else
      rep << node.id << " skip " << fmt_double(skip, 6) << " (" << source << ", " << t.rows * ipr
          << " inputs per broadcast group)\n";
  }
  emit(o, out, rep.str());
  return kOk;
}

inline int cmd_simulate(const Options& o, std::ostream& out) {
  const Loaded l = load_configs(o, true, true);
  const auto r = simulate(make_inputs(o, l));
  emit(o, out,
       o.format == "csv" ? simulation_csv_header() + "\n" + simulation_csv_row(r) + "\n"
                         : format_report(r) + "seed          " + std::to_string(o.seed) + "\n");
  if (!o.result_json.empty()) {
    std::ofstream os(o.result_json);
    if (!os) throw SchemaError("cannot open '" + o.result_json + "' for writing");
    os << result_to_json(r, o.seed).dump(2) << "\n";
  }
  return kOk;
}

inline int cmd_compare(const Options& o, std::ostream& out) {
  ComparisonResult c;
  if (!o.results.empty()) {
    if (o.results.size() != 2) throw SchemaError("compare takes exactly two result files (baseline, variant)");
    const auto a = result_from_json(detail::parse_json(read_file(o.results[0]), "result"));
    const auto b = result_from_json(detail::parse_json(read_file(o.results[1]), "result"));
    c = compare_results(a, b);
  } else {
    const Loaded l = load_configs(o, true, true);
    c = compare(make_inputs(o, l));
  }
  emit(o, out, o.format == "csv" ? comparison_csv_header() + "\n" + comparison_csv_row(c) + "\n" : format_comparison(c));
  return kOk;
}

inline int cmd_sweep(const Options& o, std::ostream& out, std::ostream& err) {
  const Loaded l = load_configs(o, true, true);
  if (o.plan.empty()) throw SchemaError("--plan is required");
  const SweepPlan plan = sweep_plan_from_json(detail::parse_json(read_file(o.plan), "sweep plan"));
  err << "sweep: " << plan.size() << " grid points\n";
  const auto pts = run_sweep(make_inputs(o, l), plan, o.threads);
  emit(o, out, o.format == "csv" ? sweep_csv(pts, o.seed) : format_sweep(pts));
  for (const auto& p : pts)
    if (!p.ok) return kSemantic;
  return kOk;
}

// --- entry point -------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Sparse DNN cost modeling for SRAM compute-in-memory"};
  app.name("cimsim");
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* s) {
    s->add_option("--workload", o.workload, "workload graph (JSON)");
    s->add_option("--hardware", o.hardware, "hardware description (JSON)");
    s->add_option("--mapping", o.mapping, "mapping description (JSON)");
    s->add_option("--sparsity", o.sparsity, "sparsity description (JSON)");
    s->add_option("--weights", o.weights, "CIMT tensor or manifest of tensors");
    s->add_option("--activations", o.activations, "CIMT tensor or manifest of activation dumps");
    s->add_option("--seed", o.seed, "top-level seed");
    s->add_option("--out", o.out, "output file (prune: directory)");
    s->add_option("--format", o.format, "report or csv")->check(CLI::IsMember({"report", "csv"}));
    s->add_option("--criterion", o.criterion, "pruning criterion l1 or l2")->check(CLI::IsMember({"l1", "l2"}));
  };
  auto* validate = app.add_subcommand("validate", "check configurations");
  auto* prune = app.add_subcommand("prune", "generate masks");
  auto* profile = app.add_subcommand("profile", "per-layer input skip ratios");
  auto* simulate_cmd = app.add_subcommand("simulate", "latency and energy of one configuration");
  auto* compare_cmd = app.add_subcommand("compare", "sparse against dense, or two stored results");
  auto* sweep = app.add_subcommand("sweep", "run a grid of configurations");
  for (auto* s : {validate, prune, profile, simulate_cmd, compare_cmd, sweep}) common(s);
  simulate_cmd->add_option("--result-json", o.result_json, "also store the result for compare");
  compare_cmd->add_option("results", o.results, "baseline and variant result files");
  sweep->add_option("--plan", o.plan, "sweep plan (JSON)");
  sweep->add_option("--threads", o.threads, "worker threads (0 = all cores)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "cimsim: " << e.what() << "\n";
    return kIo;
  }
  try {
    if (*validate) return cmd_validate(o, out);
    if (*prune) return cmd_prune(o, out);
    if (*profile) return cmd_profile(o, out);
    if (*simulate_cmd) return cmd_simulate(o, out);
    if (*compare_cmd) return cmd_compare(o, out);
    if (*sweep) return cmd_sweep(o, out, err);
  } catch (const SchemaError& e) {
    err << "cimsim: " << e.what() << "\n";
    return kIo;
  } catch (const SemanticError& e) {
    err << "cimsim: " << e.what() << "\n";
    return kSemantic;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "cimsim: " << e.what() << "\n";
    return kIo;
  }
  return kIo;
}

}  // namespace cimsim::cli

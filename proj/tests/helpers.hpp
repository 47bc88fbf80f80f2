// Shared fixtures for the test binaries.
#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "cimsim/flexblock.hpp"
#include "cimsim/hardware.hpp"
#include "cimsim/mapper.hpp"
#include "cimsim/workload.hpp"

namespace testing_util {

inline std::string config_path(const std::string& rel) { return std::string(CIMSIM_CONFIG_DIR) + "/" + rel; }

inline std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline cimsim::HardwareSpec hardware(const std::string& name) {
  return cimsim::parse_hardware(slurp(config_path("hardware/" + name + ".json")));
}
inline cimsim::WorkloadGraph workload(const std::string& name) {
  return cimsim::parse_workload(slurp(config_path("workloads/" + name + ".json")));
}
inline cimsim::MappingSpec mapping(const std::string& name) {
  return cimsim::parse_mapping(slurp(config_path("mappings/" + name + ".json")));
}
inline cimsim::SparsityTemplate sparsity(const std::string& name) {
  return cimsim::parse_sparsity(slurp(config_path("sparsity/" + name + ".json")));
}

}  // namespace testing_util

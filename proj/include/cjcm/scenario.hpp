#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cjcm/protocols.hpp"

namespace cjcm::cli {

struct ScenarioInfo {
  std::string name;
  std::string doc;
};

// Fixed list, in display order.
const std::vector<ScenarioInfo>& scenarios();

// Exit-code contract of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerics = 3;

inline constexpr const char* kOutDirEnv = "CJCM_OUT_DIR";

struct ScenarioConfig {
  std::string scenario;
  SystemParams system;
  bool omega_given = false;
  std::optional<RamanParams> raman;
  int mode_cutoff = 0;    // 0 -> scenario default
  int cavity_cutoff = 4;  // full-model runs; 2 fails the doubling check when delta_d = delta_c
  double t_final = 0.0;   // 0 -> scenario default
  double dt = 0.0;        // 0 -> automatic
  std::size_t samples = 201;
  std::string model;      // empty -> scenario default
  bool decoherence = false;
  bool physical_units = false;
  std::optional<std::string> output;
  nlohmann::json protocol = nlohmann::json::object();
};

/// Strict parse: unknown keys, wrong types and out-of-range values throw
/// ValidationError naming the offending key. Frequencies are numbers
/// (rad/s or units of g) or strings "2pi*<value>".
ScenarioConfig parse_config(const nlohmann::json& j);

// Number or "2pi*<value>".
double parse_frequency(const nlohmann::json& v, const std::string& key);

struct Trace {
  std::vector<double> t;  // units of 1/g, or seconds with physical_units
  std::vector<double> values;
};

struct ScenarioResult {
  std::map<std::string, Trace> traces;
  std::optional<WignerMap> wigner;
  nlohmann::json summary = nlohmann::json::object();
  bool converged = true;
};

/// Runs a scenario at its truncation and again with every truncation
/// doubled; throws TruncationError when any trace or fidelity changes by
/// more than 1e-6.
ScenarioResult run_scenario(const ScenarioConfig& config, unsigned threads = 1);

/// One CSV per trace (header `t,<name>`), summary.json and, when present,
/// wigner.csv. Every file is written to a temporary name and renamed.
std::vector<std::filesystem::path> write_outputs(const ScenarioResult& result, const std::filesystem::path& dir);

// Feasibility numbers for a Raman parameter set.
nlohmann::json feasibility_summary(const RamanParams& raman);

/// Full `run` command: parse, run, write. Returns an exit code; messages go
/// to `log`. Validation failures write no files.
int run_command(const std::filesystem::path& config_path, const std::optional<std::filesystem::path>& out_dir,
                unsigned threads, std::ostream& log);

// Output directory: explicit flag, then config, then $CJCM_OUT_DIR, then ./cjcm_out.
std::filesystem::path resolve_output_dir(const std::optional<std::filesystem::path>& flag,
                                         const std::optional<std::string>& from_config);

}  // namespace cjcm::cli

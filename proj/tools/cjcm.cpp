#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "cjcm/scenario.hpp"

namespace {

using namespace cjcm;

double freq(const std::string& text, const char* flag) {
  nlohmann::json v;
  try {
    v = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    v = text;  // "2pi*<value>" arrives unquoted
  }
  return cli::parse_frequency(v, flag);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Control-atom / collective-mode cavity QED scenarios"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run a scenario from a JSON config");
  std::string config;
  std::string out;
  unsigned threads = 1;
  run->add_option("--config", config, "scenario config (JSON)")->required();
  run->add_option("--out", out, std::string("output directory (default: config, then $") + cli::kOutDirEnv + ")");
  run->add_option("--threads", threads, "worker threads for grid evaluations")->check(CLI::Range(1u, 256u));

  auto* list = app.add_subcommand("list", "list scenarios");

  auto* feas = app.add_subcommand("feasibility", "Raman feasibility numbers without a config");
  std::string g, alpha, big, small, gamma, kappa;
  int atoms = 0;
  feas->add_option("--g", g, "cavity coupling (rad/s or 2pi*<Hz>)")->required();
  feas->add_option("--alpha", alpha, "classical Raman coupling")->required();
  feas->add_option("--delta-big", big, "one-photon detuning Delta")->required();
  feas->add_option("--delta-small", small, "Raman detuning delta")->required();
  feas->add_option("--n-atoms", atoms, "atoms per sample")->required();
  feas->add_option("--gamma", gamma, "excited-state decay")->required();
  feas->add_option("--kappa", kappa, "cavity decay")->required();
  feas->add_option("--out", out, "also write summary.json here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kExitValidation;
  }

  if (*list) {
    for (const auto& s : cli::scenarios()) std::cout << s.name << "  " << s.doc << "\n";
    return cli::kExitOk;
  }
  if (*run) {
    std::optional<std::filesystem::path> dir;
    if (!out.empty()) dir = out;
    return cli::run_command(config, dir, threads, std::cerr);
  }

  try {
    RamanParams r;
    r.g = freq(g, "--g");
    r.alpha = freq(alpha, "--alpha");
    r.big_detuning = freq(big, "--delta-big");
    r.detuning = freq(small, "--delta-small");
    r.gamma = freq(gamma, "--gamma");
    r.kappa = freq(kappa, "--kappa");
    r.atoms = atoms;
    const nlohmann::json j = cli::feasibility_summary(r);
    if (!out.empty()) {
      cli::ScenarioResult res;
      res.summary = {{"scenario", "feasibility"}, {"feasibility", j}, {"warnings", raman_effective(r).warnings}};
      cli::write_outputs(res, out);
    }
    std::cout << j.dump(2) << "\n";
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitValidation;
  }
  return cli::kExitOk;
}

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "cjcm/scenario.hpp"

using namespace cjcm;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("cjcm_test_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir.parent_path());
  return dir;
}

fs::path write_config(const fs::path& dir, const json& j) {
  fs::create_directories(dir);
  const fs::path p = dir / "config.json";
  std::ofstream(p) << j.dump();
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct Csv {
  std::string header;
  std::vector<std::pair<double, double>> rows;
};

Csv read_csv(const fs::path& p) {
  std::ifstream f(p);
  Csv c;
  std::getline(f, c.header);
  std::string line;
  while (std::getline(f, line)) {
    const auto comma = line.find(',');
    c.rows.emplace_back(std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1)));
  }
  return c;
}

int run(const fs::path& config, const fs::path& out) {
  std::ostringstream log;
  return cli::run_command(config, out, 1, log);
}

std::string shell(const std::string& cmd, int* status) {
  std::string out;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[512];
  while (std::fgets(buf, sizeof buf, pipe)) out += buf;
  const int raw = ::pclose(pipe);
  *status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return out;
}

}  // namespace

TEST_CASE("list prints the fixed scenario table") {
  int status = 0;
  const std::string out = shell(std::string(CJCM_CLI_PATH) + " list", &status);
  CHECK(status == 0);
  const std::string expected =
      "jcm-rabi  vacuum/Fock Rabi oscillation of the control atom under the resonant bosonized model\n"
      "fock-ladder  Fock state |n> of the collective mode by repeated exchange and control re-excitation\n"
      "cat-resonant  resonant cat from |g>|alpha>, scored against the two-branch reference; collapse and revival\n"
      "cat-dispersive  dispersive cat from (|e>+|g>)|alpha>/sqrt2 with its exact Wigner function\n"
      "two-sample  maximally entangled state of two samples sharing one excitation\n"
      "w-state  W state of n samples\n"
      "wigner  displaced-parity Wigner measurement against the closed-form oracle\n"
      "full-vs-effective  time-dependent full model against the vacuum effective Hamiltonian\n"
      "decoherence  Lindblad Fock-state preparation at Raman-derived rates against the (G'+k')t budget\n"
      "feasibility  Raman-scheme epsilon, G', k', t1 and decoherence budget\n";
  CHECK(out == expected);
  CHECK(shell(std::string(CJCM_CLI_PATH) + " list", &status) == out);
}

TEST_CASE("frequency parsing") {
  CHECK(cli::parse_frequency(json(3.5), "k") == 3.5);
  CHECK(cli::parse_frequency(json("2pi*34e6"), "k") == doctest::Approx(2.0 * kPi * 34e6).epsilon(1e-15));
  CHECK_THROWS_AS(cli::parse_frequency(json("34e6"), "k"), ValidationError);
  CHECK_THROWS_AS(cli::parse_frequency(json("2pi*abc"), "k"), ValidationError);
  CHECK_THROWS_AS(cli::parse_frequency(json(true), "k"), ValidationError);
}

TEST_CASE("strict config parsing names the offending key") {
  auto message = [](const json& j) {
    try {
      cli::parse_config(j);
    } catch (const ValidationError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message({{"scenario", "jcm-rabi"}, {"bogus", 1}}).find("bogus") != std::string::npos);
  CHECK(message({{"scenario", "jcm-rabi"}, {"system", {{"atoms", -5}}}}).find("system.atoms") != std::string::npos);
  CHECK(message({{"scenario", "nope"}}).find("scenario") != std::string::npos);
  CHECK(message({{"scenario", "jcm-rabi"}, {"model", "full"}}).find("model") != std::string::npos);
  CHECK(message({{"scenario", "w-state"}, {"protocol", {{"alpha", 2}}}}).find("protocol.alpha") != std::string::npos);

  const cli::ScenarioConfig c = cli::parse_config({{"scenario", "jcm-rabi"}, {"system", {{"g", "2pi*1"}}}});
  CHECK(c.system.g == doctest::Approx(2.0 * kPi));
  CHECK(c.system.delta_c == doctest::Approx(200.0 * kPi));
  CHECK(c.system.atoms == 50);
}

TEST_CASE("validation failure exits 2 and writes nothing") {
  const fs::path dir = scratch("invalid");
  const fs::path cfg = write_config(dir, {{"scenario", "jcm-rabi"}, {"system", {{"atoms", -3}}}});
  const fs::path out = dir / "out";
  CHECK(run(cfg, out) == cli::kExitValidation);
  CHECK_FALSE(fs::exists(out));

  int status = 0;
  shell(std::string(CJCM_CLI_PATH) + " run --config " + cfg.string() + " --out " + out.string() + " 2>/dev/null", &status);
  CHECK(status == 2);
  CHECK_FALSE(fs::exists(out));
  shell(std::string(CJCM_CLI_PATH) + " run 2>/dev/null", &status);
  CHECK(status == 2);
}

TEST_CASE("vacuum Rabi trace") {
  const fs::path dir = scratch("rabi");
  const fs::path out = dir / "out";
  CHECK(run(write_config(dir, {{"scenario", "jcm-rabi"}, {"protocol", {{"n", 0}}}}), out) == cli::kExitOk);
  const json summary = json::parse(slurp(out / "summary.json"));
  const double eps = summary["derived"]["epsilon"].get<double>();
  const Csv pe = read_csv(out / "P_e.csv");
  CHECK(pe.header == "t,P_e");
  REQUIRE(pe.rows.size() > 10);
  double worst = 0.0;
  for (const auto& [t, v] : pe.rows) worst = std::max(worst, std::abs(v - std::pow(std::cos(eps * t), 2)));
  CHECK(worst < 1e-8);

  // Resolved parameters include the defaults that were applied.
  const json& res = summary["resolved"];
  CHECK(res["system"]["atoms"] == 50);
  CHECK(res["system"]["delta_c"].get<double>() == 100.0);
  CHECK(res["protocol"]["n"] == 0);
  CHECK(summary["truncation_check"].is_object());
}

TEST_CASE("identical configs give identical bytes") {
  const fs::path dir = scratch("repeat");
  const json cfg = {{"scenario", "w-state"}};
  const fs::path c = write_config(dir, cfg);
  REQUIRE(run(c, dir / "a") == cli::kExitOk);
  REQUIRE(run(c, dir / "b") == cli::kExitOk);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    ++files;
    CHECK(slurp(e.path()) == slurp(dir / "b" / e.path().filename()));
  }
  CHECK(files >= 5);
  for (const auto& e : fs::directory_iterator(dir / "a")) CHECK(e.path().string().find(".tmp") == std::string::npos);
}

TEST_CASE("feasibility numbers") {
  const fs::path dir = scratch("feas");
  REQUIRE(run(write_config(dir, {{"scenario", "feasibility"}}), dir / "out") == cli::kExitOk);
  const json f = json::parse(slurp(dir / "out" / "summary.json"))["feasibility"];
  const double two_pi = 2.0 * kPi;
  CHECK(std::abs(f["epsilon_hz"].get<double>() / (two_pi * 3.1e4) - 1.0) < 0.02);
  CHECK(std::abs(f["gamma_eff_hz"].get<double>() / (two_pi * 260.0) - 1.0) < 0.005);
  CHECK(std::abs(f["kappa_eff_hz"].get<double>() / (two_pi * 3.7) - 1.0) < 0.03);
  CHECK(std::abs(f["t1_us"].get<double>() / 8.1 - 1.0) < 0.02);
  CHECK(std::abs(f["budget"].get<double>() / 1.3e-2 - 1.0) < 0.10);

  int status = 0;
  const std::string text = shell(std::string(CJCM_CLI_PATH) +
                                     " feasibility --g 2pi*34e6 --alpha 2pi*34e6 --delta-big 2pi*3.4e9"
                                     " --delta-small 2pi*3.4e8 --n-atoms 10000 --gamma 2pi*2.6e6 --kappa 2pi*4.1e6",
                                 &status);
  CHECK(status == 0);
  const json g = json::parse(text);
  CHECK(g["t1_us"].get<double>() == doctest::Approx(f["t1_us"].get<double>()).epsilon(1e-12));
}

TEST_CASE("inadequate truncation exits 3") {
  const fs::path dir = scratch("trunc");
  const json cfg = {{"scenario", "full-vs-effective"}, {"truncation", {{"cavity", 1}}}};
  CHECK(run(write_config(dir, cfg), dir / "out") == cli::kExitNumerics);
}

TEST_CASE("output directory resolution") {
  ::setenv(cli::kOutDirEnv, "/tmp/from_env", 1);
  CHECK(cli::resolve_output_dir(fs::path("/x"), std::string("/y")) == fs::path("/x"));
  CHECK(cli::resolve_output_dir(std::nullopt, std::string("/y")) == fs::path("/y"));
  CHECK(cli::resolve_output_dir(std::nullopt, std::nullopt) == fs::path("/tmp/from_env"));
  ::unsetenv(cli::kOutDirEnv);
  CHECK(cli::resolve_output_dir(std::nullopt, std::nullopt) == fs::path("cjcm_out"));
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "retarda/cli_runner.hpp"
#include "retarda/errors.hpp"
#include "retarda/fundamental_matrix.hpp"

using namespace retarda;

namespace {

std::string scratch(const std::string& name) {
  std::filesystem::create_directories("cli_scratch");
  return "cli_scratch/" + name;
}

void put(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<double>> csv_rows(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::vector<double> row;
    const char* p = line.c_str();
    while (true) {
      char* end = nullptr;
      row.push_back(std::strtod(p, &end));
      REQUIRE(end != p);
      p = end;
      if (*p != ',') break;
      ++p;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string csv_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::string line;
  std::getline(in, line);
  return line;
}

int run(const std::string& config, bool check = false) {
  std::ostringstream log;
  return run_scenario(config, ".", check, log);
}

template <class Fn>
std::string validation_message(Fn&& fn) {
  try {
    fn();
  } catch (const validation_error& e) {
    return e.what();
  }
  return "(no validation error)";
}

int exit_code(const std::string& cmd) {
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("solve of a memoryless kernel reproduces the constant history") {
  const std::string cfg = scratch("const.json");
  const std::string trace = scratch("const_trace.csv");
  put(cfg, R"({
    "grid": {"r": 1.0, "h": 0.25, "T": 1.0},
    "task": "solve",
    "history": {"constant": [0.4, -0.2]},
    "output": {"trace": ")" + trace + R"("}
  })");
  CHECK(run(cfg, true) == 0);

  CHECK(csv_header(trace) == "t,x_1,x_2");
  const auto rows = csv_rows(trace);
  REQUIRE(rows.size() == 5);
  for (size_t m = 0; m < rows.size(); ++m) {
    REQUIRE(rows[m].size() == 3);
    CHECK(rows[m][0] == 0.25 * static_cast<double>(m));
    CHECK(rows[m][1] == 0.4);
    CHECK(rows[m][2] == -0.2);
  }

  // Trace re-ingested as a history reproduces the same bytes.
  const std::string cfg2 = scratch("const_again.json");
  const std::string trace2 = scratch("const_trace2.csv");
  put(cfg2, R"({
    "grid": {"r": 1.0, "h": 0.25, "T": 1.0},
    "task": "solve",
    "history": {"csv": ")" + trace + R"("},
    "output": {"trace": ")" + trace2 + R"("}
  })");
  CHECK(run(cfg2) == 0);
  CHECK(slurp(trace2) == slurp(trace));
}

TEST_CASE("validation failures name the offending key") {
  auto cfg_with = [](const std::string& name, const std::string& body) {
    const std::string path = scratch(name);
    put(path, body);
    return path;
  };

  CHECK(validation_message([] { run("cli_scratch/absent.json"); }).find("config") !=
        std::string::npos);

  const std::string bad_json = cfg_with("bad.json", "{ nope");
  CHECK(validation_message([&] { run(bad_json); }).find("config") != std::string::npos);

  const std::string off_grid = cfg_with("offgrid.json", R"({
    "grid": {"r": 1.0, "h": 0.25, "T": 1.0},
    "task": "solve",
    "history": {"constant": [1.0]},
    "kernel": {"jumps": [{"theta": -0.3, "matrix": [[-1.0]]}]}
  })");
  CHECK(validation_message([&] { run(off_grid); }).find("jumps[0].theta") != std::string::npos);

  const std::string no_grid = cfg_with("nogrid.json", R"({"task": "solve"})");
  CHECK(validation_message([&] { run(no_grid); }).find("grid") != std::string::npos);

  const std::string bad_task = cfg_with("badtask.json", R"({
    "grid": {"r": 1.0, "h": 0.25, "T": 1.0},
    "task": "integrate"
  })");
  CHECK(validation_message([&] { run(bad_task); }).find("task") != std::string::npos);

  const std::string bad_G = cfg_with("badG.json", R"({
    "grid": {"r": 1.0, "h": 0.5, "T": 1.0},
    "task": "solve",
    "history": {"constant": [1.0]},
    "forcing": {"G": {"samples": [[0.5], [0.6], [0.7]]}}
  })");
  CHECK(validation_message([&] { run(bad_G); }).find("forcing.G") != std::string::npos);

  const std::string bad_builtin = cfg_with("badpert.json", R"({
    "grid": {"r": 1.0, "h": 0.125, "T": 3.0},
    "task": "simulate",
    "history": {"constant": [0.1]},
    "kernel": {"jumps": [{"theta": -1.0, "matrix": [[-1.0]]}]},
    "perturbation": {"builtin": "quartic"}
  })");
  CHECK(validation_message([&] { run(bad_builtin); }).find("perturbation.builtin") !=
        std::string::npos);

  const std::string stray = cfg_with("stray.json", R"({
    "grid": {"r": 1.0, "h": 0.25, "T": 1.0},
    "task": "fundamental",
    "kernel": {"jumps": [{"theta": -1.0, "matrix": [[-1.0]]}]},
    "history": {"constant": [1.0]}
  })");
  CHECK(validation_message([&] { run(stray); }).find("history") != std::string::npos);
}

TEST_CASE("fundamental trace matches the delay series") {
  const std::string cfg = scratch("fund.json");
  const std::string trace = scratch("fund.csv");
  put(cfg, R"({
    "grid": {"r": 1.0, "h": 0.0009765625, "T": 3.0},
    "task": "fundamental",
    "kernel": {"jumps": [{"theta": -1.0, "matrix": [[-1.0]]}]},
    "output": {"trace": ")" + trace + R"("}
  })");
  CHECK(run(cfg, true) == 0);

  CHECK(csv_header(trace) == "t,X_11");
  const auto rows = csv_rows(trace);
  REQUIRE(rows.size() == 3073);
  double worst = 0.0;
  for (const auto& row : rows)
    worst = std::max(worst, std::abs(row[1] - pure_delay_series(-1.0, 1.0, row[0])));
  CHECK(worst <= 1e-4);
}

TEST_CASE("voc-check writes one residual column per applicable route") {
  const std::string cfg = scratch("voc.json");
  const std::string report = scratch("voc_resid.csv");
  put(cfg, R"({
    "grid": {"r": 1.0, "h": 0.0078125, "T": 2.0},
    "task": "voc-check",
    "kernel": {"jumps": [{"theta": -1.0, "matrix": [[-0.8]]},
                          {"theta": -0.25, "matrix": [[-0.3]]}]},
    "history": {"sinusoid": {"amplitude": [0.5], "omega": 2.0, "phase": 0.3}},
    "forcing": {"G": {"generator": "sin_cos"}},
    "output": {"report": ")" + report + R"("}
  })");
  CHECK(run(cfg, true) == 0);

  CHECK(csv_header(report) ==
        "t,residual_voc,residual_kernel_form,residual_naito,residual_dd,residual_forced");
  const auto rows = csv_rows(report);
  REQUIRE(rows.size() == 257);
  for (const auto& row : rows)
    for (size_t c = 1; c < row.size(); ++c) CHECK(row[c] <= 1e-3);
}

TEST_CASE("stability fit lands on the characteristic rate") {
  const std::string cfg = scratch("stab.json");
  const std::string fitfile = scratch("stab_fit.json");
  put(cfg, R"({
    "grid": {"r": 0.5, "h": 0.00390625, "T": 30.0},
    "task": "stability",
    "kernel": {"jumps": [{"theta": -0.5, "matrix": [[-1.0]]}]},
    "output": {"fit": ")" + fitfile + R"("}
  })");
  CHECK(run(cfg, true) == 0);

  const auto fit = nlohmann::json::parse(slurp(fitfile));
  CHECK(fit.at("stable").get<bool>());
  CHECK(fit.at("alpha").get<double>() ==
        doctest::Approx(1.5880472646893784).epsilon(0.02));
  CHECK(fit.at("M").get<double>() >= 1.0);
  CHECK(fit.at("residual").get<double>() >= 0.0);
  CHECK(fit.at("t_min").get<double>() == doctest::Approx(0.5));
}

TEST_CASE("simulate emits the trace with norm and bound columns") {
  const std::string cfg = scratch("sim.json");
  const std::string trace = scratch("sim_trace.csv");
  put(cfg, R"({
    "grid": {"r": 0.5, "h": 0.0078125, "T": 6.0},
    "task": "simulate",
    "kernel": {"jumps": [{"theta": -0.5, "matrix": [[-1.0]]}]},
    "history": {"constant": [0.01]},
    "perturbation": {"builtin": "cubic", "delta_tilde": 0.2, "working_radius": 0.2},
    "output": {"trace": ")" + trace + R"("}
  })");
  CHECK(run(cfg, true) == 0);

  CHECK(csv_header(trace) == "t,x_1,seg_norm,bound");
  const auto rows = csv_rows(trace);
  REQUIRE(rows.size() == 769);
  for (size_t m = 0; m < rows.size(); ++m) {
    REQUIRE(rows[m].size() == 4);
    CHECK(rows[m][2] >= std::abs(rows[m][1]) - 1e-15);
    CHECK(rows[m][3] > 0.0);
    if (m > 0) CHECK(rows[m][3] < rows[m - 1][3]);
  }
  CHECK(rows.back()[2] < rows.front()[2]);
}

TEST_CASE("simulate reports an early stop and fails its check") {
  const std::string cfg = scratch("escape.json");
  put(cfg, R"({
    "grid": {"r": 0.5, "h": 0.0078125, "T": 6.0},
    "task": "simulate",
    "kernel": {"jumps": [{"theta": -0.5, "matrix": [[-1.0]]}]},
    "history": {"constant": [2.0]},
    "perturbation": {"builtin": "quadratic", "working_radius": 2.5},
    "output": {"trace": ")" + scratch("escape.csv") + R"("}
  })");
  std::ostringstream log;
  CHECK(run_scenario(cfg, ".", false, log) == 0);
  CHECK(log.str().find("stopped early") != std::string::npos);
  CHECK(run(cfg, true) == 4);
}

TEST_CASE("an unavailable certificate surfaces as a solver failure") {
  const std::string cfg = scratch("nocert.json");
  put(cfg, R"({
    "grid": {"r": 0.5, "h": 0.0078125, "T": 6.0},
    "task": "simulate",
    "kernel": {"jumps": [{"theta": -0.5, "matrix": [[2.0]]}]},
    "history": {"constant": [0.01]},
    "perturbation": {"builtin": "cubic", "delta_tilde": 0.2},
    "output": {"trace": ")" + scratch("nocert.csv") + R"("}
  })");
  CHECK_THROWS_AS((void)run(cfg), solver_error);
}

TEST_CASE("selftest battery passes and tolerance corruption is visible") {
  std::ostringstream first, second, other;
  CHECK(self_test(true, 2026, first) == 0);
  CHECK(self_test(true, 2026, second) == 0);
  CHECK(first.str() == second.str());
  CHECK(first.str().find("FAIL") == std::string::npos);
  CHECK(first.str().find("selftest:") != std::string::npos);

  CHECK(self_test(true, 999, other) == 0);

  setenv("RETARDA_SELFTEST_TOL_SCALE", "1e-30", 1);
  std::ostringstream corrupted;
  CHECK(self_test(true, 2026, corrupted) != 0);
  CHECK(corrupted.str().find("FAIL") != std::string::npos);
  unsetenv("RETARDA_SELFTEST_TOL_SCALE");
}

TEST_CASE("binary exit codes") {
  REQUIRE(std::filesystem::exists("retarda"));

  CHECK(exit_code("./retarda run cli_scratch/absent.json >/dev/null 2>&1") == 2);

  put(scratch("broken.json"), "{ nope");
  CHECK(exit_code("./retarda run cli_scratch/broken.json >/dev/null 2>&1") == 2);

  put(scratch("ok.json"), R"({
    "grid": {"r": 1.0, "h": 0.25, "T": 1.0},
    "task": "solve",
    "history": {"constant": [1.0]},
    "output": {"trace": "cli_scratch/ok_trace.csv"}
  })");
  CHECK(exit_code("./retarda run cli_scratch/ok.json >/dev/null 2>&1") == 0);

  put(scratch("unstable_fit.json"), R"({
    "grid": {"r": 0.5, "h": 0.015625, "T": 10.0},
    "task": "stability",
    "kernel": {"jumps": [{"theta": -0.5, "matrix": [[2.0]]}]},
    "output": {"fit": "cli_scratch/unstable_fit_out.json"}
  })");
  CHECK(exit_code("./retarda run cli_scratch/unstable_fit.json >/dev/null 2>&1") == 0);
  CHECK(exit_code("./retarda run cli_scratch/unstable_fit.json --assert >/dev/null 2>&1") == 4);

  CHECK(exit_code("./retarda >/dev/null 2>&1") != 0);
  CHECK(exit_code("./retarda selftest --quick >/dev/null 2>&1") == 0);
}

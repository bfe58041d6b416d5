#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "retarda/cli_runner.hpp"
#include "retarda/errors.hpp"

int main(int argc, char** argv) {
  CLI::App app{"delay equation toolkit: scenario runner and self test"};
  app.require_subcommand(1);

  std::string config;
  std::string out_dir = ".";
  bool check = false;
  CLI::App* run = app.add_subcommand("run", "execute a scenario config and write its outputs");
  run->add_option("config", config, "scenario JSON file")->required();
  run->add_flag("--assert", check, "run the task's built-in check; exit 4 when it fails");
  run->add_option("--out", out_dir, "directory for relative output paths");

  bool quick = false;
  CLI::App* st = app.add_subcommand("selftest", "run the identity battery on built-in fixtures");
  st->add_flag("--quick", quick, "coarse grids, finishes in a few seconds");

  CLI11_PARSE(app, argc, argv);

  unsigned long long seed = 2026;
  if (const char* s = std::getenv("RETARDA_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s, &end, 10);
    if (end != s) seed = v;
  }

  try {
    if (run->parsed()) return retarda::run_scenario(config, out_dir, check, std::cout);
    return retarda::self_test(quick, seed, std::cout);
  } catch (const retarda::solver_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const retarda::validation_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

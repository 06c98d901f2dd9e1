#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <omp.h>

#include "CLI11.hpp"

#include "hetero/cli/experiments.hpp"

namespace {

// HETERO_OPT_THREADS caps the OpenMP team size. Results do not depend on it.
bool apply_thread_cap() {
  const char* env = std::getenv("HETERO_OPT_THREADS");
  if (!env || !*env) return true;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) {
    std::cerr << "hetero-opt: HETERO_OPT_THREADS must be a positive integer, got '" << env << "'\n";
    return false;
  }
  omp_set_num_threads(static_cast<int>(n));
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Block-heterogeneity optimization experiments"};
  app.name("hetero-opt");
  app.require_subcommand(1);

  hetero::cli::RunCommand run;
  std::string out;
  auto* run_cmd = app.add_subcommand("run", "Run the experiment described by a JSON config");
  run_cmd->add_option("config", run.config, "Config file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--out", out, "Run directory (overrides output_dir)");
  run_cmd->add_flag("--force", run.force, "Replace an existing run directory");
  run_cmd->add_flag("-v,--verbose", run.verbose, "Progress on stderr");

  std::vector<std::string> dirs;
  std::string cmp_out = "comparison.csv";
  bool cmp_force = false;
  auto* cmp_cmd = app.add_subcommand("compare", "Overlay the gradient norms of several runs");
  cmp_cmd->add_option("dirs", dirs, "Run directories")->required()->check(CLI::ExistingDirectory);
  cmp_cmd->add_option("--out", cmp_out, "Output CSV (default comparison.csv)");
  cmp_cmd->add_flag("--force", cmp_force, "Overwrite the output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : hetero::cli::kExitConfig;
  }
  if (!apply_thread_cap()) return hetero::cli::kExitConfig;

  if (*run_cmd) {
    if (!out.empty()) run.out = out;
    return hetero::cli::run_command(run);
  }
  std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
  return hetero::cli::compare_command(paths, cmp_out, cmp_force);
}

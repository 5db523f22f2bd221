// tcr: command-line front end for dataset generation, training,
// reconstruction, tracking, evaluation and diagnostics.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tcr/cli.hpp"

namespace {

const char* describe(const std::string& c) {
  if (c == "gen") return "Generate a synthetic vortex dataset";
  if (c == "pretrain") return "Stage-1 training on clean conditions";
  if (c == "sft") return "Stage-2 fine-tuning on forecast conditions (or e2e from scratch)";
  if (c == "reconstruct") return "Sample reconstructions from a checkpoint";
  if (c == "track") return "Track the MSL minimum through a frame sequence";
  if (c == "evaluate") return "Verify reconstructions against truth";
  if (c == "diagnose") return "Structural diagnostics of one stack";
  if (c == "pipeline") return "Generate, train four variants, reconstruct and evaluate";
  return "Finite-difference check of the network gradient";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tropical-cyclone field reconstruction with conditional rectified flow"};
  app.require_subcommand(1);
  tcr::cli::Invocation inv;
  std::string config_path, run_dir;
  std::vector<std::string> sets;
  std::string seed, threads;
  bool print_config = false;

  for (const auto& name : tcr::cli::commands()) {
    CLI::App* sub = app.add_subcommand(name, describe(name));
    sub->add_option("-c,--config", config_path, "JSON config file");
    sub->add_option("--run-dir", run_dir,
                    std::string("Run directory (default: $") + tcr::cli::kRunRootEnv + " or ./runs)");
    sub->add_option("--set", sets, "Override as /json/pointer=value (repeatable, wins over the file)");
    sub->add_option("--seed", seed, "Shorthand for --set /seed=N");
    sub->add_option("--threads", threads, "Shorthand for --set /threads=N");
    sub->add_flag("--print-config", print_config, "Print the resolved config and exit");
    if (name == "pipeline") {
      sub->add_flag("--dry-run", inv.dry_run, "Print the stage plan without writing anything");
      sub->add_flag("--force", inv.force, "Rerun stages even when their artifacts are complete");
    }
    sub->callback([&inv, name] { inv.command = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : tcr::cli::kExitConfig;
  }

  if (!seed.empty()) sets.push_back("/seed=" + seed);
  if (!threads.empty()) sets.push_back("/threads=" + threads);
  inv.config_path = config_path;
  inv.run_dir = run_dir;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      std::cerr << "config error: --set expects /pointer=value, got '" << s << "'\n";
      return tcr::cli::kExitConfig;
    }
    inv.overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  if (print_config) {
    try {
      nlohmann::json user = config_path.empty() ? nlohmann::json::object() : tcr::config::read_json_file(config_path);
      for (const auto& [p, v] : inv.overrides) tcr::config::apply_override(user, p, v);
      std::cout << tcr::cli::resolve_config(inv.command, user).dump(2) << "\n";
      return tcr::cli::kExitOk;
    } catch (const std::exception& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return tcr::cli::kExitConfig;
    }
  }
  return tcr::cli::run(inv, std::cout, std::cerr);
}

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tcr/config.hpp"
#include "tcr/flow.hpp"
#include "tcr/net.hpp"

namespace tcr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

// Environment variable naming the default run root ("runs" when unset).
inline constexpr const char* kRunRootEnv = "TCR_RUN_ROOT";

const std::vector<std::string>& commands();

// Schema of a command's config document. The pipeline schema depends on the
// profile ("tiny" or "desk").
config::Schema command_schema(const std::string& command, const std::string& profile = "tiny");

// Schema-checks `user` (after flag overrides) and fills defaults.
nlohmann::json resolve_config(const std::string& command, const nlohmann::json& user);

// Reads `path` (empty: an empty document) and resolves it.
nlohmann::json parse_config(const std::string& command, const std::filesystem::path& path);

std::filesystem::path default_run_root();

struct Invocation {
  std::string command;
  std::filesystem::path config_path;                          // optional
  std::vector<std::pair<std::string, std::string>> overrides;  // JSON pointer -> value
  std::filesystem::path run_dir;                              // empty: default_run_root()
  bool dry_run = false;                                       // pipeline only
  bool force = false;                                         // pipeline: ignore completed stages
};

// Runs a command and maps failures onto the exit-code contract. Progress goes
// to `log`, results to `out`.
int run(const Invocation& inv, std::ostream& out, std::ostream& log);

// Command bodies on resolved configs. They throw tcr errors; run() maps them.
void cmd_gen(const nlohmann::json& cfg, const std::filesystem::path& root, std::ostream& log);
void cmd_train(const std::string& command, const nlohmann::json& cfg, const std::filesystem::path& root,
               std::ostream& log);
// `model` replaces the checkpoint's network when non-null (the checkpoint
// still supplies the normalizer and grid).
void cmd_reconstruct(const nlohmann::json& cfg, const std::filesystem::path& root, std::ostream& log,
                     const flow::VelocityModel* model = nullptr);
void cmd_track(const nlohmann::json& cfg, const std::filesystem::path& root, std::ostream& log);
void cmd_evaluate(const nlohmann::json& cfg, const std::filesystem::path& root, std::ostream& log);
void cmd_diagnose(const nlohmann::json& cfg, const std::filesystem::path& root, std::ostream& log);
// Returns true when every seed passes.
bool cmd_gradcheck(const nlohmann::json& cfg, const std::filesystem::path& root, std::ostream& out);

struct PipelineOptions {
  bool dry_run = false;
  bool force = false;
};

// Stage names in execution order with the action taken ("run" or "skip").
std::vector<std::pair<std::string, std::string>> cmd_pipeline(const nlohmann::json& cfg,
                                                              const std::filesystem::path& root,
                                                              const PipelineOptions& opts, std::ostream& out,
                                                              std::ostream& log);

struct GradcheckSettings {
  double fraction = 0.01;
  std::size_t min_entries = 200;
  double eps = 1e-5;
  int batch = 2;
  double lambda = 0.5;
  std::vector<double> sigma2{0.5, 2.0};
};

// Max relative error of the analytic gradient for one seed: randomized
// float64 parameters, random inputs, regression plus fixed-bandwidth MMD.
double gradcheck_seed(const net::NetConfig& cfg, std::uint64_t seed, const GradcheckSettings& s);

// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
std::string file_fingerprint(const std::filesystem::path& path);

}  // namespace tcr::cli

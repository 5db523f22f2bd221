#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tcr/flow.hpp"
#include "tcr/mmd.hpp"
#include "tcr/net.hpp"
#include "tcr/synth.hpp"

namespace tcr::train {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // <= 0 disables clipping
  int warmup_steps = 500;  // linear ramp of lr over the first steps
};

struct OptimState {
  net::ParamMap<float> m;
  net::ParamMap<float> v;
  std::int64_t step = 0;
  std::int64_t skipped = 0;
};

OptimState make_optim_state(const net::ParamMap<float>& params);

// Global-norm clipping then bias-corrected Adam. Returns false (and counts a
// skip) when any gradient is non-finite; params are then left untouched.
bool adam_step(net::ParamMap<float>& params, const net::ParamMap<float>& grads, OptimState& state,
               const AdamConfig& cfg);

// Lead 0 -> bucket 0; otherwise (lead - 1) / width + 1, so 1..24 h -> 1.
int lead_bucket(int lead_hours, int width_hours = 24);

enum class Stage { Pretrain, Sft, E2E };
Stage stage_from_string(const std::string& s);
std::string to_string(Stage s);

struct TrainConfig {
  Stage stage = Stage::Pretrain;
  int steps = 2000;
  int batch = 8;  // pretrain items, or SFT pairs (2x rows)
  AdamConfig adam;
  double lambda = 0.1;
  std::vector<double> bandwidth_multipliers{0.5, 1.0, 2.0};
  int bucket_hours = 24;
  std::vector<int> leads;  // SFT forecast leads; empty = dataset leads
  int train_count = -1;    // samples [0, train_count) are used; -1 = all
  std::uint64_t seed = 0;
  int threads = 1;
  int log_every = 1;

  void validate() const;
};

struct LossRow {
  int step = 0;
  double total = 0.0;
  double cfm_clean = 0.0;
  double cfm_fcst = 0.0;
  double mmd = 0.0;
};

struct TraceFormat {
  bool forecast = false;
  bool mmd = false;
};

struct TrainResult {
  net::Checkpoint checkpoint;
  flow::Normalizer normalizer;
  std::vector<LossRow> trace;
  TraceFormat format;
  std::int64_t skipped_steps = 0;
};

std::string trace_csv(const std::vector<LossRow>& rows, const TraceFormat& fmt);

// Pretrain: cfm on (clean condition, K = 0). Sft: paired clean/forecast
// branches sharing x0 and t, plus lambda * mean bucket MMD on bottleneck
// features. E2E is Sft from a fresh initialization. `init` supplies the
// starting weights and normalizer (required for Sft).
TrainResult train(const TrainConfig& cfg, const net::NetConfig& net_cfg, const synth::Dataset& data,
                  const net::Checkpoint* init, const std::function<void(const LossRow&)>& on_step = {});

// Normalizer statistics travel in the checkpoint metadata.
flow::Normalizer checkpoint_normalizer(const net::Checkpoint& ck);

// Aborts when the loss exceeds 10x its initial value for 200 consecutive steps.
class DivergenceGuard {
 public:
  void observe(int step, double loss);

 private:
  double initial_ = -1.0;
  int streak_ = 0;
};

}  // namespace tcr::train

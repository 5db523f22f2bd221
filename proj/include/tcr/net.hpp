#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tcr/autodiff.hpp"
#include <nlohmann/json.hpp>

namespace tcr::net {

struct NetConfig {
  int in_channels = 42;
  int out_channels = 21;
  int base_width = 16;
  int levels = 3;
  bool attn_at_bottleneck = true;
  int embed_dim = 64;
  int grid_h = 64;
  int grid_w = 64;

  int bottleneck_width() const { return base_width << levels; }
  int width_at(int level) const { return base_width << level; }
  // Throws std::invalid_argument describing the first violated invariant.
  void validate() const;

  nlohmann::json to_json() const;
  static NetConfig from_json(const nlohmann::json& j);
};

bool operator==(const NetConfig& a, const NetConfig& b);

template <typename T>
struct ParamTensor {
  std::vector<int> dims;
  std::vector<T> values;

  std::size_t size() const { return values.size(); }
};

// Name -> tensor. Parameter maps and gradient maps share this type.
template <typename T>
using ParamMap = std::map<std::string, ParamTensor<T>>;

enum class Init { He, Zero, One, Small };

struct ParamSpec {
  std::string name;
  std::vector<int> dims;
  Init init = Init::He;
  int fan_in = 1;
};

// Ordered list of every parameter tensor for a config.
std::vector<ParamSpec> architecture_manifest(const NetConfig& cfg);

template <typename T>
ParamMap<T> init_params(const NetConfig& cfg, std::uint64_t seed);

// Replaces every tensor (including zero-initialized ones) with seeded
// Gaussian values so all gradient paths are active. Weight matrices get
// sd = scale / sqrt(fan_in); vectors get sd = 0.2 * scale (gammas centered on 1).
template <typename T>
void randomize_params(ParamMap<T>& params, std::uint64_t seed, double scale = 1.0);

template <typename T>
ParamMap<T> zeros_like(const ParamMap<T>& params);

template <typename To, typename From>
ParamMap<To> convert_params(const ParamMap<From>& params);

// Throws std::invalid_argument naming the first tensor whose name or shape
// disagrees with the manifest.
template <typename T>
void check_params(const NetConfig& cfg, const ParamMap<T>& params);

// Raw sinusoidal condition: dim/2 coordinates for t and dim/2 for K/120, each
// laid out as interleaved [sin, cos] pairs with frequencies 10000^(-2i/dim).
std::vector<double> embed_time(double t, double lead_hours, int dim);

// A batch of network inputs in NCHW layout.
template <typename T>
struct NetBatch {
  int n = 0;
  std::vector<T> x;  // n x in_channels x H x W
  std::vector<double> t;
  std::vector<double> lead_hours;
};

template <typename T>
struct ForwardResult {
  std::vector<T> v;     // n x out_channels x H x W
  std::vector<T> feat;  // n x bottleneck_width
};

struct ForwardOptions {
  bool positional = true;  // disable to test permutation equivariance of attention
};

template <typename T>
ForwardResult<T> forward(const NetConfig& cfg, const ParamMap<T>& params, const NetBatch<T>& batch,
                         const ForwardOptions& opts = {});

// Vars produced when the network is traced onto a tape.
template <typename T>
struct TracedNet {
  typename Tape<T>::Var v;
  typename Tape<T>::Var feat;
};

// Traces the network onto `tape`. Parameter gradients accumulate into
// `grads` when it is non-null (must match params).
template <typename T>
TracedNet<T> trace(Tape<T>& tape, const NetConfig& cfg, const ParamMap<T>& params, ParamMap<T>* grads,
                   const NetBatch<T>& batch, const ForwardOptions& opts = {});

// Regression targets and optional latent-alignment terms over one batch.
struct MmdGroup {
  std::vector<int> xs;  // rows of the batch (forecast branch)
  std::vector<int> ys;  // rows of the batch (reference branch)
};

struct LossSpec {
  // Each group is a [begin, end) sample range contributing one mean squared
  // error term with weight 1.
  std::vector<std::pair<int, int>> mse_groups;
  // Averaged, then weighted by lambda. Kernel variances come from the pooled
  // rows of all groups.
  std::vector<MmdGroup> mmd_groups;
  double lambda = 0.0;
  std::vector<double> bandwidth_multipliers{0.5, 1.0, 2.0};
  // Non-empty: use these kernel variances instead of the per-batch median
  // heuristic (which is held constant under differentiation).
  std::vector<double> fixed_sigma2;
};

template <typename T>
struct LossResult {
  double total = 0.0;
  long double total_extended = 0.0L;  // same loss accumulated in extended precision
  std::vector<double> mse_terms;
  double mmd = 0.0;  // unweighted mean over groups (0 when no groups)
  bool has_mmd = false;
  ParamMap<T> grads;
};

template <typename T>
LossResult<T> loss_and_grads(const NetConfig& cfg, const ParamMap<T>& params, const NetBatch<T>& batch,
                             const std::vector<T>& target, const LossSpec& spec);

// Forward-only evaluation of the same objective.
template <typename T>
long double loss_value(const NetConfig& cfg, const ParamMap<T>& params, const NetBatch<T>& batch,
                       const std::vector<T>& target, const LossSpec& spec);

// Scalar objective over a parameter map plus its analytic gradient.
template <typename T>
struct Objective {
  std::function<long double(const ParamMap<T>&)> value;
  std::function<ParamMap<T>(const ParamMap<T>&)> gradient;
};

struct GradCheckOptions {
  double eps = 1e-5;
  double fraction = 0.01;
  std::size_t min_entries = 200;
  std::uint64_t seed = 1;
};

// Max relative error |g - g_fd| / max(1e-8, |g| + |g_fd|) over a random
// subsample of parameter entries, using central differences.
double grad_check(const Objective<double>& objective, const ParamMap<double>& params,
                  const GradCheckOptions& opts = {});
double grad_check(const Objective<double>& objective, const ParamMap<double>& params,
                  const ParamMap<double>& analytic, const GradCheckOptions& opts);

// "3DTC-CKPT v1": "3DCP" | u16 version | u32 tensor count | per tensor
// (u8 len + name, u8 ndim, u32 dims..., f32 payload) | u32 len + JSON blob.
struct Checkpoint {
  NetConfig config;
  ParamMap<float> params;
  nlohmann::json meta = nlohmann::json::object();
};

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tcr::net

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tcr/grid.hpp"
#include "tcr/net.hpp"
#include <nlohmann/json.hpp>

namespace tcr::flow {

// Per-channel z-score statistics (population convention).
struct Normalizer {
  std::vector<ChannelId> channels;
  std::vector<double> mean;
  std::vector<double> stddev;

  // Throws DataError naming a zero-variance channel.
  static Normalizer fit(const std::vector<FieldStack>& truth);
  static Normalizer fit(const std::function<FieldStack(int)>& truth_at, int count);

  std::vector<float> normalize(const FieldStack& s) const;
  void normalize_into(const FieldStack& s, float* dst) const;
  // Inverse transform onto a stack shaped like `like` (geo and times copied).
  FieldStack denormalize(const float* x, const FieldStack& like) const;

  nlohmann::json to_json() const;
  static Normalizer from_json(const nlohmann::json& j);
};

struct PathPoint {
  std::vector<float> xt;
  std::vector<float> target;
};

// x_t = (1 - t) x0 + t x1, u = x1 - x0.
PathPoint interpolate_path(const std::vector<float>& x0, const std::vector<float>& x1, double t);
void interpolate_into(const float* x0, const float* x1, double t, std::size_t n, float* xt, float* target);

// v(x_t, c, t, K) over a batch. Input per item is concat(x_t, c) (2C channels),
// output per item has C channels.
class VelocityModel {
 public:
  virtual ~VelocityModel() = default;
  virtual int channels() const = 0;
  virtual std::vector<float> predict(const net::NetBatch<float>& batch) const = 0;
};

class NetVelocity : public VelocityModel {
 public:
  NetVelocity(net::NetConfig cfg, net::ParamMap<float> params);
  int channels() const override { return cfg_.out_channels; }
  std::vector<float> predict(const net::NetBatch<float>& batch) const override;
  const net::NetConfig& config() const { return cfg_; }
  const net::ParamMap<float>& params() const { return params_; }

 private:
  net::NetConfig cfg_;
  net::ParamMap<float> params_;
};

// Wraps a plain callable; useful for analytic stubs.
class FunctionVelocity : public VelocityModel {
 public:
  using Fn = std::function<std::vector<float>(const net::NetBatch<float>&)>;
  FunctionVelocity(int channels, Fn fn) : channels_(channels), fn_(std::move(fn)) {}
  int channels() const override { return channels_; }
  std::vector<float> predict(const net::NetBatch<float>& batch) const override { return fn_(batch); }

 private:
  int channels_;
  Fn fn_;
};

struct FlowSample {
  std::vector<float> x0;  // C x H x W
  std::vector<float> x1;
  std::vector<float> c;
  double t = 0.0;
  double lead_hours = 0.0;
};

// Assembles concat(x_t, c) inputs and u targets for a batch of samples.
void assemble_batch(const std::vector<FlowSample>& samples, net::NetBatch<float>& batch, std::vector<float>& target);

// Mean over batch and cells of |v - (x1 - x0)|^2.
double cfm_loss(const std::vector<FlowSample>& samples, const VelocityModel& model);

enum class Method { Euler, Heun };
Method method_from_string(const std::string& s);
std::string to_string(Method m);

// Standard normal noise from a seeded stream.
std::vector<float> gaussian_noise(std::size_t n, std::uint64_t seed);

// Integrates dx/dt = v from t = 0 to 1 in `steps` uniform steps for a batch
// of n items (x and cond are n x C x H x W). Throws NumericalError naming the
// step at which the state became non-finite.
std::vector<float> integrate(const VelocityModel& model, std::vector<float> x, const std::vector<float>& cond,
                             const std::vector<double>& lead_hours, int h, int w, int steps, Method method);

struct SamplerSettings {
  int steps = 8;
  Method method = Method::Euler;
  std::uint64_t seed = 0;
};

// Reconstructs one stack: seeded noise, ODE integration conditioned on the
// normalized condition, then denormalization. WS10M is emitted as produced.
FieldStack sample(const VelocityModel& model, const Normalizer& norm, const FieldStack& condition, int lead_hours,
                  const SamplerSettings& s);

// Batched variant; item k uses noise seed seeds[k].
std::vector<FieldStack> sample_batch(const VelocityModel& model, const Normalizer& norm,
                                     const std::vector<FieldStack>& conditions, const std::vector<int>& lead_hours,
                                     const std::vector<std::uint64_t>& seeds, int steps, Method method);

}  // namespace tcr::flow

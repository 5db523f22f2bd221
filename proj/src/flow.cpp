#include "tcr/flow.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "tcr/error.hpp"

namespace tcr::flow {

Normalizer Normalizer::fit(const std::vector<FieldStack>& truth) {
  return fit([&](int i) { return truth[static_cast<std::size_t>(i)]; }, static_cast<int>(truth.size()));
}

Normalizer Normalizer::fit(const std::function<FieldStack(int)>& truth_at, int count) {
  if (count < 2) throw DataError("normalizer: need at least two samples");
  Normalizer n;
  const FieldStack first = truth_at(0);
  n.channels = first.channels();
  const int c = first.num_channels();
  std::vector<double> sum(c, 0.0), sq(c, 0.0);
  double cells = 0.0;
  for (int i = 0; i < count; ++i) {
    const FieldStack s = i == 0 ? first : truth_at(i);
    if (s.channels() != n.channels || s.plane_size() != first.plane_size()) {
      throw DataError("normalizer: sample " + std::to_string(i) + " has a different layout");
    }
    for (int k = 0; k < c; ++k)
      for (float v : s.plane(k)) sum[k] += v;
    cells += static_cast<double>(s.plane_size());
  }
  n.mean.resize(c);
  for (int k = 0; k < c; ++k) n.mean[k] = sum[k] / cells;
  for (int i = 0; i < count; ++i) {
    const FieldStack s = truth_at(i);
    for (int k = 0; k < c; ++k)
      for (float v : s.plane(k)) sq[k] += (v - n.mean[k]) * (v - n.mean[k]);
  }
  n.stddev.resize(c);
  for (int k = 0; k < c; ++k) {
    n.stddev[k] = std::sqrt(sq[k] / cells);
    if (!(n.stddev[k] > 0.0)) {
      throw DataError("normalizer: channel " + std::string(channel_name(n.channels[k])) + " has zero variance");
    }
  }
  return n;
}

void Normalizer::normalize_into(const FieldStack& s, float* dst) const {
  if (s.channels() != channels) throw std::invalid_argument("normalize: channel layout mismatch");
  const std::size_t p = s.plane_size();
  for (std::size_t k = 0; k < channels.size(); ++k) {
    const auto pl = s.plane(static_cast<int>(k));
    for (std::size_t q = 0; q < p; ++q) dst[k * p + q] = static_cast<float>((pl[q] - mean[k]) / stddev[k]);
  }
}

std::vector<float> Normalizer::normalize(const FieldStack& s) const {
  std::vector<float> out(s.data().size());
  normalize_into(s, out.data());
  return out;
}

FieldStack Normalizer::denormalize(const float* x, const FieldStack& like) const {
  if (like.channels() != channels) throw std::invalid_argument("denormalize: channel layout mismatch");
  FieldStack out = like;
  const std::size_t p = like.plane_size();
  for (std::size_t k = 0; k < channels.size(); ++k) {
    auto pl = out.plane(static_cast<int>(k));
    for (std::size_t q = 0; q < p; ++q) pl[q] = static_cast<float>(x[k * p + q] * stddev[k] + mean[k]);
  }
  out.validate_finite();
  return out;
}

nlohmann::json Normalizer::to_json() const {
  nlohmann::json names = nlohmann::json::array();
  for (auto c : channels) names.push_back(std::string(channel_name(c)));
  return {{"channels", names}, {"mean", mean}, {"std", stddev}};
}

Normalizer Normalizer::from_json(const nlohmann::json& j) {
  Normalizer n;
  try {
    for (const auto& name : j.at("channels")) n.channels.push_back(channel_from_name(name.get<std::string>()));
    n.mean = j.at("mean").get<std::vector<double>>();
    n.stddev = j.at("std").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("normalizer: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("normalizer: ") + e.what());
  }
  if (n.mean.size() != n.channels.size() || n.stddev.size() != n.channels.size()) {
    throw DataError("normalizer: statistics length mismatch");
  }
  for (double s : n.stddev)
    if (!(s > 0.0)) throw DataError("normalizer: non-positive std");
  return n;
}

void interpolate_into(const float* x0, const float* x1, double t, std::size_t n, float* xt, float* target) {
  for (std::size_t k = 0; k < n; ++k) {
    xt[k] = static_cast<float>((1.0 - t) * x0[k] + t * x1[k]);
    target[k] = x1[k] - x0[k];
  }
}

PathPoint interpolate_path(const std::vector<float>& x0, const std::vector<float>& x1, double t) {
  if (x0.size() != x1.size()) throw std::invalid_argument("interpolate_path: shape mismatch");
  PathPoint p{std::vector<float>(x0.size()), std::vector<float>(x0.size())};
  interpolate_into(x0.data(), x1.data(), t, x0.size(), p.xt.data(), p.target.data());
  return p;
}

NetVelocity::NetVelocity(net::NetConfig cfg, net::ParamMap<float> params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
  net::check_params(cfg_, params_);
}

std::vector<float> NetVelocity::predict(const net::NetBatch<float>& batch) const {
  return net::forward(cfg_, params_, batch).v;
}

void assemble_batch(const std::vector<FlowSample>& samples, net::NetBatch<float>& batch, std::vector<float>& target) {
  if (samples.empty()) throw std::invalid_argument("cfm: empty batch");
  const std::size_t m = samples.front().x0.size();
  batch.n = static_cast<int>(samples.size());
  batch.x.assign(samples.size() * 2 * m, 0.0f);
  batch.t.clear();
  batch.lead_hours.clear();
  target.assign(samples.size() * m, 0.0f);
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const auto& s = samples[k];
    if (s.x0.size() != m || s.x1.size() != m || s.c.size() != m) throw std::invalid_argument("cfm: shape mismatch");
    if (!(s.t >= 0.0 && s.t <= 1.0)) throw std::invalid_argument("cfm: t outside [0, 1]");
    float* in = batch.x.data() + k * 2 * m;
    interpolate_into(s.x0.data(), s.x1.data(), s.t, m, in, target.data() + k * m);
    std::copy(s.c.begin(), s.c.end(), in + m);
    batch.t.push_back(s.t);
    batch.lead_hours.push_back(s.lead_hours);
  }
}

double cfm_loss(const std::vector<FlowSample>& samples, const VelocityModel& model) {
  net::NetBatch<float> batch;
  std::vector<float> target;
  assemble_batch(samples, batch, target);
  const auto v = model.predict(batch);
  if (v.size() != target.size()) throw std::invalid_argument("cfm: velocity shape mismatch");
  long double s = 0.0L;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const long double d = static_cast<long double>(v[k]) - target[k];
    s += d * d;
  }
  const double loss = static_cast<double>(s / static_cast<long double>(v.size()));
  if (!std::isfinite(loss)) throw NumericalError("cfm_loss: non-finite loss");
  return loss;
}

Method method_from_string(const std::string& s) {
  if (s == "euler") return Method::Euler;
  if (s == "heun") return Method::Heun;
  throw std::invalid_argument("unknown sampler method '" + s + "'");
}

std::string to_string(Method m) { return m == Method::Euler ? "euler" : "heun"; }

std::vector<float> gaussian_noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<float> out(n);
  for (auto& v : out) v = normal(rng);
  return out;
}

namespace {

std::vector<float> eval(const VelocityModel& model, const std::vector<float>& x, const std::vector<float>& cond,
                        const std::vector<double>& leads, double t, std::size_t m) {
  net::NetBatch<float> b;
  b.n = static_cast<int>(leads.size());
  b.x.resize(2 * x.size());
  for (int k = 0; k < b.n; ++k) {
    std::copy_n(x.data() + k * m, m, b.x.data() + k * 2 * m);
    std::copy_n(cond.data() + k * m, m, b.x.data() + k * 2 * m + m);
  }
  b.t.assign(leads.size(), t);
  b.lead_hours = leads;
  auto v = model.predict(b);
  if (v.size() != x.size()) throw std::invalid_argument("sampler: velocity shape mismatch");
  return v;
}

void check_state(const std::vector<float>& x, int step) {
  for (float v : x)
    if (!std::isfinite(v)) throw NumericalError("sampler: non-finite state at step " + std::to_string(step));
}

}  // namespace

std::vector<float> integrate(const VelocityModel& model, std::vector<float> x, const std::vector<float>& cond,
                             const std::vector<double>& lead_hours, int h, int w, int steps, Method method) {
  if (steps < 1) throw std::invalid_argument("sampler: steps must be >= 1");
  const std::size_t m = static_cast<std::size_t>(model.channels()) * h * w;
  if (lead_hours.empty() || x.size() != m * lead_hours.size() || cond.size() != x.size()) {
    throw std::invalid_argument("sampler: state/condition shape mismatch");
  }
  const double dt = 1.0 / steps;
  for (int i = 0; i < steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    const auto k1 = eval(model, x, cond, lead_hours, t, m);
    if (method == Method::Euler) {
      for (std::size_t q = 0; q < x.size(); ++q) x[q] = static_cast<float>(x[q] + dt * k1[q]);
    } else {
      std::vector<float> pred(x.size());
      for (std::size_t q = 0; q < x.size(); ++q) pred[q] = static_cast<float>(x[q] + dt * k1[q]);
      const auto k2 = eval(model, pred, cond, lead_hours, t + dt, m);
      for (std::size_t q = 0; q < x.size(); ++q) x[q] = static_cast<float>(x[q] + 0.5 * dt * (k1[q] + k2[q]));
    }
    check_state(x, i);
  }
  return x;
}

std::vector<FieldStack> sample_batch(const VelocityModel& model, const Normalizer& norm,
                                     const std::vector<FieldStack>& conditions, const std::vector<int>& lead_hours,
                                     const std::vector<std::uint64_t>& seeds, int steps, Method method) {
  if (conditions.empty()) return {};
  if (lead_hours.size() != conditions.size() || seeds.size() != conditions.size()) {
    throw std::invalid_argument("sample_batch: argument lengths differ");
  }
  const int h = conditions.front().height(), w = conditions.front().width();
  const std::size_t m = conditions.front().data().size();
  std::vector<float> x(m * conditions.size()), cond(m * conditions.size());
  std::vector<double> leads;
  for (std::size_t k = 0; k < conditions.size(); ++k) {
    if (conditions[k].height() != h || conditions[k].width() != w) {
      throw std::invalid_argument("sample_batch: mixed grid sizes");
    }
    norm.normalize_into(conditions[k], cond.data() + k * m);
    const auto noise = gaussian_noise(m, seeds[k]);
    std::copy(noise.begin(), noise.end(), x.begin() + static_cast<std::ptrdiff_t>(k * m));
    leads.push_back(lead_hours[k]);
  }
  x = integrate(model, std::move(x), cond, leads, h, w, steps, method);
  std::vector<FieldStack> out;
  for (std::size_t k = 0; k < conditions.size(); ++k) {
    FieldStack s = norm.denormalize(x.data() + k * m, conditions[k]);
    s.set_lead_hours(lead_hours[k]);
    out.push_back(std::move(s));
  }
  return out;
}

FieldStack sample(const VelocityModel& model, const Normalizer& norm, const FieldStack& condition, int lead_hours,
                  const SamplerSettings& s) {
  return sample_batch(model, norm, {condition}, {lead_hours}, {s.seed}, s.steps, s.method).front();
}

}  // namespace tcr::flow

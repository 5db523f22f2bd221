#include "tcr/train.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include "tcr/error.hpp"

namespace tcr::train {

OptimState make_optim_state(const net::ParamMap<float>& params) {
  OptimState s;
  s.m = net::zeros_like(params);
  s.v = net::zeros_like(params);
  return s;
}

bool adam_step(net::ParamMap<float>& params, const net::ParamMap<float>& grads, OptimState& state,
               const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: parameter and gradient keys differ");
  double sq = 0.0;
  for (const auto& [name, p] : params) {
    auto it = grads.find(name);
    if (it == grads.end() || it->second.size() != p.size()) {
      throw std::invalid_argument("adam_step: gradient for '" + name + "' missing or misshapen");
    }
    for (float g : it->second.values) sq += static_cast<double>(g) * g;
  }
  if (!std::isfinite(sq)) {
    ++state.skipped;
    return false;
  }
  if (state.m.empty()) state = make_optim_state(params);
  const double norm = std::sqrt(sq);
  const double scale = (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) ? cfg.clip_norm / norm : 1.0;
  ++state.step;
  const double t = static_cast<double>(state.step);
  double lr = cfg.lr;
  if (cfg.warmup_steps > 0) lr *= std::min(1.0, t / cfg.warmup_steps);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, p] : params) {
    const auto& g = grads.at(name).values;
    auto& m = state.m.at(name).values;
    auto& v = state.v.at(name).values;
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = scale * g[k];
      const double mk = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
      const double vk = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
      m[k] = static_cast<float>(mk);
      v[k] = static_cast<float>(vk);
      p.values[k] = static_cast<float>(p.values[k] - lr * (mk / c1) / (std::sqrt(vk / c2) + cfg.eps));
    }
  }
  return true;
}

int lead_bucket(int lead_hours, int width_hours) {
  if (lead_hours < 0) throw std::invalid_argument("lead_bucket: negative lead");
  if (width_hours < 1) throw std::invalid_argument("lead_bucket: bucket width must be >= 1");
  return lead_hours == 0 ? 0 : (lead_hours - 1) / width_hours + 1;
}

Stage stage_from_string(const std::string& s) {
  if (s == "pretrain") return Stage::Pretrain;
  if (s == "sft") return Stage::Sft;
  if (s == "e2e") return Stage::E2E;
  throw std::invalid_argument("unknown stage '" + s + "'");
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::Pretrain:
      return "pretrain";
    case Stage::Sft:
      return "sft";
    case Stage::E2E:
      return "e2e";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (steps < 0) throw ConfigError("train config: steps must be >= 0");
  if (batch < 1) throw ConfigError("train config: batch must be >= 1");
  if (!(adam.lr > 0.0)) throw ConfigError("train config: lr must be > 0");
  if (!(lambda >= 0.0)) throw ConfigError("train config: lambda must be >= 0");
  if (bandwidth_multipliers.empty()) throw ConfigError("train config: at least one bandwidth multiplier required");
  if (bucket_hours < 1) throw ConfigError("train config: bucket_hours must be >= 1");
  if (threads < 1) throw ConfigError("train config: threads must be >= 1");
}

void DivergenceGuard::observe(int step, double loss) {
  if (initial_ < 0.0) {
    initial_ = loss;
    return;
  }
  streak_ = loss > 10.0 * initial_ ? streak_ + 1 : 0;
  if (streak_ >= 200) {
    std::ostringstream os;
    os << "training diverged: loss " << loss << " above 10x initial " << initial_ << " for 200 steps (step " << step
       << ")";
    throw NumericalError(os.str());
  }
}

std::string trace_csv(const std::vector<LossRow>& rows, const TraceFormat& fmt) {
  std::string out = "step,total,cfm_clean";
  if (fmt.forecast) out += ",cfm_fcst";
  if (fmt.mmd) out += ",mmd";
  out += "\n";
  char buf[64];
  for (const auto& r : rows) {
    out += std::to_string(r.step);
    for (double v : {r.total, r.cfm_clean}) {
      std::snprintf(buf, sizeof buf, ",%.9g", v);
      out += buf;
    }
    if (fmt.forecast) {
      std::snprintf(buf, sizeof buf, ",%.9g", r.cfm_fcst);
      out += buf;
    }
    if (fmt.mmd) {
      std::snprintf(buf, sizeof buf, ",%.9g", r.mmd);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

flow::Normalizer checkpoint_normalizer(const net::Checkpoint& ck) {
  if (!ck.meta.contains("normalizer")) throw DataError("checkpoint carries no normalizer");
  return flow::Normalizer::from_json(ck.meta.at("normalizer"));
}

TrainResult train(const TrainConfig& cfg, const net::NetConfig& net_cfg, const synth::Dataset& data,
                  const net::Checkpoint* init, const std::function<void(const LossRow&)>& on_step) {
  cfg.validate();
  net_cfg.validate();
  const bool paired = cfg.stage != Stage::Pretrain;
  if (cfg.stage == Stage::Sft && !init) throw ConfigError("sft requires a pretrained checkpoint");
  const int n_train = cfg.train_count < 0 ? data.size() : std::min(cfg.train_count, data.size());
  if (n_train < 2) throw DataError("training needs at least two samples");
  std::vector<int> leads = cfg.leads.empty() ? data.leads() : cfg.leads;
  if (paired && leads.empty()) throw ConfigError("sft needs at least one forecast lead");

  TrainResult res;
  net::ParamMap<float> params;
  if (init) {
    if (!(init->config == net_cfg)) throw ConfigError("checkpoint NetConfig does not match the requested network");
    params = init->params;
    res.normalizer = checkpoint_normalizer(*init);
  } else {
    params = net::init_params<float>(net_cfg, synth::derive_seed(cfg.seed, 0x1417));
    res.normalizer = flow::Normalizer::fit([&](int i) { return data.truth(i); }, n_train);
  }
  const FieldStack probe = data.truth(0);
  if (probe.height() != net_cfg.grid_h || probe.width() != net_cfg.grid_w ||
      probe.num_channels() != net_cfg.out_channels) {
    throw ConfigError("dataset grid does not match the network configuration");
  }
  const std::size_t m = probe.data().size();

  // Normalized truth and clean inputs for the training range.
  std::vector<std::vector<float>> truth(n_train), clean(n_train);
  for (int i = 0; i < n_train; ++i) {
    truth[i] = res.normalizer.normalize(data.truth(i));
    clean[i] = res.normalizer.normalize(data.clean(i));
  }

  res.format.forecast = paired;
  res.format.mmd = paired && cfg.lambda > 0.0;
  OptimState state = make_optim_state(params);
  DivergenceGuard guard;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<int> pick(0, n_train - 1);
  std::uniform_int_distribution<std::size_t> pick_lead(0, leads.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const int items = cfg.batch;
  const int rows = paired ? 2 * items : items;
  net::NetBatch<float> batch;
  std::vector<float> target;
  std::vector<float> fcst(m);
  for (int step = 0; step < cfg.steps; ++step) {
    batch.n = rows;
    batch.x.assign(static_cast<std::size_t>(rows) * 2 * m, 0.0f);
    batch.t.assign(rows, 0.0);
    batch.lead_hours.assign(rows, 0.0);
    target.assign(static_cast<std::size_t>(rows) * m, 0.0f);
    std::map<int, net::MmdGroup> buckets;
    for (int k = 0; k < items; ++k) {
      const int idx = pick(rng);
      const double t = unit(rng);
      const auto x0 = flow::gaussian_noise(m, rng());
      const int lead = paired ? leads[pick_lead(rng)] : 0;
      float* in = batch.x.data() + static_cast<std::size_t>(k) * 2 * m;
      flow::interpolate_into(x0.data(), truth[idx].data(), t, m, in, target.data() + static_cast<std::size_t>(k) * m);
      std::copy(clean[idx].begin(), clean[idx].end(), in + m);
      batch.t[k] = t;
      if (paired) {
        const int r = items + k;
        res.normalizer.normalize_into(data.forecast(idx, lead), fcst.data());
        float* fin = batch.x.data() + static_cast<std::size_t>(r) * 2 * m;
        std::copy_n(in, m, fin);
        std::copy(fcst.begin(), fcst.end(), fin + m);
        std::copy_n(target.data() + static_cast<std::size_t>(k) * m, m, target.data() + static_cast<std::size_t>(r) * m);
        batch.t[r] = t;
        batch.lead_hours[r] = lead;
        auto& g = buckets[lead_bucket(lead, cfg.bucket_hours)];
        g.xs.push_back(r);
        g.ys.push_back(k);
      }
    }
    net::LossSpec spec;
    spec.bandwidth_multipliers = cfg.bandwidth_multipliers;
    if (paired) {
      spec.mse_groups = {{0, items}, {items, rows}};
      if (cfg.lambda > 0.0) {
        spec.lambda = cfg.lambda;
        for (auto& [b, g] : buckets) spec.mmd_groups.push_back(g);
      }
    } else {
      spec.mse_groups = {{0, items}};
    }
    net::LossResult<float> lr;
    try {
      lr = net::loss_and_grads(net_cfg, params, batch, target, spec);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " at step " + std::to_string(step));
    }
    if (!adam_step(params, lr.grads, state, cfg.adam)) ++res.skipped_steps;
    LossRow row;
    row.step = step;
    row.total = lr.total;
    row.cfm_clean = lr.mse_terms[0];
    if (paired) row.cfm_fcst = lr.mse_terms[1];
    row.mmd = lr.mmd;
    guard.observe(step, lr.total);
    if (step % cfg.log_every == 0 || step + 1 == cfg.steps) res.trace.push_back(row);
    if (on_step) on_step(row);
  }

  res.checkpoint.config = net_cfg;
  res.checkpoint.params = std::move(params);
  nlohmann::json prior = init ? init->meta : nlohmann::json::object();
  res.checkpoint.meta = {{"stage", to_string(cfg.stage)},
                         {"steps", cfg.steps},
                         {"seed", cfg.seed},
                         {"batch", cfg.batch},
                         {"lr", cfg.adam.lr},
                         {"lambda", paired ? cfg.lambda : 0.0},
                         {"train_count", n_train},
                         {"skipped_steps", res.skipped_steps},
                         {"normalizer", res.normalizer.to_json()}};
  if (init) res.checkpoint.meta["parent_stage"] = prior.value("stage", "unknown");
  return res;
}

}  // namespace tcr::train

#include "tcr/net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "tcr/bytes.hpp"
#include "tcr/error.hpp"
#include "tcr/mmd.hpp"

namespace tcr::net {

namespace {

Shape to_shape(const std::vector<int>& dims) {
  Shape s{1, 1, 1, 1};
  if (dims.size() == 4) {
    s = {dims[0], dims[1], dims[2], dims[3]};
  } else if (dims.size() == 2) {
    s = {dims[0], dims[1], 1, 1};
  } else if (dims.size() == 1) {
    s = {dims[0], 1, 1, 1};
  } else {
    throw std::invalid_argument("unsupported parameter rank");
  }
  return s;
}

void add_res_block(std::vector<ParamSpec>& m, const std::string& p, int cin, int cout, int embed) {
  m.push_back({p + ".norm1.gamma", {cin}, Init::One, 1});
  m.push_back({p + ".norm1.beta", {cin}, Init::Zero, 1});
  m.push_back({p + ".conv1.w", {cout, cin, 3, 3}, Init::He, cin * 9});
  m.push_back({p + ".norm2.gamma", {cout}, Init::One, 1});
  m.push_back({p + ".norm2.beta", {cout}, Init::Zero, 1});
  m.push_back({p + ".emb.w", {cout, embed}, Init::Small, embed});
  m.push_back({p + ".emb.b", {cout}, Init::Zero, 1});
  m.push_back({p + ".conv2.w", {cout, cout, 3, 3}, Init::Small, cout * 9});
  m.push_back({p + ".conv2.b", {cout}, Init::Zero, 1});
  if (cin != cout) {
    m.push_back({p + ".skip.w", {cout, cin, 1, 1}, Init::Small, cin});
    m.push_back({p + ".skip.b", {cout}, Init::Zero, 1});
  }
}

template <typename T>
struct Tracer {
  Tape<T>& tape;
  const ParamMap<T>& params;
  ParamMap<T>* grads;
  using Var = typename Tape<T>::Var;

  Var p(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw std::invalid_argument("missing parameter tensor '" + name + "'");
    T* g = nullptr;
    if (grads) g = grads->at(name).values.data();
    return tape.external(to_shape(it->second.dims), it->second.values.data(), g);
  }

  Var res_block(const std::string& pre, Var x, Var emb, int cin, int cout) {
    Var h = tape.silu(tape.instance_norm(x, p(pre + ".norm1.gamma"), p(pre + ".norm1.beta")));
    h = tape.conv2d(h, p(pre + ".conv1.w"), nullptr, 1);
    h = tape.instance_norm(h, p(pre + ".norm2.gamma"), p(pre + ".norm2.beta"));
    Var eb = p(pre + ".emb.b");
    Var bias = tape.linear(emb, p(pre + ".emb.w"), &eb);
    h = tape.silu(tape.add_channel_bias(h, bias));
    Var c2b = p(pre + ".conv2.b");
    h = tape.conv2d(h, p(pre + ".conv2.w"), &c2b, 1);
    Var skip = x;
    if (cin != cout) {
      Var sb = p(pre + ".skip.b");
      skip = tape.conv2d(x, p(pre + ".skip.w"), &sb, 1);
    }
    return tape.add(skip, h);
  }
};

}  // namespace

void NetConfig::validate() const {
  if (out_channels < 1) throw std::invalid_argument("NetConfig: out_channels must be >= 1");
  if (in_channels != 2 * out_channels) throw std::invalid_argument("NetConfig: in_channels must equal 2*out_channels");
  if (base_width < 1) throw std::invalid_argument("NetConfig: base_width must be >= 1");
  if (levels < 0 || levels > 6) throw std::invalid_argument("NetConfig: levels must be in [0, 6]");
  if (embed_dim < 2 || embed_dim % 2 != 0) throw std::invalid_argument("NetConfig: embed_dim must be even");
  if (grid_h < 1 || grid_w < 1) throw std::invalid_argument("NetConfig: grid must be nonempty");
  const int div = 1 << levels;
  if (grid_h % div != 0 || grid_w % div != 0) {
    throw std::invalid_argument("NetConfig: grid " + std::to_string(grid_h) + "x" + std::to_string(grid_w) +
                                " not divisible by 2^levels = " + std::to_string(div));
  }
}

nlohmann::json NetConfig::to_json() const {
  return {{"in_channels", in_channels}, {"out_channels", out_channels}, {"base_width", base_width},
          {"levels", levels},           {"attn_at_bottleneck", attn_at_bottleneck},
          {"embed_dim", embed_dim},     {"grid_h", grid_h},           {"grid_w", grid_w}};
}

NetConfig NetConfig::from_json(const nlohmann::json& j) {
  NetConfig c;
  c.in_channels = j.at("in_channels").get<int>();
  c.out_channels = j.at("out_channels").get<int>();
  c.base_width = j.at("base_width").get<int>();
  c.levels = j.at("levels").get<int>();
  c.attn_at_bottleneck = j.at("attn_at_bottleneck").get<bool>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.grid_h = j.at("grid_h").get<int>();
  c.grid_w = j.at("grid_w").get<int>();
  c.validate();
  return c;
}

bool operator==(const NetConfig& a, const NetConfig& b) { return a.to_json() == b.to_json(); }

std::vector<ParamSpec> architecture_manifest(const NetConfig& cfg) {
  cfg.validate();
  const int d = cfg.embed_dim;
  std::vector<ParamSpec> m;
  m.push_back({"emb.fc1.w", {d, d}, Init::He, d});
  m.push_back({"emb.fc1.b", {d}, Init::Zero, 1});
  m.push_back({"emb.fc2.w", {d, d}, Init::He, d});
  m.push_back({"emb.fc2.b", {d}, Init::Zero, 1});
  m.push_back({"in.conv.w", {cfg.base_width, cfg.in_channels, 3, 3}, Init::He, cfg.in_channels * 9});
  m.push_back({"in.conv.b", {cfg.base_width}, Init::Zero, 1});
  for (int l = 0; l < cfg.levels; ++l) {
    const int w = cfg.width_at(l);
    add_res_block(m, "enc" + std::to_string(l) + ".res0", w, w, d);
    add_res_block(m, "enc" + std::to_string(l) + ".res1", w, w, d);
    m.push_back({"down" + std::to_string(l) + ".w", {2 * w, w, 3, 3}, Init::He, w * 9});
    m.push_back({"down" + std::to_string(l) + ".b", {2 * w}, Init::Zero, 1});
  }
  const int wb = cfg.bottleneck_width();
  add_res_block(m, "mid.res0", wb, wb, d);
  if (cfg.attn_at_bottleneck) {
    const int hb = cfg.grid_h >> cfg.levels, wdb = cfg.grid_w >> cfg.levels;
    m.push_back({"mid.attn.norm.gamma", {wb}, Init::One, 1});
    m.push_back({"mid.attn.norm.beta", {wb}, Init::Zero, 1});
    m.push_back({"mid.attn.pos", {1, wb, hb, wdb}, Init::Zero, 1});
    m.push_back({"mid.attn.wq", {wb, wb}, Init::He, wb});
    m.push_back({"mid.attn.wk", {wb, wb}, Init::He, wb});
    m.push_back({"mid.attn.wv", {wb, wb}, Init::He, wb});
    m.push_back({"mid.attn.wo", {wb, wb}, Init::Small, wb});
    m.push_back({"mid.attn.bo", {wb}, Init::Zero, 1});
  }
  add_res_block(m, "mid.res1", wb, wb, d);
  for (int l = cfg.levels - 1; l >= 0; --l) {
    const int w = cfg.width_at(l);
    m.push_back({"up" + std::to_string(l) + ".conv.w", {w, 2 * w, 3, 3}, Init::He, 2 * w * 9});
    m.push_back({"up" + std::to_string(l) + ".conv.b", {w}, Init::Zero, 1});
    add_res_block(m, "dec" + std::to_string(l) + ".res0", 2 * w, w, d);
    add_res_block(m, "dec" + std::to_string(l) + ".res1", w, w, d);
  }
  m.push_back({"out.conv.w", {cfg.out_channels, cfg.base_width, 3, 3}, Init::Zero, 1});
  m.push_back({"out.conv.b", {cfg.out_channels}, Init::Zero, 1});
  return m;
}

template <typename T>
ParamMap<T> init_params(const NetConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ParamMap<T> out;
  for (const auto& spec : architecture_manifest(cfg)) {
    ParamTensor<T> t;
    t.dims = spec.dims;
    std::size_t n = 1;
    for (int d : spec.dims) n *= static_cast<std::size_t>(d);
    t.values.assign(n, T(0));
    switch (spec.init) {
      case Init::Zero:
        break;
      case Init::One:
        std::fill(t.values.begin(), t.values.end(), T(1));
        break;
      case Init::He: {
        const double sd = std::sqrt(2.0 / spec.fan_in);
        for (auto& v : t.values) v = static_cast<T>(sd * normal(rng));
        break;
      }
      case Init::Small: {
        const double sd = 0.5 / std::sqrt(static_cast<double>(spec.fan_in));
        for (auto& v : t.values) v = static_cast<T>(sd * normal(rng));
        break;
      }
    }
    out.emplace(spec.name, std::move(t));
  }
  return out;
}

template <typename T>
void randomize_params(ParamMap<T>& params, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& [name, t] : params) {
    const bool affine = name.find("gamma") != std::string::npos;
    double sd = 0.2 * scale;
    if (t.dims.size() >= 2 && t.dims[0] > 1) {
      std::size_t fan_in = 1;
      for (std::size_t k = 1; k < t.dims.size(); ++k) fan_in *= static_cast<std::size_t>(t.dims[k]);
      sd = scale / std::sqrt(static_cast<double>(fan_in));
    }
    for (auto& v : t.values) v = static_cast<T>((affine ? 1.0 : 0.0) + sd * normal(rng));
  }
}

template <typename T>
ParamMap<T> zeros_like(const ParamMap<T>& params) {
  ParamMap<T> out;
  for (const auto& [name, t] : params) out.emplace(name, ParamTensor<T>{t.dims, std::vector<T>(t.size(), T(0))});
  return out;
}

template <typename To, typename From>
ParamMap<To> convert_params(const ParamMap<From>& params) {
  ParamMap<To> out;
  for (const auto& [name, t] : params) {
    ParamTensor<To> c;
    c.dims = t.dims;
    c.values.assign(t.values.begin(), t.values.end());
    out.emplace(name, std::move(c));
  }
  return out;
}

template <typename T>
void check_params(const NetConfig& cfg, const ParamMap<T>& params) {
  const auto manifest = architecture_manifest(cfg);
  for (const auto& spec : manifest) {
    auto it = params.find(spec.name);
    if (it == params.end()) throw std::invalid_argument("parameter tensor '" + spec.name + "' missing");
    if (it->second.dims != spec.dims) throw std::invalid_argument("parameter tensor '" + spec.name + "' has wrong shape");
    std::size_t n = 1;
    for (int d : spec.dims) n *= static_cast<std::size_t>(d);
    if (it->second.values.size() != n) {
      throw std::invalid_argument("parameter tensor '" + spec.name + "' payload size mismatch");
    }
  }
  if (params.size() != manifest.size()) {
    std::set<std::string> known;
    for (const auto& s : manifest) known.insert(s.name);
    for (const auto& [name, t] : params) {
      if (!known.count(name)) throw std::invalid_argument("parameter tensor '" + name + "' not in manifest");
    }
  }
}

std::vector<double> embed_time(double t, double lead_hours, int dim) {
  if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("embed_time: dim must be even");
  std::vector<double> e;
  e.reserve(static_cast<std::size_t>(dim));
  const int half = dim / 2;
  for (double value : {t, lead_hours / 120.0}) {
    for (int c = 0; c < half; c += 2) {
      const int i = c / 2;
      const double freq = std::pow(10000.0, -2.0 * i / dim);
      const double arg = value * freq;
      e.push_back(std::sin(arg));
      if (c + 1 < half) e.push_back(std::cos(arg));
    }
  }
  return e;
}

template <typename T>
TracedNet<T> trace(Tape<T>& tape, const NetConfig& cfg, const ParamMap<T>& params, ParamMap<T>* grads,
                   const NetBatch<T>& batch, const ForwardOptions& opts) {
  check_params(cfg, params);
  const int n = batch.n;
  const std::size_t plane = static_cast<std::size_t>(cfg.grid_h) * cfg.grid_w;
  if (n < 1) throw std::invalid_argument("forward: empty batch");
  if (batch.x.size() != static_cast<std::size_t>(n) * cfg.in_channels * plane) {
    std::ostringstream os;
    os << "forward: input tensor 'x' has " << batch.x.size() << " values, expected " << n << "x"
       << cfg.in_channels << "x" << cfg.grid_h << "x" << cfg.grid_w;
    throw std::invalid_argument(os.str());
  }
  if (batch.t.size() != static_cast<std::size_t>(n)) throw std::invalid_argument("forward: tensor 't' length mismatch");
  if (batch.lead_hours.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("forward: tensor 'lead_hours' length mismatch");
  }
  using Var = typename Tape<T>::Var;
  Tracer<T> tr{tape, params, grads};
  const int d = cfg.embed_dim;

  std::vector<T> raw;
  raw.reserve(static_cast<std::size_t>(n) * d);
  for (int k = 0; k < n; ++k) {
    for (double v : embed_time(batch.t[k], batch.lead_hours[k], d)) raw.push_back(static_cast<T>(v));
  }
  Var emb = tape.constant({n, d, 1, 1}, std::move(raw));
  Var b1 = tr.p("emb.fc1.b");
  emb = tape.silu(tape.linear(emb, tr.p("emb.fc1.w"), &b1));
  Var b2 = tr.p("emb.fc2.b");
  emb = tape.silu(tape.linear(emb, tr.p("emb.fc2.w"), &b2));

  Var x = tape.external({n, cfg.in_channels, cfg.grid_h, cfg.grid_w}, batch.x.data(), nullptr);
  Var inb = tr.p("in.conv.b");
  Var h = tape.conv2d(x, tr.p("in.conv.w"), &inb, 1);

  std::vector<Var> skips;
  for (int l = 0; l < cfg.levels; ++l) {
    const int w = cfg.width_at(l);
    const std::string pre = "enc" + std::to_string(l);
    h = tr.res_block(pre + ".res0", h, emb, w, w);
    h = tr.res_block(pre + ".res1", h, emb, w, w);
    skips.push_back(h);
    Var db = tr.p("down" + std::to_string(l) + ".b");
    h = tape.conv2d(h, tr.p("down" + std::to_string(l) + ".w"), &db, 2);
  }
  const int wb = cfg.bottleneck_width();
  h = tr.res_block("mid.res0", h, emb, wb, wb);
  if (cfg.attn_at_bottleneck) {
    Var a = tape.instance_norm(h, tr.p("mid.attn.norm.gamma"), tr.p("mid.attn.norm.beta"));
    if (opts.positional) a = tape.add_broadcast(a, tr.p("mid.attn.pos"));
    a = tape.attention(a, tr.p("mid.attn.wq"), tr.p("mid.attn.wk"), tr.p("mid.attn.wv"), tr.p("mid.attn.wo"),
                       tr.p("mid.attn.bo"));
    h = tape.add(h, a);
  }
  h = tr.res_block("mid.res1", h, emb, wb, wb);
  Var feat = tape.global_avg_pool(h);

  for (int l = cfg.levels - 1; l >= 0; --l) {
    const int w = cfg.width_at(l);
    const std::string pre = "up" + std::to_string(l);
    Var ub = tr.p(pre + ".conv.b");
    h = tape.conv2d(tape.upsample_nearest2x(h), tr.p(pre + ".conv.w"), &ub, 1);
    h = tape.concat_channels(h, skips[static_cast<std::size_t>(l)]);
    h = tr.res_block("dec" + std::to_string(l) + ".res0", h, emb, 2 * w, w);
    h = tr.res_block("dec" + std::to_string(l) + ".res1", h, emb, w, w);
  }
  h = tape.silu(h);
  Var ob = tr.p("out.conv.b");
  Var v = tape.conv2d(h, tr.p("out.conv.w"), &ob, 1);
  return {v, feat};
}

template <typename T>
ForwardResult<T> forward(const NetConfig& cfg, const ParamMap<T>& params, const NetBatch<T>& batch,
                         const ForwardOptions& opts) {
  Tape<T> tape(false);
  auto traced = trace<T>(tape, cfg, params, nullptr, batch, opts);
  return {tape.take_value(traced.v), tape.take_value(traced.feat)};
}

namespace {

template <typename T>
LossResult<T> evaluate_loss(const NetConfig& cfg, const ParamMap<T>& params, const NetBatch<T>& batch,
                            const std::vector<T>& target, const LossSpec& spec, bool with_grads) {
  using Var = typename Tape<T>::Var;
  LossResult<T> res;
  if (with_grads) res.grads = zeros_like(params);
  Tape<T> tape(with_grads);
  auto traced = trace(tape, cfg, params, with_grads ? &res.grads : nullptr, batch);
  const Shape vs = tape.shape(traced.v);
  if (target.size() != shape_size(vs)) throw std::invalid_argument("loss: tensor 'target' shape mismatch");
  {
    const auto v = tape.value(traced.v);
    const std::size_t per = shape_size(vs) / static_cast<std::size_t>(vs[0]);
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (!std::isfinite(static_cast<double>(v[k])) || !std::isfinite(static_cast<double>(target[k]))) {
        throw NumericalError("non-finite loss: batch index " + std::to_string(k / per));
      }
    }
  }
  Var tgt = tape.external(vs, target.data(), nullptr);
  std::vector<std::pair<Var, double>> terms;
  auto groups = spec.mse_groups;
  if (groups.empty()) groups.push_back({0, batch.n});
  const auto vv = tape.value(traced.v);
  const std::size_t per_row = shape_size(vs) / static_cast<std::size_t>(vs[0]);
  for (auto [b, e] : groups) {
    Var term = tape.mse(traced.v, tgt, b, e);
    res.mse_terms.push_back(static_cast<double>(tape.scalar(term)));
    terms.push_back({term, 1.0});
    long double s = 0.0L;
    for (std::size_t k = b * per_row; k < e * per_row; ++k) {
      const long double d = static_cast<long double>(vv[k]) - target[k];
      s += d * d;
    }
    res.total_extended += s / static_cast<long double>((e - b) * per_row);
  }
  if (!spec.mmd_groups.empty()) {
    const auto fv = tape.value(traced.feat);
    const int fd = tape.shape(traced.feat)[1];
    auto rows = [&](const std::vector<int>& idx) {
      train::FeatureSet s;
      for (int r : idx) s.emplace_back(fv.begin() + static_cast<std::ptrdiff_t>(r) * fd,
                                       fv.begin() + static_cast<std::ptrdiff_t>(r + 1) * fd);
      return s;
    };
    train::MmdSpec ms;
    ms.multipliers = spec.bandwidth_multipliers;
    ms.fixed_sigma2 = spec.fixed_sigma2;
    // One bandwidth set per batch, from the pooled rows of every group.
    std::vector<int> pooled;
    for (const auto& g : spec.mmd_groups) {
      pooled.insert(pooled.end(), g.xs.begin(), g.xs.end());
      pooled.insert(pooled.end(), g.ys.begin(), g.ys.end());
    }
    const auto bw = train::mmd_bandwidths(rows(pooled), {}, ms);
    std::vector<std::pair<Var, double>> mterms;
    long double mmd_ext = 0.0L;
    for (const auto& g : spec.mmd_groups) {
      Var m = tape.mmd2(traced.feat, g.xs, g.ys, bw);
      mterms.push_back({m, 1.0 / static_cast<double>(spec.mmd_groups.size())});
      mmd_ext += train::mmd2_extended(rows(g.xs), rows(g.ys), bw);
    }
    res.total_extended += spec.lambda * mmd_ext / static_cast<long double>(spec.mmd_groups.size());
    Var mmd = tape.weighted_sum(mterms);
    res.mmd = static_cast<double>(tape.scalar(mmd));
    res.has_mmd = true;
    terms.push_back({mmd, spec.lambda});
  }
  Var total = tape.weighted_sum(terms);
  res.total = static_cast<double>(tape.scalar(total));
  if (!std::isfinite(res.total)) throw NumericalError("non-finite loss");
  if (with_grads) tape.backward(total);
  return res;
}

}  // namespace

template <typename T>
LossResult<T> loss_and_grads(const NetConfig& cfg, const ParamMap<T>& params, const NetBatch<T>& batch,
                             const std::vector<T>& target, const LossSpec& spec) {
  return evaluate_loss(cfg, params, batch, target, spec, true);
}

template <typename T>
long double loss_value(const NetConfig& cfg, const ParamMap<T>& params, const NetBatch<T>& batch,
                       const std::vector<T>& target, const LossSpec& spec) {
  return evaluate_loss(cfg, params, batch, target, spec, false).total_extended;
}

double grad_check(const Objective<double>& objective, const ParamMap<double>& params, const GradCheckOptions& opts) {
  return grad_check(objective, params, objective.gradient(params), opts);
}

double grad_check(const Objective<double>& objective, const ParamMap<double>& params,
                  const ParamMap<double>& analytic, const GradCheckOptions& opts) {
  std::vector<std::pair<std::string, std::size_t>> entries;
  for (const auto& [name, t] : params)
    for (std::size_t k = 0; k < t.size(); ++k) entries.emplace_back(name, k);
  if (entries.empty()) return 0.0;
  std::size_t want = std::max<std::size_t>(opts.min_entries,
                                           static_cast<std::size_t>(std::ceil(opts.fraction * entries.size())));
  want = std::min(want, entries.size());
  std::mt19937_64 rng(opts.seed);
  std::shuffle(entries.begin(), entries.end(), rng);
  entries.resize(want);

  ParamMap<double> probe = params;
  double worst = 0.0;
  for (const auto& [name, k] : entries) {
    double& slot = probe.at(name).values[k];
    const double orig = slot;
    slot = orig + opts.eps;
    const long double fp = objective.value(probe);
    slot = orig - opts.eps;
    const long double fm = objective.value(probe);
    slot = orig;
    const double fd = static_cast<double>((fp - fm) / (2.0L * opts.eps));
    const double g = analytic.at(name).values[k];
    const double rel = std::abs(g - fd) / std::max(1e-8, std::abs(g) + std::abs(fd));
    worst = std::max(worst, rel);
  }
  return worst;
}

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt) {
  check_params(ckpt.config, ckpt.params);
  ByteWriter w;
  w.raw("3DCP");
  w.u16(1);
  w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, t] : ckpt.params) {
    w.short_string(name);
    w.u8(static_cast<std::uint8_t>(t.dims.size()));
    for (int d : t.dims) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.values) w.f32(v);
  }
  const std::string blob = nlohmann::json{{"net_config", ckpt.config.to_json()}, {"meta", ckpt.meta}}.dump();
  w.u32(static_cast<std::uint32_t>(blob.size()));
  w.raw(blob);
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes) {
  ByteReader r(bytes);
  if (r.raw(4) != "3DCP") throw DataError("not a 3DTC-CKPT container (bad magic)");
  const auto version = r.u16();
  if (version != 1) throw DataError("unsupported 3DTC-CKPT version " + std::to_string(version));
  const auto count = r.u32();
  Checkpoint ck;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::string name = r.short_string();
    ParamTensor<float> t;
    const int nd = r.u8();
    std::size_t n = 1;
    for (int d = 0; d < nd; ++d) {
      t.dims.push_back(static_cast<int>(r.u32()));
      n *= static_cast<std::size_t>(t.dims.back());
    }
    t.values.resize(n);
    for (auto& v : t.values) v = r.f32();
    ck.params.emplace(name, std::move(t));
  }
  const auto len = r.u32();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(r.raw(len));
    ck.config = NetConfig::from_json(j.at("net_config"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("3DTC-CKPT: bad metadata blob: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("3DTC-CKPT: ") + e.what());
  }
  ck.meta = j.value("meta", nlohmann::json::object());
  try {
    check_params(ck.config, ck.params);
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("3DTC-CKPT: ") + e.what());
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file_bytes(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

#define TCR_INSTANTIATE(T)                                                                                    \
  template ParamMap<T> init_params<T>(const NetConfig&, std::uint64_t);                                       \
  template void randomize_params<T>(ParamMap<T>&, std::uint64_t, double);                                     \
  template ParamMap<T> zeros_like<T>(const ParamMap<T>&);                                                      \
  template void check_params<T>(const NetConfig&, const ParamMap<T>&);                                         \
  template TracedNet<T> trace<T>(Tape<T>&, const NetConfig&, const ParamMap<T>&, ParamMap<T>*,                \
                                 const NetBatch<T>&, const ForwardOptions&);                                  \
  template ForwardResult<T> forward<T>(const NetConfig&, const ParamMap<T>&, const NetBatch<T>&,              \
                                       const ForwardOptions&);                                                \
  template LossResult<T> loss_and_grads<T>(const NetConfig&, const ParamMap<T>&, const NetBatch<T>&,          \
                                           const std::vector<T>&, const LossSpec&);                           \
  template long double loss_value<T>(const NetConfig&, const ParamMap<T>&, const NetBatch<T>&, const std::vector<T>&, \
                                const LossSpec&);

TCR_INSTANTIATE(float)
TCR_INSTANTIATE(double)
#undef TCR_INSTANTIATE

template ParamMap<double> convert_params<double, float>(const ParamMap<float>&);
template ParamMap<float> convert_params<float, double>(const ParamMap<double>&);

}  // namespace tcr::net

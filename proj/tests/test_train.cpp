#include <cmath>
#include <random>

#include "doctest.h"
#include "tcr/error.hpp"
#include "tcr/mmd.hpp"
#include "tcr/train.hpp"

using namespace tcr;
using namespace tcr::train;

namespace {

net::ParamMap<float> scalar_param(float v) {
  net::ParamMap<float> p;
  p["w"] = {{1}, {v}};
  return p;
}

FeatureSet gaussian_cloud(int n, int dim, double shift, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  FeatureSet s(n, std::vector<double>(dim));
  for (auto& row : s)
    for (auto& v : row) v = normal(rng);
  for (auto& row : s) row[0] += shift;
  return s;
}

synth::GenConfig tiny_gen() {
  synth::GenConfig g;
  g.n_samples = 12;
  g.grid_h = g.grid_w = 16;
  return g;
}

net::NetConfig tiny_net() {
  net::NetConfig n;
  n.base_width = 4;
  n.embed_dim = 16;
  n.grid_h = n.grid_w = 16;
  return n;
}

TrainConfig tiny_train(Stage stage, int steps, std::uint64_t seed) {
  TrainConfig c;
  c.stage = stage;
  c.steps = steps;
  c.batch = 2;
  c.adam.warmup_steps = 2;
  c.adam.lr = 1e-3;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_SUITE("train") {
  TEST_CASE("adam first step closed form") {
    AdamConfig cfg;
    cfg.lr = 1e-3;
    cfg.warmup_steps = 0;
    auto p = scalar_param(2.0f);
    OptimState st = make_optim_state(p);
    REQUIRE(adam_step(p, scalar_param(0.5f), st, cfg));
    CHECK(p.at("w").values[0] - 2.0 == doctest::Approx(-1e-3 * (0.5 / (0.5 + 1e-8))).epsilon(1e-4));
    CHECK(st.step == 1);
    CHECK(st.m.at("w").dims == p.at("w").dims);
  }

  TEST_CASE("adam zero gradient leaves params and counts the step") {
    auto p = scalar_param(1.25f);
    OptimState st = make_optim_state(p);
    REQUIRE(adam_step(p, scalar_param(0.0f), st, AdamConfig{}));
    CHECK(p.at("w").values[0] == 1.25f);
    CHECK(st.step == 1);
  }

  TEST_CASE("adam clips by global norm before the moments") {
    net::ParamMap<float> p, g;
    p["a"] = {{2}, {0.0f, 0.0f}};
    g["a"] = {{2}, {6.0f, 8.0f}};  // norm 10
    OptimState st = make_optim_state(p);
    AdamConfig cfg;
    cfg.clip_norm = 1.0;
    REQUIRE(adam_step(p, g, st, cfg));
    CHECK(st.m.at("a").values[0] == doctest::Approx(0.1 * 0.6).epsilon(1e-6));
    CHECK(st.m.at("a").values[1] == doctest::Approx(0.1 * 0.8).epsilon(1e-6));
    CHECK(st.v.at("a").values[1] == doctest::Approx(0.001 * 0.64).epsilon(1e-6));
  }

  TEST_CASE("adam skips non-finite gradients") {
    auto p = scalar_param(3.0f);
    OptimState st = make_optim_state(p);
    CHECK_FALSE(adam_step(p, scalar_param(std::nanf("")), st, AdamConfig{}));
    CHECK(p.at("w").values[0] == 3.0f);
    CHECK(st.skipped == 1);
    CHECK(st.step == 0);
  }

  TEST_CASE("adam first step is odd under joint sign flips") {
    std::mt19937_64 rng(4);
    std::normal_distribution<float> normal;
    net::ParamMap<float> p, g;
    p["a"] = {{7}, std::vector<float>(7)};
    g["a"] = {{7}, std::vector<float>(7)};
    for (int k = 0; k < 7; ++k) {
      p["a"].values[k] = normal(rng);
      g["a"].values[k] = 3.0f * normal(rng);
    }
    auto pn = p, gn = g;
    for (auto& v : pn["a"].values) v = -v;
    for (auto& v : gn["a"].values) v = -v;
    OptimState s1 = make_optim_state(p), s2 = make_optim_state(pn);
    adam_step(p, g, s1, AdamConfig{});
    adam_step(pn, gn, s2, AdamConfig{});
    for (int k = 0; k < 7; ++k) CHECK(pn["a"].values[k] == -p["a"].values[k]);
  }

  TEST_CASE("median bandwidth examples") {
    CHECK(median_bandwidth({{0.0}, {1.0}, {3.0}}) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(median_bandwidth({{1.5, 2.0}, {1.5, 2.0}, {1.5, 2.0}}) == 1e-6);
    const FeatureSet a{{0.3, -1.0}, {2.0, 0.5}, {-1.0, 1.0}, {0.0, 0.0}};
    FeatureSet b = a;
    for (auto& r : b)
      for (auto& v : r) v *= 3.0;
    CHECK(median_bandwidth(b) == doctest::Approx(9.0 * median_bandwidth(a)).epsilon(1e-12));
    CHECK_THROWS_AS(median_bandwidth({{1.0}}), std::invalid_argument);
  }

  TEST_CASE("mmd2 closed forms and identities") {
    std::mt19937_64 rng(1);
    const FeatureSet x = gaussian_cloud(20, 3, 0.0, rng);
    FeatureSet xr(x.rbegin(), x.rend());
    MmdSpec spec;
    CHECK(std::abs(mmd2(x, xr, spec)) < 1e-12);
    const double closed = 2.0 * (1.0 - std::exp(-0.5));
    CHECK(std::abs(mmd2_with({{0.0}}, {{1.0}}, {1.0}) - closed) < 1e-9);
    CHECK(std::abs(mmd2_with({{0.0}}, {{1.0}}, {1.0}) - 0.78694) < 1e-5);
    CHECK(mmd2_with({{0.0}}, {{1.0}}, {1e12}) < 1e-10);
    const FeatureSet y = gaussian_cloud(15, 3, 1.0, rng);
    CHECK(mmd2(x, y, spec) == mmd2(y, x, spec));
    CHECK(mmd2(x, y, spec) >= 0.0);
    CHECK_THROWS_AS(mmd2({{0.0, 1.0}}, {{1.0}}, spec), std::invalid_argument);
  }

  TEST_CASE("mmd2 strictly increases with cloud separation") {
    double prev = -1.0;
    for (double d : {0.0, 1.0, 2.0, 4.0}) {
      std::mt19937_64 rng(77);
      const FeatureSet x = gaussian_cloud(256, 4, 0.0, rng);
      const FeatureSet y = gaussian_cloud(256, 4, d, rng);
      const double m = mmd2(x, y, MmdSpec{});
      CHECK(m > prev);
      prev = m;
    }
  }

  TEST_CASE("lead buckets partition the leads") {
    CHECK(lead_bucket(0) == 0);
    CHECK(lead_bucket(6) == 1);
    CHECK(lead_bucket(24) == 1);
    CHECK(lead_bucket(25) == 2);
    CHECK(lead_bucket(120) == 5);
    std::vector<int> count(6, 0);
    for (int lead : synth::GenConfig::default_leads()) ++count[lead_bucket(lead)];
    CHECK(count == std::vector<int>{0, 4, 4, 4, 4, 4});
  }

  TEST_CASE("divergence guard") {
    DivergenceGuard g;
    g.observe(0, 1.0);
    for (int s = 1; s < 200; ++s) g.observe(s, 11.0);
    g.observe(200, 2.0);  // streak broken
    for (int s = 201; s < 400; ++s) g.observe(s, 11.0);
    CHECK_THROWS_AS(g.observe(400, 11.0), NumericalError);
  }

  TEST_CASE("pretraining is deterministic and logs the clean-only trace") {
    synth::GeneratedDataset data(tiny_gen(), 8);
    const auto a = train::train(tiny_train(Stage::Pretrain, 6, 3), tiny_net(), data, nullptr);
    const auto b = train::train(tiny_train(Stage::Pretrain, 6, 3), tiny_net(), data, nullptr);
    CHECK(trace_csv(a.trace, a.format) == trace_csv(b.trace, b.format));
    CHECK(net::encode_checkpoint(a.checkpoint) == net::encode_checkpoint(b.checkpoint));
    CHECK(trace_csv(a.trace, a.format).rfind("step,total,cfm_clean\n", 0) == 0);
    CHECK(checkpoint_normalizer(a.checkpoint).mean == a.normalizer.mean);
    const auto c = train::train(tiny_train(Stage::Pretrain, 6, 4), tiny_net(), data, nullptr);
    CHECK(trace_csv(c.trace, c.format) != trace_csv(a.trace, a.format));
  }

  TEST_CASE("fine-tuning wiring and the MMD ablation") {
    synth::GeneratedDataset data(tiny_gen(), 8);
    const auto pre = train::train(tiny_train(Stage::Pretrain, 4, 1), tiny_net(), data, nullptr);

    auto with = tiny_train(Stage::Sft, 4, 2);
    with.lambda = 0.1;
    auto without = with;
    without.lambda = 0.0;
    const auto w = train::train(with, tiny_net(), data, &pre.checkpoint);
    const auto wo = train::train(without, tiny_net(), data, &pre.checkpoint);
    CHECK(trace_csv(w.trace, w.format).rfind("step,total,cfm_clean,cfm_fcst,mmd\n", 0) == 0);
    CHECK(trace_csv(wo.trace, wo.format).rfind("step,total,cfm_clean,cfm_fcst\n", 0) == 0);
    CHECK(w.trace.front().mmd > 0.0);
    CHECK(w.checkpoint.meta.at("parent_stage") == "pretrain");
    CHECK(net::encode_checkpoint(w.checkpoint) != net::encode_checkpoint(wo.checkpoint));
    // Same seed draws the same batches, so the first-step regression terms agree.
    CHECK(w.trace.front().cfm_clean == wo.trace.front().cfm_clean);

    auto e2e = with;
    e2e.stage = Stage::E2E;
    const auto e = train::train(e2e, tiny_net(), data, nullptr);
    CHECK(e.format.mmd);
    CHECK(e.checkpoint.meta.at("stage") == "e2e");
    CHECK_THROWS_AS(train::train(with, tiny_net(), data, nullptr), ConfigError);
  }

  TEST_CASE("identical clean and forecast branches give zero MMD") {
    synth::GeneratedDataset data(tiny_gen(), 8);
    const auto pre = train::train(tiny_train(Stage::Pretrain, 3, 1), tiny_net(), data, nullptr);
    auto cfg = tiny_train(Stage::Sft, 5, 2);
    cfg.leads = {0};
    const auto r = train::train(cfg, tiny_net(), data, &pre.checkpoint);
    for (const auto& row : r.trace) CHECK(row.mmd < 1e-10);
  }
}

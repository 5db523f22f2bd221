#include <cmath>
#include <sstream>

#include "doctest.h"
#include "tcr/bytes.hpp"
#include "tcr/cli.hpp"
#include "tcr/error.hpp"
#include "tcr/grd_io.hpp"
#include "tcr/synth.hpp"
#include "tcr/train.hpp"
#include "test_util.hpp"

using namespace tcr;
namespace fs = std::filesystem;

namespace {

using Overrides = std::vector<std::pair<std::string, std::string>>;

int run_cmd(const std::string& command, const fs::path& root, Overrides sets, std::string* log_text = nullptr,
            bool dry_run = false) {
  cli::Invocation inv;
  inv.command = command;
  inv.run_dir = root;
  inv.overrides = std::move(sets);
  inv.dry_run = dry_run;
  std::ostringstream out, log;
  const int rc = cli::run(inv, out, log);
  if (log_text) *log_text = log.str() + out.str();
  return rc;
}

const Overrides kGrid16{{"/grid/h", "16"}, {"/grid/w", "16"}};

Overrides with(Overrides base, const Overrides& more) {
  base.insert(base.end(), more.begin(), more.end());
  return base;
}

// Builds data/ and pretrain/model.ckpt on a 16x16 grid.
void small_run(const fs::path& root) {
  REQUIRE(run_cmd("gen", root, with(kGrid16, {{"/dataset/n_samples", "3"}, {"/dataset/leads", "[0,24,96]"}})) ==
          cli::kExitOk);
  REQUIRE(run_cmd("pretrain", root,
                  with(kGrid16, {{"/hyper/steps", "3"},
                                 {"/hyper/batch", "2"},
                                 {"/hyper/warmup", "1"},
                                 {"/net/base_width", "2"},
                                 {"/net/embed_dim", "8"}})) == cli::kExitOk);
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("unknown keys and out-of-range values are config errors") {
    CHECK_THROWS_WITH_AS(cli::resolve_config("gen", {{"foo", 1}}), doctest::Contains("/foo"), ConfigError);
    const auto root = test::temp_dir("cli_cfg");
    std::string log;
    CHECK(run_cmd("gen", root, {{"/foo", "1"}}, &log) == cli::kExitConfig);
    CHECK(log.find("/foo") != std::string::npos);
    CHECK(run_cmd("pretrain", root, {{"/hyper/lr", "-1"}}, &log) == cli::kExitConfig);
    CHECK(log.find("/hyper/lr") != std::string::npos);
    CHECK(run_cmd("reconstruct", root, {{"/sampler/method", "\"rk4\""}}, &log) == cli::kExitConfig);
    CHECK(run_cmd("nonsense", root, {}) == cli::kExitConfig);
    CHECK(fs::is_empty(root));
    fs::remove_all(root);
  }

  TEST_CASE("resolved configs fill defaults") {
    const auto c = cli::resolve_config("reconstruct", nlohmann::json::object());
    CHECK(c.at("sampler").at("steps") == 8);
    CHECK(c.at("sampler").at("method") == "euler");
    CHECK(c.at("grid").at("h") == 64);
    const auto p = cli::resolve_config("pipeline", {{"profile", "tiny"}});
    CHECK(p.at("grid").at("h") == 32);
    CHECK_THROWS_AS(cli::resolve_config("pipeline", {{"profile", "huge"}}), ConfigError);
  }

  TEST_CASE("pipeline dry run writes nothing") {
    const auto root = test::temp_dir("cli_dry");
    std::string log;
    CHECK(run_cmd("pipeline", root, {}, &log, true) == cli::kExitOk);
    CHECK(log.find("pretrain") != std::string::npos);
    CHECK(fs::is_empty(root));
    fs::remove_all(root);
  }

  TEST_CASE("missing inputs are data errors") {
    const auto root = test::temp_dir("cli_data");
    CHECK(run_cmd("pretrain", root, {}) == cli::kExitData);
    CHECK(run_cmd("reconstruct", root, {}) == cli::kExitData);
    CHECK(run_cmd("evaluate", root, {}) == cli::kExitData);
    fs::remove_all(root);
  }

  TEST_CASE("grid mismatch between config and data is rejected") {
    const auto root = test::temp_dir("cli_grid");
    REQUIRE(run_cmd("gen", root, with(kGrid16, {{"/dataset/n_samples", "2"}, {"/dataset/leads", "[0,24]"}})) ==
            cli::kExitOk);
    std::string log;
    const int rc = run_cmd("pretrain", root, {{"/hyper/steps", "1"}}, &log);
    CHECK(rc != cli::kExitOk);
    CHECK(rc != 1);
    fs::remove_all(root);
  }

  TEST_CASE("reconstruct with a straight-path stub returns its condition") {
    const auto root = test::temp_dir("cli_stub");
    small_run(root);
    const auto cfg = cli::resolve_config(
        "reconstruct", {{"grid", {{"h", 16}, {"w", 16}}}, {"checkpoint", "pretrain/model.ckpt"}, {"out", "stub"}});
    flow::FunctionVelocity stub(kNumChannels, [](const net::NetBatch<float>& b) {
      const std::size_t m = b.x.size() / (2 * static_cast<std::size_t>(b.n));
      std::vector<float> v(static_cast<std::size_t>(b.n) * m);
      for (int k = 0; k < b.n; ++k) {
        const float* x = b.x.data() + static_cast<std::size_t>(k) * 2 * m;
        for (std::size_t q = 0; q < m; ++q) v[k * m + q] = static_cast<float>((x[m + q] - x[q]) / (1.0 - b.t[k]));
      }
      return v;
    });
    std::ostringstream log;
    cli::cmd_reconstruct(cfg, root, log, &stub);
    const auto ck = net::load_checkpoint(root / "pretrain/model.ckpt");
    const auto norm = train::checkpoint_normalizer(ck);
    synth::DiskDataset data(root / "data");
    for (int i = 0; i < 3; ++i)
      for (int lead : {0, 24, 96}) {
        const FieldStack cond = lead == 0 ? data.clean(i) : data.forecast(i, lead);
        const FieldStack out =
            read_grd(root / "stub" / synth::sample_dir_name(i) / ("recon_" + std::to_string(lead) + ".grd"));
        const auto a = norm.normalize(out), b = norm.normalize(cond);
        double worst = 0;
        for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(static_cast<double>(a[k]) - b[k]));
        CHECK(worst < 1e-5);
      }
    const auto prov = nlohmann::json::parse(read_text_file(root / "stub" / "provenance.json"));
    CHECK(prov.at("model_override") == true);
    fs::remove_all(root);
  }

  TEST_CASE("reconstruct and evaluate are deterministic") {
    const auto root = test::temp_dir("cli_det");
    small_run(root);
    for (const char* out : {"r1", "r2"}) {
      REQUIRE(run_cmd("reconstruct", root,
                      with(kGrid16, {{"/checkpoint", "\"pretrain/model.ckpt\""}, {"/out", std::string("\"") + out + "\""}})) ==
              cli::kExitOk);
      REQUIRE(run_cmd("evaluate", root,
                      with(kGrid16, {{"/pred", std::string("\"") + out + "\""},
                                     {"/out", std::string("\"eval_") + out + "\""}})) == cli::kExitOk);
    }
    // The echoed configs differ only in their output directory.
    for (const char* pair : {"", "eval_"}) {
      const fs::path a = root / (std::string(pair) + "r1"), b = root / (std::string(pair) + "r2");
      auto ja = nlohmann::json::parse(read_text_file(a / "resolved_config.json"));
      auto jb = nlohmann::json::parse(read_text_file(b / "resolved_config.json"));
      CHECK(ja.at("config").at("out") != jb.at("config").at("out"));
      ja["config"].erase("out");
      jb["config"].erase("out");
      if (std::string(pair) == "eval_") {
        ja["config"].erase("pred");
        jb["config"].erase("pred");
      }
      CHECK(ja == jb);
      fs::remove(a / "resolved_config.json");
      fs::remove(b / "resolved_config.json");
    }
    CHECK(test::trees_identical(root / "r1", root / "r2"));
    CHECK(test::trees_identical(root / "eval_r1", root / "eval_r2"));
    CHECK(cli::file_fingerprint(root / "r1" / "sample_0000" / "recon_24.grd").size() == 16);
    fs::remove_all(root);
  }
}

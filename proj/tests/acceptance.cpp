// Acceptance suite: one PASS/FAIL line per criterion A1..A9.
// Usage: acceptance [--work DIR] [A1 A2 ...]   (default: every criterion)
// The named extra check `translation` runs only when requested.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tcr/bytes.hpp"
#include "tcr/cli.hpp"
#include "tcr/diag.hpp"
#include "tcr/flow.hpp"
#include "tcr/mmd.hpp"
#include "tcr/synth.hpp"
#include "tcr/track.hpp"
#include "tcr/train.hpp"
#include "tcr/verify.hpp"

namespace fs = std::filesystem;
using namespace tcr;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

fs::path g_work = "acceptance_work";

// Desk protocol shared by A4 and A5.
constexpr std::uint64_t kDataSeed = 20240601;
constexpr int kTrainCount = 448;
constexpr int kSamples = 512;
const std::vector<std::uint64_t> kSeeds{1, 2, 3};

const synth::GeneratedDataset& desk_data() {
  static const synth::GeneratedDataset data = [] {
    synth::GenConfig g;
    g.n_samples = kSamples;
    return synth::GeneratedDataset(g, kDataSeed);
  }();
  return data;
}

std::uint64_t recon_seed(std::uint64_t seed, int sample, int lead) {
  return synth::derive_seed(synth::derive_seed(seed, static_cast<std::uint64_t>(sample)),
                            static_cast<std::uint64_t>(lead));
}

// Reconstructs held-out samples at one lead with Euler N = 8.
std::vector<FieldStack> reconstruct(const net::Checkpoint& ck, const std::vector<int>& samples, int lead,
                                    std::uint64_t seed) {
  const auto& data = desk_data();
  flow::NetVelocity model(ck.config, ck.params);
  const auto norm = train::checkpoint_normalizer(ck);
  std::vector<FieldStack> out;
  for (std::size_t b = 0; b < samples.size(); b += 8) {
    std::vector<FieldStack> conds;
    std::vector<int> leads;
    std::vector<std::uint64_t> seeds;
    for (std::size_t k = b; k < std::min(samples.size(), b + 8); ++k) {
      conds.push_back(lead == 0 ? data.clean(samples[k]) : data.forecast(samples[k], lead));
      leads.push_back(lead);
      seeds.push_back(recon_seed(seed, samples[k], lead));
    }
    auto r = flow::sample_batch(model, norm, conds, leads, seeds, 8, flow::Method::Euler);
    for (auto& s : r) out.push_back(std::move(s));
  }
  return out;
}

std::vector<int> held_out() {
  std::vector<int> s;
  for (int i = kTrainCount; i < kSamples; ++i) s.push_back(i);
  return s;
}

fs::path pretrain_path(std::uint64_t seed) { return g_work / ("a4_pretrain_seed" + std::to_string(seed) + ".ckpt"); }

net::Checkpoint desk_pretrain(std::uint64_t seed, double* smooth_ratio) {
  train::TrainConfig tc;
  tc.stage = train::Stage::Pretrain;
  tc.steps = 2000;
  tc.batch = 8;
  // Chosen on samples 384-447 of a 384-sample training split, not on the held-out set.
  tc.adam.lr = 1e-3;
  tc.adam.warmup_steps = 100;
  tc.train_count = kTrainCount;
  tc.seed = seed;
  const auto r = train::train(tc, net::NetConfig{}, desk_data(), nullptr);
  if (smooth_ratio) {
    const std::size_t w = std::min<std::size_t>(100, r.trace.size() / 2);
    double head = 0, tail = 0;
    for (std::size_t k = 0; k < w; ++k) {
      head += r.trace[k].total;
      tail += r.trace[r.trace.size() - 1 - k].total;
    }
    *smooth_ratio = tail / head;
  }
  fs::create_directories(g_work);
  net::save_checkpoint(pretrain_path(seed), r.checkpoint);
  return r.checkpoint;
}

// ---------------------------------------------------------------------------

Outcome a1() {
  net::NetConfig cfg;
  cfg.grid_h = cfg.grid_w = 16;
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  for (std::uint64_t seed : kSeeds) worst = std::max(worst, cli::gradcheck_seed(cfg, seed, cli::GradcheckSettings{}));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst < 1e-4 && secs < 300.0,
          "max relative error " + fmt("%.3g", worst) + " over 3 seeds (tol 1e-4) in " + fmt("%.0f", secs) + " s (limit 300 s)"};
}

Outcome a2() {
  synth::GenConfig g;
  g.n_samples = 2;
  synth::GeneratedDataset data(g, 7);
  const FieldStack truth = data.truth(0);
  const auto norm = flow::Normalizer::fit({data.truth(0), data.truth(1)});
  const auto target = norm.normalize(truth);
  const auto x0 = flow::gaussian_noise(target.size(), 11);
  std::vector<float> vel(target.size());
  for (std::size_t k = 0; k < vel.size(); ++k) vel[k] = target[k] - x0[k];
  flow::FunctionVelocity constant(kNumChannels, [&](const net::NetBatch<float>&) { return vel; });
  double worst = 0;
  for (int n : {1, 8}) {
    const auto x1 = flow::integrate(constant, x0, std::vector<float>(x0.size(), 0.0f), {0.0}, truth.height(), truth.width(), n,
                                    flow::Method::Euler);
    long double s = 0;
    for (std::size_t k = 0; k < x1.size(); ++k) s += std::pow(static_cast<long double>(x1[k]) - target[k], 2);
    worst = std::max(worst, std::sqrt(static_cast<double>(s / x1.size())));
  }
  flow::FunctionVelocity decay(1, [](const net::NetBatch<float>& b) {
    std::vector<float> v(b.n);
    for (int k = 0; k < b.n; ++k) v[k] = -b.x[2 * k];
    return v;
  });
  const double exact = std::exp(-1.0);
  const double e_euler = std::abs(flow::integrate(decay, {1.0f}, {0.0f}, {0.0}, 1, 1, 2, flow::Method::Euler)[0] - exact);
  const double e_heun = std::abs(flow::integrate(decay, {1.0f}, {0.0f}, {0.0}, 1, 1, 2, flow::Method::Heun)[0] - exact);
  const bool ok = worst < 1e-6 && e_heun < e_euler && std::abs(e_euler - 0.1179) < 1e-4 &&
                  std::abs(e_heun - 0.0227) < 1e-4;
  return {ok, "constant-velocity RMS " + fmt("%.2g", worst) + "; N=2 errors Heun " + fmt("%.4f", e_heun) +
                  " Euler " + fmt("%.4f", e_euler)};
}

Outcome a3() {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> normal;
  auto cloud = [&](int n, int dim, double shift) {
    train::FeatureSet s(n, std::vector<double>(dim));
    for (auto& r : s)
      for (auto& v : r) v = normal(rng);
    for (auto& r : s) r[0] += shift;
    return s;
  };
  const auto x = cloud(64, 8, 0.0);
  const double self = std::abs(train::mmd2(x, x, train::MmdSpec{}));
  double closed = 0;
  for (double d : {0.3, 1.0, 2.5})
    for (double s2 : {0.5, 1.0, 4.0}) {
      const double want = 2.0 * (1.0 - std::exp(-d * d / (2.0 * s2)));
      closed = std::max(closed, std::abs(train::mmd2_with({{0.0, 0.0}}, {{d, 0.0}}, {s2}) - want));
    }
  std::vector<double> m;
  rng.seed(77);
  for (double gap : {0.0, 1.0, 2.0, 4.0}) {
    const auto a = cloud(256, 4, 0.0);
    const auto b = cloud(256, 4, gap);
    m.push_back(train::mmd2(a, b, train::MmdSpec{}));
  }
  const bool mono = std::is_sorted(m.begin(), m.end()) && std::adjacent_find(m.begin(), m.end()) == m.end();
  return {self < 1e-12 && closed < 1e-9 && mono,
          "self " + fmt("%.2g", self) + ", closed-form error " + fmt("%.2g", closed) + ", gaps {0,1,2,4} -> " +
              fmt("%.4f", m[0]) + " " + fmt("%.4f", m[1]) + " " + fmt("%.4f", m[2]) + " " + fmt("%.4f", m[3])};
}

Outcome a4() {
  const auto& data = desk_data();
  const auto samples = held_out();
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed : kSeeds) {
    const auto t0 = std::chrono::steady_clock::now();
    double smooth = 0;
    const auto ck = desk_pretrain(seed, &smooth);
    const auto recon = reconstruct(ck, samples, 0, seed);
    double e_model = 0, e_clean = 0;
    for (std::size_t k = 0; k < samples.size(); ++k) {
      const double truth = verify::max_ws10m(data.truth(samples[k]));
      e_model += std::abs(verify::max_ws10m(recon[k]) - truth);
      e_clean += std::abs(verify::max_ws10m(data.clean(samples[k])) - truth);
    }
    const double ratio = e_model / e_clean;
    if (ratio < 0.6) ++wins;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    detail += " seed" + std::to_string(seed) + ": MAE " + fmt("%.2f", e_model / samples.size()) + " vs clean " +
              fmt("%.2f", e_clean / samples.size()) + " ratio " + fmt("%.3f", ratio) + " loss tail/head " +
              fmt("%.2f", smooth) + " (" + fmt("%.0f", secs) + " s);";
  }
  return {wins >= 2, std::to_string(wins) + "/3 seeds below 0.6;" + detail};
}

Outcome a5() {
  const auto& data = desk_data();
  const auto samples = held_out();
  std::vector<int> leads;
  for (int lead : data.leads())
    if (int b = verify::bucket_of(lead, 24); b == 4 || b == 5) leads.push_back(lead);
  const double threshold = 32.7;
  std::vector<bool> obs;
  for (int lead : leads)
    for (int s : samples) obs.push_back(verify::max_ws10m(data.truth(s)) >= threshold);

  int wins = 0;
  std::string detail;
  for (std::uint64_t seed : kSeeds) {
    net::Checkpoint pre;
    bool loaded = false;
    if (fs::exists(pretrain_path(seed))) {
      pre = net::load_checkpoint(pretrain_path(seed));
      loaded = true;
    } else {
      pre = desk_pretrain(seed, nullptr);
    }
    double csi[2];
    for (int v = 0; v < 2; ++v) {
      train::TrainConfig tc;
      tc.stage = train::Stage::Sft;
      tc.steps = 500;
      tc.batch = 8;
      tc.adam.warmup_steps = 50;
      tc.lambda = v == 0 ? 0.1 : 0.0;
      tc.train_count = kTrainCount;
      tc.seed = seed;
      const auto r = train::train(tc, pre.config, data, &pre);
      std::vector<bool> pred;
      for (int lead : leads)
        for (const auto& s : reconstruct(r.checkpoint, samples, lead, seed))
          pred.push_back(verify::max_ws10m(s) >= threshold);
      csi[v] = verify::csi(pred, obs);
    }
    if (csi[0] >= csi[1]) ++wins;
    detail += " seed" + std::to_string(seed) + ": CSI w/MMD " + fmt("%.3f", csi[0]) + " w/o " + fmt("%.3f", csi[1]) +
              (loaded ? " (cached pretrain);" : ";");
  }
  return {wins >= 2, std::to_string(wins) + "/3 paired seeds favor MMD at 32.7 m/s, buckets 4-5;" + detail};
}

Outcome a6() {
  const GeoWindow dom = GeoWindow::centered({20.0, 140.0}, 10.0, 64, 64);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 50.0);
  auto vortex = [&](LatLon c) {
    synth::HollandParams p;
    p.pc = p.pn - (2000.0 + 6000.0 * u(rng));
    p.rmw_km = 20.0 + 60.0 * u(rng);
    p.B = 1.0 + u(rng);
    p.f = synth::coriolis(c.lat);
    p.center = c;
    return p;
  };
  auto cell_err = [&](const track::CenterResult& r, LatLon c) {
    return std::hypot(r.row_f - dom.row_of_lat(c.lat), r.col_f - dom.col_of_lon(c.lon));
  };
  int clean_ok = 0, noisy_ok = 0;
  for (int k = 0; k < 1200; ++k) {
    const LatLon c{20.0 + 6.0 * (u(rng) - 0.5), 140.0 + 6.0 * (u(rng) - 0.5)};
    const auto r = synth::render_vortex(vortex(c), {}, dom);
    const auto m = r.stack.plane(ChannelId::MSL);
    std::vector<float> f(m.begin(), m.end());
    if (k < 200) {
      if (cell_err(track::find_center(f, dom, std::nullopt, track::TrackerSpec{}), c) <= 1.0) ++clean_ok;
    } else {
      for (auto& v : f) v += static_cast<float>(noise(rng));
      if (cell_err(track::find_center(f, dom, std::nullopt, track::TrackerSpec{}), c) <= 1.0) ++noisy_ok;
    }
  }
  const auto frames =
      synth::render_moving_storm(vortex({17.5, 137.5}), {}, dom, {17.5, 137.5}, {0.25, 0.25}, 20, 6);
  std::vector<FieldStack> seq;
  for (const auto& f : frames) seq.push_back(f.stack);
  const auto trk = track::follow_track(seq, LatLon{17.5, 137.5}, track::TrackerSpec{});
  double mae = 0;
  for (std::size_t k = 0; k < frames.size(); ++k) mae += haversine_km(trk.fixes[k].position(), frames[k].fix.position());
  mae /= frames.size();
  const double cell_km = dom.dlat * kKmPerDegree;
  const bool ok = clean_ok == 200 && noisy_ok >= 990 && mae < cell_km;
  return {ok, "noiseless " + std::to_string(clean_ok) + "/200, 50 Pa noise " + std::to_string(noisy_ok) +
                  "/1000, translating MAE " + fmt("%.2f", mae) + " km (cell " + fmt("%.2f", cell_km) + " km)"};
}

Outcome a7() {
  const GeoWindow g = GeoWindow::centered({20.0, 140.0}, 10.0, 64, 64);
  const LatLon c{20.0, 140.0};
  std::vector<double> f(64 * 64);
  for (int i = 0; i < 64; ++i)
    for (int j = 0; j < 64; ++j) {
      const double dx = (g.lon_of_col(j) - c.lon) * std::cos(c.lat * std::numbers::pi / 180.0) * kKmPerDegree;
      const double dy = (g.lat_of_row(i) - c.lat) * kKmPerDegree;
      const double th = std::atan2(dy, dx);
      f[i * 64 + j] = 30.0 + 10.0 * std::cos(th) + 5.0 * std::cos(4.0 * th - 1.0);
    }
  const auto h = diag::azimuthal_decompose(std::span<const double>(f), g, c, {250.0, 350.0, 450.0});
  double harm = 0;
  for (std::size_t r = 0; r < h.radii.size(); ++r) {
    harm = std::max({harm, std::abs(h.amplitude[r][0] / 30.0 - 1.0), std::abs(h.amplitude[r][1] / 10.0 - 1.0),
                     std::abs(h.amplitude[r][4] / 5.0 - 1.0)});
  }

  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  std::vector<double> noise(64 * 64);
  for (auto& v : noise) v = 3.0 + normal(rng);
  double mean = 0, ss = 0;
  for (double v : noise) mean += v;
  mean /= noise.size();
  for (double v : noise) ss += (v - mean) * (v - mean);
  const double parseval = std::abs(diag::power_spectrum(std::span<const double>(noise), 64, 64).total() - ss) / ss;

  std::vector<double> mode(64 * 64);
  for (int i = 0; i < 64; ++i)
    for (int j = 0; j < 64; ++j) mode[i * 64 + j] = std::cos(2.0 * std::numbers::pi * (5 * j + 3 * i) / 64.0);
  const auto ms = diag::power_spectrum(std::span<const double>(mode), 64, 64);
  const auto peak = std::max_element(ms.power.begin(), ms.power.end());
  const double concentration = *peak / ms.total();

  const auto& data = desk_data();
  int reduced = 0;
  for (int i = 0; i < kSamples; ++i) {
    const auto t = diag::power_spectrum(data.truth(i).plane(ChannelId::WS10M), 64, 64);
    const auto b = diag::power_spectrum(data.clean(i).plane(ChannelId::WS10M), 64, 64);
    if (b.top_half(64) < t.top_half(64)) ++reduced;
  }
  const bool ok = harm < 0.01 && parseval < 1e-6 && concentration >= 0.999 && reduced == kSamples;
  return {ok, "harmonic error " + fmt("%.2g", harm) + ", Parseval " + fmt("%.2g", parseval) + ", concentration " +
                  fmt("%.6f", concentration) + ", blur reduced top-half power on " + std::to_string(reduced) + "/512"};
}

Outcome a8() {
  const double c = verify::csi({true, true, false, false}, {true, false, false, false});
  const std::vector<double> p{2.0, 1.0}, o{0.0, 2.0};
  const double r = verify::rmse(p, o);
  const double h1 = haversine_km({0.0, 0.0}, {0.0, 1.0});
  const double h2 = haversine_km({0.0, 0.0}, {90.0, 0.0});

  synth::GenConfig g;
  g.n_samples = 16;
  g.grid_h = g.grid_w = 32;
  synth::GeneratedDataset data(g, 3);
  std::vector<verify::EvalItem> items;
  for (int i = 0; i < data.size(); ++i)
    for (int lead : data.leads()) {
      if (lead == 0) continue;
      items.push_back({i, lead, data.forecast(i, lead), data.truth(i), data.meta(i).fix.position()});
    }
  bool reports_ok = true;
  int reports = 0;
  for (auto mode : {verify::CsiMode::Event, verify::CsiMode::Gridwise}) {
    verify::EvalConfig cfg;
    cfg.csi_mode = mode;
    const auto rep = verify::evaluate_items(items, cfg);
    ++reports;
    try {
      rep.check_invariants();
    } catch (const std::exception&) {
      reports_ok = false;
    }
    for (const auto& b : rep.buckets)
      if (b.present && b.rmse < std::abs(b.bias)) reports_ok = false;
  }
  const bool ok = c == 0.5 && std::abs(r - std::sqrt(2.5)) < 1e-12 && std::abs(h1 - 111.195) < 1e-3 &&
                  std::abs(h2 - 10007.543) < 1e-3 && reports_ok;
  return {ok, "CSI " + fmt("%.17g", c) + ", RMSE-sqrt(2.5) " + fmt("%.2g", r - std::sqrt(2.5)) + ", haversine " +
                  fmt("%.4f", h1) + " / " + fmt("%.4f", h2) + " km, RMSE>=|Bias| on " + std::to_string(reports) +
                  " reports: " + (reports_ok ? "yes" : "no")};
}

bool same_tree(const fs::path& a, const fs::path& b, std::string& first_diff, std::size_t& files) {
  std::set<fs::path> ra, rb;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) ra.insert(fs::relative(e.path(), a));
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) rb.insert(fs::relative(e.path(), b));
  files = ra.size();
  if (ra != rb) {
    first_diff = "file sets differ";
    return false;
  }
  for (const auto& rel : ra)
    if (read_file_bytes(a / rel) != read_file_bytes(b / rel)) {
      first_diff = rel.string();
      return false;
    }
  return true;
}

Outcome a9() {
  const fs::path r1 = g_work / "a9_run1", r2 = g_work / "a9_run2";
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& dir : {r1, r2}) {
    fs::remove_all(dir);
    cli::Invocation inv;
    inv.command = "pipeline";
    inv.run_dir = dir;
    inv.overrides = {{"/profile", "tiny"}, {"/threads", "1"}};
    std::ostringstream out, log;
    const int rc = cli::run(inv, out, log);
    if (rc != cli::kExitOk) return {false, "pipeline exited " + std::to_string(rc) + ": " + log.str()};
  }
  std::string diff;
  std::size_t files = 0;
  const bool ok = same_tree(r1, r2, diff, files);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {ok, ok ? std::to_string(files) + " artifacts byte-identical across two tiny runs (" + fmt("%.0f", secs) + " s)"
                 : "first difference: " + diff};
}

// Property check on a trained desk network: a one-cell eastward input shift
// should move the output interior (4-cell border cropped) by one cell,
// within 1e-3 RMS in normalized units.
Outcome translation() {
  const std::uint64_t seed = kSeeds.front();
  const net::Checkpoint ck =
      fs::exists(pretrain_path(seed)) ? net::load_checkpoint(pretrain_path(seed)) : desk_pretrain(seed, nullptr);
  const auto norm = train::checkpoint_normalizer(ck);
  const auto& data = desk_data();
  const int h = ck.config.grid_h, w = ck.config.grid_w, c = kNumChannels, crop = 4;
  std::mt19937_64 rng(synth::derive_seed(seed, 7));
  std::normal_distribution<float> normal;
  double worst = 0, sum = 0;
  int cases = 0;
  for (int s = kTrainCount; s < kTrainCount + 8; ++s)
    for (double t : {0.1, 0.5, 0.9}) {
      const auto x1 = norm.normalize(data.truth(s));
      const auto cond = norm.normalize(data.clean(s));
      const std::size_t m = x1.size();
      std::vector<float> in(2 * m);
      for (std::size_t q = 0; q < m; ++q) {
        in[q] = static_cast<float>((1.0 - t) * normal(rng) + t * x1[q]);
        in[m + q] = cond[q];
      }
      std::vector<float> shifted(in.size());
      for (int ch = 0; ch < 2 * c; ++ch)
        for (int i = 0; i < h; ++i)
          for (int j = 0; j < w; ++j)
            shifted[(static_cast<std::size_t>(ch) * h + i) * w + j] =
                in[(static_cast<std::size_t>(ch) * h + i) * w + std::max(0, j - 1)];
      const auto va = net::forward(ck.config, ck.params, net::NetBatch<float>{1, in, {t}, {0.0}}).v;
      const auto vb = net::forward(ck.config, ck.params, net::NetBatch<float>{1, shifted, {t}, {0.0}}).v;
      double se = 0;
      int n = 0;
      for (int ch = 0; ch < c; ++ch)
        for (int i = crop; i < h - crop; ++i)
          for (int j = crop + 1; j < w - crop; ++j) {
            const std::size_t k = (static_cast<std::size_t>(ch) * h + i) * w + j;
            const double d = static_cast<double>(vb[k]) - va[k - 1];
            se += d * d;
            ++n;
          }
      const double rms = std::sqrt(se / n);
      worst = std::max(worst, rms);
      sum += rms;
      ++cases;
    }
  return {worst < 1e-3, "one-cell shift interior RMS mean " + fmt("%.3g", sum / cases) + " worst " +
                            fmt("%.3g", worst) + " over " + std::to_string(cases) + " cases (tol 1e-3)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> all{
      {"A1", a1}, {"A2", a2}, {"A3", a3}, {"A4", a4}, {"A5", a5}, {"A6", a6}, {"A7", a7}, {"A8", a8}, {"A9", a9}};
  const std::vector<std::pair<std::string, std::function<Outcome()>>> extra{{"translation", translation}};
  std::set<std::string> wanted;
  for (int k = 1; k < argc; ++k) {
    const std::string a = argv[k];
    if (a == "--work" && k + 1 < argc) {
      g_work = argv[++k];
    } else {
      wanted.insert(a);
    }
  }
  int failed = 0;
  auto checks = all;
  for (const auto& e : extra)
    if (wanted.count(e.first)) checks.push_back(e);
  for (const auto& [name, fn] : checks) {
    if (!wanted.empty() && !wanted.count(name)) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << name << " " << (o.pass ? "PASS" : "FAIL") << " " << o.detail << std::endl;
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}

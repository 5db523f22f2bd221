#include "tcr/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ostream>
#include <random>
#include <set>

#include "tcr/bytes.hpp"
#include "tcr/diag.hpp"
#include "tcr/error.hpp"
#include "tcr/grd_io.hpp"
#include "tcr/synth.hpp"
#include "tcr/track.hpp"
#include "tcr/train.hpp"
#include "tcr/verify.hpp"

namespace tcr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string>& commands() {
  static const std::vector<std::string> c{"gen",      "pretrain", "sft",      "reconstruct", "track",
                                          "evaluate", "diagnose", "pipeline", "gradcheck"};
  return c;
}

// ---------------------------------------------------------------- schemas

namespace {

using config::Bound;
using config::ElementKind;
using config::Schema;

Bound at_least(double v) { return {v, std::nullopt, false, false}; }
Bound above(double v) { return {v, std::nullopt, true, false}; }
Bound within(double lo, double hi) { return {lo, hi, false, false}; }

void add_header(Schema& s, int grid, const std::string& prefix = "") {
  s.defaults["seed"] = 20240601;
  s.defaults["threads"] = 1;
  s.defaults["grid"] = {{"h", grid}, {"w", grid}};
  s.bounds[prefix + "/seed"] = at_least(0);
  s.bounds[prefix + "/threads"] = at_least(1);
  s.bounds[prefix + "/grid/h"] = within(8, 1024);
  s.bounds[prefix + "/grid/w"] = within(8, 1024);
}

json dataset_block(const synth::GenConfig& g) {
  json d = g.to_json();
  d.erase("grid_h");
  d.erase("grid_w");
  return d;
}

void add_dataset_rules(Schema& s, const std::string& p) {
  s.bounds[p + "/n_samples"] = at_least(1);
  s.bounds[p + "/extent_deg"] = Bound{0.0, 60.0, true, false};
  s.bounds[p + "/leads"] = within(0, 24 * 30);
  s.array_kinds[p + "/leads"] = ElementKind::Int;
  for (const char* r : {"vmax_range", "b_range", "rmw_range", "lat_range", "lon_range"}) {
    s.array_lengths[p + "/" + r] = 2;
  }
  s.bounds[p + "/degrade/down_ratio"] = at_least(1);
  s.bounds[p + "/degrade/blur_sigma_cells"] = at_least(0);
}

json net_block(int width) {
  return {{"base_width", width}, {"levels", 3}, {"attention", true}, {"embed_dim", 64}};
}

void add_net_rules(Schema& s, const std::string& p) {
  s.bounds[p + "/base_width"] = within(1, 512);
  s.bounds[p + "/levels"] = within(1, 6);
  s.bounds[p + "/embed_dim"] = within(2, 4096);
}

json hyper_block(int steps, int batch, int warmup, bool paired) {
  json h = {{"steps", steps}, {"batch", batch},        {"lr", 2e-4},      {"warmup", warmup},
            {"clip", 1.0},    {"beta1", 0.9},          {"beta2", 0.999},  {"eps", 1e-8},
            {"train_count", -1}, {"log_every", 1}};
  if (paired) {
    h["lambda"] = 0.1;
    h["bandwidth_multipliers"] = {0.5, 1.0, 2.0};
    h["bucket_hours"] = 24;
    h["leads"] = json::array();
  }
  return h;
}

void add_hyper_rules(Schema& s, const std::string& p) {
  s.bounds[p + "/steps"] = at_least(0);
  s.bounds[p + "/batch"] = within(1, 4096);
  s.bounds[p + "/lr"] = above(0);
  s.bounds[p + "/warmup"] = at_least(0);
  s.bounds[p + "/clip"] = at_least(0);
  s.bounds[p + "/beta1"] = Bound{0.0, 1.0, false, true};
  s.bounds[p + "/beta2"] = Bound{0.0, 1.0, false, true};
  s.bounds[p + "/eps"] = above(0);
  s.bounds[p + "/train_count"] = at_least(-1);
  s.bounds[p + "/log_every"] = at_least(1);
  s.bounds[p + "/lambda"] = at_least(0);
  s.bounds[p + "/bandwidth_multipliers"] = above(0);
  s.bounds[p + "/bucket_hours"] = at_least(1);
  s.bounds[p + "/leads"] = at_least(0);
  s.array_kinds[p + "/leads"] = ElementKind::Int;
}

json tracker_block() {
  const track::TrackerSpec t;
  return {{"smooth_sigma_cells", t.smooth_sigma_cells},
          {"search_radius_deg", t.search_radius_deg},
          {"refine", t.refine},
          {"max_jump_kmh", t.max_jump_kmh}};
}

void add_tracker_rules(Schema& s, const std::string& p) {
  s.bounds[p + "/smooth_sigma_cells"] = at_least(0);
  s.bounds[p + "/search_radius_deg"] = above(0);
  s.bounds[p + "/max_jump_kmh"] = above(0);
}

json sampler_block() { return {{"steps", 8}, {"method", "euler"}}; }

void add_sampler_rules(Schema& s, const std::string& p) {
  s.bounds[p + "/steps"] = within(1, 10000);
  s.choices[p + "/method"] = {"euler", "heun"};
}

json eval_block() {
  json e = verify::EvalConfig{}.to_json();
  e.erase("pred_prefix");
  e.erase("first_sample");
  e.erase("sample_count");
  return e;
}

void add_eval_rules(Schema& s, const std::string& p) {
  s.array_kinds[p + "/thresholds"] = ElementKind::Number;
  s.bounds[p + "/buckets"] = at_least(0);
  s.bounds[p + "/bucket_hours"] = at_least(1);
  s.choices[p + "/csi_mode"] = {"event", "gridwise"};
  add_tracker_rules(s, p + "/tracker");
}

std::vector<int> tiny_leads() { return {24, 48, 72, 96, 120}; }

Schema pipeline_schema(const std::string& profile) {
  const bool tiny = profile == "tiny";
  Schema s;
  s.defaults["profile"] = profile;
  s.choices["/profile"] = {"tiny", "desk"};
  add_header(s, tiny ? 32 : 64);
  synth::GenConfig g;
  g.n_samples = tiny ? 32 : 512;
  g.leads = tiny_leads();
  s.defaults["dataset"] = dataset_block(g);
  add_dataset_rules(s, "/dataset");
  s.defaults["net"] = net_block(tiny ? 8 : 16);
  add_net_rules(s, "/net");
  s.defaults["pretrain"] = hyper_block(tiny ? 200 : 2000, tiny ? 4 : 8, tiny ? 20 : 500, false);
  add_hyper_rules(s, "/pretrain");
  s.defaults["sft"] = hyper_block(tiny ? 200 : 500, tiny ? 4 : 8, tiny ? 20 : 50, true);
  add_hyper_rules(s, "/sft");
  s.defaults["e2e_steps"] = tiny ? 400 : 2500;
  s.bounds["/e2e_steps"] = at_least(0);
  s.defaults["holdout"] = tiny ? 8 : 64;
  s.bounds["/holdout"] = at_least(1);
  s.defaults["recon"] = {{"leads", json::array()}, {"sampler", sampler_block()}, {"batch", 8}};
  s.array_kinds["/recon/leads"] = ElementKind::Int;
  s.bounds["/recon/leads"] = at_least(0);
  s.bounds["/recon/batch"] = within(1, 4096);
  add_sampler_rules(s, "/recon/sampler");
  s.defaults["eval"] = eval_block();
  add_eval_rules(s, "/eval");
  s.defaults["disk_budget_mb"] = tiny ? 1024.0 : 8192.0;
  s.bounds["/disk_budget_mb"] = above(0);
  return s;
}

}  // namespace

config::Schema command_schema(const std::string& command, const std::string& profile) {
  Schema s;
  if (command == "gen") {
    add_header(s, 64);
    s.defaults["dataset"] = dataset_block(synth::GenConfig{});
    add_dataset_rules(s, "/dataset");
    s.defaults["out"] = "data";
  } else if (command == "pretrain" || command == "sft") {
    const bool paired = command == "sft";
    add_header(s, 64);
    s.defaults["data"] = "data";
    s.defaults["out"] = command;
    s.defaults["net"] = net_block(16);
    add_net_rules(s, "/net");
    s.defaults["hyper"] = hyper_block(paired ? 500 : 2000, 8, paired ? 50 : 500, paired);
    add_hyper_rules(s, "/hyper");
    if (paired) {
      s.defaults["init"] = "pretrain/model.ckpt";
      s.defaults["stage"] = "sft";
      s.choices["/stage"] = {"sft", "e2e"};
    }
  } else if (command == "reconstruct") {
    add_header(s, 64);
    s.defaults["checkpoint"] = "sft/model.ckpt";
    s.defaults["mode"] = "dataset";
    s.choices["/mode"] = {"dataset", "sequence"};
    s.defaults["data"] = "data";
    s.defaults["first_sample"] = 0;
    s.bounds["/first_sample"] = at_least(0);
    s.defaults["sample_count"] = -1;
    s.bounds["/sample_count"] = at_least(-1);
    s.defaults["leads"] = json::array();
    s.array_kinds["/leads"] = ElementKind::Int;
    s.bounds["/leads"] = at_least(0);
    s.defaults["sequence"] = "";
    s.defaults["init_center"] = json::array();
    s.array_kinds["/init_center"] = ElementKind::Number;
    s.defaults["tracker"] = tracker_block();
    add_tracker_rules(s, "/tracker");
    s.defaults["sampler"] = sampler_block();
    add_sampler_rules(s, "/sampler");
    s.defaults["batch"] = 8;
    s.bounds["/batch"] = within(1, 4096);
    s.defaults["out"] = "recon";
  } else if (command == "track") {
    add_header(s, 64);
    s.defaults["sequence"] = "";
    s.defaults["init_center"] = json::array();
    s.array_kinds["/init_center"] = ElementKind::Number;
    s.defaults["tracker"] = tracker_block();
    add_tracker_rules(s, "/tracker");
    s.defaults["out"] = "track";
  } else if (command == "evaluate") {
    add_header(s, 64);
    s.defaults["pred"] = "recon";
    s.defaults["truth"] = "data";
    s.defaults["pred_prefix"] = "recon_";
    s.defaults["first_sample"] = 0;
    s.bounds["/first_sample"] = at_least(0);
    s.defaults["sample_count"] = -1;
    s.bounds["/sample_count"] = at_least(-1);
    s.defaults["eval"] = eval_block();
    add_eval_rules(s, "/eval");
    s.defaults["out"] = "eval";
  } else if (command == "diagnose") {
    add_header(s, 64);
    s.defaults["input"] = "";
    s.defaults["center"] = json::array();
    s.array_kinds["/center"] = ElementKind::Number;
    json radii = json::array();
    for (int r = 10; r <= 400; r += 10) radii.push_back(static_cast<double>(r));
    s.defaults["radii_km"] = radii;
    s.bounds["/radii_km"] = at_least(0);
    s.defaults["n_theta"] = 128;
    s.bounds["/n_theta"] = within(4, 65536);
    s.defaults["k_max"] = 20;
    s.bounds["/k_max"] = at_least(0);
    json edges = json::array();
    for (int e = 0; e <= 90; e += 2) edges.push_back(static_cast<double>(e));
    s.defaults["pdf_edges"] = edges;
    s.defaults["out"] = "diag";
  } else if (command == "gradcheck") {
    add_header(s, 16);
    s.defaults["net"] = net_block(8);
    add_net_rules(s, "/net");
    s.defaults["seeds"] = {1, 2, 3};
    s.bounds["/seeds"] = at_least(0);
    s.defaults["fraction"] = 0.01;
    s.bounds["/fraction"] = Bound{0.0, 1.0, true, false};
    s.defaults["min_entries"] = 200;
    s.bounds["/min_entries"] = at_least(1);
    s.defaults["eps"] = 1e-5;
    s.bounds["/eps"] = above(0);
    s.defaults["tol"] = 1e-4;
    s.bounds["/tol"] = above(0);
    s.defaults["batch"] = 2;
    s.bounds["/batch"] = within(2, 64);
    s.defaults["lambda"] = 0.5;
    s.bounds["/lambda"] = at_least(0);
    s.defaults["sigma2"] = {0.5, 2.0};
    s.bounds["/sigma2"] = above(0);
    s.defaults["out"] = "gradcheck";
  } else if (command == "pipeline") {
    if (profile != "tiny" && profile != "desk") throw ConfigError("config /profile: unknown profile '" + profile + "'");
    return pipeline_schema(profile);
  } else {
    throw ConfigError("unknown command '" + command + "'");
  }
  return s;
}

json resolve_config(const std::string& command, const json& user) {
  std::string profile = "tiny";
  if (command == "pipeline" && user.is_object() && user.contains("profile")) {
    if (!user.at("profile").is_string()) throw ConfigError("config /profile: expected string");
    profile = user.at("profile").get<std::string>();
    if (profile != "tiny" && profile != "desk") {
      throw ConfigError("config /profile: '" + profile + "' is not one of {tiny, desk}");
    }
  }
  return config::resolve(user, command_schema(command, profile));
}

json parse_config(const std::string& command, const fs::path& path) {
  return resolve_config(command, path.empty() ? json::object() : config::read_json_file(path));
}

fs::path default_run_root() {
  const char* env = std::getenv(kRunRootEnv);
  return (env && *env) ? fs::path(env) : fs::path("runs");
}

std::string file_fingerprint(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------- helpers

namespace {

std::string str(const json& cfg, const char* key) { return cfg.at(key).get<std::string>(); }

fs::path output_dir(const fs::path& root, const json& cfg, const char* key = "out") {
  const fs::path rel = fs::path(str(cfg, key)).lexically_normal();
  if (rel.empty() || rel.is_absolute() || *rel.begin() == "..") {
    throw ConfigError(std::string("config /") + key + ": output paths must be relative and stay under the run directory");
  }
  return root / rel;
}

fs::path input_path(const fs::path& root, const json& cfg, const char* key) {
  const std::string p = str(cfg, key);
  if (p.empty()) throw ConfigError(std::string("config /") + key + ": path required");
  const fs::path path(p);
  return path.is_absolute() ? path : root / path;
}

void echo_config(const fs::path& dir, const std::string& command, const json& cfg) {
  fs::create_directories(dir);
  write_text_file(dir / "resolved_config.json", json{{"command", command}, {"config", cfg}}.dump(2) + "\n");
}

void check_threads(const json& cfg, std::ostream& log) {
  if (cfg.at("threads").get<int>() > 1) log << "note: this build runs single-threaded; threads > 1 is ignored\n";
}

std::optional<LatLon> center_of(const json& arr, const char* key) {
  if (arr.empty()) return std::nullopt;
  if (arr.size() != 2) throw ConfigError(std::string("config /") + key + ": expected [lat, lon]");
  return LatLon{arr[0].get<double>(), arr[1].get<double>()};
}

net::NetConfig net_config(const json& n, const json& header) {
  net::NetConfig c;
  c.base_width = n.at("base_width").get<int>();
  c.levels = n.at("levels").get<int>();
  c.attn_at_bottleneck = n.at("attention").get<bool>();
  c.embed_dim = n.at("embed_dim").get<int>();
  c.grid_h = header.at("grid").at("h").get<int>();
  c.grid_w = header.at("grid").at("w").get<int>();
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config /net: ") + e.what());
  }
  return c;
}

synth::GenConfig gen_config(const json& d, const json& header) {
  json j = d;
  j["grid_h"] = header.at("grid").at("h");
  j["grid_w"] = header.at("grid").at("w");
  auto g = synth::GenConfig::from_json(j);
  g.validate();
  return g;
}

train::TrainConfig train_config(const json& h, train::Stage stage, const json& header) {
  train::TrainConfig t;
  t.stage = stage;
  t.steps = h.at("steps").get<int>();
  t.batch = h.at("batch").get<int>();
  t.adam.lr = h.at("lr").get<double>();
  t.adam.warmup_steps = h.at("warmup").get<int>();
  t.adam.clip_norm = h.at("clip").get<double>();
  t.adam.beta1 = h.at("beta1").get<double>();
  t.adam.beta2 = h.at("beta2").get<double>();
  t.adam.eps = h.at("eps").get<double>();
  t.train_count = h.at("train_count").get<int>();
  t.log_every = h.at("log_every").get<int>();
  if (h.contains("lambda")) {
    t.lambda = h.at("lambda").get<double>();
    t.bandwidth_multipliers = h.at("bandwidth_multipliers").get<std::vector<double>>();
    t.bucket_hours = h.at("bucket_hours").get<int>();
    t.leads = h.at("leads").get<std::vector<int>>();
  }
  t.seed = header.at("seed").get<std::uint64_t>();
  t.threads = 1;
  t.validate();
  return t;
}

void check_grid(const json& header, int h, int w, const std::string& what) {
  const int gh = header.at("grid").at("h").get<int>(), gw = header.at("grid").at("w").get<int>();
  if (gh != h || gw != w) {
    throw ConfigError("config /grid: " + std::to_string(gh) + "x" + std::to_string(gw) + " does not match the " + what +
                      " grid " + std::to_string(h) + "x" + std::to_string(w));
  }
}

std::vector<fs::path> sequence_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("sequence directory not found: " + dir.string());
  std::vector<fs::path> frames;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".grd") frames.push_back(e.path());
  std::sort(frames.begin(), frames.end());
  if (frames.empty()) throw DataError("no .grd frames in " + dir.string());
  return frames;
}

std::vector<FieldStack> load_frames(const fs::path& dir) {
  std::vector<FieldStack> seq;
  for (const auto& f : sequence_frames(dir)) seq.push_back(read_grd(f));
  return seq;
}

track::TrackerSpec tracker_spec(const json& t) {
  track::TrackerSpec s;
  s.smooth_sigma_cells = t.at("smooth_sigma_cells").get<double>();
  s.search_radius_deg = t.at("search_radius_deg").get<double>();
  s.refine = t.at("refine").get<bool>();
  s.max_jump_kmh = t.at("max_jump_kmh").get<double>();
  return s;
}

std::uint64_t item_seed(std::uint64_t seed, int sample, int lead) {
  return synth::derive_seed(synth::derive_seed(seed, static_cast<std::uint64_t>(sample)),
                            static_cast<std::uint64_t>(lead));
}

}  // namespace

// ---------------------------------------------------------------- commands

void cmd_gen(const json& cfg, const fs::path& root, std::ostream& log) {
  check_threads(cfg, log);
  const auto g = gen_config(cfg.at("dataset"), cfg);
  const fs::path out = output_dir(root, cfg);
  log << "gen: " << g.n_samples << " samples, " << g.leads.size() << " leads -> " << out.string() << "\n";
  synth::gen_dataset(g, cfg.at("seed").get<std::uint64_t>(), out);
  echo_config(out, "gen", cfg);
}

void cmd_train(const std::string& command, const json& cfg, const fs::path& root, std::ostream& log) {
  check_threads(cfg, log);
  const fs::path data_dir = input_path(root, cfg, "data");
  synth::DiskDataset data(data_dir);
  const FieldStack probe = data.truth(0);
  check_grid(cfg, probe.height(), probe.width(), "dataset");

  train::Stage stage = train::Stage::Pretrain;
  if (command == "sft") stage = train::stage_from_string(str(cfg, "stage"));
  std::optional<net::Checkpoint> init;
  net::NetConfig nc;
  if (stage == train::Stage::Sft) {
    init = net::load_checkpoint(input_path(root, cfg, "init"));
    nc = init->config;
    check_grid(cfg, nc.grid_h, nc.grid_w, "checkpoint");
  } else {
    nc = net_config(cfg.at("net"), cfg);
  }
  const auto tc = train_config(cfg.at("hyper"), stage, cfg);
  const fs::path out = output_dir(root, cfg);
  log << command << " (" << train::to_string(stage) << "): " << tc.steps << " steps, batch " << tc.batch << "\n";
  const int every = std::max(1, tc.steps / 10);
  const auto res = train::train(tc, nc, data, init ? &*init : nullptr, [&](const train::LossRow& r) {
    if (r.step % every == 0 || r.step + 1 == tc.steps) log << "  step " << r.step << " loss " << r.total << "\n";
  });
  fs::create_directories(out);
  net::save_checkpoint(out / "model.ckpt", res.checkpoint);
  write_text_file(out / "trace.csv", train::trace_csv(res.trace, res.format));
  json summary = {{"stage", train::to_string(stage)},
                  {"steps", tc.steps},
                  {"skipped_steps", res.skipped_steps},
                  {"final_loss", res.trace.empty() ? 0.0 : res.trace.back().total}};
  write_text_file(out / "summary.json", summary.dump(2) + "\n");
  echo_config(out, command, cfg);
}

void cmd_reconstruct(const json& cfg, const fs::path& root, std::ostream& log, const flow::VelocityModel* model) {
  check_threads(cfg, log);
  const fs::path ck_path = input_path(root, cfg, "checkpoint");
  const net::Checkpoint ck = net::load_checkpoint(ck_path);
  check_grid(cfg, ck.config.grid_h, ck.config.grid_w, "checkpoint");
  const flow::Normalizer norm = train::checkpoint_normalizer(ck);
  const bool overridden = model != nullptr;
  std::optional<flow::NetVelocity> net_model;
  if (!model) {
    net_model.emplace(ck.config, ck.params);
    model = &*net_model;
  }
  const int steps = cfg.at("sampler").at("steps").get<int>();
  const flow::Method method = flow::method_from_string(str(cfg.at("sampler"), "method"));
  const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
  const int batch = cfg.at("batch").get<int>();
  const fs::path out = output_dir(root, cfg);

  struct Job {
    FieldStack cond;
    int lead;
    std::uint64_t seed;
    fs::path dest;
  };
  std::vector<Job> jobs;
  std::optional<CycloneTrack> trk;
  if (str(cfg, "mode") == "dataset") {
    synth::DiskDataset data(input_path(root, cfg, "data"));
    const int first = cfg.at("first_sample").get<int>();
    const int count = cfg.at("sample_count").get<int>();
    const int last = count < 0 ? data.size() : std::min(data.size(), first + count);
    if (first >= last) throw ConfigError("config /first_sample: no samples selected");
    std::vector<int> leads = cfg.at("leads").get<std::vector<int>>();
    if (leads.empty()) leads = data.leads();
    for (int i = first; i < last; ++i)
      for (int lead : leads) {
        FieldStack c = lead == 0 ? data.clean(i) : data.forecast(i, lead);
        jobs.push_back({std::move(c), lead, item_seed(seed, i, lead),
                        out / synth::sample_dir_name(i) / ("recon_" + std::to_string(lead) + ".grd")});
      }
  } else {
    const auto seq = load_frames(input_path(root, cfg, "sequence"));
    const auto init_center = center_of(cfg.at("init_center"), "init_center");
    trk = track::follow_track(seq, init_center, tracker_spec(cfg.at("tracker")));
    if (trk->fixes.front().gap && !init_center) {
      throw DataError("tracker is low-confidence on the first frame; supply /init_center");
    }
    const double size_deg = ck.config.grid_h * seq.front().geo().dlat;
    const auto crops = track::extract_following_windows(seq, *trk, size_deg);
    for (std::size_t k = 0; k < crops.size(); ++k) {
      const FieldStack& c = crops[k].stack;
      if (c.height() != ck.config.grid_h || c.width() != ck.config.grid_w) {
        throw DataError("vortex-following crop does not match the checkpoint grid");
      }
      char name[32];
      std::snprintf(name, sizeof name, "frame_%04zu.grd", k);
      jobs.push_back({c, c.lead_hours(), item_seed(seed, static_cast<int>(k), c.lead_hours()), out / name});
    }
  }
  log << "reconstruct: " << jobs.size() << " stacks, " << steps << " " << flow::to_string(method) << " steps\n";
  for (std::size_t b = 0; b < jobs.size(); b += batch) {
    const std::size_t e = std::min(jobs.size(), b + batch);
    std::vector<FieldStack> conds;
    std::vector<int> leads;
    std::vector<std::uint64_t> seeds;
    for (std::size_t k = b; k < e; ++k) {
      conds.push_back(jobs[k].cond);
      leads.push_back(jobs[k].lead);
      seeds.push_back(jobs[k].seed);
    }
    const auto outs = flow::sample_batch(*model, norm, conds, leads, seeds, steps, method);
    for (std::size_t k = b; k < e; ++k) {
      fs::create_directories(jobs[k].dest.parent_path());
      write_grd(jobs[k].dest, outs[k - b]);
    }
  }
  fs::create_directories(out);
  if (trk) write_text_file(out / "track.csv", track::track_csv(*trk));
  json prov = {{"checkpoint", str(cfg, "checkpoint")},
               {"checkpoint_fnv1a64", file_fingerprint(ck_path)},
               {"sampler", {{"steps", steps}, {"method", flow::to_string(method)}}},
               {"seed", seed},
               {"mode", str(cfg, "mode")},
               {"stacks", jobs.size()},
               {"model_override", overridden}};
  write_text_file(out / "provenance.json", prov.dump(2) + "\n");
  echo_config(out, "reconstruct", cfg);
}

void cmd_track(const json& cfg, const fs::path& root, std::ostream& log) {
  check_threads(cfg, log);
  const auto seq = load_frames(input_path(root, cfg, "sequence"));
  const auto t = track::follow_track(seq, center_of(cfg.at("init_center"), "init_center"),
                                     tracker_spec(cfg.at("tracker")));
  const fs::path out = output_dir(root, cfg);
  fs::create_directories(out);
  write_text_file(out / "track.csv", track::track_csv(t));
  int gaps = 0;
  for (const auto& f : t.fixes) gaps += f.gap ? 1 : 0;
  log << "track: " << t.fixes.size() << " fixes, " << gaps << " gaps\n";
  echo_config(out, "track", cfg);
}

void cmd_evaluate(const json& cfg, const fs::path& root, std::ostream& log) {
  check_threads(cfg, log);
  json e = cfg.at("eval");
  e["pred_prefix"] = cfg.at("pred_prefix");
  e["first_sample"] = cfg.at("first_sample");
  e["sample_count"] = cfg.at("sample_count");
  const auto ec = verify::EvalConfig::from_json(e);
  const auto rep = verify::evaluate_run(input_path(root, cfg, "pred"), input_path(root, cfg, "truth"), ec);
  const fs::path out = output_dir(root, cfg);
  verify::write_report(rep, out);
  log << "evaluate: " << rep.residuals.size() << " predictions\n";
  echo_config(out, "evaluate", cfg);
}

void cmd_diagnose(const json& cfg, const fs::path& root, std::ostream& log) {
  check_threads(cfg, log);
  const FieldStack s = read_grd(input_path(root, cfg, "input"));
  const GeoWindow& g = s.geo();
  LatLon center;
  if (auto c = center_of(cfg.at("center"), "center")) {
    center = *c;
  } else {
    center = track::find_center(s.plane(ChannelId::MSL), g, std::nullopt, track::TrackerSpec{}).position;
  }
  const auto radii = cfg.at("radii_km").get<std::vector<double>>();
  const int n_theta = cfg.at("n_theta").get<int>();
  const int k_max = cfg.at("k_max").get<int>();
  if (k_max > n_theta / 2 - 1) throw ConfigError("config /k_max: must be <= n_theta/2 - 1");
  const auto wind = diag::tangential_radial(s.plane(ChannelId::U10M), s.plane(ChannelId::V10M), g, center);
  const auto vt = diag::azimuthal_mean(wind.vt, g, center, radii, n_theta);
  const auto ur = diag::azimuthal_mean(wind.ur, g, center, radii, n_theta);
  const auto harm = diag::azimuthal_decompose(s.plane(ChannelId::WS10M), g, center, radii, n_theta, k_max);
  const fs::path out = output_dir(root, cfg);
  fs::create_directories(out);
  write_text_file(out / "profile_vt.csv", diag::profile_csv(vt));
  write_text_file(out / "profile_ur.csv", diag::profile_csv(ur));
  write_text_file(out / "harmonics_ws10m.csv", diag::harmonics_csv(harm));
  json summary = {{"center", {center.lat, center.lon}}, {"max_ws10m", verify::max_ws10m(s)}};
  if (vt.radii.size() >= 3) {
    const auto rmw = diag::radius_of_max_wind(vt);
    summary["rmw_km"] = rmw.radius_km;
    summary["rmw_at_boundary"] = rmw.at_boundary;
  }
  if (g.h == g.w) {
    write_text_file(out / "spectrum_ws10m.csv", diag::spectrum_csv(diag::power_spectrum(s.plane(ChannelId::WS10M), g.h, g.w)));
    write_text_file(out / "spectrum_ke.csv",
                    diag::spectrum_csv(diag::kinetic_energy_spectrum(s.plane(ChannelId::U10M), s.plane(ChannelId::V10M),
                                                                     g.h, g.w)));
  } else {
    log << "diagnose: non-square grid, spectra skipped\n";
  }
  const auto edges = cfg.at("pdf_edges").get<std::vector<double>>();
  try {
    write_text_file(out / "pdf_ws10m.csv", diag::pdf_csv(diag::histogram_pdf(s.plane(ChannelId::WS10M), edges)));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config /pdf_edges: ") + e.what());
  }
  write_text_file(out / "summary.json", summary.dump(2) + "\n");
  log << "diagnose: center " << center.lat << "," << center.lon << "\n";
  echo_config(out, "diagnose", cfg);
}

double gradcheck_seed(const net::NetConfig& cfg, std::uint64_t seed, const GradcheckSettings& s) {
  if (s.batch < 2) throw std::invalid_argument("gradcheck: batch must be >= 2");
  auto params = net::init_params<double>(cfg, seed);
  net::randomize_params(params, synth::derive_seed(seed, 1), 1.0);
  std::mt19937_64 rng(synth::derive_seed(seed, 2));
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t plane = static_cast<std::size_t>(cfg.grid_h) * cfg.grid_w;
  net::NetBatch<double> batch;
  batch.n = s.batch;
  batch.x.resize(static_cast<std::size_t>(s.batch) * cfg.in_channels * plane);
  for (auto& v : batch.x) v = normal(rng);
  for (int k = 0; k < s.batch; ++k) {
    batch.t.push_back(unit(rng));
    batch.lead_hours.push_back(24.0 * (k % 5));
  }
  std::vector<double> target(static_cast<std::size_t>(s.batch) * cfg.out_channels * plane);
  for (auto& v : target) v = normal(rng);
  net::LossSpec spec;
  const int half = s.batch / 2;
  spec.mse_groups = {{0, s.batch}};
  if (s.lambda > 0.0) {
    net::MmdGroup g;
    for (int k = 0; k < half; ++k) g.ys.push_back(k);
    for (int k = half; k < s.batch; ++k) g.xs.push_back(k);
    spec.mmd_groups = {g};
    spec.lambda = s.lambda;
    spec.fixed_sigma2 = s.sigma2;
  }
  net::Objective<double> obj;
  obj.value = [&](const net::ParamMap<double>& p) { return net::loss_value(cfg, p, batch, target, spec); };
  obj.gradient = [&](const net::ParamMap<double>& p) { return net::loss_and_grads(cfg, p, batch, target, spec).grads; };
  net::GradCheckOptions opts;
  opts.eps = s.eps;
  opts.fraction = s.fraction;
  opts.min_entries = s.min_entries;
  opts.seed = synth::derive_seed(seed, 3);
  return net::grad_check(obj, params, opts);
}

bool cmd_gradcheck(const json& cfg, const fs::path& root, std::ostream& out) {
  const net::NetConfig nc = net_config(cfg.at("net"), cfg);
  GradcheckSettings s;
  s.fraction = cfg.at("fraction").get<double>();
  s.min_entries = cfg.at("min_entries").get<std::size_t>();
  s.eps = cfg.at("eps").get<double>();
  s.batch = cfg.at("batch").get<int>();
  s.lambda = cfg.at("lambda").get<double>();
  s.sigma2 = cfg.at("sigma2").get<std::vector<double>>();
  const double tol = cfg.at("tol").get<double>();
  json results = json::array();
  bool ok = true;
  for (const auto& sj : cfg.at("seeds")) {
    const auto seed = sj.get<std::uint64_t>();
    const double err = gradcheck_seed(nc, seed, s);
    const bool pass = err < tol;
    ok = ok && pass;
    char line[128];
    std::snprintf(line, sizeof line, "seed %llu max_rel_err %.3e %s\n", static_cast<unsigned long long>(seed), err,
                  pass ? "PASS" : "FAIL");
    out << line;
    results.push_back({{"seed", seed}, {"max_rel_err", err}, {"pass", pass}});
  }
  const fs::path dir = output_dir(root, cfg);
  fs::create_directories(dir);
  write_text_file(dir / "result.json", json{{"tol", tol}, {"seeds", results}, {"pass", ok}}.dump(2) + "\n");
  echo_config(dir, "gradcheck", cfg);
  return ok;
}

// ---------------------------------------------------------------- pipeline

namespace {

struct Stage {
  std::string name;
  fs::path dir;  // relative to the run root
  std::vector<std::string> deps;
  std::vector<std::string> artifacts;  // relative to dir
  json config;
  std::function<void()> run;
};

constexpr const char* kStamp = ".stage.json";

bool stage_complete(const fs::path& root, const Stage& s) {
  const fs::path stamp = root / s.dir / kStamp;
  if (!fs::exists(stamp)) return false;
  try {
    if (json::parse(read_text_file(stamp)) != s.config) return false;
  } catch (const std::exception&) {
    return false;
  }
  for (const auto& a : s.artifacts)
    if (!fs::exists(root / s.dir / a)) return false;
  return true;
}

std::uint64_t estimate_bytes(const synth::GenConfig& g, int holdout, std::size_t recon_leads, int variants) {
  const std::uint64_t stack = static_cast<std::uint64_t>(kNumChannels) * g.grid_h * g.grid_w * 4 + 512;
  const std::uint64_t data = static_cast<std::uint64_t>(g.n_samples) * (2 + g.leads.size()) * stack;
  const std::uint64_t recon = static_cast<std::uint64_t>(holdout) * recon_leads * variants * stack;
  return data + recon + (16u << 20);
}

}  // namespace

std::vector<std::pair<std::string, std::string>> cmd_pipeline(const json& cfg, const fs::path& root,
                                                              const PipelineOptions& opts, std::ostream& out,
                                                              std::ostream& log) {
  const synth::GenConfig g = gen_config(cfg.at("dataset"), cfg);
  const int holdout = cfg.at("holdout").get<int>();
  if (holdout >= g.n_samples - 1) throw ConfigError("config /holdout: must leave at least two training samples");
  const int n_train = g.n_samples - holdout;
  std::vector<int> recon_leads = cfg.at("recon").at("leads").get<std::vector<int>>();
  if (recon_leads.empty()) recon_leads = g.leads;
  for (int l : recon_leads) {
    if (l != 0 && std::find(g.leads.begin(), g.leads.end(), l) == g.leads.end()) {
      throw ConfigError("config /recon/leads: lead " + std::to_string(l) + " is not generated by /dataset/leads");
    }
  }
  const std::vector<std::string> variants{"pre", "sft_mmd", "sft_nommd", "e2e"};
  const json header = {{"seed", cfg.at("seed")}, {"threads", cfg.at("threads")}, {"grid", cfg.at("grid")}};
  auto with_header = [&](json j) {
    for (auto it = header.begin(); it != header.end(); ++it) j[it.key()] = it.value();
    return j;
  };

  const std::uint64_t need = estimate_bytes(g, holdout, recon_leads.size(), variants.size() + 1);
  const std::uint64_t budget = static_cast<std::uint64_t>(cfg.at("disk_budget_mb").get<double>() * 1048576.0);
  if (need > budget) {
    throw ConfigError("config /disk_budget_mb: run needs about " + std::to_string(need >> 20) + " MB, budget is " +
                      std::to_string(budget >> 20) + " MB");
  }
  if (!opts.dry_run) {
    fs::create_directories(root);
    const auto space = fs::space(root);
    if (space.available < need) {
      throw DataError("insufficient disk space under " + root.string() + ": need about " +
                      std::to_string(need >> 20) + " MB");
    }
  }

  std::vector<Stage> stages;
  // Resolved command configs are rebuilt through the command schemas so each
  // stage stamp records exactly what the standalone command would run.
  json gen_cfg = resolve_config("gen", with_header({{"dataset", cfg.at("dataset")}, {"out", "data"}}));
  stages.push_back({"data", "data", {}, {"dataset.json"}, gen_cfg, [&, gen_cfg] { cmd_gen(gen_cfg, root, log); }});

  json pre_h = cfg.at("pretrain");
  pre_h["train_count"] = n_train;
  json pre_cfg = resolve_config(
      "pretrain", with_header({{"data", "data"}, {"out", "pretrain"}, {"net", cfg.at("net")}, {"hyper", pre_h}}));
  stages.push_back({"pretrain", "pretrain", {"data"}, {"model.ckpt", "trace.csv"}, pre_cfg,
                    [&, pre_cfg] { cmd_train("pretrain", pre_cfg, root, log); }});

  auto sft_stage = [&](const std::string& name, const std::string& stage, double lambda, int steps) {
    json h = cfg.at("sft");
    h["train_count"] = n_train;
    h["lambda"] = lambda;
    h["steps"] = steps;
    json c = resolve_config("sft", with_header({{"data", "data"},
                                                {"out", name},
                                                {"init", "pretrain/model.ckpt"},
                                                {"stage", stage},
                                                {"net", cfg.at("net")},
                                                {"hyper", h}}));
    std::vector<std::string> deps{"data"};
    if (stage == "sft") deps.push_back("pretrain");
    stages.push_back({name, name, deps, {"model.ckpt", "trace.csv"}, c, [&, c] { cmd_train("sft", c, root, log); }});
  };
  const double lambda = cfg.at("sft").at("lambda").get<double>();
  const int sft_steps = cfg.at("sft").at("steps").get<int>();
  sft_stage("sft_mmd", "sft", lambda, sft_steps);
  sft_stage("sft_nommd", "sft", 0.0, sft_steps);
  sft_stage("e2e", "e2e", lambda, cfg.at("e2e_steps").get<int>());

  std::vector<std::string> recon_artifacts{"provenance.json"};
  for (int i = n_train; i < g.n_samples; ++i)
    for (int l : recon_leads) {
      recon_artifacts.push_back(synth::sample_dir_name(i) + "/recon_" + std::to_string(l) + ".grd");
    }
  for (const auto& v : variants) {
    const std::string ck_stage = v == "pre" ? "pretrain" : v;
    json c = resolve_config("reconstruct", with_header({{"checkpoint", ck_stage + "/model.ckpt"},
                                                        {"mode", "dataset"},
                                                        {"data", "data"},
                                                        {"first_sample", n_train},
                                                        {"sample_count", holdout},
                                                        {"leads", recon_leads},
                                                        {"sampler", cfg.at("recon").at("sampler")},
                                                        {"batch", cfg.at("recon").at("batch")},
                                                        {"out", "recon/" + v}}));
    stages.push_back({"recon_" + v, "recon/" + v, {"data", ck_stage}, recon_artifacts, c,
                      [&, c] { cmd_reconstruct(c, root, log); }});
  }
  const std::vector<std::string> report_files{"report.json", "report.csv", "residuals.csv"};
  auto eval_stage = [&](const std::string& name, const std::string& pred, const std::string& prefix,
                        std::vector<std::string> deps) {
    json c = resolve_config("evaluate", with_header({{"pred", pred},
                                                     {"truth", "data"},
                                                     {"pred_prefix", prefix},
                                                     {"first_sample", n_train},
                                                     {"sample_count", holdout},
                                                     {"eval", cfg.at("eval")},
                                                     {"out", "eval/" + name}}));
    stages.push_back({"eval_" + name, "eval/" + name, std::move(deps), report_files, c,
                      [&, c] { cmd_evaluate(c, root, log); }});
  };
  eval_stage("forecast", "data", "fcst_", {"data"});
  for (const auto& v : variants) eval_stage(v, "recon/" + v, "recon_", {"data", "recon_" + v});

  json report_cfg = {{"variants", variants}, {"baseline", "forecast"}};
  std::vector<std::string> report_deps{"eval_forecast"};
  for (const auto& v : variants) report_deps.push_back("eval_" + v);
  stages.push_back({"report", "report", report_deps, {"summary.json", "summary.csv"}, report_cfg, [&] {
                      json summary = {{"format", "3DTC-PIPELINE v1"}, {"variants", json::object()}};
                      std::string csv = "variant,bucket,threshold,metric,value,n\n";
                      std::vector<std::string> names{"forecast"};
                      names.insert(names.end(), variants.begin(), variants.end());
                      for (const auto& v : names) {
                        const fs::path d = root / "eval" / v;
                        summary["variants"][v] = json::parse(read_text_file(d / "report.json"));
                        const std::string body = read_text_file(d / "report.csv");
                        std::size_t pos = body.find('\n') + 1;
                        while (pos < body.size()) {
                          const std::size_t e = body.find('\n', pos);
                          csv += v + "," + body.substr(pos, e - pos) + "\n";
                          pos = e + 1;
                        }
                      }
                      fs::create_directories(root / "report");
                      write_text_file(root / "report" / "summary.json", summary.dump(2) + "\n");
                      write_text_file(root / "report" / "summary.csv", csv);
                    }});

  std::vector<std::pair<std::string, std::string>> plan;
  std::set<std::string> ran;
  for (auto& s : stages) {
    bool dep_ran = false;
    for (const auto& d : s.deps) dep_ran = dep_ran || ran.count(d);
    const bool run_it = opts.force || dep_ran || !stage_complete(root, s);
    plan.emplace_back(s.name, run_it ? "run" : "skip");
    out << (opts.dry_run ? "plan " : "stage ") << s.name << ": " << (run_it ? "run" : "skip (complete)") << " -> "
        << s.dir.string() << "\n";
    if (!run_it || opts.dry_run) {
      if (run_it) ran.insert(s.name);
      continue;
    }
    fs::remove(root / s.dir / kStamp);
    try {
      s.run();
    } catch (const std::exception& e) {
      const char* kind = dynamic_cast<const ConfigError*>(&e)      ? "config"
                         : dynamic_cast<const DataError*>(&e)      ? "data"
                         : dynamic_cast<const NumericalError*>(&e) ? "numerical"
                                                                   : "internal";
      const int code = std::string(kind) == "config"      ? kExitConfig
                       : std::string(kind) == "data"      ? kExitData
                       : std::string(kind) == "numerical" ? kExitNumerical
                                                          : 1;
      write_text_file(root / "failure.json",
                      json{{"stage", s.name}, {"kind", kind}, {"exit_code", code}, {"message", e.what()}}.dump(2) +
                          "\n");
      throw;
    }
    write_text_file(root / s.dir / kStamp, s.config.dump(2) + "\n");
    ran.insert(s.name);
  }
  if (!opts.dry_run) {
    fs::remove(root / "failure.json");
    write_text_file(root / "pipeline.resolved.json", json{{"command", "pipeline"}, {"config", cfg}}.dump(2) + "\n");
  }
  return plan;
}

// ---------------------------------------------------------------- dispatch

int run(const Invocation& inv, std::ostream& out, std::ostream& log) {
  try {
    json user = inv.config_path.empty() ? json::object() : config::read_json_file(inv.config_path);
    for (const auto& [ptr, value] : inv.overrides) config::apply_override(user, ptr, value);
    const json cfg = resolve_config(inv.command, user);
    const fs::path root = inv.run_dir.empty() ? default_run_root() : inv.run_dir;
    if (inv.command == "gen") {
      cmd_gen(cfg, root, log);
    } else if (inv.command == "pretrain" || inv.command == "sft") {
      cmd_train(inv.command, cfg, root, log);
    } else if (inv.command == "reconstruct") {
      cmd_reconstruct(cfg, root, log);
    } else if (inv.command == "track") {
      cmd_track(cfg, root, log);
    } else if (inv.command == "evaluate") {
      cmd_evaluate(cfg, root, log);
    } else if (inv.command == "diagnose") {
      cmd_diagnose(cfg, root, log);
    } else if (inv.command == "gradcheck") {
      if (!cmd_gradcheck(cfg, root, out)) {
        log << "gradcheck: tolerance exceeded\n";
        return kExitNumerical;
      }
    } else if (inv.command == "pipeline") {
      cmd_pipeline(cfg, root, {inv.dry_run, inv.force}, out, log);
    } else {
      throw ConfigError("unknown command '" + inv.command + "'");
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    log << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericalError& e) {
    log << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    log << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    log << "data error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace tcr::cli

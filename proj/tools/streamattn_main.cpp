// streamattn: benchmarking, toy streaming generation, distillation, layer
// selection and cost-curve emission over one JSON config per run.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "sattn/distill.hpp"
#include "sattn/numerics.hpp"
#include "sattn/polyfit.hpp"
#include "sattn/selection.hpp"
#include "sattn/serialize.hpp"
#include "sattn/streaming.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sattn;

namespace {

constexpr const char* kToolVersion = "1.0.0";

struct CliOptions {
  std::string config_path;
  std::string out_dir;
  bool has_seed = false;
  std::uint64_t seed = 0;
  std::string precision;  // empty = take from config
};

struct ConfigError : std::runtime_error {
  std::vector<std::string> messages;
  explicit ConfigError(std::vector<std::string> msgs)
      : std::runtime_error(msgs.empty() ? "invalid config" : msgs.front()),
        messages(std::move(msgs)) {}
};

// ---- config reading helpers: collect every problem before bailing ----

class ConfigReader {
 public:
  ConfigReader(const json& j, std::string scope) : j_(j), scope_(std::move(scope)) {}

  std::uint64_t require_uint(const std::string& key, std::uint64_t min_value = 0) {
    if (!j_.contains(key) || !j_.at(key).is_number_unsigned()) {
      fail(key + " must be a non-negative integer");
      return min_value;
    }
    const auto v = j_.at(key).get<std::uint64_t>();
    if (v < min_value) {
      fail(key + " must be >= " + std::to_string(min_value));
      return min_value;
    }
    return v;
  }

  std::uint64_t optional_uint(const std::string& key, std::uint64_t fallback,
                              std::uint64_t min_value = 0) {
    if (!j_.contains(key)) return fallback;
    return require_uint(key, min_value);
  }

  double optional_double(const std::string& key, double fallback) {
    if (!j_.contains(key)) return fallback;
    if (!j_.at(key).is_number()) {
      fail(key + " must be a number");
      return fallback;
    }
    return j_.at(key).get<double>();
  }

  std::string require_string(const std::string& key) {
    if (!j_.contains(key) || !j_.at(key).is_string()) {
      fail(key + " must be a string");
      return {};
    }
    return j_.at(key).get<std::string>();
  }

  std::string optional_string(const std::string& key, const std::string& fallback) {
    if (!j_.contains(key)) return fallback;
    return require_string(key);
  }

  bool optional_bool(const std::string& key, bool fallback) {
    if (!j_.contains(key)) return fallback;
    if (!j_.at(key).is_boolean()) {
      fail(key + " must be a boolean");
      return fallback;
    }
    return j_.at(key).get<bool>();
  }

  json require_array(const std::string& key) {
    if (!j_.contains(key) || !j_.at(key).is_array() || j_.at(key).empty()) {
      fail(key + " must be a non-empty array");
      return json::array();
    }
    return j_.at(key);
  }

  void fail(const std::string& message) { errors_.push_back(scope_ + ": " + message); }
  void check() const {
    if (!errors_.empty()) throw ConfigError(errors_);
  }
  const json& raw() const { return j_; }

 private:
  const json& j_;
  std::string scope_;
  std::vector<std::string> errors_;
};

json load_config(const CliOptions& opt) {
  std::ifstream is(opt.config_path);
  if (!is) throw ConfigError({"cannot open config file '" + opt.config_path + "'"});
  json j;
  try {
    is >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("config is not valid JSON: ") + e.what()});
  }
  if (!j.is_object()) throw ConfigError({"config root must be a JSON object"});
  return j;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

// Applies --seed / --precision overrides; flags always win.
void apply_overrides(json& cfg, const CliOptions& opt) {
  if (opt.has_seed) cfg["seed"] = opt.seed;
  if (!opt.precision.empty()) cfg["precision"] = opt.precision;
}

class RunDir {
 public:
  RunDir(const CliOptions& opt, const json& cfg, std::string subcommand)
      : dir_(opt.out_dir), subcommand_(std::move(subcommand)), cfg_(cfg),
        start_(std::chrono::steady_clock::now()) {
    fs::create_directories(dir_);
  }

  fs::path path(const std::string& name) {
    outputs_.push_back(name);
    return fs::path(dir_) / name;
  }

  std::ofstream open(const std::string& name) {
    std::ofstream os(path(name));
    if (!os) throw std::runtime_error("cannot open output file '" + name + "'");
    return os;
  }

  void write_manifest(json extra = json::object()) {
    const double wall_ms = std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - start_)
                               .count();
    json manifest;
    manifest["subcommand"] = subcommand_;
    manifest["config_hash"] = hex64(fnv1a(cfg_.dump()));
    manifest["seed"] = cfg_.contains("seed") ? cfg_.at("seed").get<std::uint64_t>() : 0;
    manifest["precision"] = cfg_.value("precision", "double");
    manifest["tool_version"] = kToolVersion;
    manifest["wall_ms"] = wall_ms;
    manifest["outputs"] = outputs_;
    for (auto& [k, v] : extra.items()) manifest[k] = v;
    std::ofstream os(fs::path(dir_) / "manifest.json");
    os << manifest.dump(2) << "\n";
  }

 private:
  std::string dir_, subcommand_;
  json cfg_;
  std::vector<std::string> outputs_;
  std::chrono::steady_clock::time_point start_;
};

// ---- shared model-config parsing ----

StreamConfig parse_stream_config(ConfigReader& r, bool with_run_lengths) {
  StreamConfig cfg;
  cfg.tokens_per_frame = r.require_uint("tokens_per_frame", 1);
  cfg.hidden = r.require_uint("hidden", 2);
  cfg.heads = r.require_uint("heads", 1);
  cfg.seed = r.optional_uint("seed", 0);
  cfg.precision = precision_from_string(r.optional_string("precision", "double"));
  cfg.granularity = gate_granularity_from_string(r.optional_string("granularity", "headwise"));
  cfg.frame_level_access = r.optional_bool("frame_level_access", true);
  cfg.clean_pass_only = r.optional_bool("clean_pass_only", true);
  cfg.frames_per_chunk = r.optional_uint("frames_per_chunk", 1, 1);
  if (with_run_lengths) {
    cfg.num_frames = r.require_uint("num_frames", 1);
    cfg.denoise_steps = r.require_uint("denoise_steps", 1);
  }
  if (r.raw().contains("layers")) {
    const json layers = r.require_array("layers");
    for (const auto& item : layers) {
      if (!item.is_string()) {
        r.fail("layers entries must be backend strings");
        break;
      }
      try {
        cfg.backend_per_layer.push_back(backend_from_string(item.get<std::string>()));
      } catch (const std::invalid_argument& e) {
        r.fail(e.what());
      }
    }
  }
  return cfg;
}

void write_frames(RunDir& run, const std::vector<Tensor>& frames, bool norms) {
  std::vector<std::pair<std::string, Tensor>> named;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%06zu", i);
    named.emplace_back(name, frames[i]);
  }
  write_tensor_blob(run.path("frames.blob").string(), named);
  if (norms) {
    std::ofstream os = run.open("frame_norms.csv");
    os << "frame,frobenius_norm\n";
    for (std::size_t i = 0; i < frames.size(); ++i) {
      os << i << ',' << std::sqrt(frobenius_norm_sq(frames[i])) << '\n';
    }
  }
}

// ---- subcommands ----

int cmd_generate(const CliOptions& opt) {
  json cfg_json = load_config(opt);
  apply_overrides(cfg_json, opt);
  ConfigReader r(cfg_json, "generate config");
  StreamConfig cfg = parse_stream_config(r, true);
  if (cfg.backend_per_layer.empty()) r.fail("layers must name at least one backend");
  const bool norms = r.optional_bool("write_norms", false);
  r.check();
  cfg.validate();

  RunDir run(opt, cfg_json, "generate");
  ToyModel model = ToyModel::build(cfg);
  const GenerateResult result = generate(model, cfg);
  write_frames(run, result.frames, norms);
  {
    std::ofstream os = run.open("metrics.csv");
    result.metrics.write_csv(os);
  }
  run.write_manifest({{"frames", result.frames.size()},
                      {"total_macs", result.metrics.per_frame.back().cumulative_macs}});
  return 0;
}

int cmd_cost(const CliOptions& opt) {
  json cfg_json = load_config(opt);
  apply_overrides(cfg_json, opt);
  ConfigReader r(cfg_json, "cost config");
  const std::size_t L = r.require_uint("tokens_per_frame", 1);
  const std::size_t d = r.require_uint("hidden", 2);
  const std::size_t H = r.require_uint("heads", 1);
  const std::size_t history_max = r.require_uint("history_max");
  const Precision prec = precision_from_string(r.optional_string("precision", "double"));
  r.check();
  if (d % H != 0) throw ConfigError({"cost config: heads must divide hidden"});
  const std::size_t D = d / H;

  RunDir run(opt, cfg_json, "cost");
  std::ofstream os = run.open("cost.csv");
  // cost unit: MACs (one multiply-add), not FLOPs
  os << "history_frames,softmax_pass_macs,hybrid_pass_macs,hybrid_state_update_macs,"
        "softmax_bytes,hybrid_bytes\n";
  for (std::size_t h = 0; h <= history_max; ++h) {
    os << h << ',' << attention_pass_macs(Backend::softmax, L, d, H, D, h) << ','
       << attention_pass_macs(Backend::hybrid, L, d, H, D, h) << ','
       << state_update_macs(L, D, H) << ','
       << memory_footprint(Backend::softmax, L, d, H, D, h, prec) << ','
       << memory_footprint(Backend::hybrid, L, d, H, D, h, prec) << '\n';
  }
  os.close();
  run.write_manifest({{"rows", history_max + 1}});
  return 0;
}

int cmd_bench(const CliOptions& opt) {
  json cfg_json = load_config(opt);
  apply_overrides(cfg_json, opt);
  ConfigReader r(cfg_json, "bench config");
  StreamConfig base = parse_stream_config(r, false);
  base.denoise_steps = r.optional_uint("denoise_steps", 2, 1);
  const std::size_t num_layers = r.require_uint("num_layers", 1);
  const json sweep = r.require_array("frame_sweep");
  const json backends = r.require_array("backends");
  std::vector<std::size_t> frame_sweep;
  for (const auto& n : sweep) {
    if (!n.is_number_unsigned() || n.get<std::uint64_t>() == 0) {
      r.fail("frame_sweep entries must be positive integers");
      break;
    }
    frame_sweep.push_back(n.get<std::size_t>());
  }
  std::vector<Backend> bench_backends;
  for (const auto& b : backends) {
    if (!b.is_string()) {
      r.fail("backends entries must be strings");
      break;
    }
    try {
      bench_backends.push_back(backend_from_string(b.get<std::string>()));
    } catch (const std::invalid_argument& e) {
      r.fail(e.what());
    }
  }
  r.check();

  RunDir run(opt, cfg_json, "bench");
  std::ofstream sweep_csv = run.open("sweep.csv");
  sweep_csv << "backend,num_frames,cumulative_macs,final_bytes,state_writes\n";
  json summary_rows = json::array();
  std::ofstream summary_csv = run.open("summary.csv");
  summary_csv << "backend,fit_degree,r2_degree1,r2_degree2,"
                 "mem_slope_bytes_per_frame_per_layer\n";

  for (Backend backend : bench_backends) {
    std::vector<double> ns, macs;
    std::vector<double> layer0_bytes;
    for (std::size_t n : frame_sweep) {
      StreamConfig cfg = base;
      cfg.backend_per_layer.assign(num_layers, backend);
      cfg.num_frames = n;
      cfg.validate();
      ToyModel model = ToyModel::build(cfg);
      const GenerateResult result = generate(model, cfg);

      char name[64];
      std::snprintf(name, sizeof(name), "metrics_%s_n%03zu.csv", to_string(backend).c_str(), n);
      std::ofstream metrics = run.open(name);
      result.metrics.write_csv(metrics);

      const FrameTotals& last = result.metrics.per_frame.back();
      sweep_csv << to_string(backend) << ',' << n << ',' << last.cumulative_macs << ','
                << last.bytes << ',' << last.state_writes << '\n';
      ns.push_back(static_cast<double>(n));
      macs.push_back(static_cast<double>(last.cumulative_macs));
      layer0_bytes.push_back(static_cast<double>(last.bytes) /
                             static_cast<double>(num_layers));
    }
    const PolyFit deg1 = fit_polynomial(ns, macs, 1);
    const PolyFit deg2 = fit_polynomial(ns, macs, 2);
    const std::size_t degree = deg1.r_squared >= 0.999 ? 1 : 2;
    // memory slope per layer, from the sweep's (N, bytes) points
    const PolyFit mem = fit_polynomial(ns, layer0_bytes, 1);
    const double mem_slope = mem.coeffs[1] + 0.0;  // normalizes -0
    summary_csv << to_string(backend) << ',' << degree << ',' << deg1.r_squared << ','
                << deg2.r_squared << ',' << mem_slope << '\n';
    summary_rows.push_back({{"backend", to_string(backend)},
                            {"fit_degree", degree},
                            {"r2_degree1", deg1.r_squared},
                            {"r2_degree2", deg2.r_squared},
                            {"mem_slope_bytes_per_frame_per_layer", mem_slope}});
  }
  run.write_manifest({{"summary", summary_rows}});
  return 0;
}

int cmd_distill(const CliOptions& opt) {
  json cfg_json = load_config(opt);
  apply_overrides(cfg_json, opt);
  ConfigReader r(cfg_json, "distill config");
  const std::size_t hidden = r.require_uint("hidden", 2);
  const std::size_t heads = r.require_uint("heads", 1);
  Stage1Config train;
  train.tokens = r.require_uint("tokens_per_frame", 1);
  train.history_frames = r.optional_uint("history_frames", 2);
  train.batch_size = r.optional_uint("batch_size", 1, 1);
  train.steps = r.require_uint("steps", 1);
  train.lr = r.optional_double("lr", 0.1);
  train.momentum = r.optional_double("momentum", 0.9);
  train.seed = r.optional_uint("seed", 0);
  const Precision prec = precision_from_string(r.optional_string("precision", "double"));
  const GateGranularity gran =
      gate_granularity_from_string(r.optional_string("granularity", "headwise"));
  std::vector<std::size_t> layer_ids;
  for (const auto& id : r.require_array("layers")) {
    if (!id.is_number_unsigned()) {
      r.fail("layers entries must be layer indices");
      break;
    }
    layer_ids.push_back(id.get<std::size_t>());
  }
  std::string optimizer_name = r.optional_string("optimizer", "sgd_momentum");
  r.check();
  if (hidden % heads != 0 || (hidden / heads) % 2 != 0) {
    throw ConfigError({"distill config: heads must divide hidden into an even head_dim"});
  }
  train.optimizer = optimizer_from_string(optimizer_name);

  RunDir run(opt, cfg_json, "distill");
  json results = json::array();
  for (std::size_t id : layer_ids) {
    // Each layer distills against its own seeded frozen teacher.
    Rng weight_rng(Rng::derive_seed(train.seed, id));
    HybridLayer layer(ProjectionSet::random(heads, hidden / heads, weight_rng, prec), gran,
                      prec);
    Stage1Config layer_cfg = train;
    layer_cfg.seed = Rng::derive_seed(train.seed, 1000 + id);
    const TrainRun result = train_stage1(layer, layer_cfg);

    char loss_name[64], blob_name[64];
    std::snprintf(loss_name, sizeof(loss_name), "layer_%03zu_loss.csv", id);
    std::snprintf(blob_name, sizeof(blob_name), "layer_%03zu.blob", id);
    std::ofstream loss_csv = run.open(loss_name);
    result.write_csv(loss_csv);
    layer.save(run.path(blob_name).string());
    results.push_back({{"layer", id},
                       {"initial_loss", result.loss_trace.front()},
                       {"final_loss", result.final_loss},
                       {"steps", result.steps}});
  }
  run.write_manifest({{"runs", results}});
  return 0;
}

int cmd_select_layers(const CliOptions& opt) {
  json cfg_json = load_config(opt);
  apply_overrides(cfg_json, opt);
  ConfigReader r(cfg_json, "select-layers config");
  const std::string scores_path = r.require_string("scores");
  const std::size_t budget = r.require_uint("budget", 1);
  const double beta = r.optional_double("beta", kDefaultSelectionBeta);
  const double threshold = r.optional_double("threshold_hr", kDefaultHrThreshold);
  r.check();

  // Relative score paths resolve against the config file's directory.
  fs::path scores = scores_path;
  if (scores.is_relative()) scores = fs::path(opt.config_path).parent_path() / scores;
  std::ifstream is(scores);
  if (!is) throw ConfigError({"cannot open scores file '" + scores.string() + "'"});

  ScoreTable table;
  if (scores.extension() == ".json") {
    std::stringstream buffer;
    buffer << is.rdbuf();
    table = ScoreTable::from_json_text(buffer.str());
  } else {
    table = ScoreTable::from_csv(is);
  }
  if (budget > table.layers.size()) {
    throw ConfigError({"select-layers config: budget exceeds the table's layer count"});
  }

  RunDir run(opt, cfg_json, "select-layers");
  std::ostringstream warnings;
  const SelectionResult result = select_layers(table, budget, beta, threshold, &warnings);
  if (!warnings.str().empty()) std::cerr << warnings.str();
  {
    std::ofstream os = run.open("selection.json");
    os << selection_to_json(table, result, budget, beta, threshold);
  }
  json replaced = result.replaced;
  run.write_manifest({{"replaced_layers", replaced}});
  return 0;
}

void print_error(const std::string& kind, const std::vector<std::string>& messages) {
  json err;
  err["error"]["kind"] = kind;
  err["error"]["messages"] = messages;
  std::cerr << err.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hybrid softmax / linear-state attention engine"};
  app.require_subcommand(1);

  CliOptions opt;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "JSON config path")->required();
    sub->add_option("--out", opt.out_dir, "output directory")->required();
    sub->add_option("--seed", opt.seed, "seed override (always wins)")
        ->each([&](const std::string&) { opt.has_seed = true; });
    sub->add_option("--precision", opt.precision, "double or single")
        ->check(CLI::IsMember({"double", "single"}));
  };

  CLI::App* generate = app.add_subcommand("generate", "stream frames with metrics");
  CLI::App* bench = app.add_subcommand("bench", "cost sweep over backends and lengths");
  CLI::App* distill = app.add_subcommand("distill", "per-layer alignment training");
  CLI::App* select = app.add_subcommand("select-layers", "replacement-set selection");
  CLI::App* cost = app.add_subcommand("cost", "closed-form cost curves");
  for (CLI::App* sub : {generate, bench, distill, select, cost}) add_common(sub);

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) return cmd_generate(opt);
    if (bench->parsed()) return cmd_bench(opt);
    if (distill->parsed()) return cmd_distill(opt);
    if (select->parsed()) return cmd_select_layers(opt);
    if (cost->parsed()) return cmd_cost(opt);
  } catch (const ConfigError& e) {
    print_error("config", e.messages);
    return 2;
  } catch (const std::invalid_argument& e) {
    print_error("config", {e.what()});
    return 2;
  } catch (const std::exception& e) {
    print_error("runtime", {e.what()});
    return 1;
  }
  return 0;
}

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "medttt/config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace medttt;

namespace {

// Exit codes: 0 success, 1 property/validation failure, 2 usage, 3 IO.
constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;
constexpr int kIo = 3;

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  long long seed = -1;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config_path, "JSON config file");
  cmd->add_option("--seed", a.seed, "override the run seed");
  cmd->add_option("--out", a.out_dir, "output directory");
  cmd->add_option("overrides", a.overrides,
                  "key=value config overrides (dotted keys)");
}

// Applies "a.b.c=value" onto the JSON tree; the value is parsed as JSON when
// possible, else taken as a string.
void apply_override(json& j, const std::string& kv) {
  auto eq = kv.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override '" + kv + "' is not key=value");
  std::string key = kv.substr(0, eq);
  std::string val = kv.substr(eq + 1);
  json* node = &j;
  std::size_t pos = 0;
  for (;;) {
    auto d = key.find('.', pos);
    std::string part = key.substr(pos, d - pos);
    if (part.empty()) throw ConfigError("bad override key '" + key + "'");
    if (d == std::string::npos) {
      json parsed = json::parse(val, nullptr, false);
      (*node)[part] = parsed.is_discarded() ? json(val) : parsed;
      return;
    }
    node = &(*node)[part];
    pos = d + 1;
  }
}

RunConfig resolve_config(const CommonArgs& a) {
  json j = json::object();
  if (!a.config_path.empty()) {
    std::ifstream in(a.config_path);
    if (!in) throw IoError("cannot open config " + a.config_path);
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ParseError("config " + a.config_path + ": " + e.what());
    }
  }
  for (const auto& kv : a.overrides) apply_override(j, kv);
  if (a.seed >= 0) j["seed"] = a.seed;
  if (!a.out_dir.empty()) j["out"] = a.out_dir;
  return parse_run_config(j);
}

// The fully resolved config is echoed before any work starts.
void echo_config(const RunConfig& c) {
  std::error_code ec;
  fs::create_directories(c.out_dir, ec);
  if (!fs::is_directory(c.out_dir))
    throw IoError("cannot create output directory " + c.out_dir);
  std::ofstream out(fs::path(c.out_dir) / "config.json",
                    std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write resolved config");
  out << run_config_json(c).dump(2) << "\n";
}

int cmd_train(const CommonArgs& a) {
  RunConfig c = resolve_config(a);
  echo_config(c);
  if (c.manifest.empty()) throw ConfigError("train requires a manifest path");
  DatasetManifest manifest = load_manifest(c.manifest);
  Model model = Model::build(c.model);
  {
    std::ofstream s(fs::path(c.out_dir) / "model_summary.json",
                    std::ios::binary | std::ios::trunc);
    s << model.summary_json() << "\n";
  }
  TrainResult r = train_model(model, manifest, c.train, c.out_dir);
  if (r.aborted_non_finite) {
    std::cerr << "train: aborted on non-finite loss; last good checkpoint "
                 "retained at "
              << r.checkpoint_path << "\n";
    return kFailure;
  }
  std::printf("train: %zu epochs, best val dice %.4f (epoch %zu)\n",
              r.log.size(), r.best_val_dice, r.best_epoch);
  std::printf("checkpoint: %s\nlog: %s\n", r.checkpoint_path.c_str(),
              r.log_path.c_str());
  return kOk;
}

int cmd_eval(const CommonArgs& a) {
  RunConfig c = resolve_config(a);
  echo_config(c);
  if (c.manifest.empty() || c.checkpoint.empty())
    throw ConfigError("eval requires manifest and checkpoint paths");
  DatasetManifest manifest = load_manifest(c.manifest);
  Model model = Model::build(c.model);
  load_checkpoint(model, c.checkpoint);
  ConfusionMatrix cm = evaluate_split(model, manifest, c.split);
  MetricsReport r = metrics(cm);
  std::string path = (fs::path(c.out_dir) / "metrics.csv").string();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << metrics_csv_header() << "\n"
      << metrics_csv_row(c.dataset, c.split, c.setting, r) << "\n";
  std::printf("%s\n%s\n", metrics_csv_header().c_str(),
              metrics_csv_row(c.dataset, c.split, c.setting, r).c_str());
  std::printf("metrics written to %s\n", path.c_str());
  return kOk;
}

int cmd_oracle_check(const CommonArgs& a) {
  RunConfig c = resolve_config(a);
  auto results = run_oracle_suite(c.oracle);
  bool all_pass = true;
  for (const auto& r : results) {
    std::printf("%-42s %s  max deviation %.3e (tolerance %.0e)", r.name.c_str(),
                r.pass ? "PASS" : "FAIL", r.max_dev, r.tolerance);
    if (!r.pass) std::printf("  failing seed %llu",
                             (unsigned long long)r.failing_seed);
    std::printf("\n");
    all_pass = all_pass && r.pass;
  }
  return all_pass ? kOk : kFailure;
}

int cmd_bench(const CommonArgs& a) {
  RunConfig c = resolve_config(a);
  echo_config(c);
  if (c.bench.token_counts.empty())
    c.bench.token_counts = {4096, 8192, 16384, 32768, 65536, 131072, 262144};
  BenchOutput out = run_bench(c.bench);
  std::string path = (fs::path(c.out_dir) / "bench.csv").string();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << bench_csv(out);
  for (const auto& [impl, slope] : out.slopes)
    std::printf("%-16s log-log slope %.3f\n", impl.c_str(), slope);
  std::printf("records written to %s\n", path.c_str());
  return kOk;
}

int cmd_synth(const CommonArgs& a) {
  RunConfig c = resolve_config(a);
  // synth's tiling contract mirrors the model's: size divisible by 4*K.
  std::size_t quantum = 4 * c.model.tile;
  if (c.synth_size % quantum != 0)
    throw ConfigError("tiling error: size " + std::to_string(c.synth_size) +
                      " not divisible by " + std::to_string(quantum));
  synth_dataset(c.synth_n, c.synth_size, c.seed, c.out_dir);
  std::printf("manifest: %s\n",
              (fs::path(c.out_dir) / "manifest.csv").string().c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Med-TTT: TTT segmentation model, oracles and benchmarks"};
  app.require_subcommand(1);

  CommonArgs train_a, eval_a, oracle_a, bench_a, synth_a;
  auto* train_c = app.add_subcommand("train", "train a model");
  auto* eval_c = app.add_subcommand("eval", "evaluate a checkpoint");
  auto* oracle_c =
      app.add_subcommand("oracle-check", "run the equivalence/property suite");
  auto* bench_c = app.add_subcommand("bench", "complexity benchmark");
  auto* synth_c = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(train_c, train_a);
  add_common(eval_c, eval_a);
  add_common(oracle_c, oracle_a);
  add_common(bench_c, bench_a);
  add_common(synth_c, synth_a);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (train_c->parsed()) return cmd_train(train_a);
    if (eval_c->parsed()) return cmd_eval(eval_a);
    if (oracle_c->parsed()) return cmd_oracle_check(oracle_a);
    if (bench_c->parsed()) return cmd_bench(bench_a);
    if (synth_c->parsed()) return cmd_synth(synth_a);
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kFailure;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kFailure;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

// wifinet: reproducible WiFi-fingerprint localisation experiments.
//
//   wifinet generate --out runs/a --seed 1        synthesise datasets
//   wifinet train    --model wifinet ...          train a predictor
//   wifinet eval     --checkpoint m.ckpt ...      metrics for one test set
//   wifinet bench    ...                          latency scaling grid
//   wifinet repro    --out runs/full              whole pipeline + summary

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wifinet/config.hpp"
#include "wifinet/dataset.hpp"
#include "wifinet/encoder.hpp"
#include "wifinet/eval.hpp"
#include "wifinet/synth.hpp"
#include "wifinet/wifinet.hpp"

namespace fs = std::filesystem;
using namespace wifinet;

namespace {

struct CliFlags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> model;
  std::optional<int> threads;
  std::optional<std::string> data;
  std::string checkpoint;
  std::string testset;
  std::string kind = "test-known";
};

bool plain_output() {
  return std::getenv("NO_COLOR") != nullptr || std::getenv("WIFINET_PLAIN") != nullptr;
}

const char* c_green() { return plain_output() ? "" : "\033[32m"; }
const char* c_reset() { return plain_output() ? "" : "\033[0m"; }

ExperimentConfig resolve_config(const CliFlags& f,
                                const std::optional<std::string>& defaults_text = std::nullopt) {
  KvConfig kv;
  if (defaults_text) kv = KvConfig::parse_string(*defaults_text, "<defaults>");
  if (f.config) {
    if (!fs::exists(*f.config)) throw std::runtime_error("config file not found: " + *f.config);
    kv.merge_over(KvConfig::parse_file(*f.config));
  }
  ExperimentConfig cfg = experiment_config_from_kv(kv);
  if (f.seed) cfg.seed = *f.seed;
  if (f.out) cfg.out = *f.out;
  if (f.model) cfg.model = *f.model;
  if (f.threads) cfg.threads = *f.threads;
  return cfg;
}

struct DatasetPaths {
  std::string train, known, unknown, trajectory, environment;
};

DatasetPaths dataset_paths(const std::string& dir) {
  return {dir + "/train.csv", dir + "/test_known.csv", dir + "/test_unknown.csv",
          dir + "/trajectory.csv", dir + "/environment.json"};
}

// ---------------------------------------------------------------------------

void cmd_generate(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out);
  const auto paths = dataset_paths(cfg.out);

  const Environment env = generate_environment(cfg.env, mix_seed(cfg.seed, 0x656e76));
  {
    std::ofstream out(paths.environment, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + paths.environment);
    out << environment_to_json(env).dump(2) << '\n';
  }

  serialize_dataset(generate_dataset(env, cfg.radio, DatasetKind::train, cfg.data.scans_train,
                                     mix_seed(cfg.seed, 0x7472)),
                    paths.train);
  serialize_dataset(generate_dataset(env, cfg.radio, DatasetKind::test_known,
                                     cfg.data.scans_known, mix_seed(cfg.seed, 0x6b6e)),
                    paths.known);
  serialize_dataset(generate_dataset(env, cfg.radio, DatasetKind::test_unknown,
                                     cfg.data.scans_unknown, mix_seed(cfg.seed, 0x756e)),
                    paths.unknown);

  Trajectory traj = default_trajectory(env);
  traj.speed_mps = cfg.data.trajectory_speed_mps;
  traj.scan_interval_s = cfg.data.trajectory_interval_s;
  serialize_dataset(generate_trajectory_dataset(env, cfg.radio, traj, mix_seed(cfg.seed, 0x746a)),
                    paths.trajectory);

  std::cout << "wrote 4 datasets + environment under " << cfg.out << "\n";
}

int dense_class_count(const Dataset& train) {
  int max_id = -1;
  for (const auto& [id, p] : train.positions) max_id = std::max(max_id, id);
  if (max_id + 1 != static_cast<int>(train.positions.size()))
    throw std::runtime_error("training position ids must be dense 0..C-1");
  return max_id + 1;
}

void write_loss_csv(const std::string& path, const std::vector<double>& losses) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "epoch,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i)
    out << i << ',' << detail::format_double(losses[i]) << '\n';
}

void cmd_train(const ExperimentConfig& cfg, const std::string& data_dir) {
  const auto paths = dataset_paths(data_dir);
  if (!fs::exists(paths.train)) throw std::runtime_error("training data not found: " + paths.train);
  const Dataset train_ds = parse_dataset(paths.train, DatasetKind::train);
  const ApDirectory dir = build_directory(train_ds);
  fs::create_directories(cfg.out);

  const std::string ckpt = cfg.out + "/" + cfg.model + ".ckpt";
  const std::string loss_csv = cfg.out + "/" + cfg.model + "_loss.csv";

  if (cfg.model == "wifinet") {
    const auto images = encode_dataset(train_ds, dir);
    WiFiNetModel m = build_wifinet(dir.side, dense_class_count(train_ds), cfg.wifinet.widths,
                                   mix_seed(cfg.seed, 0x696e6974), cfg.wifinet.kernel);
    m.directory = dir;
    m.class_table = train_ds.positions;
    TrainConfig tc = cfg.wifinet.train;
    tc.seed = mix_seed(cfg.seed, 0x747261696e);
    tc.threads = cfg.threads;
    const TrainResult res = train(m, images, tc);
    save_wifinet(m, ckpt);
    write_loss_csv(loss_csv, res.epoch_loss);
  } else if (cfg.model == "knn") {
    KnnModel m = cfg.baseline_features == FeatureMode::image
                     ? knn_train(encode_dataset(train_ds, dir))
                     : knn_train_features(features_from_dataset(train_ds, dir),
                                          FeatureMode::raw_rss);
    m.class_table = train_ds.positions;
    m.directory = dir;
    save_knn(m, ckpt);
    write_loss_csv(loss_csv, {});
  } else if (cfg.model == "svm") {
    SvmConfig sc = cfg.svm;
    sc.seed = mix_seed(cfg.seed, 0x73766d);
    LinearSvmModel m = cfg.baseline_features == FeatureMode::image
                           ? svm_train(encode_dataset(train_ds, dir), sc)
                           : svm_train_features(features_from_dataset(train_ds, dir), sc,
                                                FeatureMode::raw_rss);
    m.class_table = train_ds.positions;
    m.directory = dir;
    save_svm(m, ckpt);
    write_loss_csv(loss_csv, {});
  } else if (cfg.model == "subknn") {
    SubspaceKnnConfig kc = cfg.subknn;
    kc.seed = mix_seed(cfg.seed, 0x7375626b);
    SubspaceKnnModel m = cfg.baseline_features == FeatureMode::image
                             ? subknn_train(encode_dataset(train_ds, dir), kc)
                             : subknn_train_features(features_from_dataset(train_ds, dir), kc,
                                                     FeatureMode::raw_rss);
    m.class_table = train_ds.positions;
    m.directory = dir;
    save_subknn(m, ckpt);
    write_loss_csv(loss_csv, {});
  } else {
    throw std::runtime_error("unknown model name: " + cfg.model);
  }
  std::cout << "wrote " << ckpt << "\n";
}

struct LoadedPredictor {
  std::string kind;
  ApDirectory directory;
  // exactly one of these is populated, matching `kind`
  std::optional<WiFiNetModel> wifinet;
  std::optional<KnnModel> knn;
  std::optional<LinearSvmModel> svm;
  std::optional<SubspaceKnnModel> subknn;

  PredictFn predictor() const {
    if (wifinet) return make_predictor(*wifinet);
    if (knn) return make_predictor(*knn, directory);
    if (svm) return make_predictor(*svm, directory);
    return make_predictor(*subknn, directory);
  }
};

LoadedPredictor load_any_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw std::runtime_error("checkpoint not found: " + path);
  const Checkpoint ck = read_checkpoint(path);
  LoadedPredictor lp;
  lp.kind = ck.header.at("kind").get<std::string>();
  if (lp.kind == "wifinet") {
    lp.wifinet = load_wifinet(path);
    lp.directory = lp.wifinet->directory;
  } else if (lp.kind == "knn") {
    lp.knn = load_knn(path);
    lp.directory = lp.knn->directory;
  } else if (lp.kind == "svm") {
    lp.svm = load_svm(path);
    lp.directory = lp.svm->directory;
  } else if (lp.kind == "subknn") {
    lp.subknn = load_subknn(path);
    lp.directory = lp.subknn->directory;
  } else {
    throw std::runtime_error(path + ": unknown checkpoint kind '" + lp.kind + "'");
  }
  return lp;
}

void cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint,
              const std::string& testset, const std::string& kind_name) {
  if (!fs::exists(testset)) throw std::runtime_error("test set not found: " + testset);
  const DatasetKind kind = dataset_kind_from_string(kind_name);
  const Dataset test = parse_dataset(testset, kind);
  const LoadedPredictor lp = load_any_checkpoint(checkpoint);

  const EvalReport rep = evaluate(lp.predictor(), test, lp.directory);
  fs::create_directories(cfg.out);
  const std::string prefix = cfg.out + "/" + lp.kind + "_" + to_string(kind);
  report_to_files(rep, test, prefix);

  std::cout << lp.kind << " on " << to_string(kind) << ": ";
  if (rep.accuracy) std::cout << "accuracy " << *rep.accuracy << ", ";
  std::cout << "rmse " << rep.rmse_m << " m, p75 " << rep.p75_m << " m";
  if (rep.latency) std::cout << ", latency " << rep.latency->mean_s * 1e3 << " ms";
  std::cout << "\n";
}

void cmd_bench(const ExperimentConfig& cfg) {
  BenchConfig bc;
  bc.scans_per_point = cfg.bench.scans_per_point;
  bc.n_predictions = cfg.bench.n_predictions;
  bc.radio = cfg.radio;
  bc.wifinet_widths = cfg.bench.wifinet_widths;
  bc.wifinet_epochs = cfg.bench.wifinet_epochs;
  bc.svm = cfg.svm;
  bc.subknn = cfg.subknn;
  bc.train_threads = cfg.threads;

  const auto rows = scaling_benchmark(cfg.bench.predictors, cfg.bench.ap_counts,
                                      cfg.bench.position_counts, bc, mix_seed(cfg.seed, 0x6263));
  fs::create_directories(cfg.out);
  write_bench_csv(rows, cfg.out + "/bench.csv");
  for (const auto& r : rows)
    std::cout << r.predictor << " aps=" << r.n_ap << " pos=" << r.n_positions << " "
              << r.latency_mean_s * 1e3 << " ms" << (r.realtime ? " (realtime)" : "") << "\n";
}

// Repro-only defaults keep the full pipeline at desk scale; anything the user
// sets in the config wins.
const char* kReproDefaults = R"(
wifinet.widths = 8,12,16,20,24
wifinet.epochs = 5
data.scans_train = 30
data.scans_known = 10
data.scans_unknown = 5
bench.n_predictions = 300
bench.wifinet_epochs = 1
)";

void append_summary_row(std::ostream& out, const std::string& predictor,
                        const std::string& protocol, const EvalReport& rep) {
  out << predictor << ',' << protocol << ',';
  if (rep.accuracy) out << detail::format_double(*rep.accuracy);
  out << ',' << detail::format_double(rep.rmse_m) << ',' << detail::format_double(rep.mean_err_m)
      << ',' << detail::format_double(rep.p50_m) << ',' << detail::format_double(rep.p75_m)
      << '\n';
}

void cmd_repro(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out);
  cmd_generate(cfg);
  const auto paths = dataset_paths(cfg.out);

  const std::vector<std::string> models = {"wifinet", "knn", "svm", "subknn"};
  for (const auto& m : models) {
    ExperimentConfig one = cfg;
    one.model = m;
    cmd_train(one, cfg.out);
  }

  const Dataset known = parse_dataset(paths.known, DatasetKind::test_known);
  const Dataset unknown = parse_dataset(paths.unknown, DatasetKind::test_unknown);
  const Dataset trajectory = parse_dataset(paths.trajectory, DatasetKind::test_trajectory);

  std::ofstream summary(cfg.out + "/summary.csv", std::ios::binary);
  if (!summary) throw std::runtime_error("cannot write summary.csv");
  summary << "predictor,protocol,accuracy,rmse_m,mean_err_m,p50_m,p75_m\n";

  EvalOptions opts;
  opts.measure_latency = false;  // keeps every repro artifact byte-deterministic

  for (const auto& name : models) {
    const LoadedPredictor lp = load_any_checkpoint(cfg.out + "/" + name + ".ckpt");
    const auto fn = lp.predictor();
    const struct {
      const char* protocol;
      const Dataset* ds;
    } runs[] = {{"known", &known}, {"unknown", &unknown}, {"trajectory", &trajectory}};
    for (const auto& run : runs) {
      const EvalReport rep = evaluate(fn, *run.ds, lp.directory, opts);
      report_to_files(rep, *run.ds, cfg.out + "/" + name + "_" + run.protocol,
                      /*include_latency=*/false);
      append_summary_row(summary, name, run.protocol, rep);
      std::cout << c_green() << name << c_reset() << " " << run.protocol << ": rmse "
                << rep.rmse_m << " m\n";
    }
  }
  for (const auto& a : reference_anchors()) {
    summary << a.predictor << "(reference)," << a.protocol << ',';
    if (a.accuracy >= 0) summary << detail::format_double(a.accuracy);
    summary << ',' << detail::format_double(a.error_m) << ",,,";
    if (a.p75_m >= 0) summary << detail::format_double(a.p75_m);
    summary << '\n';
  }
  summary.close();

  // timing artifacts are measured, hence not byte-reproducible; they live in
  // their own subdirectory
  ExperimentConfig bench_cfg = cfg;
  bench_cfg.out = cfg.out + "/timing";
  cmd_bench(bench_cfg);

  std::cout << "summary: " << cfg.out << "/summary.csv (12 result rows)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"WiFi-fingerprint indoor localisation toolkit"};
  app.require_subcommand(1);

  CliFlags flags;
  std::string active;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "key=value experiment config file");
    sub->add_option("--seed", flags.seed, "master seed (overrides config)");
    sub->add_option("--out", flags.out, "output directory (overrides config)");
    sub->add_option("--threads", flags.threads, "worker threads, 0 = all cores");
  };

  auto* gen = app.add_subcommand("generate", "synthesise an environment and its datasets");
  add_common(gen);
  auto* tr = app.add_subcommand("train", "train a predictor on generated data");
  add_common(tr);
  tr->add_option("--model", flags.model, "wifinet | knn | svm | subknn");
  tr->add_option("--data", flags.data, "directory containing train.csv (default: --out)");
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a test set");
  add_common(ev);
  ev->add_option("--checkpoint", flags.checkpoint, "model checkpoint")->required();
  ev->add_option("--testset", flags.testset, "test CSV")->required();
  ev->add_option("--kind", flags.kind, "test-known | test-unknown | test-trajectory");
  auto* be = app.add_subcommand("bench", "latency scaling benchmark");
  add_common(be);
  auto* re = app.add_subcommand("repro", "full pipeline: generate, train x4, eval x3, bench");
  add_common(re);

  CLI11_PARSE(app, argc, argv);
  active = app.get_subcommands().front()->get_name();

  try {
    if (active == "repro") {
      const ExperimentConfig cfg = resolve_config(flags, std::string(kReproDefaults));
      cmd_repro(cfg);
    } else {
      const ExperimentConfig cfg = resolve_config(flags);
      if (active == "generate") {
        cmd_generate(cfg);
      } else if (active == "train") {
        cmd_train(cfg, flags.data.value_or(cfg.out));
      } else if (active == "eval") {
        cmd_eval(cfg, flags.checkpoint, flags.testset, flags.kind);
      } else if (active == "bench") {
        cmd_bench(cfg);
      }
    }
  } catch (const std::exception& e) {
    nlohmann::json err = {{"command", active}, {"message", e.what()}};
    std::cerr << "error: " << err.dump() << "\n";
    return 1;
  }
  return 0;
}

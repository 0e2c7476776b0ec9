#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "evcs/acceptance.hpp"
#include "evcs/config.hpp"
#include "evcs/dataset.hpp"
#include "evcs/errors.hpp"
#include "evcs/ids.hpp"
#include "evcs/network.hpp"
#include "evcs/simulation.hpp"

namespace {

using namespace evcs;

struct CommonFlags {
  std::string config_path;
  std::optional<double> ts;
  std::optional<double> duration;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> scenarios;
  std::optional<int> attackers;
  std::optional<std::string> out_dir;
  bool paper_scale = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("-c,--config", f.config_path, "JSON configuration file");
  cmd->add_option("--ts", f.ts, "Simulation step in seconds");
  cmd->add_option("--duration", f.duration, "Seconds per scenario run");
  cmd->add_option("--seed", f.seed, "Attack seed");
  cmd->add_option("--scenario", f.scenarios, "Scenario to run (repeatable)");
  cmd->add_option("--attackers", f.attackers, "Malicious nodes driving the DDoS delay");
  cmd->add_option("-o,--out", f.out_dir, "Output directory");
  cmd->add_flag("--paper-scale", f.paper_scale, "Use Ts = 10 us");
}

config::RunConfig resolve(const CommonFlags& f) {
  config::RunConfig c = f.config_path.empty() ? config::defaults() : config::load(f.config_path);
  if (f.paper_scale) c.ts = 1e-5;
  if (f.ts) c.ts = *f.ts;
  if (f.duration) c.duration = *f.duration;
  if (f.seed) c.seed = *f.seed;
  if (!f.scenarios.empty()) c.scenarios = f.scenarios;
  if (f.attackers) c.network.attackers = *f.attackers;
  if (f.out_dir) c.output_dir = *f.out_dir;
  c.validate();
  return c;
}

dataset::Dataset load_datasets(const std::vector<std::string>& paths) {
  dataset::Dataset d;
  for (const auto& p : paths) d.extend(dataset::import_csv(p));
  return d;
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open " + p.string() + " for writing");
  out << s;
}

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

int cmd_simulate(const CommonFlags& f) {
  const auto cfg = resolve(f);
  const auto summary = sim::simulate_all(cfg, false);
  for (const auto& r : summary.impact) {
    std::printf("%-9s %zu steps\n", r.plan.name.c_str(), r.steps);
  }
  const auto counts = summary.data.class_counts();
  std::printf("dataset   %zu rows (%zu / %zu / %zu / %zu per class) -> %s\n", summary.data.rows(),
              counts[0], counts[1], counts[2], counts[3], (cfg.output_dir / "dataset.csv").c_str());
  return 0;
}

int cmd_train(const CommonFlags& f, const std::vector<std::string>& datasets) {
  const auto cfg = resolve(f);
  std::filesystem::create_directories(cfg.output_dir);
  dataset::Dataset data = load_datasets(datasets);
  const auto prep = dataset::prepare(data, cfg.dataset.window, cfg.dataset.stride, cfg.dataset.split);
  std::printf("windows: %zu train / %zu val / %zu test\n", prep.split.train.size(),
              prep.split.val.size(), prep.split.test.size());

  auto model = ids::LstmModel::init(cfg.arch, cfg.train.seed);
  std::string history = "epoch,train_loss,train_accuracy,val_loss,val_accuracy\n";
  ids::train(model, data, prep.split.train, prep.split.val, cfg.train, [&](const ids::EpochStats& e) {
    std::printf("epoch %2zu  loss %.6f  acc %.6f  val_loss %.6f  val_acc %.6f\n", e.epoch,
                e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy);
    std::fflush(stdout);
    history += std::to_string(e.epoch) + "," + num(e.train_loss) + "," + num(e.train_accuracy) + "," +
               num(e.val_loss) + "," + num(e.val_accuracy) + "\n";
  });
  ids::save_model(model, cfg.output_dir / "model.ckpt");
  dataset::save_stats(prep.stats, cfg.output_dir / "normalization.csv");
  write_text(cfg.output_dir / "history.csv", history);

  nlohmann::json manifest;
  manifest["config"] = nlohmann::json::parse(config::to_json(cfg, -1));
  manifest["datasets"] = datasets;
  manifest["windows"] = {{"train", prep.split.train.size()},
                         {"val", prep.split.val.size()},
                         {"test", prep.split.test.size()}};
  manifest["parameters"] = model.parameter_count();
  write_text(cfg.output_dir / "train_manifest.json", manifest.dump(2) + "\n");
  std::printf("wrote %s\n", (cfg.output_dir / "model.ckpt").c_str());
  return 0;
}

int cmd_evaluate(const CommonFlags& f, const std::string& model_path,
                 const std::vector<std::string>& datasets, std::string stats_path) {
  const auto cfg = resolve(f);
  std::filesystem::create_directories(cfg.output_dir);
  const auto model = ids::load_model(model_path);
  if (stats_path.empty()) stats_path = (std::filesystem::path(model_path).parent_path() / "normalization.csv").string();
  dataset::Dataset data = load_datasets(datasets);
  const auto stats = dataset::load_stats(stats_path);
  // The split is a pure function of the dataset and split seed, so the test
  // windows match the ones held out during training.
  const auto split = dataset::split(dataset::window(data, cfg.dataset.window, cfg.dataset.stride),
                                    cfg.dataset.split);
  dataset::normalize_apply(stats, data);
  const auto scored = ids::score(model, data, split.test);
  std::vector<int> actual;
  std::string predictions = "window_start,actual,predicted\n";
  for (std::size_t k = 0; k < split.test.size(); ++k) {
    actual.push_back(split.test[k].label);
    predictions += std::to_string(split.test[k].start) + "," + std::to_string(split.test[k].label) +
                   "," + std::to_string(scored.predicted[k]) + "\n";
  }
  const auto report = ids::compute_metrics(scored.predicted, actual, model.classes());
  const auto table = ids::format_metrics_table(report);
  write_text(cfg.output_dir / "metrics.txt", table);
  write_text(cfg.output_dir / "metrics.csv", ids::format_metrics_csv(report));
  write_text(cfg.output_dir / "predictions.csv", predictions);
  std::fputs(table.c_str(), stdout);
  return 0;
}

int cmd_netsweep(const CommonFlags& f, const std::string& mode) {
  auto cfg = resolve(f);
  if (!mode.empty()) cfg.network.mode = mode;
  cfg.network.validate();
  std::printf("%-10s %14s %18s\n", "nodes", "delay_ms", cfg.network.mode == "table" ? "throughput_mbps" : "throughput_ratio");
  for (int k = 0; k <= 15; ++k) {
    if (cfg.network.mode == "table") {
      std::printf("%-10d %14.3f %18.3f\n", k, network::table_delay(k), network::table_throughput(k));
    } else {
      double delay = 0.0, ratio = 0.0;
      for (int s = 0; s < cfg.network.des_seeds; ++s) {
        auto c = cfg.network.des;
        c.attacker_count = k;
        c.seed = cfg.network.des.seed + static_cast<std::uint64_t>(s);
        const auto r = network::synflood_simulate(c);
        delay += r.mean_delay_ms / cfg.network.des_seeds;
        ratio += r.throughput_ratio / cfg.network.des_seeds;
      }
      std::printf("%-10d %14.3f %18.4f\n", k, delay, ratio);
    }
  }
  return 0;
}

int cmd_verify(const CommonFlags& f, const std::vector<std::string>& only, const std::string& work) {
  acceptance::Options opts;
  opts.cfg = resolve(f);
  opts.only.insert(only.begin(), only.end());
  if (!work.empty()) opts.work_dir = work;
  const auto results = acceptance::run(opts, std::cout);
  for (const auto& r : results) {
    if (!r.passed) return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Standalone PV charging station simulator, attack injector and LSTM intrusion detector"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::vector<std::string> datasets;
  std::string model_path, stats_path, net_mode, work_dir;
  std::vector<std::string> only;

  auto* simulate = app.add_subcommand("simulate", "Run scenarios, write time series and the dataset");
  add_common(simulate, flags);

  auto* train = app.add_subcommand("train", "Train the classifier on fingerprint CSV files");
  add_common(train, flags);
  train->add_option("-d,--dataset", datasets, "Dataset CSV (repeatable)")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on the held-out windows");
  add_common(evaluate, flags);
  evaluate->add_option("-m,--model", model_path, "Checkpoint file")->required();
  evaluate->add_option("-d,--dataset", datasets, "Dataset CSV (repeatable)")->required();
  evaluate->add_option("--normalization", stats_path, "Normalization file from training");

  auto* netsweep = app.add_subcommand("netsweep", "Delay and throughput for 0..15 attacking nodes");
  add_common(netsweep, flags);
  netsweep->add_option("--mode", net_mode, "table or des")->check(CLI::IsMember({"table", "des"}));

  auto* verify = app.add_subcommand("verify", "Run the acceptance checks");
  add_common(verify, flags);
  verify->add_option("--only", only, "Criterion ids to run, e.g. 7a 8");
  verify->add_option("--work-dir", work_dir, "Scratch directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*simulate) return cmd_simulate(flags);
    if (*train) return cmd_train(flags, datasets);
    if (*evaluate) return cmd_evaluate(flags, model_path, datasets, stats_path);
    if (*netsweep) return cmd_netsweep(flags, net_mode);
    if (*verify) return cmd_verify(flags, only, work_dir);
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}

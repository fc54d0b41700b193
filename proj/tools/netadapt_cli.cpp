#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "netadapt/adapt.hpp"
#include "netadapt/costmodel.hpp"
#include "netadapt/detail/io.hpp"
#include "netadapt/microtrain.hpp"
#include "netadapt/netgraph.hpp"
#include "netadapt/pruner.hpp"
#include "netadapt/runconfig.hpp"

namespace {

namespace fs = std::filesystem;
using namespace netadapt;

// Stable exit-code contract for scripting.
constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumerical = 4;
constexpr int kExitMeasurement = 5;
constexpr int kExitStalled = 6;

struct DatasetGenArgs {
  int classes = 10;
  int per_class = 100;
  int channels = 3, height = 8, width = 8;
  double separation = 2.0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_dataset_gen(const DatasetGenArgs& a) {
  if (a.classes < 1 || a.per_class < 1 || a.channels < 1 || a.height < 1 ||
      a.width < 1) {
    std::cerr << "dataset-gen: counts must be >= 1\n";
    return kExitUsage;
  }
  const Dataset data = synth_dataset(a.classes, a.per_class,
                                     {a.channels, a.height, a.width},
                                     a.separation, a.seed);
  save_dataset(data, a.out);
  std::cout << "wrote " << a.out << " (" << data.size() << " samples, "
            << a.classes << " classes)\n";
  return kExitOk;
}

struct TrainArgs {
  std::string arch;
  std::optional<double> alpha;
  std::string dataset;
  std::size_t iterations = 2000;
  double lr = 0.05;
  int batch_size = 32;
  int holdout_per_class = 10;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_train(const TrainArgs& a) {
  const Dataset data = load_dataset(a.dataset);
  NetworkSpec net = parse_arch(a.arch, data.shape, data.class_count);
  if (a.alpha) {
    net = width_multiplier(net, *a.alpha, a.seed);
  } else {
    init_weights(net, a.seed);
  }
  const auto [train_set, holdout] =
      split_holdout(data, a.holdout_per_class, a.seed);
  TrainConfig tc;
  tc.learning_rate = a.lr;
  tc.batch_size = a.batch_size;
  tc.iterations = a.iterations;
  tc.seed = a.seed;
  net = train(net, train_set, tc);
  save_model(net, a.out);
  std::cout << "train_accuracy=" << detail::dec_double(
                   evaluate_accuracy(net, train_set))
            << " holdout_accuracy="
            << detail::dec_double(evaluate_accuracy(net, holdout)) << " macs="
            << count_macs(net) << " model=" << a.out << "\n";
  return kExitOk;
}

struct LutBuildArgs {
  std::string model;
  int grid_step = 1;
  int warmups = 3;
  int repeats = 11;
  int timing_batch = 1;
  std::string out;
};

int cmd_lut_build(const LutBuildArgs& a) {
  if (a.repeats < 3 || a.repeats % 2 == 0) {
    std::cerr << "lut-build: --repeats must be odd and >= 3\n";
    return kExitUsage;
  }
  if (a.grid_step < 1 || a.warmups < 0 || a.timing_batch < 1) {
    std::cerr << "lut-build: bad measurement flags\n";
    return kExitUsage;
  }
  const NetworkSpec net = load_model(a.model);
  MeasurementConfig cfg;
  cfg.warmup_runs = a.warmups;
  cfg.repeats = a.repeats;
  cfg.channel_grid_step = a.grid_step;
  cfg.timing_batch_size = a.timing_batch;
  const LatencyLUT lut = build_lut(net, cfg);
  lut_save(lut, a.out);
  std::size_t entries = 0;
  for (const auto& fam : lut.families) entries += fam.entries_ms.size();
  std::cout << "wrote " << a.out << " (" << lut.families.size()
            << " families, " << entries << " entries)\n";
  return kExitOk;
}

struct AdaptArgs {
  std::string config;
  std::optional<double> budget_latency;
  std::optional<double> budget_macs;
  std::vector<std::string> metric_override;
};

int cmd_adapt(const AdaptArgs& a) {
  RunConfig cfg = load_run_config(a.config);
  if (!a.metric_override.empty()) {
    cfg.metrics.clear();
    Budget filtered;
    for (const std::string& name : a.metric_override) {
      Metric m;
      if (name == "latency") {
        m = Metric::Latency;
      } else if (name == "macs") {
        m = Metric::MACs;
      } else {
        std::cerr << "adapt: unknown metric '" << name << "'\n";
        return kExitUsage;
      }
      cfg.metrics.push_back(m);
      if (cfg.budget.bounds.count(m)) {
        filtered.bounds[m] = cfg.budget.bounds[m];
      }
    }
    cfg.budget = filtered;
  }
  if (a.budget_latency) cfg.budget.bounds[Metric::Latency] = *a.budget_latency;
  if (a.budget_macs) cfg.budget.bounds[Metric::MACs] = *a.budget_macs;
  for (Metric m : cfg.metrics) {
    if (!cfg.budget.bounds.count(m)) {
      std::cerr << "adapt: no budget for an active metric\n";
      return kExitUsage;
    }
  }

  const Dataset data = load_dataset(cfg.dataset_path);
  const NetworkSpec net0 = load_model(cfg.model_path);
  LatencyLUT lut;
  const bool latency_active =
      cfg.budget.bounds.count(Metric::Latency) != 0;
  if (latency_active) lut = lut_load(cfg.lut_path);

  fs::create_directories(cfg.output_dir);
  const AdaptResult result =
      adapt(net0, cfg.budget, cfg.schedule, cfg.adapt, lut, data);

  for (const FrontierPoint& p : result.frontier.iterations) {
    save_model(p.net, cfg.output_dir / p.model_file);
  }
  save_model(result.net, cfg.output_dir / result.frontier.final_point.model_file);
  frontier_export(result.frontier, cfg.output_dir / "frontier.csv");

  std::ostringstream log;
  const auto status_name = [](ProposalStatus s) {
    switch (s) {
      case ProposalStatus::Ok: return "ok";
      case ProposalStatus::Infeasible: return "infeasible";
      default: return "failed";
    }
  };
  for (const IterationRecord& rec : result.records) {
    for (const ProposalSummary& p : rec.proposals) {
      log << "iteration=" << rec.iteration << " layer=" << p.layer_index
          << " keep_count=" << p.keep_count << " accuracy="
          << detail::dec_double(p.holdout_accuracy) << " est_latency_ms="
          << (p.resources.latency_ms
                  ? detail::dec_double(*p.resources.latency_ms)
                  : "na")
          << " est_macs="
          << (p.resources.macs ? detail::dec_double(*p.resources.macs) : "na")
          << " status=" << status_name(p.status) << "\n";
    }
  }
  log << "status=" << to_string(result.status) << "\n";
  detail::atomic_write_file(cfg.output_dir / "adapt_log.txt", log.str());

  std::cout << "status=" << to_string(result.status) << " iterations="
            << result.frontier.iterations.size() << " out=" << cfg.output_dir
            << "\n";
  return result.status == AdaptStatus::Stalled ? kExitStalled : kExitOk;
}

struct EvalArgs {
  std::string model;
  std::string dataset;
  std::string lut;
  bool measure = false;
  int repeats = 11;
  int warmups = 3;
};

int cmd_eval(const EvalArgs& a) {
  const NetworkSpec net = load_model(a.model);
  const Dataset data = load_dataset(a.dataset);
  const double accuracy = evaluate_accuracy(net, data);
  std::string est = "na";
  if (!a.lut.empty()) {
    const LatencyLUT lut = lut_load(a.lut);
    const ResourceVector res =
        estimate_resources(net, {Metric::Latency}, lut);
    est = detail::dec_double(*res.latency_ms);
  }
  std::string meas = "na";
  if (a.measure) {
    MeasurementConfig cfg;
    cfg.repeats = a.repeats;
    cfg.warmup_runs = a.warmups;
    meas = detail::dec_double(measure_network(net, cfg));
  }
  std::cout << "accuracy=" << detail::dec_double(accuracy) << " macs="
            << count_macs(net) << " est_latency_ms=" << est
            << " meas_latency_ms=" << meas << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Platform-aware network adaptation: iterative filter pruning "
               "under an empirically measured resource budget"};
  app.require_subcommand(1);

  DatasetGenArgs dg;
  auto* gen = app.add_subcommand("dataset-gen", "Generate a synthetic dataset");
  gen->add_option("--classes", dg.classes, "Number of classes");
  gen->add_option("--per-class", dg.per_class, "Samples per class");
  gen->add_option("--channels", dg.channels, "Input channels");
  gen->add_option("--height", dg.height, "Input height");
  gen->add_option("--width", dg.width, "Input width");
  gen->add_option("--separation", dg.separation, "Class prototype norm");
  gen->add_option("--seed", dg.seed, "RNG seed");
  gen->add_option("--out", dg.out, "Output .dset path")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a network from scratch");
  train_cmd->add_option("--arch", tr.arch,
                        "Layer list, e.g. conv:16:3:1:same,dense:10")
      ->required();
  train_cmd->add_option("--alpha", tr.alpha, "Width multiplier in (0,1]");
  train_cmd->add_option("--dataset", tr.dataset, "Training .dset")->required();
  train_cmd->add_option("--iterations", tr.iterations, "SGD steps");
  train_cmd->add_option("--lr", tr.lr, "Learning rate");
  train_cmd->add_option("--batch-size", tr.batch_size, "Minibatch size");
  train_cmd->add_option("--holdout-per-class", tr.holdout_per_class,
                        "Holdout samples per class");
  train_cmd->add_option("--seed", tr.seed, "RNG seed");
  train_cmd->add_option("--out", tr.out, "Output .netmodel path")->required();

  LutBuildArgs lb;
  auto* lut_cmd = app.add_subcommand("lut-build",
                                     "Measure a layerwise latency table");
  lut_cmd->add_option("--model", lb.model, "Template .netmodel")->required();
  lut_cmd->add_option("--grid-step", lb.grid_step, "Channel grid step");
  lut_cmd->add_option("--warmups", lb.warmups, "Untimed warmup runs");
  lut_cmd->add_option("--repeats", lb.repeats, "Timed repeats (odd)");
  lut_cmd->add_option("--timing-batch", lb.timing_batch, "Timing batch size");
  lut_cmd->add_option("--out", lb.out, "Output .lut path")->required();

  AdaptArgs ad;
  auto* adapt_cmd = app.add_subcommand("adapt", "Run the adaptation loop");
  adapt_cmd->add_option("--config", ad.config, "Run configuration file")
      ->required();
  adapt_cmd->add_option("--budget.latency", ad.budget_latency,
                        "Override latency budget (ms)");
  adapt_cmd->add_option("--budget.macs", ad.budget_macs,
                        "Override MAC budget");
  adapt_cmd->add_option("--metric", ad.metric_override,
                        "Override active metrics (latency, macs)");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a saved model");
  eval_cmd->add_option("--model", ev.model, "Model .netmodel")->required();
  eval_cmd->add_option("--dataset", ev.dataset, "Dataset .dset")->required();
  eval_cmd->add_option("--lut", ev.lut, "LUT for latency estimation");
  eval_cmd->add_flag("--measure", ev.measure,
                     "Also measure latency directly (median protocol)");
  eval_cmd->add_option("--repeats", ev.repeats, "Timed repeats (odd)");
  eval_cmd->add_option("--warmups", ev.warmups, "Untimed warmup runs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_dataset_gen(dg);
    if (train_cmd->parsed()) return cmd_train(tr);
    if (lut_cmd->parsed()) return cmd_lut_build(lb);
    if (adapt_cmd->parsed()) return cmd_adapt(ad);
    if (eval_cmd->parsed()) return cmd_eval(ev);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidAlpha& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ClockFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMeasurement;
  } catch (const EmptySpatial& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMeasurement;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}

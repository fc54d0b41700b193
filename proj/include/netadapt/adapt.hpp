#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "netadapt/costmodel.hpp"
#include "netadapt/microtrain.hpp"
#include "netadapt/netgraph.hpp"
#include "netadapt/pruner.hpp"

namespace netadapt {

/// Per-metric constraint tightening: delta_i = init * decay^(i-1).
struct ReductionSchedule {
  struct MetricSchedule {
    double initial_delta = 0.0;  // > 0
    double decay = 1.0;          // in (0, 1]
  };
  std::map<Metric, MetricSchedule> per_metric;
};

struct Budget {
  std::map<Metric, double> bounds;  // all > 0

  std::vector<Metric> metrics() const;
  ResourceVector as_resources() const;
};

struct AdaptConfig {
  std::size_t short_term_iterations = 200;
  double short_term_lr = 0.005;
  std::size_t long_term_iterations = 2000;
  double long_term_lr = 0.05;
  int batch_size = 32;
  int holdout_per_class = 10;
  std::uint64_t master_seed = 0;
  bool parallel_proposals = false;
};

enum class ProposalStatus { Ok, Infeasible, Failed };

struct ProposalSummary {
  int layer_index = 0;
  int keep_count = 0;
  double holdout_accuracy = 0.0;
  ResourceVector resources;
  ProposalStatus status = ProposalStatus::Infeasible;
};

struct IterationRecord {
  int iteration = 0;  // 1-based
  int chosen_layer = -1;
  int keep_count = 0;
  double holdout_accuracy = 0.0;
  ResourceVector resources;
  std::vector<ProposalSummary> proposals;
};

struct FrontierPoint {
  NetworkSpec net;
  double accuracy = 0.0;
  ResourceVector resources;
  int layer_pruned = -1;  // -1 for the initial/final entries
  int keep_count = 0;
  std::string model_file;
};

/// Best network of every iteration, plus the final long-term-fine-tuned
/// network scored on the full training set.
struct Frontier {
  std::vector<FrontierPoint> iterations;
  FrontierPoint final_point;
};

enum class AdaptStatus { BudgetMet, Stalled, AlreadyWithinBudget };
std::string to_string(AdaptStatus status);

struct AdaptResult {
  NetworkSpec net;
  Frontier frontier;
  AdaptStatus status = AdaptStatus::BudgetMet;
  std::vector<IterationRecord> records;
};

double delta(const ReductionSchedule& schedule, int iteration, Metric metric);

/// One full run: iterative single-layer pruning under the tightening
/// constraint, accuracy-based selection on a class-balanced holdout, then a
/// long-term fine-tune of the chosen network on the whole dataset.
AdaptResult adapt(const NetworkSpec& net0, const Budget& budget,
                  const ReductionSchedule& schedule, const AdaptConfig& cfg,
                  const LatencyLUT& lut, const Dataset& data);

/// Index of the proposal with the highest holdout accuracy among those with
/// status Ok; ties go to lower latency estimate, then lower MACs, then lower
/// layer index. Throws NoFeasibleProposal if none is Ok.
std::size_t pick_highest_accuracy(const std::vector<ProposalSummary>& proposals);

/// Delimited text table, one row per frontier point plus the final network.
/// Byte-identical across re-exports.
void frontier_export(const Frontier& frontier,
                     const std::filesystem::path& path);

}  // namespace netadapt

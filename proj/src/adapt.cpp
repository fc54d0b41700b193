#include "netadapt/adapt.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include "netadapt/detail/io.hpp"

namespace netadapt {

std::vector<Metric> Budget::metrics() const {
  std::vector<Metric> out;
  for (const auto& [m, _] : bounds) out.push_back(m);
  return out;
}

ResourceVector Budget::as_resources() const {
  ResourceVector res;
  for (const auto& [m, bound] : bounds) {
    if (m == Metric::Latency) {
      res.latency_ms = bound;
    } else {
      res.macs = bound;
    }
  }
  return res;
}

std::string to_string(AdaptStatus status) {
  switch (status) {
    case AdaptStatus::BudgetMet:
      return "BudgetMet";
    case AdaptStatus::Stalled:
      return "Stalled";
    case AdaptStatus::AlreadyWithinBudget:
      return "AlreadyWithinBudget";
  }
  return "?";
}

double delta(const ReductionSchedule& schedule, int iteration, Metric metric) {
  const auto it = schedule.per_metric.find(metric);
  if (it == schedule.per_metric.end()) {
    throw Error("no reduction schedule for active metric");
  }
  const auto& s = it->second;
  if (!(s.initial_delta > 0.0) || !(s.decay > 0.0) || s.decay > 1.0) {
    throw Error("reduction schedule requires initial_delta > 0 and decay in "
                "(0, 1]");
  }
  return s.initial_delta * std::pow(s.decay, iteration - 1);
}

std::size_t pick_highest_accuracy(
    const std::vector<ProposalSummary>& proposals) {
  std::optional<std::size_t> best;
  const auto better = [](const ProposalSummary& a, const ProposalSummary& b) {
    if (a.holdout_accuracy != b.holdout_accuracy) {
      return a.holdout_accuracy > b.holdout_accuracy;
    }
    const double la = a.resources.latency_ms.value_or(0.0);
    const double lb = b.resources.latency_ms.value_or(0.0);
    if (la != lb) return la < lb;
    const double ma = a.resources.macs.value_or(0.0);
    const double mb = b.resources.macs.value_or(0.0);
    if (ma != mb) return ma < mb;
    return a.layer_index < b.layer_index;
  };
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    if (proposals[i].status != ProposalStatus::Ok) continue;
    if (!best || better(proposals[i], proposals[*best])) best = i;
  }
  if (!best) throw NoFeasibleProposal("no proposal with status ok");
  return *best;
}

namespace {

ResourceVector estimate_or_coverage(const NetworkSpec& net,
                                    const std::vector<Metric>& metrics,
                                    const LatencyLUT& lut) {
  try {
    return estimate_resources(net, metrics, lut);
  } catch (const UnknownFamily& e) {
    throw CoverageError(e.what());
  }
}

struct ProposalResult {
  ProposalSummary summary;
  NetworkSpec net;  // valid when summary.status == Ok
  std::exception_ptr error;
};

void evaluate_proposal(const NetworkSpec& net, int k,
                       const ResourceVector& constraint,
                       const std::vector<Metric>& metrics,
                       const LatencyLUT& lut, const Dataset& train_set,
                       const Dataset& holdout, const AdaptConfig& cfg,
                       std::uint64_t seed, ProposalResult& out) {
  out.summary.layer_index = k;
  try {
    const auto chosen = choose_num_filters(net, k, constraint, metrics, lut);
    if (!chosen) {
      out.summary.status = ProposalStatus::Infeasible;
      return;
    }
    const auto& [keep_count, est] = *chosen;
    out.summary.keep_count = keep_count;
    out.summary.resources = est;
    PruneDecision decision;
    decision.layer_index = k;
    decision.keep_count = keep_count;
    decision.keep_indices = choose_which_filters(net, k, keep_count);
    decision.estimated_resources = est;
    NetworkSpec pruned = apply_prune(net, decision);

    TrainConfig tc;
    tc.learning_rate = cfg.short_term_lr;
    tc.batch_size = cfg.batch_size;
    tc.iterations = cfg.short_term_iterations;
    tc.seed = seed;
    try {
      pruned = train(pruned, train_set, tc);
    } catch (const NumericalFailure&) {
      out.summary.status = ProposalStatus::Failed;
      return;
    }
    out.summary.holdout_accuracy = evaluate_accuracy(pruned, holdout);
    out.summary.status = ProposalStatus::Ok;
    out.net = std::move(pruned);
  } catch (...) {
    out.error = std::current_exception();
  }
}

}  // namespace

AdaptResult adapt(const NetworkSpec& net0, const Budget& budget,
                  const ReductionSchedule& schedule, const AdaptConfig& cfg,
                  const LatencyLUT& lut, const Dataset& data) {
  validate_network(net0);
  if (budget.bounds.empty()) throw Error("budget has no active metrics");
  for (const auto& [m, bound] : budget.bounds) {
    if (!(bound > 0.0)) throw Error("budget bounds must be > 0");
    (void)delta(schedule, 1, m);  // validates schedule coverage
  }
  const std::vector<Metric> metrics = budget.metrics();
  const ResourceVector bounds = budget.as_resources();

  const auto [train_set, holdout] =
      split_holdout(data, cfg.holdout_per_class, cfg.master_seed);

  AdaptResult result;
  NetworkSpec net = net0;
  ResourceVector res = estimate_or_coverage(net, metrics, lut);

  const auto long_term_finetune = [&](const NetworkSpec& n) {
    TrainConfig tc;
    tc.learning_rate = cfg.long_term_lr;
    tc.batch_size = cfg.batch_size;
    tc.iterations = cfg.long_term_iterations;
    tc.seed = cfg.master_seed;
    return train(n, data, tc);  // whole training set, holdout included
  };

  if (res.within(bounds)) {
    result.status = AdaptStatus::AlreadyWithinBudget;
    result.net = long_term_finetune(net);
    result.frontier.final_point = {result.net,
                                   evaluate_accuracy(result.net, data), res,
                                   -1, 0, "net_final.netmodel"};
    return result;
  }

  const int prunable = static_cast<int>(net.layers.size()) - 1;
  result.status = AdaptStatus::BudgetMet;
  for (int i = 1; !res.within(bounds); ++i) {
    ResourceVector constraint;
    if (res.latency_ms) {
      constraint.latency_ms = *res.latency_ms - delta(schedule, i, Metric::Latency);
    }
    if (res.macs) {
      constraint.macs = *res.macs - delta(schedule, i, Metric::MACs);
    }

    std::vector<ProposalResult> proposals(prunable);
    const auto run_one = [&](int k) {
      const std::uint64_t seed = cfg.master_seed ^
                                 (static_cast<std::uint64_t>(i) << 32) ^
                                 static_cast<std::uint64_t>(k);
      evaluate_proposal(net, k, constraint, metrics, lut, train_set, holdout,
                        cfg, seed, proposals[k]);
    };
    if (cfg.parallel_proposals && prunable > 1) {
      std::vector<std::thread> workers;
      workers.reserve(prunable);
      for (int k = 0; k < prunable; ++k) workers.emplace_back(run_one, k);
      for (auto& w : workers) w.join();
    } else {
      for (int k = 0; k < prunable; ++k) run_one(k);
    }
    for (const auto& p : proposals) {
      if (p.error) std::rethrow_exception(p.error);
    }

    IterationRecord record;
    record.iteration = i;
    for (const auto& p : proposals) record.proposals.push_back(p.summary);

    std::size_t best;
    try {
      best = pick_highest_accuracy(record.proposals);
    } catch (const NoFeasibleProposal&) {
      result.status = AdaptStatus::Stalled;
      result.records.push_back(std::move(record));
      break;
    }
    net = std::move(proposals[best].net);
    res = record.proposals[best].resources;
    record.chosen_layer = record.proposals[best].layer_index;
    record.keep_count = record.proposals[best].keep_count;
    record.holdout_accuracy = record.proposals[best].holdout_accuracy;
    record.resources = res;
    result.records.push_back(std::move(record));
    result.frontier.iterations.push_back(
        {net, result.records.back().holdout_accuracy, res,
         result.records.back().chosen_layer, result.records.back().keep_count,
         "net_iter" + std::to_string(i) + ".netmodel"});
  }

  result.net = long_term_finetune(net);
  result.frontier.final_point = {result.net,
                                 evaluate_accuracy(result.net, data), res, -1,
                                 0, "net_final.netmodel"};
  return result;
}

void frontier_export(const Frontier& frontier,
                     const std::filesystem::path& path) {
  std::ostringstream out;
  out << "iteration,layer_pruned,keep_count,holdout_accuracy,"
         "latency_ms_estimated,macs,model_file\n";
  const auto resource_cols = [](const ResourceVector& r) {
    std::string s;
    s += r.latency_ms ? detail::dec_double(*r.latency_ms) : "na";
    s += ",";
    s += r.macs ? detail::dec_double(*r.macs) : "na";
    return s;
  };
  int i = 1;
  for (const FrontierPoint& p : frontier.iterations) {
    out << i++ << "," << p.layer_pruned << "," << p.keep_count << ","
        << detail::dec_double(p.accuracy) << "," << resource_cols(p.resources)
        << "," << p.model_file << "\n";
  }
  const FrontierPoint& f = frontier.final_point;
  out << "final,-,-," << detail::dec_double(f.accuracy) << ","
      << resource_cols(f.resources) << "," << f.model_file << "\n";
  detail::atomic_write_file(path, out.str());
}

}  // namespace netadapt

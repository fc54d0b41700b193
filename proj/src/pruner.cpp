#include "netadapt/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace netadapt {

std::vector<int> choose_which_filters(const NetworkSpec& net, int k,
                                      int keep_count) {
  if (k < 0 || k + 1 >= static_cast<int>(net.layers.size())) {
    throw NotPrunable("layer " + std::to_string(k) +
                      " is the classifier or out of range");
  }
  const LayerSpec& layer = net.layers[k];
  if (keep_count < 1 || keep_count > layer.out_filters) {
    throw Inconsistent("keep_count " + std::to_string(keep_count) +
                       " outside [1, " + std::to_string(layer.out_filters) +
                       "]");
  }
  const std::size_t fsize = layer.filter_size();
  std::vector<double> norms(layer.out_filters);
  for (int f = 0; f < layer.out_filters; ++f) {
    const double* w = layer.weights.data() + f * fsize;
    double sq = 0.0;
    for (std::size_t i = 0; i < fsize; ++i) sq += w[i] * w[i];
    norms[f] = std::sqrt(sq);
  }
  std::vector<int> order(layer.out_filters);
  std::iota(order.begin(), order.end(), 0);
  // descending norm, lower index wins ties
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return norms[a] > norms[b]; });
  std::vector<int> keep(order.begin(), order.begin() + keep_count);
  std::sort(keep.begin(), keep.end());
  return keep;
}

NetworkSpec apply_prune(const NetworkSpec& net, const PruneDecision& decision) {
  const int k = decision.layer_index;
  if (k < 0 || k + 1 >= static_cast<int>(net.layers.size())) {
    throw Inconsistent("layer index " + std::to_string(k) +
                       " is not a prunable position");
  }
  const LayerSpec& target = net.layers[k];
  const auto& keep = decision.keep_indices;
  if (static_cast<int>(keep.size()) != decision.keep_count ||
      decision.keep_count < 1) {
    throw Inconsistent("keep_indices size does not match keep_count");
  }
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (keep[i] < 0 || keep[i] >= target.out_filters ||
        (i > 0 && keep[i] <= keep[i - 1])) {
      throw Inconsistent("keep_indices must be strictly increasing and in "
                         "range");
    }
  }

  NetworkSpec pruned = net;

  // Target layer: keep the selected rows, original relative order.
  LayerSpec& lt = pruned.layers[k];
  const std::size_t fsize = target.filter_size();
  std::vector<double> weights, bias;
  weights.reserve(keep.size() * fsize);
  for (int f : keep) {
    const double* w = target.weights.data() + f * fsize;
    weights.insert(weights.end(), w, w + fsize);
    bias.push_back(target.bias[f]);
  }
  lt.out_filters = decision.keep_count;
  lt.weights = std::move(weights);
  lt.bias = std::move(bias);

  // Consumer layer: drop the matching input slices. A dense consumer fed by
  // a conv sees each removed channel as h*w contiguous columns
  // (channel-major flatten).
  LayerSpec& consumer = pruned.layers[k + 1];
  const int block =
      (consumer.kind == LayerKind::Dense && target.kind == LayerKind::Conv2D)
          ? consumer.in_channels / target.out_filters
          : 1;
  const int old_in = consumer.in_channels;
  std::vector<double> cw;
  if (consumer.kind == LayerKind::Conv2D) {
    const int kk = consumer.kernel_h * consumer.kernel_w;
    cw.reserve(static_cast<std::size_t>(consumer.out_filters) * keep.size() * kk);
    for (int o = 0; o < consumer.out_filters; ++o) {
      const double* base = net.layers[k + 1].weights.data() +
                           static_cast<std::size_t>(o) * old_in * kk;
      for (int f : keep) {
        const double* slice = base + static_cast<std::size_t>(f) * kk;
        cw.insert(cw.end(), slice, slice + kk);
      }
    }
    consumer.in_channels = decision.keep_count;
  } else {
    cw.reserve(static_cast<std::size_t>(consumer.out_filters) * keep.size() *
               block);
    for (int o = 0; o < consumer.out_filters; ++o) {
      const double* base = net.layers[k + 1].weights.data() +
                           static_cast<std::size_t>(o) * old_in;
      for (int f : keep) {
        const double* slice = base + static_cast<std::size_t>(f) * block;
        cw.insert(cw.end(), slice, slice + block);
      }
    }
    consumer.in_channels = decision.keep_count * block;
  }
  consumer.weights = std::move(cw);

  validate_network(pruned);
  return pruned;
}

NetworkSpec resize_layer(const NetworkSpec& net, int k, int keep_count) {
  PruneDecision d;
  d.layer_index = k;
  d.keep_count = keep_count;
  d.keep_indices.resize(keep_count);
  std::iota(d.keep_indices.begin(), d.keep_indices.end(), 0);
  return apply_prune(net, d);
}

std::optional<std::pair<int, ResourceVector>> choose_num_filters(
    const NetworkSpec& net, int k, const ResourceVector& constraint,
    const std::vector<Metric>& metrics, const LatencyLUT& lut) {
  if (k < 0 || k + 1 >= static_cast<int>(net.layers.size())) {
    throw NotPrunable("layer " + std::to_string(k) +
                      " is the classifier or out of range");
  }
  const int current = net.layers[k].out_filters;
  // Scan from the top: the first satisfying N is the largest one, which is
  // exactly the exhaustive-scan answer (no monotonicity assumed).
  for (int n = current; n >= 1; --n) {
    const NetworkSpec candidate =
        n == current ? net : resize_layer(net, k, n);
    const ResourceVector est = estimate_resources(candidate, metrics, lut);
    if (est.within(constraint)) {
      return std::make_pair(n, est);
    }
  }
  return std::nullopt;
}

}  // namespace netadapt

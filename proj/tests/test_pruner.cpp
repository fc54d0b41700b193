#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "netadapt/microtrain.hpp"
#include "netadapt/pruner.hpp"
#include "test_util.hpp"

using namespace netadapt;
using testutil::random_batch;
using testutil::small_net;

namespace {

std::vector<double> filter_norms(const LayerSpec& layer) {
  std::vector<double> norms(layer.out_filters);
  const std::size_t fs = layer.filter_size();
  for (int f = 0; f < layer.out_filters; ++f) {
    double sq = 0.0;
    for (std::size_t i = 0; i < fs; ++i) {
      const double w = layer.weights[f * fs + i];
      sq += w * w;
    }
    norms[f] = std::sqrt(sq);
  }
  return norms;
}

// Independent selection oracle: full stable sort by descending norm.
std::vector<int> sort_oracle(const LayerSpec& layer, int keep) {
  const auto norms = filter_norms(layer);
  std::vector<int> order(norms.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return norms[a] > norms[b]; });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

void scale_filter(LayerSpec& layer, int f, double factor) {
  const std::size_t fs = layer.filter_size();
  for (std::size_t i = 0; i < fs; ++i) layer.weights[f * fs + i] *= factor;
}

// Masked equivalent of a prune: dropped filters keep their slot but produce
// exactly zero, so the consumer sees the same values as after a real prune.
NetworkSpec masked(const NetworkSpec& net, int k,
                   const std::vector<int>& keep) {
  NetworkSpec out = net;
  LayerSpec& layer = out.layers[k];
  const std::size_t fs = layer.filter_size();
  for (int f = 0; f < layer.out_filters; ++f) {
    if (std::find(keep.begin(), keep.end(), f) != keep.end()) continue;
    for (std::size_t i = 0; i < fs; ++i) layer.weights[f * fs + i] = 0.0;
    layer.bias[f] = 0.0;
  }
  return out;
}

PruneDecision decision_for(const NetworkSpec& net, int k,
                           std::vector<int> keep) {
  PruneDecision d;
  d.layer_index = k;
  d.keep_count = static_cast<int>(keep.size());
  d.keep_indices = std::move(keep);
  return d;
}

}  // namespace

TEST_CASE("largest-norm filters are kept") {
  NetworkSpec net = small_net(1, 4, {3}, {}, 2, 5);
  LayerSpec& conv = net.layers[0];
  const std::size_t fs = conv.filter_size();
  // norms 0.5, 2.0, 1.0
  for (std::size_t i = 0; i < fs; ++i) {
    conv.weights[0 * fs + i] = 0.0;
    conv.weights[1 * fs + i] = 0.0;
    conv.weights[2 * fs + i] = 0.0;
  }
  conv.weights[0 * fs] = 0.5;
  conv.weights[1 * fs] = 2.0;
  conv.weights[2 * fs] = 1.0;
  CHECK(choose_which_filters(net, 0, 2) == std::vector<int>{1, 2});
  CHECK(choose_which_filters(net, 0, 1) == std::vector<int>{1});
}

TEST_CASE("norm ties keep the lower index") {
  NetworkSpec net = small_net(1, 4, {4}, {}, 2, 5);
  LayerSpec& conv = net.layers[0];
  std::fill(conv.weights.begin(), conv.weights.end(), 0.3);
  CHECK(choose_which_filters(net, 0, 2) == std::vector<int>{0, 1});
}

TEST_CASE("bias does not count toward the selection norm") {
  NetworkSpec net = small_net(1, 4, {2}, {}, 2, 5);
  LayerSpec& conv = net.layers[0];
  const std::size_t fs = conv.filter_size();
  for (std::size_t i = 0; i < fs; ++i) {
    conv.weights[0 * fs + i] = 0.01;
    conv.weights[1 * fs + i] = 1.0;
  }
  conv.bias[0] = 1000.0;  // big bias must not rescue the weak filter
  CHECK(choose_which_filters(net, 0, 1) == std::vector<int>{1});
}

TEST_CASE("selection matches the full-sort oracle") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const NetworkSpec net = small_net(2, 6, {8, 6}, {7}, 3, seed + 31);
    Rng rng(seed);
    for (int k = 0; k < 3; ++k) {
      const int max_keep = net.layers[k].out_filters;
      const int keep = 1 + static_cast<int>(rng.index(max_keep));
      CHECK(choose_which_filters(net, k, keep) ==
            sort_oracle(net.layers[k], keep));
    }
  }
}

TEST_CASE("keeping every filter reproduces the network") {
  const NetworkSpec net = small_net(2, 5, {4}, {5}, 3, 17);
  std::vector<int> all(4);
  std::iota(all.begin(), all.end(), 0);
  const NetworkSpec pruned = apply_prune(net, decision_for(net, 0, all));
  CHECK(pruned == net);
}

TEST_CASE("pruning a zeroed filter leaves the logits untouched") {
  NetworkSpec net = small_net(1, 5, {3}, {}, 4, 23);
  scale_filter(net.layers[0], 1, 0.0);
  net.layers[0].bias[1] = 0.0;
  const NetworkSpec pruned = apply_prune(net, decision_for(net, 0, {0, 2}));
  const auto batch = random_batch(net, 3, 40);
  const auto a = forward(net, batch, 3);
  const auto b = forward(pruned, batch, 3);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  }
}

TEST_CASE("pruned forward equals the masked-network oracle") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    // conv -> conv -> dense -> classifier covers both consumer kinds
    const NetworkSpec net = small_net(2, 6, {6, 5}, {8}, 3, seed + 51);
    Rng rng(seed + 7);
    for (int k = 0; k < 3; ++k) {
      const int total = net.layers[k].out_filters;
      const int keep_n = 1 + static_cast<int>(rng.index(total - 1));
      std::vector<int> all(total);
      std::iota(all.begin(), all.end(), 0);
      rng.shuffle(all);
      std::vector<int> keep(all.begin(), all.begin() + keep_n);
      std::sort(keep.begin(), keep.end());

      const NetworkSpec pruned =
          apply_prune(net, decision_for(net, k, keep));
      CHECK_NOTHROW(validate_network(pruned));
      const NetworkSpec ghost = masked(net, k, keep);

      const auto batch = random_batch(net, 4, seed + 90);
      const auto want = forward(ghost, batch, 4);
      const auto got = forward(pruned, batch, 4);
      REQUIRE(want.size() == got.size());
      for (std::size_t i = 0; i < want.size(); ++i) {
        const double denom = std::max(1e-8, std::abs(want[i]));
        CHECK(std::abs(want[i] - got[i]) / denom < 1e-9);
      }
    }
  }
}

TEST_CASE("pruning strictly reduces the mac count") {
  const NetworkSpec net = small_net(2, 6, {6, 5}, {8}, 3, 61);
  for (int k = 0; k < 3; ++k) {
    const auto keep = choose_which_filters(net, k, 2);
    const NetworkSpec pruned = apply_prune(net, decision_for(net, k, keep));
    CHECK(count_macs(pruned) < count_macs(net));
  }
}

TEST_CASE("invalid keep sets are rejected") {
  const NetworkSpec net = small_net(1, 4, {4}, {}, 3, 3);
  CHECK_THROWS_AS(apply_prune(net, decision_for(net, 0, {0, 0})),
                  Inconsistent);
  CHECK_THROWS_AS(apply_prune(net, decision_for(net, 0, {2, 1})),
                  Inconsistent);
  CHECK_THROWS_AS(apply_prune(net, decision_for(net, 0, {0, 4})),
                  Inconsistent);
  CHECK_THROWS_AS(apply_prune(net, decision_for(net, 0, {})), Inconsistent);
}

TEST_CASE("choose_num_filters matches an exhaustive scan") {
  const LatencyLUT no_lut;
  const std::vector<Metric> macs{Metric::MACs};
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const NetworkSpec net = small_net(2, 6, {8, 6}, {}, 3, seed + 71);
    const double full = static_cast<double>(count_macs(net));
    Rng rng(seed);
    for (int k = 0; k < 2; ++k) {
      ResourceVector constraint;
      constraint.macs = full * rng.uniform(0.3, 1.1);
      const auto got = choose_num_filters(net, k, constraint, macs, no_lut);

      // brute force over every keep count
      std::optional<int> best;
      for (int n = net.layers[k].out_filters; n >= 1; --n) {
        const auto est =
            estimate_resources(resize_layer(net, k, n), macs, no_lut);
        if (est.within(constraint)) {
          best = n;
          break;
        }
      }
      if (!best) {
        CHECK_FALSE(got.has_value());
      } else {
        REQUIRE(got.has_value());
        CHECK(got->first == *best);
        // maximality: one more filter must overshoot (unless already full)
        if (got->first < net.layers[k].out_filters) {
          const auto over = estimate_resources(
              resize_layer(net, k, got->first + 1), macs, no_lut);
          CHECK_FALSE(over.within(constraint));
        }
        CHECK(got->second ==
              estimate_resources(resize_layer(net, k, got->first), macs,
                                 no_lut));
      }
    }
  }
}

TEST_CASE("an unmeetable constraint yields no proposal") {
  const NetworkSpec net = small_net(1, 4, {3}, {}, 2, 3);
  ResourceVector constraint;
  constraint.macs = 1.0;
  CHECK_FALSE(
      choose_num_filters(net, 0, constraint, {Metric::MACs}, {}).has_value());
}

TEST_CASE("the classifier is not prunable") {
  const NetworkSpec net = small_net(1, 4, {3}, {}, 2, 3);
  ResourceVector loose;
  loose.macs = 1e18;
  CHECK_THROWS_AS(choose_num_filters(net, 1, loose, {Metric::MACs}, {}),
                  NotPrunable);
  CHECK_THROWS_AS(choose_which_filters(net, 5, 1), NotPrunable);
}

TEST_CASE("resize keeps the leading filters") {
  const NetworkSpec net = small_net(2, 5, {6}, {}, 3, 44);
  const NetworkSpec resized = resize_layer(net, 0, 4);
  CHECK_NOTHROW(validate_network(resized));
  CHECK(resized.layers[0].out_filters == 4);
  std::vector<int> first4{0, 1, 2, 3};
  CHECK(resized == apply_prune(net, decision_for(net, 0, first4)));
}

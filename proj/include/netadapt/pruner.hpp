#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "netadapt/costmodel.hpp"
#include "netadapt/netgraph.hpp"

namespace netadapt {

struct PruneDecision {
  int layer_index = 0;
  int keep_count = 0;
  std::vector<int> keep_indices;  // strictly increasing
  ResourceVector estimated_resources;
};

/// Largest keep count N in [1, current] such that the network with layer k
/// at N filters (and the consumer's input channels reduced to match) fits
/// `constraint` in every metric it carries; nullopt if none does. Estimates
/// come purely from the LUT/MAC model. Equals the exhaustive scan answer.
std::optional<std::pair<int, ResourceVector>> choose_num_filters(
    const NetworkSpec& net, int k, const ResourceVector& constraint,
    const std::vector<Metric>& metrics, const LatencyLUT& lut);

/// Indices of the keep_count filters of layer k with the largest l2-norm
/// weight slices (bias excluded); ties keep the lower index. Sorted
/// ascending.
std::vector<int> choose_which_filters(const NetworkSpec& net, int k,
                                      int keep_count);

/// Keeps exactly decision.keep_indices in layer k and drops the matching
/// input slices of the consumer (contiguous h*w column blocks for a dense
/// consumer after flatten). Every other layer is untouched.
NetworkSpec apply_prune(const NetworkSpec& net, const PruneDecision& decision);

/// Shape-only variant used for resource estimation: layer k truncated to
/// keep_count filters (which filters is irrelevant to the estimate).
NetworkSpec resize_layer(const NetworkSpec& net, int k, int keep_count);

}  // namespace netadapt

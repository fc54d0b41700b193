#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "netadapt/errors.hpp"

namespace netadapt {

enum class LayerKind { Conv2D, Dense };
enum class Padding { Same, Valid };
enum class Activation { ReLU, None };

/// One CONV or FC layer. Conv weights are laid out
/// out_filters x in_channels x kh x kw, dense weights out_filters x
/// in_features, both row-major.
struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  int in_channels = 0;   // conv: input channels; dense: in_features
  int out_filters = 0;   // conv: filters; dense: output units
  int kernel_h = 0;      // conv only
  int kernel_w = 0;
  int stride = 1;        // conv only
  Padding padding = Padding::Same;  // conv only
  Activation activation = Activation::None;
  std::vector<double> weights;
  std::vector<double> bias;

  std::size_t weight_count() const;
  // All weight coefficients of one output filter, contiguous slice.
  std::size_t filter_size() const;

  bool operator==(const LayerSpec&) const = default;
};

struct InputShape {
  int channels = 0;
  int height = 0;
  int width = 0;
  bool operator==(const InputShape&) const = default;
};

/// A feed-forward chain of Conv2D layers followed by Dense layers, ending in
/// a Dense classifier. Immutable by convention: operations return new values.
struct NetworkSpec {
  InputShape input_shape;
  std::vector<LayerSpec> layers;
  int class_count = 0;

  bool operator==(const NetworkSpec&) const = default;
};

/// Input/output geometry of one layer. Conv layers use the spatial fields,
/// dense layers the feature counts (spatial fields are zero).
struct LayerShapes {
  LayerKind kind = LayerKind::Dense;
  int in_channels = 0, in_h = 0, in_w = 0;
  int out_channels = 0, out_h = 0, out_w = 0;
  int in_features = 0;
  int out_features = 0;
};

/// Identity of a layer for latency measurement: two layers with equal keys
/// time identically, so one LUT entry serves both.
struct LayerShapeKey {
  LayerKind kind = LayerKind::Dense;
  int in_channels = 0;  // conv
  int out_filters = 0;
  int in_h = 0, in_w = 0;          // conv
  int kernel_h = 0, kernel_w = 0;  // conv
  int stride = 0;                  // conv
  Padding padding = Padding::Same; // conv
  int in_features = 0;             // dense

  bool operator==(const LayerShapeKey&) const = default;
  auto tie() const {
    return std::tie(kind, in_channels, out_filters, in_h, in_w, kernel_h,
                    kernel_w, stride, padding, in_features);
  }
  bool operator<(const LayerShapeKey& o) const { return tie() < o.tie(); }
};

/// Throws ChannelMismatch / EmptySpatial if the net violates its structural
/// invariants (adjacent layer dims, classifier width, weight tensor sizes).
void validate_network(const NetworkSpec& net);

std::vector<LayerShapes> infer_shapes(const NetworkSpec& net);

LayerShapeKey shape_key(const LayerSpec& layer, const LayerShapes& shapes);

std::uint64_t count_macs(const NetworkSpec& net);

/// Scales every non-classifier layer width by alpha (round to nearest,
/// floor 1) and re-initializes all weights from `seed`. The classifier output
/// width stays at class_count.
NetworkSpec width_multiplier(const NetworkSpec& net, double alpha,
                             std::uint64_t seed);

/// Seeded uniform init in +-sqrt(6 / (fan_in + fan_out)), biases zero.
void init_weights(NetworkSpec& net, std::uint64_t seed);

// .netmodel container: JSON with hexfloat-encoded weights, bit-exact
// round-trip. Format version 1.
std::string serialize(const NetworkSpec& net);
NetworkSpec deserialize(const std::string& bytes);
void save_model(const NetworkSpec& net, const std::filesystem::path& path);
NetworkSpec load_model(const std::filesystem::path& path);

}  // namespace netadapt

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "netadapt/netgraph.hpp"

namespace netadapt {

/// Labelled samples, features stored as float32 (the on-disk precision),
/// layout n x channels x h x w.
struct Dataset {
  std::vector<float> features;
  std::vector<std::int32_t> labels;
  int class_count = 0;
  InputShape shape;

  std::size_t size() const { return labels.size(); }
  std::size_t sample_size() const {
    return static_cast<std::size_t>(shape.channels) * shape.height *
           shape.width;
  }

  bool operator==(const Dataset&) const = default;
};

struct TrainConfig {
  double learning_rate = 0.05;
  int batch_size = 32;
  std::size_t iterations = 0;
  std::uint64_t seed = 0;
};

/// Per-layer gradients, same shapes as the layer weights and biases.
struct Gradients {
  struct Layer {
    std::vector<double> weights;
    std::vector<double> bias;
  };
  std::vector<Layer> layers;
};

/// Logits for a batch, row-major batch x class_count. `batch` holds
/// batch_size samples in the net's input shape.
std::vector<double> forward(const NetworkSpec& net,
                            std::span<const double> batch, int batch_size);

/// Mean softmax cross-entropy and its exact analytic gradients.
std::pair<double, Gradients> loss_and_gradients(
    const NetworkSpec& net, std::span<const double> batch,
    std::span<const std::int32_t> labels);

/// Minibatch SGD for cfg.iterations steps; batches drawn by a seeded shuffle,
/// cycling epochs. Deterministic given cfg.seed.
NetworkSpec train(const NetworkSpec& net, const Dataset& data,
                  const TrainConfig& cfg);

/// Fraction of samples whose argmax logit equals the label; argmax ties go
/// to the lowest class index.
double evaluate_accuracy(const NetworkSpec& net, const Dataset& data);

std::pair<Dataset, Dataset> split_holdout(const Dataset& data, int per_class,
                                          std::uint64_t seed);

/// Gaussian blobs: per-class prototypes of norm `separation`, plus unit
/// variance noise per coordinate.
Dataset synth_dataset(int class_count, int per_class, InputShape shape,
                      double separation, std::uint64_t seed);

// .dset binary container; exact round-trip.
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace netadapt

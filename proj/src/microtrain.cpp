#include "netadapt/microtrain.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "netadapt/detail/io.hpp"
#include "netadapt/detail/kernels.hpp"
#include "netadapt/rng.hpp"

namespace netadapt {

namespace {

using detail::conv2d_backward;
using detail::conv2d_forward;
using detail::dense_backward;
using detail::dense_forward;
using detail::relu_backward_inplace;
using detail::relu_inplace;

std::size_t layer_out_count(const LayerShapes& s) {
  if (s.kind == LayerKind::Conv2D) {
    return static_cast<std::size_t>(s.out_channels) * s.out_h * s.out_w;
  }
  return static_cast<std::size_t>(s.out_features);
}

// Post-activation output of every layer; acts[0] is the input batch. The
// contiguous NCHW layout doubles as the channel-major flatten, so the
// conv->dense boundary needs no data movement.
std::vector<std::vector<double>> run_forward(
    const NetworkSpec& net, const std::vector<LayerShapes>& shapes,
    std::span<const double> batch, int n) {
  const std::size_t in_count = static_cast<std::size_t>(n) *
                               net.input_shape.channels *
                               net.input_shape.height * net.input_shape.width;
  if (batch.size() != in_count) {
    throw ShapeMismatch("batch has " + std::to_string(batch.size()) +
                        " values, expected " + std::to_string(in_count));
  }
  std::vector<std::vector<double>> acts(net.layers.size() + 1);
  acts[0].assign(batch.begin(), batch.end());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& layer = net.layers[i];
    const LayerShapes& s = shapes[i];
    acts[i + 1].resize(static_cast<std::size_t>(n) * layer_out_count(s));
    if (layer.kind == LayerKind::Conv2D) {
      conv2d_forward(acts[i].data(), n, layer, s, acts[i + 1].data());
    } else {
      dense_forward(acts[i].data(), n, layer, acts[i + 1].data());
    }
    if (layer.activation == Activation::ReLU) {
      relu_inplace(acts[i + 1].data(), acts[i + 1].size());
    }
  }
  return acts;
}

}  // namespace

std::vector<double> forward(const NetworkSpec& net,
                            std::span<const double> batch, int batch_size) {
  validate_network(net);
  const auto shapes = infer_shapes(net);
  auto acts = run_forward(net, shapes, batch, batch_size);
  return std::move(acts.back());
}

std::pair<double, Gradients> loss_and_gradients(
    const NetworkSpec& net, std::span<const double> batch,
    std::span<const std::int32_t> labels) {
  validate_network(net);
  const auto shapes = infer_shapes(net);
  const int n = static_cast<int>(labels.size());
  auto acts = run_forward(net, shapes, batch, n);
  const std::vector<double>& logits = acts.back();
  const int C = net.class_count;

  // mean softmax cross-entropy; gradient (p - onehot) / n
  double loss = 0.0;
  std::vector<double> dlogits(logits.size());
  for (int b = 0; b < n; ++b) {
    const double* row = logits.data() + static_cast<std::size_t>(b) * C;
    double* drow = dlogits.data() + static_cast<std::size_t>(b) * C;
    const double maxv = *std::max_element(row, row + C);
    double sum = 0.0;
    for (int c = 0; c < C; ++c) sum += std::exp(row[c] - maxv);
    const double log_z = maxv + std::log(sum);
    const std::int32_t label = labels[b];
    if (label < 0 || label >= C) {
      throw ShapeMismatch("label " + std::to_string(label) +
                          " outside class range");
    }
    loss += log_z - row[label];
    for (int c = 0; c < C; ++c) {
      drow[c] = std::exp(row[c] - log_z) / n;
    }
    drow[label] -= 1.0 / n;
  }
  loss /= n;
  if (!std::isfinite(loss)) {
    throw NumericalFailure(0, "non-finite loss");
  }

  Gradients grads;
  grads.layers.resize(net.layers.size());
  std::vector<double> dout = std::move(dlogits);
  for (std::size_t idx = net.layers.size(); idx-- > 0;) {
    const LayerSpec& layer = net.layers[idx];
    const LayerShapes& s = shapes[idx];
    auto& g = grads.layers[idx];
    g.weights.assign(layer.weights.size(), 0.0);
    g.bias.assign(layer.bias.size(), 0.0);
    if (layer.activation == Activation::ReLU) {
      relu_backward_inplace(acts[idx + 1].data(), dout.data(), dout.size());
    }
    std::vector<double> din;
    double* din_ptr = nullptr;
    if (idx > 0) {
      din.assign(acts[idx].size(), 0.0);
      din_ptr = din.data();
    }
    if (layer.kind == LayerKind::Conv2D) {
      conv2d_backward(acts[idx].data(), dout.data(), n, layer, s,
                      g.weights.data(), g.bias.data(), din_ptr);
    } else {
      dense_backward(acts[idx].data(), dout.data(), n, layer,
                     g.weights.data(), g.bias.data(), din_ptr);
    }
    dout = std::move(din);
  }
  return {loss, std::move(grads)};
}

NetworkSpec train(const NetworkSpec& net, const Dataset& data,
                  const TrainConfig& cfg) {
  validate_network(net);
  if (data.size() == 0) throw ShapeMismatch("empty dataset");
  if (data.shape != net.input_shape || data.class_count != net.class_count) {
    throw ShapeMismatch("dataset shape does not match network input");
  }
  NetworkSpec current = net;
  if (cfg.iterations == 0) return current;

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::size_t cursor = 0;

  const std::size_t sample = data.sample_size();
  const int bs = std::min<int>(cfg.batch_size, static_cast<int>(data.size()));
  std::vector<double> batch(static_cast<std::size_t>(bs) * sample);
  std::vector<std::int32_t> labels(bs);

  for (std::size_t step = 0; step < cfg.iterations; ++step) {
    for (int b = 0; b < bs; ++b) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      const std::size_t idx = order[cursor++];
      const float* src = data.features.data() + idx * sample;
      double* dst = batch.data() + static_cast<std::size_t>(b) * sample;
      for (std::size_t i = 0; i < sample; ++i) dst[i] = src[i];
      labels[b] = data.labels[idx];
    }
    double loss = 0.0;
    Gradients grads;
    try {
      std::tie(loss, grads) = loss_and_gradients(current, batch, labels);
    } catch (const NumericalFailure& e) {
      throw NumericalFailure(step, e.what());
    }
    for (std::size_t li = 0; li < current.layers.size(); ++li) {
      LayerSpec& layer = current.layers[li];
      const auto& g = grads.layers[li];
      for (std::size_t i = 0; i < layer.weights.size(); ++i) {
        layer.weights[i] -= cfg.learning_rate * g.weights[i];
      }
      for (std::size_t i = 0; i < layer.bias.size(); ++i) {
        layer.bias[i] -= cfg.learning_rate * g.bias[i];
      }
    }
  }
  return current;
}

double evaluate_accuracy(const NetworkSpec& net, const Dataset& data) {
  validate_network(net);
  if (data.size() == 0) throw ShapeMismatch("empty dataset");
  if (data.shape != net.input_shape || data.class_count != net.class_count) {
    throw ShapeMismatch("dataset shape does not match network input");
  }
  const auto shapes = infer_shapes(net);
  const std::size_t sample = data.sample_size();
  const int C = net.class_count;
  const std::size_t chunk = 256;
  std::size_t correct = 0;
  std::vector<double> batch;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const int n = static_cast<int>(std::min(chunk, data.size() - start));
    batch.resize(static_cast<std::size_t>(n) * sample);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      batch[i] = data.features[start * sample + i];
    }
    auto acts = run_forward(net, shapes, batch, n);
    const std::vector<double>& logits = acts.back();
    for (int b = 0; b < n; ++b) {
      const double* row = logits.data() + static_cast<std::size_t>(b) * C;
      int best = 0;
      for (int c = 1; c < C; ++c) {
        if (row[c] > row[best]) best = c;  // ties keep the lower index
      }
      if (best == data.labels[start + b]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::pair<Dataset, Dataset> split_holdout(const Dataset& data, int per_class,
                                          std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_class(data.class_count);
  for (std::size_t i = 0; i < data.size(); ++i) {
    by_class[data.labels[i]].push_back(i);
  }
  Rng rng(seed);
  std::vector<bool> in_holdout(data.size(), false);
  for (int c = 0; c < data.class_count; ++c) {
    auto& idx = by_class[c];
    if (idx.size() <= static_cast<std::size_t>(per_class)) {
      throw InsufficientSamples("class " + std::to_string(c) + " has only " +
                                std::to_string(idx.size()) + " samples, need > " +
                                std::to_string(per_class));
    }
    rng.shuffle(idx);
    for (int i = 0; i < per_class; ++i) in_holdout[idx[i]] = true;
  }

  const std::size_t sample = data.sample_size();
  Dataset train_set, holdout;
  for (Dataset* d : {&train_set, &holdout}) {
    d->class_count = data.class_count;
    d->shape = data.shape;
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    Dataset& dst = in_holdout[i] ? holdout : train_set;
    const float* src = data.features.data() + i * sample;
    dst.features.insert(dst.features.end(), src, src + sample);
    dst.labels.push_back(data.labels[i]);
  }
  return {std::move(train_set), std::move(holdout)};
}

Dataset synth_dataset(int class_count, int per_class, InputShape shape,
                      double separation, std::uint64_t seed) {
  Dataset data;
  data.class_count = class_count;
  data.shape = shape;
  const std::size_t dim =
      static_cast<std::size_t>(shape.channels) * shape.height * shape.width;
  Rng rng(seed);

  std::vector<std::vector<double>> prototypes(class_count);
  for (auto& proto : prototypes) {
    proto.resize(dim);
    double norm_sq = 0.0;
    for (double& v : proto) {
      v = rng.normal();
      norm_sq += v * v;
    }
    const double norm = std::sqrt(norm_sq);
    const double scale = norm > 0.0 ? separation / norm : 0.0;
    for (double& v : proto) v *= scale;
  }

  data.features.reserve(static_cast<std::size_t>(class_count) * per_class * dim);
  for (int c = 0; c < class_count; ++c) {
    for (int i = 0; i < per_class; ++i) {
      for (std::size_t d = 0; d < dim; ++d) {
        data.features.push_back(
            static_cast<float>(prototypes[c][d] + rng.normal()));
      }
      data.labels.push_back(c);
    }
  }
  return data;
}

namespace {

constexpr std::uint32_t kDatasetMagic = 0x5453444E;  // "NDST"
constexpr std::uint32_t kDatasetVersion = 1;

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T take(const std::string& in, std::size_t& pos, const char* field) {
  if (pos + sizeof(T) > in.size()) {
    throw FormatError(pos, std::string("truncated while reading ") + field);
  }
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::string out;
  put(out, kDatasetMagic);
  put(out, kDatasetVersion);
  put(out, static_cast<std::uint64_t>(data.size()));
  put(out, static_cast<std::uint32_t>(data.class_count));
  put(out, static_cast<std::uint32_t>(data.shape.channels));
  put(out, static_cast<std::uint32_t>(data.shape.height));
  put(out, static_cast<std::uint32_t>(data.shape.width));
  for (std::int32_t label : data.labels) put(out, label);
  for (float f : data.features) put(out, f);
  detail::atomic_write_file(path, out);
}

Dataset load_dataset(const std::filesystem::path& path) {
  const std::string in = detail::read_file(path);
  std::size_t pos = 0;
  const auto magic = take<std::uint32_t>(in, pos, "magic");
  if (magic != kDatasetMagic) throw FormatError(0, "bad dataset magic");
  const auto version = take<std::uint32_t>(in, pos, "version");
  if (version != kDatasetVersion) {
    throw FormatError(4, "unsupported dataset version " +
                             std::to_string(version));
  }
  const auto n = take<std::uint64_t>(in, pos, "sample count");
  Dataset data;
  data.class_count =
      static_cast<int>(take<std::uint32_t>(in, pos, "class count"));
  data.shape.channels = static_cast<int>(take<std::uint32_t>(in, pos, "channels"));
  data.shape.height = static_cast<int>(take<std::uint32_t>(in, pos, "height"));
  data.shape.width = static_cast<int>(take<std::uint32_t>(in, pos, "width"));
  data.labels.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto label = take<std::int32_t>(in, pos, "label");
    if (label < 0 || label >= data.class_count) {
      throw FormatError(pos - sizeof(std::int32_t),
                        "label outside class range");
    }
    data.labels.push_back(label);
  }
  const std::uint64_t feature_count = n * data.sample_size();
  data.features.reserve(feature_count);
  for (std::uint64_t i = 0; i < feature_count; ++i) {
    data.features.push_back(take<float>(in, pos, "feature"));
  }
  if (pos != in.size()) {
    throw FormatError(pos, "trailing bytes after payload");
  }
  return data;
}

}  // namespace netadapt

#include "netadapt/netgraph.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "netadapt/detail/io.hpp"
#include "netadapt/rng.hpp"

namespace netadapt {

namespace {

using nlohmann::json;

int conv_out_dim(int in, int kernel, int stride, Padding padding) {
  if (padding == Padding::Same) {
    return (in + stride - 1) / stride;  // ceil(in / stride)
  }
  return (in - kernel) / stride + 1;
}

std::string kind_name(LayerKind k) {
  return k == LayerKind::Conv2D ? "conv2d" : "dense";
}

}  // namespace

std::size_t LayerSpec::filter_size() const {
  if (kind == LayerKind::Conv2D) {
    return static_cast<std::size_t>(in_channels) * kernel_h * kernel_w;
  }
  return static_cast<std::size_t>(in_channels);
}

std::size_t LayerSpec::weight_count() const {
  return static_cast<std::size_t>(out_filters) * filter_size();
}

std::vector<LayerShapes> infer_shapes(const NetworkSpec& net) {
  if (net.layers.empty()) throw ChannelMismatch("network has no layers");
  std::vector<LayerShapes> out;
  out.reserve(net.layers.size());

  // Running shape: spatial until the first Dense, flat afterwards.
  bool flat = false;
  int ch = net.input_shape.channels;
  int h = net.input_shape.height;
  int w = net.input_shape.width;
  int features = 0;

  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& layer = net.layers[i];
    LayerShapes s;
    s.kind = layer.kind;
    if (layer.kind == LayerKind::Conv2D) {
      if (flat) {
        throw ChannelMismatch("layer " + std::to_string(i) +
                              ": Conv2D after Dense is not supported");
      }
      if (layer.out_filters < 1 || layer.in_channels < 1 ||
          layer.kernel_h < 1 || layer.kernel_w < 1 || layer.stride < 1) {
        throw ChannelMismatch("layer " + std::to_string(i) +
                              ": non-positive conv dimensions");
      }
      if (layer.in_channels != ch) {
        throw ChannelMismatch("layer " + std::to_string(i) + ": expects " +
                              std::to_string(layer.in_channels) +
                              " input channels, producer provides " +
                              std::to_string(ch));
      }
      if (layer.padding == Padding::Valid &&
          (layer.kernel_h > h || layer.kernel_w > w)) {
        throw EmptySpatial("layer " + std::to_string(i) +
                           ": kernel larger than valid input");
      }
      s.in_channels = ch;
      s.in_h = h;
      s.in_w = w;
      s.out_channels = layer.out_filters;
      s.out_h = conv_out_dim(h, layer.kernel_h, layer.stride, layer.padding);
      s.out_w = conv_out_dim(w, layer.kernel_w, layer.stride, layer.padding);
      if (s.out_h <= 0 || s.out_w <= 0) {
        throw EmptySpatial("layer " + std::to_string(i) +
                           ": empty output feature map");
      }
      ch = s.out_channels;
      h = s.out_h;
      w = s.out_w;
    } else {
      if (layer.out_filters < 1 || layer.in_channels < 1) {
        throw ChannelMismatch("layer " + std::to_string(i) +
                              ": non-positive dense dimensions");
      }
      const int provided = flat ? features : ch * h * w;
      if (layer.in_channels != provided) {
        throw ChannelMismatch("layer " + std::to_string(i) + ": expects " +
                              std::to_string(layer.in_channels) +
                              " input features, producer provides " +
                              std::to_string(provided));
      }
      s.in_features = provided;
      s.out_features = layer.out_filters;
      flat = true;
      features = layer.out_filters;
    }
    if (layer.weights.size() != layer.weight_count()) {
      throw ChannelMismatch("layer " + std::to_string(i) +
                            ": weight tensor size mismatch");
    }
    if (layer.bias.size() != static_cast<std::size_t>(layer.out_filters)) {
      throw ChannelMismatch("layer " + std::to_string(i) +
                            ": bias length mismatch");
    }
    out.push_back(s);
  }
  return out;
}

void validate_network(const NetworkSpec& net) {
  const auto shapes = infer_shapes(net);
  const LayerSpec& last = net.layers.back();
  if (last.kind != LayerKind::Dense || last.out_filters != net.class_count ||
      last.activation != Activation::None) {
    throw ChannelMismatch(
        "final layer must be a Dense classifier of width class_count with no "
        "activation");
  }
  (void)shapes;
}

LayerShapeKey shape_key(const LayerSpec& layer, const LayerShapes& shapes) {
  LayerShapeKey key;
  key.kind = layer.kind;
  key.out_filters = layer.out_filters;
  if (layer.kind == LayerKind::Conv2D) {
    key.in_channels = shapes.in_channels;
    key.in_h = shapes.in_h;
    key.in_w = shapes.in_w;
    key.kernel_h = layer.kernel_h;
    key.kernel_w = layer.kernel_w;
    key.stride = layer.stride;
    key.padding = layer.padding;
  } else {
    key.in_features = shapes.in_features;
  }
  return key;
}

std::uint64_t count_macs(const NetworkSpec& net) {
  const auto shapes = infer_shapes(net);
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& layer = net.layers[i];
    const LayerShapes& s = shapes[i];
    if (layer.kind == LayerKind::Conv2D) {
      total += static_cast<std::uint64_t>(s.out_h) * s.out_w * s.out_channels *
               s.in_channels * layer.kernel_h * layer.kernel_w;
    } else {
      total += static_cast<std::uint64_t>(s.out_features) * s.in_features;
    }
  }
  return total;
}

void init_weights(NetworkSpec& net, std::uint64_t seed) {
  Rng rng(seed);
  for (LayerSpec& layer : net.layers) {
    const double fan_in = static_cast<double>(layer.filter_size());
    const double fan_out = static_cast<double>(layer.out_filters);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    layer.weights.resize(layer.weight_count());
    for (double& w : layer.weights) w = rng.uniform(-bound, bound);
    layer.bias.assign(layer.out_filters, 0.0);
  }
}

NetworkSpec width_multiplier(const NetworkSpec& net, double alpha,
                             std::uint64_t seed) {
  if (!(alpha > 0.0) || alpha > 1.0) {
    throw InvalidAlpha("alpha must be in (0, 1], got " + std::to_string(alpha));
  }
  validate_network(net);

  NetworkSpec scaled;
  scaled.input_shape = net.input_shape;
  scaled.class_count = net.class_count;
  int prev_out = net.input_shape.channels;
  bool flat = false;
  const auto shapes = infer_shapes(net);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& src = net.layers[i];
    LayerSpec layer = src;
    layer.weights.clear();
    layer.bias.clear();
    const bool classifier = (i + 1 == net.layers.size());
    if (classifier) {
      layer.out_filters = net.class_count;
    } else {
      layer.out_filters = std::max(
          1, static_cast<int>(std::lround(alpha * src.out_filters)));
    }
    if (layer.kind == LayerKind::Dense && !flat) {
      // flatten boundary: spatial size is unchanged by width scaling
      const int spatial = shapes[i].in_features / net.layers[i - 1].out_filters;
      layer.in_channels = (i == 0) ? shapes[i].in_features : prev_out * spatial;
      flat = true;
    } else {
      layer.in_channels = prev_out;
    }
    prev_out = layer.out_filters;
    scaled.layers.push_back(std::move(layer));
  }
  init_weights(scaled, seed);
  validate_network(scaled);
  return scaled;
}

namespace {

constexpr int kModelFormatVersion = 1;

json layer_to_json(const LayerSpec& layer) {
  json j;
  j["kind"] = kind_name(layer.kind);
  j["out_filters"] = layer.out_filters;
  if (layer.kind == LayerKind::Conv2D) {
    j["in_channels"] = layer.in_channels;
    j["kernel"] = {layer.kernel_h, layer.kernel_w};
    j["stride"] = layer.stride;
    j["padding"] = layer.padding == Padding::Same ? "same" : "valid";
  } else {
    j["in_features"] = layer.in_channels;
  }
  j["activation"] = layer.activation == Activation::ReLU ? "relu" : "none";
  json weights = json::array();
  for (double w : layer.weights) weights.push_back(detail::hex_double(w));
  j["weights"] = std::move(weights);
  json bias = json::array();
  for (double b : layer.bias) bias.push_back(detail::hex_double(b));
  j["bias"] = std::move(bias);
  return j;
}

LayerSpec layer_from_json(const json& j) {
  LayerSpec layer;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "conv2d") {
    layer.kind = LayerKind::Conv2D;
    layer.in_channels = j.at("in_channels").get<int>();
    layer.kernel_h = j.at("kernel").at(0).get<int>();
    layer.kernel_w = j.at("kernel").at(1).get<int>();
    layer.stride = j.at("stride").get<int>();
    const std::string pad = j.at("padding").get<std::string>();
    if (pad == "same") {
      layer.padding = Padding::Same;
    } else if (pad == "valid") {
      layer.padding = Padding::Valid;
    } else {
      throw FormatError(0, "unknown padding '" + pad + "'");
    }
  } else if (kind == "dense") {
    layer.kind = LayerKind::Dense;
    layer.in_channels = j.at("in_features").get<int>();
  } else {
    throw FormatError(0, "unknown layer kind '" + kind + "'");
  }
  layer.out_filters = j.at("out_filters").get<int>();
  const std::string act = j.at("activation").get<std::string>();
  if (act == "relu") {
    layer.activation = Activation::ReLU;
  } else if (act == "none") {
    layer.activation = Activation::None;
  } else {
    throw FormatError(0, "unknown activation '" + act + "'");
  }
  for (const auto& w : j.at("weights")) {
    layer.weights.push_back(detail::parse_hex_double(w.get<std::string>()));
  }
  for (const auto& b : j.at("bias")) {
    layer.bias.push_back(detail::parse_hex_double(b.get<std::string>()));
  }
  return layer;
}

}  // namespace

std::string serialize(const NetworkSpec& net) {
  validate_network(net);
  json j;
  j["format_version"] = kModelFormatVersion;
  j["input_shape"] = {net.input_shape.channels, net.input_shape.height,
                      net.input_shape.width};
  j["class_count"] = net.class_count;
  json layers = json::array();
  for (const LayerSpec& layer : net.layers) layers.push_back(layer_to_json(layer));
  j["layers"] = std::move(layers);
  return j.dump(1);
}

NetworkSpec deserialize(const std::string& bytes) {
  json j;
  try {
    j = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw FormatError(e.byte, e.what());
  }
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw FormatError(0, "unsupported model format version " +
                               std::to_string(version));
    }
    NetworkSpec net;
    net.input_shape.channels = j.at("input_shape").at(0).get<int>();
    net.input_shape.height = j.at("input_shape").at(1).get<int>();
    net.input_shape.width = j.at("input_shape").at(2).get<int>();
    net.class_count = j.at("class_count").get<int>();
    for (const auto& layer : j.at("layers")) {
      net.layers.push_back(layer_from_json(layer));
    }
    validate_network(net);
    return net;
  } catch (const json::exception& e) {
    throw FormatError(0, e.what());
  } catch (const ChannelMismatch& e) {
    throw FormatError(0, e.what());
  } catch (const EmptySpatial& e) {
    throw FormatError(0, e.what());
  }
}

void save_model(const NetworkSpec& net, const std::filesystem::path& path) {
  detail::atomic_write_file(path, serialize(net));
}

NetworkSpec load_model(const std::filesystem::path& path) {
  return deserialize(detail::read_file(path));
}

}  // namespace netadapt

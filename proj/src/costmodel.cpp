#include "netadapt/costmodel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include <json.hpp>

#include "netadapt/detail/io.hpp"
#include "netadapt/detail/kernels.hpp"
#include "netadapt/rng.hpp"

namespace netadapt {

namespace {

using nlohmann::json;

int conv_out_dim(int in, int kernel, int stride, Padding padding) {
  if (padding == Padding::Same) return (in + stride - 1) / stride;
  return (in - kernel) / stride + 1;
}

LutFamily family_of_key(const LayerShapeKey& key) {
  LutFamily fam;
  fam.kind = key.kind;
  fam.in_h = key.in_h;
  fam.in_w = key.in_w;
  fam.kernel_h = key.kernel_h;
  fam.kernel_w = key.kernel_w;
  fam.stride = key.stride;
  fam.padding = key.padding;
  return fam;
}

int key_in_value(const LayerShapeKey& key) {
  return key.kind == LayerKind::Conv2D ? key.in_channels : key.in_features;
}

std::string key_to_string(const LayerShapeKey& key) {
  if (key.kind == LayerKind::Conv2D) {
    return "conv2d in=" + std::to_string(key.in_channels) + "x" +
           std::to_string(key.in_h) + "x" + std::to_string(key.in_w) +
           " out=" + std::to_string(key.out_filters) + " k=" +
           std::to_string(key.kernel_h) + "x" + std::to_string(key.kernel_w) +
           " s=" + std::to_string(key.stride) +
           (key.padding == Padding::Same ? " same" : " valid");
  }
  return "dense in=" + std::to_string(key.in_features) +
         " out=" + std::to_string(key.out_filters);
}

// {1, 1+step, 1+2*step, ...} plus the endpoint itself.
std::vector<int> grid_points(int maxv, int step) {
  std::set<int> pts;
  for (int v = 1; v < maxv; v += step) pts.insert(v);
  pts.insert(maxv);
  return {pts.begin(), pts.end()};
}

LayerSpec make_probe_layer(const LayerShapeKey& key, Rng& rng) {
  LayerSpec layer;
  layer.kind = key.kind;
  layer.out_filters = key.out_filters;
  if (key.kind == LayerKind::Conv2D) {
    layer.in_channels = key.in_channels;
    layer.kernel_h = key.kernel_h;
    layer.kernel_w = key.kernel_w;
    layer.stride = key.stride;
    layer.padding = key.padding;
  } else {
    layer.in_channels = key.in_features;
  }
  layer.activation = Activation::ReLU;
  layer.weights.resize(layer.weight_count());
  for (double& w : layer.weights) w = rng.uniform(-0.5, 0.5);
  layer.bias.assign(layer.out_filters, 0.0);
  return layer;
}

}  // namespace

bool ResourceVector::within(const ResourceVector& bound) const {
  if (bound.latency_ms && (!latency_ms || *latency_ms > *bound.latency_ms)) {
    return false;
  }
  if (bound.macs && (!macs || *macs > *bound.macs)) {
    return false;
  }
  return true;
}

void validate_measurement_config(const MeasurementConfig& cfg) {
  if (cfg.repeats < 3 || cfg.repeats % 2 == 0) {
    throw Error("repeats must be odd and >= 3, got " +
                std::to_string(cfg.repeats));
  }
  if (cfg.warmup_runs < 0 || cfg.channel_grid_step < 1 ||
      cfg.timing_batch_size < 1) {
    throw Error("invalid measurement configuration");
  }
}

ClockFn steady_clock_ms() {
  return [] {
    const auto now = std::chrono::steady_clock::now().time_since_epoch();
    return std::chrono::duration<double, std::milli>(now).count();
  };
}

double timed_median_ms(const std::function<void()>& work,
                       const MeasurementConfig& cfg, const ClockFn& now_ms) {
  validate_measurement_config(cfg);
  for (int i = 0; i < cfg.warmup_runs; ++i) work();
  std::vector<double> samples;
  samples.reserve(cfg.repeats);
  for (int i = 0; i < cfg.repeats; ++i) {
    const double t0 = now_ms();
    work();
    const double t1 = now_ms();
    const double elapsed = t1 - t0;
    if (elapsed < 0.0 || !std::isfinite(elapsed)) {
      throw ClockFailure("non-monotonic clock sample: " +
                         std::to_string(elapsed) + " ms");
    }
    samples.push_back(elapsed);
  }
  std::nth_element(samples.begin(), samples.begin() + cfg.repeats / 2,
                   samples.end());
  return samples[cfg.repeats / 2];
}

double measure_layer(const LayerSpec& layer, int in_h, int in_w,
                     const MeasurementConfig& cfg, const ClockFn& now_ms) {
  validate_measurement_config(cfg);
  LayerShapes s;
  s.kind = layer.kind;
  const int n = cfg.timing_batch_size;
  std::size_t in_count, out_count;
  if (layer.kind == LayerKind::Conv2D) {
    s.in_channels = layer.in_channels;
    s.in_h = in_h;
    s.in_w = in_w;
    s.out_channels = layer.out_filters;
    s.out_h = conv_out_dim(in_h, layer.kernel_h, layer.stride, layer.padding);
    s.out_w = conv_out_dim(in_w, layer.kernel_w, layer.stride, layer.padding);
    if (s.out_h <= 0 || s.out_w <= 0) {
      throw EmptySpatial("measured layer has an empty output feature map");
    }
    in_count = static_cast<std::size_t>(n) * s.in_channels * in_h * in_w;
    out_count = static_cast<std::size_t>(n) * s.out_channels * s.out_h * s.out_w;
  } else {
    s.in_features = layer.in_channels;
    s.out_features = layer.out_filters;
    in_count = static_cast<std::size_t>(n) * s.in_features;
    out_count = static_cast<std::size_t>(n) * s.out_features;
  }

  Rng rng(0xC0FFEEu);
  std::vector<double> input(in_count);
  for (double& v : input) v = rng.uniform(-1.0, 1.0);
  std::vector<double> output(out_count);

  const auto work = [&] {
    if (layer.kind == LayerKind::Conv2D) {
      detail::conv2d_forward(input.data(), n, layer, s, output.data());
    } else {
      detail::dense_forward(input.data(), n, layer, output.data());
    }
    if (layer.activation == Activation::ReLU) {
      detail::relu_inplace(output.data(), output.size());
    }
  };
  return timed_median_ms(work, cfg, now_ms);
}

LatencyLUT build_lut(const NetworkSpec& net, const MeasurementConfig& cfg,
                     const ClockFn& now_ms) {
  validate_network(net);
  validate_measurement_config(cfg);
  const auto shapes = infer_shapes(net);

  LatencyLUT lut;
  lut.host = detail::host_descriptor();
  lut.timestamp = detail::timestamp_utc();
  lut.config = cfg;

  std::map<LayerShapeKey, double> measured;  // dedup across positions
  Rng rng(0x1A7E9Cu);

  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& layer = net.layers[i];
    const LayerShapes& s = shapes[i];
    const bool classifier = (i + 1 == net.layers.size());
    const bool producer_prunable = (i > 0);

    // Axis of reachable input widths. A dense layer fed by a conv sees
    // producer prunes as multiples of the flatten spatial size.
    std::vector<int> in_axis;
    if (!producer_prunable) {
      in_axis = {layer.kind == LayerKind::Conv2D ? s.in_channels
                                                 : s.in_features};
    } else {
      const LayerSpec& producer = net.layers[i - 1];
      const std::vector<int> producer_axis =
          grid_points(producer.out_filters, cfg.channel_grid_step);
      if (layer.kind == LayerKind::Dense &&
          producer.kind == LayerKind::Conv2D) {
        const int spatial = s.in_features / producer.out_filters;
        for (int p : producer_axis) in_axis.push_back(p * spatial);
      } else {
        in_axis = producer_axis;
      }
    }

    const std::vector<int> out_axis =
        classifier ? std::vector<int>{net.class_count}
                   : grid_points(layer.out_filters, cfg.channel_grid_step);

    LayerShapeKey base = shape_key(layer, s);
    const LutFamily geom = family_of_key(base);
    auto fam_it = std::find_if(
        lut.families.begin(), lut.families.end(),
        [&](const LutFamily& f) { return f.tie() == geom.tie(); });
    if (fam_it == lut.families.end()) {
      lut.families.push_back(geom);
      fam_it = std::prev(lut.families.end());
    }
    LutFamily& fam = *fam_it;
    for (int v : in_axis) fam.in_axis.push_back(v);
    for (int v : out_axis) fam.out_axis.push_back(v);

    for (int in_v : in_axis) {
      for (int out_v : out_axis) {
        LayerShapeKey key = base;
        key.out_filters = out_v;
        if (layer.kind == LayerKind::Conv2D) {
          key.in_channels = in_v;
        } else {
          key.in_features = in_v;
        }
        auto it = measured.find(key);
        if (it == measured.end()) {
          const LayerSpec probe = make_probe_layer(key, rng);
          const double ms = measure_layer(probe, key.in_h, key.in_w, cfg,
                                          now_ms);
          it = measured.emplace(key, ms).first;
        }
        fam.entries_ms[{in_v, out_v}] = it->second;
      }
    }
  }

  for (LutFamily& fam : lut.families) {
    std::sort(fam.in_axis.begin(), fam.in_axis.end());
    fam.in_axis.erase(std::unique(fam.in_axis.begin(), fam.in_axis.end()),
                      fam.in_axis.end());
    std::sort(fam.out_axis.begin(), fam.out_axis.end());
    fam.out_axis.erase(std::unique(fam.out_axis.begin(), fam.out_axis.end()),
                       fam.out_axis.end());
  }
  std::sort(lut.families.begin(), lut.families.end());
  return lut;
}

namespace {

// Linear interpolation over the entries available in one grid row/column,
// clamped to the covered range.
double interp_row(const std::map<int, double>& row, int target) {
  auto hi = row.lower_bound(target);
  if (hi == row.end()) return std::prev(hi)->second;   // clamp high
  if (hi->first == target || hi == row.begin()) return hi->second;
  const auto lo = std::prev(hi);
  const double t = static_cast<double>(target - lo->first) /
                   static_cast<double>(hi->first - lo->first);
  return lo->second + t * (hi->second - lo->second);
}

}  // namespace

double lut_lookup(const LatencyLUT& lut, const LayerShapeKey& key) {
  const LutFamily geom = family_of_key(key);
  const auto fam_it = std::find_if(
      lut.families.begin(), lut.families.end(),
      [&](const LutFamily& f) { return f.tie() == geom.tie(); });
  if (fam_it == lut.families.end()) {
    throw UnknownFamily("no LUT family for " + key_to_string(key));
  }
  const LutFamily& fam = *fam_it;
  const int in_v = key_in_value(key);
  const int out_v = key.out_filters;

  if (const auto it = fam.entries_ms.find({in_v, out_v});
      it != fam.entries_ms.end()) {
    return it->second;
  }

  // Bilinear: interpolate along the out axis within the two bracketing
  // in-axis rows, then between the rows. Ragged rows (families merged from
  // several layer positions) interpolate within whatever each row covers.
  std::map<int, std::map<int, double>> rows;
  for (const auto& [io, ms] : fam.entries_ms) rows[io.first][io.second] = ms;
  if (rows.empty()) {
    throw UnknownFamily("empty LUT family for " + key_to_string(key));
  }
  auto hi = rows.lower_bound(in_v);
  if (hi == rows.end()) return interp_row(std::prev(hi)->second, out_v);
  if (hi->first == in_v || hi == rows.begin()) {
    return interp_row(hi->second, out_v);
  }
  const auto lo = std::prev(hi);
  const double a = interp_row(lo->second, out_v);
  const double b = interp_row(hi->second, out_v);
  const double t = static_cast<double>(in_v - lo->first) /
                   static_cast<double>(hi->first - lo->first);
  return a + t * (b - a);
}

ResourceVector estimate_resources(const NetworkSpec& net,
                                  const std::vector<Metric>& metrics,
                                  const LatencyLUT& lut) {
  const auto shapes = infer_shapes(net);
  ResourceVector res;
  for (Metric m : metrics) {
    if (m == Metric::MACs) {
      res.macs = static_cast<double>(count_macs(net));
    } else {
      double total = 0.0;
      for (std::size_t i = 0; i < net.layers.size(); ++i) {
        total += lut_lookup(lut, shape_key(net.layers[i], shapes[i]));
      }
      res.latency_ms = total;
    }
  }
  return res;
}

double measure_network(const NetworkSpec& net, const MeasurementConfig& cfg,
                       const ClockFn& now_ms) {
  validate_network(net);
  validate_measurement_config(cfg);
  const auto shapes = infer_shapes(net);
  const int n = cfg.timing_batch_size;

  Rng rng(0xC0FFEEu);
  std::vector<std::vector<double>> bufs(net.layers.size() + 1);
  bufs[0].resize(static_cast<std::size_t>(n) * net.input_shape.channels *
                 net.input_shape.height * net.input_shape.width);
  for (double& v : bufs[0]) v = rng.uniform(-1.0, 1.0);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerShapes& s = shapes[i];
    const std::size_t per =
        s.kind == LayerKind::Conv2D
            ? static_cast<std::size_t>(s.out_channels) * s.out_h * s.out_w
            : static_cast<std::size_t>(s.out_features);
    bufs[i + 1].resize(static_cast<std::size_t>(n) * per);
  }

  const auto work = [&] {
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      const LayerSpec& layer = net.layers[i];
      if (layer.kind == LayerKind::Conv2D) {
        detail::conv2d_forward(bufs[i].data(), n, layer, shapes[i],
                               bufs[i + 1].data());
      } else {
        detail::dense_forward(bufs[i].data(), n, layer, bufs[i + 1].data());
      }
      if (layer.activation == Activation::ReLU) {
        detail::relu_inplace(bufs[i + 1].data(), bufs[i + 1].size());
      }
    }
  };
  return timed_median_ms(work, cfg, now_ms);
}

namespace {

constexpr int kLutFormatVersion = 1;

std::string family_label(const LutFamily& fam, int in_v, int out_v) {
  if (fam.kind == LayerKind::Conv2D) {
    return "conv2d " + std::to_string(fam.in_h) + "x" +
           std::to_string(fam.in_w) + " k" + std::to_string(fam.kernel_h) +
           "x" + std::to_string(fam.kernel_w) + " in=" + std::to_string(in_v) +
           " out=" + std::to_string(out_v);
  }
  return "dense in=" + std::to_string(in_v) + " out=" + std::to_string(out_v);
}

}  // namespace

void lut_save(const LatencyLUT& lut, const std::filesystem::path& path) {
  json j;
  j["format_version"] = kLutFormatVersion;
  j["provenance"] = {
      {"host", lut.host},
      {"timestamp", lut.timestamp},
      {"config",
       {{"warmup_runs", lut.config.warmup_runs},
        {"repeats", lut.config.repeats},
        {"channel_grid_step", lut.config.channel_grid_step},
        {"timing_batch_size", lut.config.timing_batch_size}}}};
  json families = json::array();
  for (const LutFamily& fam : lut.families) {
    json f;
    f["kind"] = fam.kind == LayerKind::Conv2D ? "conv2d" : "dense";
    if (fam.kind == LayerKind::Conv2D) {
      f["in_hw"] = {fam.in_h, fam.in_w};
      f["kernel"] = {fam.kernel_h, fam.kernel_w};
      f["stride"] = fam.stride;
      f["padding"] = fam.padding == Padding::Same ? "same" : "valid";
    }
    f["in_axis"] = fam.in_axis;
    f["out_axis"] = fam.out_axis;
    json entries = json::array();
    for (const auto& [io, ms] : fam.entries_ms) {
      entries.push_back({{"in", io.first},
                         {"out", io.second},
                         {"ms", detail::dec_double(ms)}});
    }
    f["entries"] = std::move(entries);
    families.push_back(std::move(f));
  }
  j["families"] = std::move(families);
  detail::atomic_write_file(path, j.dump(1));
}

LatencyLUT lut_load(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(detail::read_file(path));
  } catch (const json::parse_error& e) {
    throw FormatError(e.byte, e.what());
  }
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kLutFormatVersion) {
      throw FormatError(0,
                        "unsupported LUT format version " + std::to_string(version));
    }
    LatencyLUT lut;
    const auto& prov = j.at("provenance");
    lut.host = prov.at("host").get<std::string>();
    lut.timestamp = prov.at("timestamp").get<std::string>();
    const auto& cfg = prov.at("config");
    lut.config.warmup_runs = cfg.at("warmup_runs").get<int>();
    lut.config.repeats = cfg.at("repeats").get<int>();
    lut.config.channel_grid_step = cfg.at("channel_grid_step").get<int>();
    lut.config.timing_batch_size = cfg.at("timing_batch_size").get<int>();
    for (const auto& f : j.at("families")) {
      LutFamily fam;
      const std::string kind = f.at("kind").get<std::string>();
      if (kind == "conv2d") {
        fam.kind = LayerKind::Conv2D;
        fam.in_h = f.at("in_hw").at(0).get<int>();
        fam.in_w = f.at("in_hw").at(1).get<int>();
        fam.kernel_h = f.at("kernel").at(0).get<int>();
        fam.kernel_w = f.at("kernel").at(1).get<int>();
        fam.stride = f.at("stride").get<int>();
        const std::string pad = f.at("padding").get<std::string>();
        if (pad != "same" && pad != "valid") {
          throw FormatError(0, "unknown padding '" + pad + "'");
        }
        fam.padding = pad == "same" ? Padding::Same : Padding::Valid;
      } else if (kind == "dense") {
        fam.kind = LayerKind::Dense;
      } else {
        throw FormatError(0, "unknown family kind '" + kind + "'");
      }
      fam.in_axis = f.at("in_axis").get<std::vector<int>>();
      fam.out_axis = f.at("out_axis").get<std::vector<int>>();
      for (const auto& e : f.at("entries")) {
        const int in_v = e.at("in").get<int>();
        const int out_v = e.at("out").get<int>();
        const double ms = detail::parse_dec_double(e.at("ms").get<std::string>());
        if (!(ms > 0.0) || !std::isfinite(ms)) {
          throw FormatError(0, "corrupted latency for " +
                                   family_label(fam, in_v, out_v));
        }
        fam.entries_ms[{in_v, out_v}] = ms;
      }
      lut.families.push_back(std::move(fam));
    }
    return lut;
  } catch (const json::exception& e) {
    throw FormatError(0, e.what());
  }
}

}  // namespace netadapt

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "netadapt/netgraph.hpp"

namespace netadapt {

enum class Metric { Latency, MACs };

/// Values of the metrics active in a run; absent optionals mean the metric
/// is not tracked.
struct ResourceVector {
  std::optional<double> latency_ms;
  std::optional<double> macs;

  /// true if every metric present in `bound` is present here and <= it.
  bool within(const ResourceVector& bound) const;

  bool operator==(const ResourceVector&) const = default;
};

struct MeasurementConfig {
  int warmup_runs = 3;
  int repeats = 11;  // must be odd and >= 3
  int channel_grid_step = 1;
  int timing_batch_size = 1;

  bool operator==(const MeasurementConfig&) const = default;
};

void validate_measurement_config(const MeasurementConfig& cfg);

/// One profiled layer family: geometry shared by every pruning variant of a
/// layer position, with a measured latency grid over the two channel axes
/// (conv: in_channels x out_filters; dense: in_features x out_filters).
struct LutFamily {
  LayerKind kind = LayerKind::Dense;
  int in_h = 0, in_w = 0;
  int kernel_h = 0, kernel_w = 0;
  int stride = 0;
  Padding padding = Padding::Same;

  std::vector<int> in_axis;   // sorted measured points
  std::vector<int> out_axis;  // sorted measured points
  std::map<std::pair<int, int>, double> entries_ms;  // (in, out) -> median ms

  auto tie() const { return std::tie(kind, in_h, in_w, kernel_h, kernel_w,
                                     stride, padding); }
  bool operator<(const LutFamily& o) const { return tie() < o.tie(); }
  bool operator==(const LutFamily&) const = default;
};

struct LatencyLUT {
  std::vector<LutFamily> families;
  std::string host;
  std::string timestamp;
  MeasurementConfig config;

  bool operator==(const LatencyLUT&) const = default;
};

// Wall-clock source, milliseconds, monotonic. Injectable for tests.
using ClockFn = std::function<double()>;
ClockFn steady_clock_ms();

/// Runs `work` warmup_runs times untimed, then cfg.repeats times timed,
/// and returns the median elapsed time per run in ms.
double timed_median_ms(const std::function<void()>& work,
                       const MeasurementConfig& cfg, const ClockFn& now_ms);

/// Median forward-pass wall time of one layer on fixed random input.
double measure_layer(const LayerSpec& layer, int in_h, int in_w,
                     const MeasurementConfig& cfg,
                     const ClockFn& now_ms = steady_clock_ms());

/// Profiles every (in, out) channel combination reachable by pruning each
/// layer position of `net` and its producer, deduplicated by LayerShapeKey.
LatencyLUT build_lut(const NetworkSpec& net, const MeasurementConfig& cfg,
                     const ClockFn& now_ms = steady_clock_ms());

/// Stored value at grid points; bilinear interpolation between them, clamped
/// to the measured range. Throws UnknownFamily for unprofiled geometry.
double lut_lookup(const LatencyLUT& lut, const LayerShapeKey& key);

ResourceVector estimate_resources(const NetworkSpec& net,
                                  const std::vector<Metric>& metrics,
                                  const LatencyLUT& lut);

/// Full-network forward wall time; validation only, never used inside the
/// adaptation loop.
double measure_network(const NetworkSpec& net, const MeasurementConfig& cfg,
                       const ClockFn& now_ms = steady_clock_ms());

// .lut container: JSON with exact-decimal latencies, exact round-trip.
void lut_save(const LatencyLUT& lut, const std::filesystem::path& path);
LatencyLUT lut_load(const std::filesystem::path& path);

}  // namespace netadapt

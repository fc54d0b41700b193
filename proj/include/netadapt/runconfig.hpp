#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "netadapt/adapt.hpp"
#include "netadapt/costmodel.hpp"

namespace netadapt {

/// Raised for malformed configuration (unknown key, bad value). Missing
/// referenced files raise plain Error.
struct ConfigError : Error {
  using Error::Error;
};

/// Everything an adaptation run needs, loaded from a flat dotted-key file
/// (`schedule.latency.init = 0.5`). Unknown keys are errors.
struct RunConfig {
  std::filesystem::path dataset_path;
  std::filesystem::path model_path;
  std::filesystem::path lut_path;  // required when latency is active
  std::filesystem::path output_dir = "netadapt_out";
  std::vector<Metric> metrics;
  Budget budget;
  ReductionSchedule schedule;
  AdaptConfig adapt;
  MeasurementConfig measurement;
};

RunConfig parse_run_config(const std::string& text);

/// parse + existence checks for referenced files + NETADAPT_OUT_DIR override.
RunConfig load_run_config(const std::filesystem::path& path);

/// `conv:16:3:1:same,conv:32:3:2:same,dense:10` -> uninitialized network
/// matching the dataset geometry (the final dense entry is the classifier).
NetworkSpec parse_arch(const std::string& descriptor, InputShape input,
                       int class_count);

}  // namespace netadapt

#include "netadapt/runconfig.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <sstream>

#include "netadapt/detail/io.hpp"

namespace netadapt {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': not a number: '" + v + "'");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': not an integer: '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "': not a boolean: '" + v + "'");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

Metric metric_by_name(const std::string& key, const std::string& name) {
  if (name == "latency") return Metric::Latency;
  if (name == "macs") return Metric::MACs;
  throw ConfigError("key '" + key + "': unknown metric '" + name + "'");
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    }
    if (!kv.emplace(key, value).second) {
      throw ConfigError("duplicate key '" + key + "'");
    }
  }

  RunConfig cfg;
  const auto take = [&](const std::string& key) -> std::optional<std::string> {
    const auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };

  if (const auto v = take("dataset.path")) cfg.dataset_path = *v;
  if (const auto v = take("model.path")) cfg.model_path = *v;
  if (const auto v = take("lut.path")) cfg.lut_path = *v;
  if (const auto v = take("output.dir")) cfg.output_dir = *v;

  if (const auto v = take("metrics")) {
    for (const std::string& name : split(*v, ',')) {
      cfg.metrics.push_back(metric_by_name("metrics", name));
    }
  } else {
    cfg.metrics = {Metric::Latency};
  }
  std::sort(cfg.metrics.begin(), cfg.metrics.end());
  cfg.metrics.erase(std::unique(cfg.metrics.begin(), cfg.metrics.end()),
                    cfg.metrics.end());

  const auto metric_key = [](Metric m) {
    return m == Metric::Latency ? std::string("latency") : std::string("macs");
  };
  for (Metric m : cfg.metrics) {
    const std::string name = metric_key(m);
    if (const auto v = take("budget." + name)) {
      cfg.budget.bounds[m] = to_double("budget." + name, *v);
    }
    ReductionSchedule::MetricSchedule ms;
    bool have = false;
    if (const auto v = take("schedule." + name + ".init")) {
      ms.initial_delta = to_double("schedule." + name + ".init", *v);
      have = true;
    }
    if (const auto v = take("schedule." + name + ".decay")) {
      ms.decay = to_double("schedule." + name + ".decay", *v);
      have = true;
    }
    if (have) cfg.schedule.per_metric[m] = ms;
  }

  if (const auto v = take("adapt.short_term_iterations")) {
    cfg.adapt.short_term_iterations =
        static_cast<std::size_t>(to_int("adapt.short_term_iterations", *v));
  }
  if (const auto v = take("adapt.short_term_lr")) {
    cfg.adapt.short_term_lr = to_double("adapt.short_term_lr", *v);
  }
  if (const auto v = take("adapt.long_term_iterations")) {
    cfg.adapt.long_term_iterations =
        static_cast<std::size_t>(to_int("adapt.long_term_iterations", *v));
  }
  if (const auto v = take("adapt.long_term_lr")) {
    cfg.adapt.long_term_lr = to_double("adapt.long_term_lr", *v);
  }
  if (const auto v = take("adapt.batch_size")) {
    cfg.adapt.batch_size = static_cast<int>(to_int("adapt.batch_size", *v));
  }
  if (const auto v = take("adapt.holdout_per_class")) {
    cfg.adapt.holdout_per_class =
        static_cast<int>(to_int("adapt.holdout_per_class", *v));
  }
  if (const auto v = take("adapt.master_seed")) {
    cfg.adapt.master_seed =
        static_cast<std::uint64_t>(to_int("adapt.master_seed", *v));
  }
  if (const auto v = take("adapt.parallel_proposals")) {
    cfg.adapt.parallel_proposals = to_bool("adapt.parallel_proposals", *v);
  }

  if (const auto v = take("measure.warmup_runs")) {
    cfg.measurement.warmup_runs =
        static_cast<int>(to_int("measure.warmup_runs", *v));
  }
  if (const auto v = take("measure.repeats")) {
    cfg.measurement.repeats = static_cast<int>(to_int("measure.repeats", *v));
  }
  if (const auto v = take("measure.grid_step")) {
    cfg.measurement.channel_grid_step =
        static_cast<int>(to_int("measure.grid_step", *v));
  }
  if (const auto v = take("measure.timing_batch_size")) {
    cfg.measurement.timing_batch_size =
        static_cast<int>(to_int("measure.timing_batch_size", *v));
  }

  if (!kv.empty()) {
    throw ConfigError("unknown key '" + kv.begin()->first + "'");
  }

  if (cfg.dataset_path.empty()) throw ConfigError("missing key dataset.path");
  if (cfg.model_path.empty()) throw ConfigError("missing key model.path");
  for (Metric m : cfg.metrics) {
    const std::string name = metric_key(m);
    if (!cfg.budget.bounds.count(m)) {
      throw ConfigError("missing key budget." + name);
    }
    if (!cfg.schedule.per_metric.count(m)) {
      throw ConfigError("missing key schedule." + name + ".init");
    }
  }
  if (std::count(cfg.metrics.begin(), cfg.metrics.end(), Metric::Latency) &&
      cfg.lut_path.empty()) {
    throw ConfigError("missing key lut.path (latency metric is active)");
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig cfg = parse_run_config(detail::read_file(path));
  if (const char* dir = std::getenv("NETADAPT_OUT_DIR")) {
    cfg.output_dir = dir;
  }
  for (const auto& p : {cfg.dataset_path, cfg.model_path}) {
    if (!std::filesystem::exists(p)) {
      throw Error("referenced file does not exist: " + p.string());
    }
  }
  if (!cfg.lut_path.empty() && !std::filesystem::exists(cfg.lut_path)) {
    throw Error("referenced file does not exist: " + cfg.lut_path.string());
  }
  return cfg;
}

NetworkSpec parse_arch(const std::string& descriptor, InputShape input,
                       int class_count) {
  NetworkSpec net;
  net.input_shape = input;
  net.class_count = class_count;

  int ch = input.channels;
  int h = input.height, w = input.width;
  bool flat = false;
  int features = 0;

  const std::vector<std::string> items = split(descriptor, ',');
  if (items.empty()) throw ConfigError("empty architecture descriptor");
  for (std::size_t i = 0; i < items.size(); ++i) {
    const std::vector<std::string> f = split(items[i], ':');
    const bool last = (i + 1 == items.size());
    LayerSpec layer;
    if (f.size() == 5 && f[0] == "conv") {
      if (flat) throw ConfigError("conv after dense in '" + descriptor + "'");
      layer.kind = LayerKind::Conv2D;
      layer.out_filters = static_cast<int>(to_int("arch conv filters", f[1]));
      layer.kernel_h = layer.kernel_w =
          static_cast<int>(to_int("arch conv kernel", f[2]));
      layer.stride = static_cast<int>(to_int("arch conv stride", f[3]));
      if (f[4] == "same") {
        layer.padding = Padding::Same;
      } else if (f[4] == "valid") {
        layer.padding = Padding::Valid;
      } else {
        throw ConfigError("arch conv padding must be same|valid, got '" +
                          f[4] + "'");
      }
      layer.in_channels = ch;
      layer.activation = Activation::ReLU;
      if (last) throw ConfigError("final layer must be dense");
      if (layer.padding == Padding::Same) {
        h = (h + layer.stride - 1) / layer.stride;
        w = (w + layer.stride - 1) / layer.stride;
      } else {
        h = (h - layer.kernel_h) / layer.stride + 1;
        w = (w - layer.kernel_w) / layer.stride + 1;
      }
      ch = layer.out_filters;
    } else if (f.size() == 2 && f[0] == "dense") {
      layer.kind = LayerKind::Dense;
      layer.out_filters = static_cast<int>(to_int("arch dense units", f[1]));
      layer.in_channels = flat ? features : ch * h * w;
      layer.activation = last ? Activation::None : Activation::ReLU;
      flat = true;
      features = layer.out_filters;
      if (last && layer.out_filters != class_count) {
        throw ConfigError("classifier width " +
                          std::to_string(layer.out_filters) +
                          " does not match dataset class count " +
                          std::to_string(class_count));
      }
    } else {
      throw ConfigError("bad architecture item '" + items[i] + "'");
    }
    net.layers.push_back(std::move(layer));
  }
  init_weights(net, 0);
  validate_network(net);
  return net;
}

}  // namespace netadapt

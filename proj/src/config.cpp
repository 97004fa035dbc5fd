#include "dagrnn/config.hpp"

#include <fstream>
#include <sstream>

#include "dagrnn/errors.hpp"

namespace dagrnn {

namespace {

int to_int(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const int v = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects an integer, got '" +
                      value + "'");
  }
}

double to_double(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a number, got '" +
                      value + "'");
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config key '" + key + "' expects true/false, got '" +
                    value + "'");
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void RunConfig::apply(const std::string& key, const std::string& value) {
  if (key == "preset") {
    preset = value;
  } else if (key == "neighborhood") {
    neighborhood = to_int(key, value);
    if (neighborhood != 4 && neighborhood != 8) {
      throw ConfigError("config key 'neighborhood' must be 4 or 8");
    }
  } else if (key == "hidden_dim") {
    hidden_dim = to_int(key, value);
  } else if (key == "class_count") {
    class_count = to_int(key, value);
  } else if (key == "eta") {
    if (value != "auto") to_double(key, value);  // validate
    eta = value;
  } else if (key == "k") {
    k = to_double(key, value);
  } else if (key == "epochs") {
    epochs = to_int(key, value);
  } else if (key == "seed") {
    seed = static_cast<uint64_t>(std::stoull(value));
  } else if (key == "schedule") {
    if (value != "per-epoch-after-10" && value != "per-10-epochs") {
      throw ConfigError("config key 'schedule' must be per-epoch-after-10 or per-10-epochs");
    }
    schedule = value;
  } else if (key == "momentum") {
    momentum = to_double(key, value);
  } else if (key == "lr") {
    lr = to_double(key, value);
  } else if (key == "clip") {
    clip = to_double(key, value);
  } else if (key == "freeze_conv") {
    freeze_conv = to_bool(key, value);
  } else if (key == "no_recurrence") {
    no_recurrence = to_bool(key, value);
  } else if (key == "data") {
    data = value;
  } else if (key == "checkpoint") {
    checkpoint = value;
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

std::map<std::string, std::string> RunConfig::echo() const {
  return {
      {"preset", preset},
      {"neighborhood", std::to_string(neighborhood)},
      {"hidden_dim", std::to_string(hidden_dim)},
      {"class_count", std::to_string(class_count)},
      {"eta", eta},
      {"k", format_double(k)},
      {"epochs", std::to_string(epochs)},
      {"seed", std::to_string(seed)},
      {"schedule", schedule},
      {"momentum", format_double(momentum)},
      {"lr", format_double(lr)},
      {"clip", format_double(clip)},
      {"freeze_conv", freeze_conv ? "true" : "false"},
      {"no_recurrence", no_recurrence ? "true" : "false"},
      {"data", data},
      {"checkpoint", checkpoint},
  };
}

RunConfig RunConfig::from_echo(const std::map<std::string, std::string>& echo) {
  RunConfig cfg;
  for (const auto& [key, value] : echo) {
    if (key.rfind("weights.", 0) == 0) continue;  // checkpoint-internal keys
    cfg.apply(key, value);
  }
  return cfg;
}

Neighborhood RunConfig::neighborhood_enum() const {
  return neighborhood == 4 ? Neighborhood::N4 : Neighborhood::N8;
}

ScheduleMode RunConfig::schedule_mode() const {
  return schedule == "per-10-epochs" ? ScheduleMode::kPerBlock
                                     : ScheduleMode::kPerEpochAfterStart;
}

TrainOptions RunConfig::train_options() const {
  TrainOptions opts;
  opts.epochs = epochs;
  opts.seed = seed;
  opts.base_lr = lr;
  opts.schedule = schedule_mode();
  opts.momentum = momentum;
  opts.grad_clip = clip;
  opts.freeze_conv = freeze_conv;
  return opts;
}

NetConfig RunConfig::net_config() const {
  NetConfig cfg = build_preset(preset);
  if (hidden_dim > 0) cfg.hidden_dim = hidden_dim;
  if (class_count > 0) cfg.class_count = class_count;
  return cfg;
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::map<std::string, std::string> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    std::string tok, value;
    if (!(ls >> tok)) {
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": key '" + key + "' has no value");
    }
    if (tok == "=") {
      if (!(ls >> value)) {
        throw ConfigError(path + ":" + std::to_string(lineno) +
                          ": key '" + key + "' has no value");
      }
    } else {
      value = tok;
    }
    std::string extra;
    if (ls >> extra) {
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": trailing tokens after value for '" + key + "'");
    }
    entries[key] = value;
  }
  return entries;
}

}  // namespace dagrnn

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "dagrnn/conv_net.hpp"
#include "dagrnn/grid_graph.hpp"
#include "dagrnn/trainer.hpp"

namespace dagrnn {

// Flat run configuration shared by every command. Every field has a default;
// precedence is CLI flag > config file > default. The resolved configuration
// is echoed into checkpoint headers so an experiment can be reconstructed
// from its artifacts.
struct RunConfig {
  std::string preset = "tiny";
  int neighborhood = 8;  // 4 or 8
  int hidden_dim = 0;    // 0 = preset default
  int class_count = 0;   // 0 = palette/preset default
  std::string eta = "auto";  // "auto" (85%-15% rule) or a fraction
  double k = 2.0;
  int epochs = 35;
  uint64_t seed = 0;
  std::string schedule = "per-epoch-after-10";  // or "per-10-epochs"
  double momentum = 0.9;
  double lr = 1e-3;
  double clip = 0.0;  // max gradient norm, 0 = off
  bool freeze_conv = false;
  bool no_recurrence = false;  // ENN ablation
  std::string data;        // dataset root
  std::string checkpoint = "model.ckpt";

  // Applies one "key value" assignment; unknown keys or bad values raise
  // ConfigError naming the key.
  void apply(const std::string& key, const std::string& value);

  std::map<std::string, std::string> echo() const;
  static RunConfig from_echo(const std::map<std::string, std::string>& echo);

  Neighborhood neighborhood_enum() const;
  ScheduleMode schedule_mode() const;
  TrainOptions train_options() const;

  // Preset with hidden/class overrides applied. class_count 0 keeps the
  // preset default.
  NetConfig net_config() const;
};

// Parses a flat "key value" (or "key = value") file; '#' starts a comment.
std::map<std::string, std::string> parse_config_file(const std::string& path);

}  // namespace dagrnn

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "apn/geometry.hpp"
#include "apn/losses.hpp"
#include "apn/network.hpp"
#include "apn/synthetic.hpp"
#include "apn/tracker.hpp"
#include "apn/trainer.hpp"

#include "json.hpp"

namespace apn {

struct DataConfig {
  int train_pairs = 20;
  int max_gap = 4;
  PairOptions pairs;
};

struct EvalConfig {
  double precision_rank_px = 20.0;
};

// Everything a CLI run needs, fully resolved.
struct RunConfig {
  std::string preset = "toy";
  std::uint64_t seed = 1;
  std::string model_path;  // optional JSON model description, overrides "model"
  ModelConfig model;
  TrainSchedule schedule;
  LossWeights loss;
  LabelConfig labels;
  TrackerConfig tracker;
  DataConfig data;
  EvalConfig eval;

  // Defaults of a named preset ("toy" or "paper"); ConfigError otherwise.
  static RunConfig preset_defaults(const std::string& name);

  // Cross-field checks; ConfigError naming the key.
  void validate() const;

  nlohmann::ordered_json to_json() const;
  // JSON text with // comments next to values taken from the published
  // training protocol. parse_config accepts it unchanged.
  std::string to_commented_json() const;
};

// Parses JSON text (comments allowed) on top of the preset defaults. The
// preset is preset_override if given, else the text's "preset", else "toy".
// Unknown keys and type mismatches raise ConfigError naming the key.
RunConfig parse_config(const std::string& text, const std::optional<std::string>& preset_override = std::nullopt);
RunConfig load_config(const std::optional<std::filesystem::path>& path,
                      const std::optional<std::string>& preset_override = std::nullopt);

}  // namespace apn

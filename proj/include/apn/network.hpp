#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "apn/autograd.hpp"
#include "apn/checkpoint.hpp"
#include "apn/geometry.hpp"
#include "apn/ops.hpp"
#include "apn/optim.hpp"

#include "json.hpp"

namespace apn {

struct BlockSpec {
  int channels = 1;
  int kernel = 3;
  int stride = 1;
  int padding = 0;
  bool operator==(const BlockSpec&) const = default;
};

// Backbone blocks plus patch sizes. The mid tap is the output of block 4 and
// the deep tap the output of block 5; every later layer width is derived
// from those two channel counts.
struct ModelConfig {
  int input_channels = 3;
  std::vector<BlockSpec> blocks;
  int template_size = 64;
  int search_size = 96;
  // Anchor offsets are anchor_scale times the raw head output, and the head
  // bias starts at anchor_init pixels.
  double anchor_scale = 4.0;
  double anchor_init = 16.0;

  static ModelConfig toy();
  static ModelConfig tiny();
  static ModelConfig paper();

  int total_stride() const;
  int mid_channels() const { return blocks.at(3).channels; }
  int deep_channels() const { return blocks.at(4).channels; }

  nlohmann::json to_json() const;
  // Throws ConfigError on unknown keys or bad values.
  static ModelConfig from_json(const nlohmann::json& j);
  // Keys present in j override base.
  static ModelConfig from_json(const nlohmann::json& j, const ModelConfig& base);
  bool operator==(const ModelConfig&) const = default;
};

enum class Branch { Template, Search };

struct FeaturePair {
  Var mid;   // block-4 output
  Var deep;  // block-5 output
};

struct ApnOutputs {
  Var similarity;  // R1
  Var anchors;     // D, (N, 4, h, w) offsets in pixels
};

struct HeadOutputs {
  Var cls1;  // (N, 2, h, w) logits
  Var cls2;  // (N, 2, h, w) logits
  Var cls3;  // (N, 1, h, w) in (0, 1)
  Var loc;   // (N, 4, h, w)
};

struct NetworkOutputs {
  Var anchors;
  Var cls1;
  Var cls2;
  Var cls3;
  Var loc;
  Var similarity;  // R1
  Var fused;       // R3*
};

class Network {
 public:
  // Builds and initializes all layers; fails with ConfigError when the patch
  // sizes cannot produce aligned response maps.
  Network(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const GridGeometry& grid() const { return grid_; }
  int map_size() const { return grid_.w; }

  FeaturePair extract_features(const Var& patch, Branch branch) const;
  ApnOutputs apn_forward(const Var& mid_x, const Var& mid_z) const;
  Var fusion_forward(const Var& deep_x, const Var& deep_z, const Var& similarity) const;
  HeadOutputs heads_forward(const Var& fused) const;

  NetworkOutputs forward(const Var& template_patch, const Var& search_patch) const;
  // Search branch against previously extracted template features.
  NetworkOutputs forward_search(const FeaturePair& templ, const Var& search_patch) const;

  std::vector<NamedParameter> parameters() const;
  std::size_t parameter_count() const;
  // Backbone parameters stop receiving gradients while frozen.
  void set_backbone_trainable(bool trainable);
  void set_trainable(bool trainable);

  // Number of template-branch feature extractions since construction.
  std::size_t template_extractions() const { return template_calls_; }

  // Deep copy: fresh parameter nodes with the same values.
  Network clone() const;

  Checkpoint to_checkpoint() const;
  static Network from_checkpoint(const Checkpoint& ckpt);

  // Exposed for tests that gate individual sub-layers.
  ConvLayer& layer(const std::string& name);

 private:
  struct Layers {
    std::vector<ConvLayer> backbone;
    ConvLayer adj_search, adj_template, anchor_hidden, anchor_out;           // APN
    ConvLayer deep_search, deep_template, r2_proj, r1_proj, reduce;         // fusion
    ConvLayer cls_tower, cls1, cls2, cls3, loc_tower, loc;                  // heads
  };
  std::vector<std::pair<std::string, ConvLayer*>> named_layers();
  std::vector<std::pair<std::string, const ConvLayer*>> named_layers() const;

  ModelConfig cfg_;
  GridGeometry grid_;
  Layers layers_;
  mutable std::size_t template_calls_ = 0;
};

}  // namespace apn

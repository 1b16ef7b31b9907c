#pragma once

#include <array>
#include <climits>
#include <cstdint>
#include <vector>

#include "apn/geometry.hpp"
#include "apn/image.hpp"

namespace apn {

enum class ObjectShape { Rectangle, Ellipse };

// A single textured object moving over a static textured background. Frame t
// is a pure function of the scene and t.
struct SyntheticScene {
  std::uint64_t seed = 0;
  int width = 256;
  int height = 256;
  ObjectShape shape = ObjectShape::Rectangle;
  std::array<float, 3> color{0.9f, 0.2f, 0.2f};
  float pattern_contrast = 0.45f;
  double noise = 0.03;
  // Object center and size at frame 0, pixels.
  double cx = 128.0;
  double cy = 128.0;
  double w = 32.0;
  double h = 32.0;
  double vx = 0.0;
  double vy = 0.0;
  double jitter = 0.0;       // per-frame positional noise (std dev, pixels)
  double scale_drift = 0.0;  // relative size change per frame
  // Fraction of object pixels hidden by the occluder while
  // occlusion_start <= t < occlusion_end.
  double occluder_fraction = 0.0;
  int occlusion_start = 0;
  int occlusion_end = INT_MAX;

  // Randomized scene suitable for training and held-out tracking.
  static SyntheticScene random(std::uint64_t seed, int width = 256, int height = 256);
};

// Ground-truth box at frame t: at least 4x4 pixels and inside the frame.
CornerBox scene_box(const SyntheticScene& scene, int t);

struct RenderedFrame {
  Image image;
  CornerBox box;
  std::vector<std::uint8_t> object_mask;    // object pixels before occlusion
  std::vector<std::uint8_t> occluder_mask;  // pixels painted by the occluder
};

RenderedFrame render_frame(const SyntheticScene& scene, int t);

struct PairOptions {
  int template_size = 64;
  int search_size = 96;
  double context = 0.5;      // margin c = context * (w + h)
  double max_shift = 12.0;   // search-center jitter, search-patch pixels
  double scale_jitter = 0.1; // search window side scaled by up to (1 +- scale_jitter)
};

struct TrainingPair {
  Image template_patch;
  Image search_patch;
  CornerBox template_box;  // template-patch coordinates
  CornerBox search_box;    // search-patch coordinates
};

// Side of the square context window around a w x h box: sqrt((w+c)(h+c)).
double context_side(double w, double h, double context);

// Template from frame t, search from frame t + frame_gap around a jittered
// center. Deterministic in (scene, t, frame_gap, options, seed).
TrainingPair generate_pair(const SyntheticScene& scene, int t, int frame_gap, const PairOptions& opts,
                           std::uint64_t seed);

// n pairs drawn from n random scenes.
std::vector<TrainingPair> make_pair_set(std::size_t n, const PairOptions& opts, std::uint64_t seed, int max_gap = 4);

}  // namespace apn

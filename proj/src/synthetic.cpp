#include "apn/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "apn/error.hpp"

namespace apn {
namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::array<float, 3> hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = std::fmod(h, 1.0) * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) r = c, g = x;
  else if (hp < 2) r = x, g = c;
  else if (hp < 3) g = c, b = x;
  else if (hp < 4) g = x, b = c;
  else if (hp < 5) r = x, b = c;
  else r = c, b = x;
  const double m = v - c;
  return {static_cast<float>(r + m), static_cast<float>(g + m), static_cast<float>(b + m)};
}

struct Grating {
  double kx, ky, phase, amp;
  int channel;
};

bool inside_shape(const SyntheticScene& scene, const CornerBox& b, double px, double py) {
  if (px < b.x1 || px >= b.x2 || py < b.y1 || py >= b.y2) return false;
  if (scene.shape == ObjectShape::Rectangle) return true;
  const CenterBox c = b.to_center();
  const double dx = (px - c.cx) / (c.w / 2.0);
  const double dy = (py - c.cy) / (c.h / 2.0);
  return dx * dx + dy * dy <= 1.0;
}

}  // namespace

SyntheticScene SyntheticScene::random(std::uint64_t seed, int width, int height) {
  std::mt19937_64 rng(mix(seed, 0x5CE4E));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SyntheticScene s;
  s.seed = seed;
  s.width = width;
  s.height = height;
  s.shape = u(rng) < 0.5 ? ObjectShape::Rectangle : ObjectShape::Ellipse;
  s.color = hsv_to_rgb(u(rng), 0.7 + 0.3 * u(rng), 0.75 + 0.25 * u(rng));
  s.pattern_contrast = static_cast<float>(0.3 + 0.3 * u(rng));
  s.w = 22.0 + 18.0 * u(rng);
  s.h = 22.0 + 18.0 * u(rng);
  s.cx = width * (0.35 + 0.3 * u(rng));
  s.cy = height * (0.35 + 0.3 * u(rng));
  s.vx = -1.5 + 3.0 * u(rng);
  s.vy = -1.5 + 3.0 * u(rng);
  s.jitter = 0.5;
  s.scale_drift = -0.004 + 0.008 * u(rng);
  return s;
}

CornerBox scene_box(const SyntheticScene& scene, int t) {
  std::mt19937_64 rng(mix(scene.seed, 0x10000u + static_cast<std::uint64_t>(t)));
  std::normal_distribution<double> n(0.0, 1.0);
  const double jx = scene.jitter > 0.0 ? scene.jitter * n(rng) : 0.0;
  const double jy = scene.jitter > 0.0 ? scene.jitter * n(rng) : 0.0;
  const double grow = std::pow(1.0 + scene.scale_drift, t);
  const double w = std::clamp(scene.w * grow, 4.0, scene.width - 2.0);
  const double h = std::clamp(scene.h * grow, 4.0, scene.height - 2.0);
  const double cx = std::clamp(scene.cx + scene.vx * t + jx, w / 2.0, scene.width - w / 2.0);
  const double cy = std::clamp(scene.cy + scene.vy * t + jy, h / 2.0, scene.height - h / 2.0);
  return CenterBox{cx, cy, w, h}.to_corner();
}

RenderedFrame render_frame(const SyntheticScene& scene, int t) {
  RenderedFrame out;
  out.image = Image(scene.width, scene.height);
  out.box = scene_box(scene, t);
  const std::size_t npx = static_cast<std::size_t>(scene.width) * scene.height;
  out.object_mask.assign(npx, 0);
  out.occluder_mask.assign(npx, 0);

  // Static background: tinted base plus a few oriented gratings.
  std::mt19937_64 bg_rng(mix(scene.seed, 0xB6));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double base = 0.35 + 0.2 * u(bg_rng);
  std::array<double, 3> tint{};
  for (double& v : tint) v = base + 0.08 * (u(bg_rng) - 0.5);
  std::vector<Grating> gratings;
  for (int k = 0; k < 6; ++k) {
    const double period = 8.0 + 40.0 * u(bg_rng);
    const double theta = std::numbers::pi * u(bg_rng);
    const double f = 2.0 * std::numbers::pi / period;
    gratings.push_back({f * std::cos(theta), f * std::sin(theta), 2.0 * std::numbers::pi * u(bg_rng),
                        0.05 + 0.07 * u(bg_rng), k % 3});
  }
  for (int y = 0; y < scene.height; ++y) {
    for (int x = 0; x < scene.width; ++x) {
      float* p = out.image.px(x, y);
      for (int c = 0; c < 3; ++c) p[c] = static_cast<float>(tint[c]);
      for (const auto& g : gratings) {
        const double v = g.amp * std::sin(g.kx * x + g.ky * y + g.phase);
        for (int c = 0; c < 3; ++c) p[c] += static_cast<float>(c == g.channel ? v : 0.5 * v);
      }
    }
  }

  // Object with a darker horizontal band through its middle third.
  const CornerBox& b = out.box;
  const double band_lo = b.y1 + b.height() / 3.0;
  const double band_hi = b.y2 - b.height() / 3.0;
  const int x_lo = std::max(0, static_cast<int>(std::floor(b.x1)));
  const int x_hi = std::min(scene.width - 1, static_cast<int>(std::ceil(b.x2)));
  const int y_lo = std::max(0, static_cast<int>(std::floor(b.y1)));
  const int y_hi = std::min(scene.height - 1, static_cast<int>(std::ceil(b.y2)));
  for (int y = y_lo; y <= y_hi; ++y) {
    for (int x = x_lo; x <= x_hi; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      if (!inside_shape(scene, b, px, py)) continue;
      out.object_mask[static_cast<std::size_t>(y) * scene.width + x] = 1;
      const float k = (py >= band_lo && py < band_hi) ? 1.0f - scene.pattern_contrast : 1.0f;
      float* p = out.image.px(x, y);
      for (int c = 0; c < 3; ++c) p[c] = scene.color[c] * k;
    }
  }

  // Occluder: a checkered band sweeping in from the object's left edge until
  // the requested share of object pixels is covered.
  if (scene.occluder_fraction > 0.0 && t >= scene.occlusion_start && t < scene.occlusion_end) {
    std::size_t total = 0;
    for (auto m : out.object_mask) total += m;
    const auto needed = static_cast<std::size_t>(std::ceil(scene.occluder_fraction * static_cast<double>(total)));
    const int band_y0 = std::max(0, y_lo - 2);
    const int band_y1 = std::min(scene.height - 1, y_hi + 2);
    std::size_t covered = 0;
    for (int x = std::max(0, x_lo - 2); x < scene.width && covered < needed; ++x) {
      for (int y = band_y0; y <= band_y1; ++y) {
        const std::size_t i = static_cast<std::size_t>(y) * scene.width + x;
        out.occluder_mask[i] = 1;
        covered += out.object_mask[i];
        const float v = ((x / 4 + y / 4) % 2 == 0) ? 0.30f : 0.55f;
        float* p = out.image.px(x, y);
        p[0] = p[1] = p[2] = v;
      }
    }
  }

  // Per-frame sensor noise.
  std::mt19937_64 noise_rng(mix(scene.seed, 0x20000u + static_cast<std::uint64_t>(t)));
  std::normal_distribution<float> nd(0.0f, static_cast<float>(scene.noise));
  if (scene.noise > 0.0) {
    for (float& v : out.image.rgb) v = std::clamp(v + nd(noise_rng), 0.0f, 1.0f);
  } else {
    for (float& v : out.image.rgb) v = std::clamp(v, 0.0f, 1.0f);
  }
  return out;
}

double context_side(double w, double h, double context) {
  const double c = context * (w + h);
  return std::sqrt((w + c) * (h + c));
}

TrainingPair generate_pair(const SyntheticScene& scene, int t, int frame_gap, const PairOptions& opts,
                           std::uint64_t seed) {
  if (frame_gap < 0) throw UsageError("generate_pair: frame_gap must be non-negative");
  std::mt19937_64 rng(mix(seed, 0xA1));
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  const RenderedFrame first = render_frame(scene, t);
  const RenderedFrame second = frame_gap == 0 ? first : render_frame(scene, t + frame_gap);
  const CenterBox zc = first.box.to_center();
  const double sz = context_side(zc.w, zc.h, opts.context);

  TrainingPair pair;
  pair.template_patch = crop_resize(first.image, zc.cx, zc.cy, sz, opts.template_size);
  const double zs = opts.template_size / sz;
  pair.template_box = {(first.box.x1 - (zc.cx - sz / 2.0)) * zs, (first.box.y1 - (zc.cy - sz / 2.0)) * zs,
                       (first.box.x2 - (zc.cx - sz / 2.0)) * zs, (first.box.y2 - (zc.cy - sz / 2.0)) * zs};

  const CenterBox xc = second.box.to_center();
  const double sx = sz * opts.search_size / opts.template_size * (1.0 + opts.scale_jitter * u(rng));
  const double shift_x = opts.max_shift * u(rng) * sx / opts.search_size;
  const double shift_y = opts.max_shift * u(rng) * sx / opts.search_size;
  const double ox = xc.cx + shift_x - sx / 2.0;
  const double oy = xc.cy + shift_y - sx / 2.0;
  pair.search_patch = crop_resize(second.image, xc.cx + shift_x, xc.cy + shift_y, sx, opts.search_size);
  const double xs = opts.search_size / sx;
  pair.search_box = {(second.box.x1 - ox) * xs, (second.box.y1 - oy) * xs, (second.box.x2 - ox) * xs,
                     (second.box.y2 - oy) * xs};
  return pair;
}

std::vector<TrainingPair> make_pair_set(std::size_t n, const PairOptions& opts, std::uint64_t seed, int max_gap) {
  std::vector<TrainingPair> pairs;
  pairs.reserve(n);
  std::mt19937_64 rng(mix(seed, 0xDA7A));
  std::uniform_int_distribution<int> t_dist(0, 40);
  std::uniform_int_distribution<int> gap_dist(0, std::max(0, max_gap));
  for (std::size_t i = 0; i < n; ++i) {
    const SyntheticScene scene = SyntheticScene::random(mix(seed, i));
    const int t = t_dist(rng);
    const int gap = gap_dist(rng);
    pairs.push_back(generate_pair(scene, t, gap, opts, mix(seed, 1000 + i)));
  }
  return pairs;
}

}  // namespace apn

#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include "apn/tensor.hpp"

namespace apn {

// Interleaved RGB image, values in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> rgb;

  Image() = default;
  Image(int w, int h, float fill = 0.0f) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, fill) {}

  float* px(int x, int y) { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const float* px(int x, int y) const { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  std::array<float, 3> mean_color() const;
};

// Binary PPM (P6, maxval 255).
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& img);

// Square window of `side` frame pixels centered at (cx, cy), bilinearly
// resampled to out_size x out_size. Pixels outside the frame take the frame's
// mean color. Pixel k spans [k, k+1) in frame coordinates.
Image crop_resize(const Image& frame, double cx, double cy, double side, int out_size);

// Stacks equally sized images into an (N, 3, H, W) tensor, mapped to
// (v - 0.5) * 4 per channel.
Tensor to_tensor(std::span<const Image* const> images);
Tensor to_tensor(const Image& img);

}  // namespace apn

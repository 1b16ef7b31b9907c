#include "apn/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include "apn/error.hpp"

namespace apn {
namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& is) {
  std::string tok;
  while (is) {
    int ch = is.get();
    if (ch == '#') {
      std::string skip;
      std::getline(is, skip);
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    if (ch == EOF) break;
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

}  // namespace

std::array<float, 3> Image::mean_color() const {
  std::array<double, 3> acc{0.0, 0.0, 0.0};
  const std::size_t n = static_cast<std::size_t>(width) * height;
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) acc[c] += rgb[i * 3 + c];
  }
  if (n == 0) return {0.f, 0.f, 0.f};
  return {static_cast<float>(acc[0] / n), static_cast<float>(acc[1] / n), static_cast<float>(acc[2] / n)};
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open image " + path.string());
  if (header_token(is) != "P6") throw std::runtime_error(path.string() + ": not a binary PPM (P6)");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(header_token(is));
    h = std::stoi(header_token(is));
    maxval = std::stoi(header_token(is));
  } catch (const std::exception&) {
    throw std::runtime_error(path.string() + ": malformed PPM header");
  }
  if (w < 1 || h < 1 || maxval < 1 || maxval > 255) throw std::runtime_error(path.string() + ": unsupported PPM");
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * 3);
  if (!is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
    throw std::runtime_error(path.string() + ": truncated pixel data");
  }
  Image img(w, h);
  for (std::size_t i = 0; i < bytes.size(); ++i) img.rgb[i] = static_cast<float>(bytes[i]) / maxval;
  return img;
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write image " + path.string());
  os << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> bytes(img.rgb.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(img.rgb[i], 0.0f, 1.0f) * 255.0f));
  }
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image crop_resize(const Image& frame, double cx, double cy, double side, int out_size) {
  if (!(side > 0.0) || out_size < 1) throw UsageError("crop_resize: side and output size must be positive");
  const auto fill = frame.mean_color();
  Image out(out_size, out_size);
  const double step = side / out_size;
  const double x0 = cx - side / 2.0;
  const double y0 = cy - side / 2.0;
  for (int v = 0; v < out_size; ++v) {
    // Continuous sample position, shifted so integer coordinates hit pixel centers.
    const double fy = y0 + (v + 0.5) * step - 0.5;
    const int iy = static_cast<int>(std::floor(fy));
    const double wy = fy - iy;
    for (int u = 0; u < out_size; ++u) {
      const double fx = x0 + (u + 0.5) * step - 0.5;
      const int ix = static_cast<int>(std::floor(fx));
      const double wx = fx - ix;
      float* dst = out.px(u, v);
      for (int c = 0; c < 3; ++c) {
        auto sample = [&](int x, int y) -> double {
          if (x < 0 || y < 0 || x >= frame.width || y >= frame.height) return fill[c];
          return frame.px(x, y)[c];
        };
        const double top = (1.0 - wx) * sample(ix, iy) + wx * sample(ix + 1, iy);
        const double bottom = (1.0 - wx) * sample(ix, iy + 1) + wx * sample(ix + 1, iy + 1);
        dst[c] = static_cast<float>((1.0 - wy) * top + wy * bottom);
      }
    }
  }
  return out;
}

Tensor to_tensor(std::span<const Image* const> images) {
  if (images.empty()) throw UsageError("to_tensor: no images");
  const int w = images.front()->width;
  const int h = images.front()->height;
  Tensor t(Shape{static_cast<int>(images.size()), 3, h, w});
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image& img = *images[n];
    if (img.width != w || img.height != h) throw ShapeError("to_tensor: images differ in size");
    for (int c = 0; c < 3; ++c) {
      double* dst = t.plane(static_cast<int>(n), c);
      for (std::size_t i = 0; i < static_cast<std::size_t>(w) * h; ++i) dst[i] = (img.rgb[i * 3 + c] - 0.5) * 4.0;
    }
  }
  return t;
}

Tensor to_tensor(const Image& img) {
  const Image* one[] = {&img};
  return to_tensor(std::span<const Image* const>(one));
}

}  // namespace apn

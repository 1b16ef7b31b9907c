#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace apn {

// NCHW extents. Every tensor in the tracker is rank 4.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

// Dense row-major 4-D array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  // Rejects size mismatch and non-finite values.
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::span<double> data() { return values_; }
  std::span<const double> data() const { return values_; }
  double* raw() { return values_.data(); }
  const double* raw() const { return values_.data(); }

  // Pointer to the (n, c) plane.
  double* plane(int n, int c) {
    return values_.data() + (static_cast<std::size_t>(n) * shape_.c + c) * shape_.plane();
  }
  const double* plane(int n, int c) const {
    return values_.data() + (static_cast<std::size_t>(n) * shape_.c + c) * shape_.plane();
  }

  double& at(int n, int c, int y, int x) { return plane(n, c)[static_cast<std::size_t>(y) * shape_.w + x]; }
  double at(int n, int c, int y, int x) const {
    return plane(n, c)[static_cast<std::size_t>(y) * shape_.w + x];
  }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  void fill(double v);
  bool all_finite() const;
  double sum() const;

 private:
  Shape shape_{0, 0, 0, 0};
  std::vector<double> values_;
};

}  // namespace apn

#pragma once

#include <cstdint>
#include <random>

#include "apn/autograd.hpp"

namespace apn {

// Output extent of a convolution along one axis: floor((in + 2p - k) / s) + 1.
// Returns 0 when the window does not fit.
int conv_output_size(int in, int kernel, int stride, int padding);

// Cross-correlation style convolution. weight (out, in, kh, kw), bias (1, out, 1, 1).
Var conv2d(const Var& input, const Var& weight, const Var& bias, int stride, int padding);

// Per-channel valid cross-correlation of template over search; batch entries
// are paired index by index. Output keeps the channel count.
Var dw_xcorr(const Var& search, const Var& templ);

Var concat_channels(const Var& a, const Var& b);
Var slice_channels(const Var& a, int begin, int end);

Var relu(const Var& x);
Var sigmoid(const Var& x);

Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double k);
// Sum of all elements, shape (1,1,1,1).
Var sum(const Var& x);

// Conv weights + bias. Weights are He-uniform in +-sqrt(6/fan_in),
// bias starts at zero.
struct ConvLayer {
  Var weight;
  Var bias;
  int stride = 1;
  int padding = 0;

  ConvLayer() = default;
  ConvLayer(const std::string& name, int in_ch, int out_ch, int kernel, int stride, int padding,
            std::mt19937_64& rng);

  int in_channels() const { return weight.shape().c; }
  int out_channels() const { return weight.shape().n; }
  int kernel() const { return weight.shape().h; }
  int output_size(int in) const { return conv_output_size(in, kernel(), stride, padding); }
  std::size_t parameter_count() const { return weight.value().size() + bias.value().size(); }

  Var forward(const Var& x) const { return conv2d(x, weight, bias, stride, padding); }
};

}  // namespace apn

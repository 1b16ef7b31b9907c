#include "apn/ops.hpp"

#include <algorithm>
#include <cmath>

#include "apn/error.hpp"
#include "apn/kernels.hpp"

namespace apn {
namespace {

struct ConvGeom {
  int cin, h, w, kh, kw, stride, pad, ho, wo;
  std::size_t rows() const { return static_cast<std::size_t>(cin) * kh * kw; }
  std::size_t cols() const { return static_cast<std::size_t>(ho) * wo; }
  bool is_pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

void im2col(const double* x, const ConvGeom& g, double* col) {
  const std::size_t n = g.cols();
  for (int ci = 0; ci < g.cin; ++ci) {
    const double* xp = x + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx) {
        double* row = col + ((static_cast<std::size_t>(ci) * g.kh + ky) * g.kw + kx) * n;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          double* dst = row + static_cast<std::size_t>(oy) * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.wo, 0.0);
            continue;
          }
          const double* src = xp + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeom& g, double* dx) {
  const std::size_t n = g.cols();
  for (int ci = 0; ci < g.cin; ++ci) {
    double* xp = dx + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx) {
        const double* row = col + ((static_cast<std::size_t>(ci) * g.kh + ky) * g.kw + kx) * n;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          const double* src = row + static_cast<std::size_t>(oy) * g.wo;
          double* dst = xp + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
}

}  // namespace

int conv_output_size(int in, int kernel, int stride, int padding) {
  const int span = in + 2 * padding - kernel;
  if (span < 0 || stride < 1) return 0;
  return span / stride + 1;
}

Var conv2d(const Var& input, const Var& weight, const Var& bias, int stride, int padding) {
  const Shape xs = input.shape();
  const Shape ws = weight.shape();
  if (xs.c != ws.c) {
    throw ShapeError("conv2d: input " + xs.str() + " has " + std::to_string(xs.c) + " channels, weight " +
                     ws.str() + " expects " + std::to_string(ws.c));
  }
  if (bias.defined() && (bias.shape().c != ws.n || bias.value().size() != static_cast<std::size_t>(ws.n))) {
    throw ShapeError("conv2d: bias " + bias.shape().str() + " does not match weight " + ws.str());
  }
  ConvGeom g{xs.c, xs.h, xs.w, ws.h, ws.w, stride, padding, conv_output_size(xs.h, ws.h, stride, padding),
             conv_output_size(xs.w, ws.w, stride, padding)};
  if (g.ho < 1 || g.wo < 1) {
    throw ShapeError("conv2d: kernel " + ws.str() + " with stride " + std::to_string(stride) + " pad " +
                     std::to_string(padding) + " does not fit input " + xs.str());
  }

  const auto& kt = kernels::active();
  Tensor out(Shape{xs.n, ws.n, g.ho, g.wo});
  const std::size_t k = g.rows();
  const std::size_t ncol = g.cols();
  std::vector<double> col(g.is_pointwise() ? 0 : k * ncol);
  for (int n = 0; n < xs.n; ++n) {
    double* y = out.plane(n, 0);
    if (bias.defined()) {
      for (int co = 0; co < ws.n; ++co) std::fill(y + co * ncol, y + (co + 1) * ncol, bias.value()[co]);
    }
    const double* src = input.value().plane(n, 0);
    if (!g.is_pointwise()) {
      im2col(src, g, col.data());
      src = col.data();
    }
    kt.gemm_nn(ws.n, ncol, k, weight.value().raw(), k, src, ncol, y, ncol);
  }

  return make_result(std::move(out), {input, weight, bias}, [input, weight, bias, g](const Tensor& gy) {
    const auto& kt = kernels::active();
    const std::size_t k = g.rows();
    const std::size_t ncol = g.cols();
    const int cout = weight.shape().n;
    const int batch = input.shape().n;
    std::vector<double> col(g.is_pointwise() ? 0 : k * ncol);
    std::vector<double> dcol(k * ncol);
    Tensor* dw = weight.requires_grad() ? &weight.node()->ensure_grad() : nullptr;
    Tensor* db = bias.defined() && bias.requires_grad() ? &bias.node()->ensure_grad() : nullptr;
    Tensor* dx = input.requires_grad() ? &input.node()->ensure_grad() : nullptr;
    for (int n = 0; n < batch; ++n) {
      const double* dy = gy.plane(n, 0);
      if (db != nullptr) {
        for (int co = 0; co < cout; ++co) {
          double s = 0.0;
          for (std::size_t j = 0; j < ncol; ++j) s += dy[co * ncol + j];
          (*db)[co] += s;
        }
      }
      if (dw != nullptr) {
        const double* src = input.value().plane(n, 0);
        if (!g.is_pointwise()) {
          im2col(src, g, col.data());
          src = col.data();
        }
        kt.gemm_nt(cout, k, ncol, dy, ncol, src, ncol, dw->raw(), k);
      }
      if (dx != nullptr) {
        if (g.is_pointwise()) {
          kt.gemm_tn(k, ncol, cout, weight.value().raw(), k, dy, ncol, dx->plane(n, 0), ncol);
        } else {
          std::fill(dcol.begin(), dcol.end(), 0.0);
          kt.gemm_tn(k, ncol, cout, weight.value().raw(), k, dy, ncol, dcol.data(), ncol);
          col2im_add(dcol.data(), g, dx->plane(n, 0));
        }
      }
    }
  });
}

Var dw_xcorr(const Var& search, const Var& templ) {
  const Shape ss = search.shape();
  const Shape ts = templ.shape();
  if (ss.c != ts.c) {
    throw ShapeError("dw_xcorr: channel mismatch, search " + ss.str() + " template " + ts.str());
  }
  if (ss.n != ts.n) throw ShapeError("dw_xcorr: batch mismatch, search " + ss.str() + " template " + ts.str());
  if (ts.h > ss.h || ts.w > ss.w) {
    throw ShapeError("dw_xcorr: template " + ts.str() + " larger than search " + ss.str());
  }
  const int ho = ss.h - ts.h + 1;
  const int wo = ss.w - ts.w + 1;
  const auto& kt = kernels::active();
  Tensor out(Shape{ss.n, ss.c, ho, wo});
  for (int n = 0; n < ss.n; ++n) {
    for (int c = 0; c < ss.c; ++c) {
      const double* s = search.value().plane(n, c);
      const double* t = templ.value().plane(n, c);
      double* o = out.plane(n, c);
      for (int y = 0; y < ho; ++y) {
        for (int ky = 0; ky < ts.h; ++ky) {
          for (int kx = 0; kx < ts.w; ++kx) {
            kt.axpy(t[ky * ts.w + kx], s + (y + ky) * ss.w + kx, o + y * wo, wo);
          }
        }
      }
    }
  }
  return make_result(std::move(out), {search, templ}, [search, templ, ho, wo](const Tensor& gy) {
    const auto& kt = kernels::active();
    const Shape ss = search.shape();
    const Shape ts = templ.shape();
    Tensor* ds = search.requires_grad() ? &search.node()->ensure_grad() : nullptr;
    Tensor* dt = templ.requires_grad() ? &templ.node()->ensure_grad() : nullptr;
    for (int n = 0; n < ss.n; ++n) {
      for (int c = 0; c < ss.c; ++c) {
        const double* s = search.value().plane(n, c);
        const double* t = templ.value().plane(n, c);
        const double* g = gy.plane(n, c);
        for (int y = 0; y < ho; ++y) {
          for (int ky = 0; ky < ts.h; ++ky) {
            for (int kx = 0; kx < ts.w; ++kx) {
              const std::size_t off = static_cast<std::size_t>(y + ky) * ss.w + kx;
              if (dt != nullptr) dt->plane(n, c)[ky * ts.w + kx] += kt.dot(g + y * wo, s + off, wo);
              if (ds != nullptr) kt.axpy(t[ky * ts.w + kx], g + y * wo, ds->plane(n, c) + off, wo);
            }
          }
        }
      }
    }
  });
}

Var concat_channels(const Var& a, const Var& b) {
  const Shape as = a.shape();
  const Shape bs = b.shape();
  if (as.n != bs.n || as.h != bs.h || as.w != bs.w) {
    throw ShapeError("concat_channels: " + as.str() + " and " + bs.str() + " differ outside the channel axis");
  }
  Tensor out(Shape{as.n, as.c + bs.c, as.h, as.w});
  const std::size_t pa = as.c * as.plane();
  const std::size_t pb = bs.c * bs.plane();
  for (int n = 0; n < as.n; ++n) {
    std::copy_n(a.value().plane(n, 0), pa, out.plane(n, 0));
    std::copy_n(b.value().plane(n, 0), pb, out.plane(n, as.c));
  }
  return make_result(std::move(out), {a, b}, [a, b, pa, pb](const Tensor& gy) {
    const int ca = a.shape().c;
    for (int n = 0; n < a.shape().n; ++n) {
      if (a.requires_grad()) {
        double* d = a.node()->ensure_grad().plane(n, 0);
        const double* s = gy.plane(n, 0);
        for (std::size_t i = 0; i < pa; ++i) d[i] += s[i];
      }
      if (b.requires_grad()) {
        double* d = b.node()->ensure_grad().plane(n, 0);
        const double* s = gy.plane(n, ca);
        for (std::size_t i = 0; i < pb; ++i) d[i] += s[i];
      }
    }
  });
}

Var slice_channels(const Var& a, int begin, int end) {
  const Shape as = a.shape();
  if (begin < 0 || end > as.c || begin >= end) {
    throw ShapeError("slice_channels: [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for " + as.str());
  }
  Tensor out(Shape{as.n, end - begin, as.h, as.w});
  const std::size_t len = static_cast<std::size_t>(end - begin) * as.plane();
  for (int n = 0; n < as.n; ++n) std::copy_n(a.value().plane(n, begin), len, out.plane(n, 0));
  return make_result(std::move(out), {a}, [a, begin, len](const Tensor& gy) {
    Tensor& d = a.node()->ensure_grad();
    for (int n = 0; n < a.shape().n; ++n) {
      double* dst = d.plane(n, begin);
      const double* src = gy.plane(n, 0);
      for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
    }
  });
}

Var relu(const Var& x) {
  Tensor out(x.shape());
  const double* s = x.value().raw();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s[i] > 0.0 ? s[i] : 0.0;
  return make_result(std::move(out), {x}, [x](const Tensor& gy) {
    Tensor& d = x.node()->ensure_grad();
    const double* s = x.value().raw();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (s[i] > 0.0) d[i] += gy[i];
    }
  });
}

Var sigmoid(const Var& x) {
  Tensor out(x.shape());
  const double* s = x.value().raw();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-s[i]));
  Tensor y = out;
  return make_result(std::move(out), {x}, [x, y = std::move(y)](const Tensor& gy) {
    Tensor& d = x.node()->ensure_grad();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += gy[i] * y[i] * (1.0 - y[i]);
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_result(std::move(out), {a, b}, [a, b](const Tensor& gy) {
    accumulate_grad(a, gy);
    accumulate_grad(b, gy);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_result(std::move(out), {a, b}, [a, b](const Tensor& gy) {
    if (a.requires_grad()) {
      Tensor& d = a.node()->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gy[i] * b.value()[i];
    }
    if (b.requires_grad()) {
      Tensor& d = b.node()->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gy[i] * a.value()[i];
    }
  });
}

Var scale(const Var& x, double k) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = k * x.value()[i];
  return make_result(std::move(out), {x}, [x, k](const Tensor& gy) {
    Tensor& d = x.node()->ensure_grad();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += k * gy[i];
  });
}

Var sum(const Var& x) {
  Tensor out(Shape{1, 1, 1, 1}, x.value().sum());
  return make_result(std::move(out), {x}, [x](const Tensor& gy) {
    Tensor& d = x.node()->ensure_grad();
    const double g = gy[0];
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g;
  });
}

ConvLayer::ConvLayer(const std::string& name, int in_ch, int out_ch, int kernel, int stride_, int padding_,
                     std::mt19937_64& rng)
    : stride(stride_), padding(padding_) {
  if (in_ch < 1 || out_ch < 1 || kernel < 1 || stride_ < 1 || padding_ < 0) {
    throw ConfigError("conv layer '" + name + "': invalid geometry");
  }
  const double fan_in = static_cast<double>(in_ch) * kernel * kernel;
  // He-uniform: keeps activation scale roughly constant through relu stacks.
  const double bound = std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor w(Shape{out_ch, in_ch, kernel, kernel});
  for (double& v : w.data()) v = dist(rng);
  weight = Var::parameter(std::move(w), name + ".weight");
  bias = Var::parameter(Tensor(Shape{1, out_ch, 1, 1}, 0.0), name + ".bias");
}

}  // namespace apn

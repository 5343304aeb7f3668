#include "bgm/nnops.hpp"

#include <algorithm>
#include <cmath>

namespace bgm {

namespace {

void check_bn_args(const Tensor4& x, std::size_t gamma, std::size_t beta) {
  if (x.n() == 0 || x.h() == 0 || x.w() == 0) throw ShapeError("batchnorm2d: empty batch " + x.shape().str());
  if (gamma != static_cast<std::size_t>(x.c()) || beta != static_cast<std::size_t>(x.c())) {
    throw ShapeError("batchnorm2d: gamma/beta length must equal channel count " + std::to_string(x.c()));
  }
}

}  // namespace

Tensor4 batchnorm2d_train(const Tensor4& x, std::span<const double> gamma, std::span<const double> beta,
                          std::span<double> running_mean, std::span<double> running_var,
                          const BatchNormConfig& cfg, BatchNormCache* cache) {
  check_bn_args(x, gamma.size(), beta.size());
  const int C = x.c();
  const std::size_t plane = x.plane();
  const double count = static_cast<double>(x.n()) * plane;
  Tensor4 y(x.shape());
  Tensor4 xhat(x.shape());
  std::vector<double> inv_std(C);
  for (int c = 0; c < C; ++c) {
    double sum = 0.0;
    for (int n = 0; n < x.n(); ++n)
      for (double v : x.plane_span(n, c)) sum += v;
    const double mean = sum / count;
    double sq = 0.0;
    for (int n = 0; n < x.n(); ++n)
      for (double v : x.plane_span(n, c)) sq += (v - mean) * (v - mean);
    const double var = sq / count;
    const double istd = 1.0 / std::sqrt(var + cfg.epsilon);
    inv_std[c] = istd;
    for (int n = 0; n < x.n(); ++n) {
      auto src = x.plane_span(n, c);
      auto xh = xhat.plane_span(n, c);
      auto dst = y.plane_span(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = (src[i] - mean) * istd;
        dst[i] = gamma[c] * xh[i] + beta[c];
      }
    }
    if (!running_mean.empty()) {
      const double unbiased = count > 1 ? sq / (count - 1) : var;
      running_mean[c] = (1.0 - cfg.momentum) * running_mean[c] + cfg.momentum * mean;
      running_var[c] = (1.0 - cfg.momentum) * running_var[c] + cfg.momentum * unbiased;
    }
  }
  if (cache) {
    cache->inv_std = std::move(inv_std);
    cache->xhat = std::move(xhat);
  }
  return y;
}

Tensor4 batchnorm2d_eval(const Tensor4& x, std::span<const double> gamma, std::span<const double> beta,
                         std::span<const double> running_mean, std::span<const double> running_var,
                         const BatchNormConfig& cfg) {
  check_bn_args(x, gamma.size(), beta.size());
  Tensor4 y(x.shape());
  for (int c = 0; c < x.c(); ++c) {
    const double scale = gamma[c] / std::sqrt(running_var[c] + cfg.epsilon);
    const double shift = beta[c] - running_mean[c] * scale;
    for (int n = 0; n < x.n(); ++n) {
      auto src = x.plane_span(n, c);
      auto dst = y.plane_span(n, c);
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] * scale + shift;
    }
  }
  return y;
}

Tensor4 batchnorm2d_backward(const Tensor4& dy, std::span<const double> gamma, const BatchNormCache& cache,
                             std::span<double> dgamma, std::span<double> dbeta) {
  require_shape("batchnorm2d_backward", dy.shape(), cache.xhat.shape());
  Tensor4 dx(dy.shape());
  const double count = static_cast<double>(dy.n()) * dy.plane();
  for (int c = 0; c < dy.c(); ++c) {
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (int n = 0; n < dy.n(); ++n) {
      auto g = dy.plane_span(n, c);
      auto xh = cache.xhat.plane_span(n, c);
      for (std::size_t i = 0; i < g.size(); ++i) {
        sum_dy += g[i];
        sum_dy_xhat += g[i] * xh[i];
      }
    }
    if (!dgamma.empty()) dgamma[c] += sum_dy_xhat;
    if (!dbeta.empty()) dbeta[c] += sum_dy;
    const double k = gamma[c] * cache.inv_std[c] / count;
    for (int n = 0; n < dy.n(); ++n) {
      auto g = dy.plane_span(n, c);
      auto xh = cache.xhat.plane_span(n, c);
      auto out = dx.plane_span(n, c);
      for (std::size_t i = 0; i < g.size(); ++i) out[i] = k * (count * g[i] - sum_dy - xh[i] * sum_dy_xhat);
    }
  }
  return dx;
}

Tensor4 relu(const Tensor4& x) {
  Tensor4 y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y.data()[i] = std::max(0.0, x.data()[i]);
  return y;
}

Tensor4 relu_backward(const Tensor4& y, const Tensor4& dy) {
  require_shape("relu_backward", y.shape(), dy.shape());
  Tensor4 dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx.data()[i] = y.data()[i] > 0.0 ? dy.data()[i] : 0.0;
  return dx;
}

Tensor4 clamp(const Tensor4& x, double lo, double hi) {
  Tensor4 y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y.data()[i] = std::clamp(x.data()[i], lo, hi);
  return y;
}

Tensor4 clamp_backward(const Tensor4& x, const Tensor4& dy, double lo, double hi, ClampGrad mode) {
  require_shape("clamp_backward", x.shape(), dy.shape());
  Tensor4 dx(dy.shape());
  const bool restoring = mode == ClampGrad::restoring;
  for (std::size_t i = 0; i < dy.size(); ++i) {
    const double v = x.data()[i], g = dy.data()[i];
    // A descent step moves v by -g: below the range that is upward when g < 0.
    const bool pass = (v >= lo && v <= hi) || (restoring && ((v < lo && g < 0) || (v > hi && g > 0)));
    dx.data()[i] = pass ? g : 0.0;
  }
  return dx;
}

Tensor4 resize(const Tensor4& x, int h, int w, Resample mode) {
  if (h < 1 || w < 1) throw ShapeError("resize: target size must be positive");
  if (h == x.h() && w == x.w()) return x;
  Tensor4 y(x.n(), x.c(), h, w);
  if (mode == Resample::nearest) {
    const auto ty = nearest_taps(x.h(), h);
    const auto tx = nearest_taps(x.w(), w);
    for (int n = 0; n < x.n(); ++n)
      for (int c = 0; c < x.c(); ++c) {
        const double* src = x.data() + x.index(n, c, 0, 0);
        double* dst = y.data() + y.index(n, c, 0, 0);
        for (int yy = 0; yy < h; ++yy)
          for (int xx = 0; xx < w; ++xx) dst[yy * w + xx] = src[ty[yy] * x.w() + tx[xx]];
      }
    return y;
  }
  const auto ty = bilinear_taps(x.h(), h);
  const auto tx = bilinear_taps(x.w(), w);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      const double* src = x.data() + x.index(n, c, 0, 0);
      double* dst = y.data() + y.index(n, c, 0, 0);
      for (int yy = 0; yy < h; ++yy) {
        const LerpTap& ry = ty[yy];
        const double* r0 = src + static_cast<std::size_t>(ry.i0) * x.w();
        const double* r1 = src + static_cast<std::size_t>(ry.i1) * x.w();
        for (int xx = 0; xx < w; ++xx) {
          const LerpTap& rx = tx[xx];
          const double top = r0[rx.i0] + rx.t * (r0[rx.i1] - r0[rx.i0]);
          const double bottom = r1[rx.i0] + rx.t * (r1[rx.i1] - r1[rx.i0]);
          dst[yy * w + xx] = top + ry.t * (bottom - top);
        }
      }
    }
  return y;
}

Tensor4 resize_backward(const Tensor4& dy, int src_h, int src_w, Resample mode) {
  if (src_h == dy.h() && src_w == dy.w()) return dy;
  Tensor4 dx(dy.n(), dy.c(), src_h, src_w);
  const int h = dy.h(), w = dy.w();
  if (mode == Resample::nearest) {
    const auto ty = nearest_taps(src_h, h);
    const auto tx = nearest_taps(src_w, w);
    for (int n = 0; n < dy.n(); ++n)
      for (int c = 0; c < dy.c(); ++c) {
        const double* g = dy.data() + dy.index(n, c, 0, 0);
        double* dst = dx.data() + dx.index(n, c, 0, 0);
        for (int yy = 0; yy < h; ++yy)
          for (int xx = 0; xx < w; ++xx) dst[ty[yy] * src_w + tx[xx]] += g[yy * w + xx];
      }
    return dx;
  }
  const auto ty = bilinear_taps(src_h, h);
  const auto tx = bilinear_taps(src_w, w);
  for (int n = 0; n < dy.n(); ++n)
    for (int c = 0; c < dy.c(); ++c) {
      const double* g = dy.data() + dy.index(n, c, 0, 0);
      double* dst = dx.data() + dx.index(n, c, 0, 0);
      for (int yy = 0; yy < h; ++yy) {
        const LerpTap& ry = ty[yy];
        double* r0 = dst + static_cast<std::size_t>(ry.i0) * src_w;
        double* r1 = dst + static_cast<std::size_t>(ry.i1) * src_w;
        for (int xx = 0; xx < w; ++xx) {
          const LerpTap& rx = tx[xx];
          const double v = g[yy * w + xx];
          const double top = v * (1.0 - ry.t);
          const double bottom = v * ry.t;
          r0[rx.i0] += top * (1.0 - rx.t);
          r0[rx.i1] += top * rx.t;
          r1[rx.i0] += bottom * (1.0 - rx.t);
          r1[rx.i1] += bottom * rx.t;
        }
      }
    }
  return dx;
}

Tensor4 concat_channels(std::span<const Tensor4* const> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: nothing to concatenate");
  const Shape4 first = parts[0]->shape();
  int channels = 0;
  for (const Tensor4* p : parts) {
    if (p->n() != first.n || p->h() != first.h || p->w() != first.w) {
      throw ShapeError("concat_channels: " + p->shape().str() + " incompatible with " + first.str());
    }
    channels += p->c();
  }
  Tensor4 y(first.n, channels, first.h, first.w);
  const std::size_t plane = y.plane();
  for (int n = 0; n < first.n; ++n) {
    double* dst = y.data() + y.index(n, 0, 0, 0);
    for (const Tensor4* p : parts) {
      const double* src = p->data() + p->index(n, 0, 0, 0);
      dst = std::copy(src, src + plane * p->c(), dst);
    }
  }
  return y;
}

Tensor4 concat_channels(std::initializer_list<const Tensor4*> parts) {
  return concat_channels(std::span<const Tensor4* const>(parts.begin(), parts.size()));
}

Tensor4 slice_channels(const Tensor4& x, int first, int count) {
  if (first < 0 || count < 0 || first + count > x.c()) throw ShapeError("slice_channels: range out of bounds");
  Tensor4 y(x.n(), count, x.h(), x.w());
  const std::size_t len = x.plane() * count;
  for (int n = 0; n < x.n(); ++n) {
    const double* src = x.data() + x.index(n, first, 0, 0);
    std::copy(src, src + len, y.data() + y.index(n, 0, 0, 0));
  }
  return y;
}

void accumulate_channels(Tensor4& dx, const Tensor4& dpart, int first) {
  if (dpart.n() != dx.n() || dpart.h() != dx.h() || dpart.w() != dx.w() || first + dpart.c() > dx.c()) {
    throw ShapeError("accumulate_channels: " + dpart.shape().str() + " does not fit " + dx.shape().str());
  }
  const std::size_t len = dx.plane() * dpart.c();
  for (int n = 0; n < dx.n(); ++n) {
    const double* src = dpart.data() + dpart.index(n, 0, 0, 0);
    double* dst = dx.data() + dx.index(n, first, 0, 0);
    for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
  }
}

Tensor4 global_avg_pool(const Tensor4& x) {
  Tensor4 y(x.n(), x.c(), 1, 1);
  const double inv = 1.0 / static_cast<double>(x.plane());
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      double s = 0.0;
      for (double v : x.plane_span(n, c)) s += v;
      y.at(n, c, 0, 0) = s * inv;
    }
  return y;
}

Tensor4 global_avg_pool_backward(const Tensor4& dy, int h, int w) {
  Tensor4 dx(dy.n(), dy.c(), h, w);
  const double inv = 1.0 / (static_cast<double>(h) * w);
  for (int n = 0; n < dy.n(); ++n)
    for (int c = 0; c < dy.c(); ++c) {
      const double g = dy.at(n, c, 0, 0) * inv;
      for (double& v : dx.plane_span(n, c)) v = g;
    }
  return dx;
}

Tensor4 broadcast_spatial(const Tensor4& x, int h, int w) {
  if (x.h() != 1 || x.w() != 1) throw ShapeError("broadcast_spatial: expected 1x1 input, got " + x.shape().str());
  Tensor4 y(x.n(), x.c(), h, w);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      const double v = x.at(n, c, 0, 0);
      for (double& o : y.plane_span(n, c)) o = v;
    }
  return y;
}

Tensor4 broadcast_spatial_backward(const Tensor4& dy) {
  Tensor4 dx(dy.n(), dy.c(), 1, 1);
  for (int n = 0; n < dy.n(); ++n)
    for (int c = 0; c < dy.c(); ++c) {
      double s = 0.0;
      for (double v : dy.plane_span(n, c)) s += v;
      dx.at(n, c, 0, 0) = s;
    }
  return dx;
}

}  // namespace bgm

#include "bgm/losses.hpp"

#include <algorithm>
#include <cmath>

#include "bgm/nnops.hpp"

namespace bgm {

namespace {

constexpr double kSmooth[3] = {1.0, 2.0, 1.0};
constexpr double kDiff[3] = {-1.0, 0.0, 1.0};

void require_one_channel(const char* op, const Tensor4& t) {
  if (t.c() != 1) throw ShapeError(std::string(op) + ": expected 1 channel, got " + std::to_string(t.c()));
}

double sign(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

}  // namespace

Tensor4 sobel_gradient(const Tensor4& alpha) {
  require_one_channel("sobel_gradient", alpha);
  const int h = alpha.h(), w = alpha.w();
  Tensor4 out(alpha.n(), 2, h, w);
  for (int n = 0; n < alpha.n(); ++n) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        // Smoothed central differences; exact zero on constant regions.
        const int y0 = std::max(y - 1, 0), y1 = std::min(y + 1, h - 1);
        const int x0 = std::max(x - 1, 0), x1 = std::min(x + 1, w - 1);
        double gx = 0, gy = 0;
        for (int d = -1; d <= 1; ++d) {
          const int yy = std::clamp(y + d, 0, h - 1), xx = std::clamp(x + d, 0, w - 1);
          gx += kSmooth[d + 1] * (alpha.at(n, 0, yy, x1) - alpha.at(n, 0, yy, x0));
          gy += kSmooth[d + 1] * (alpha.at(n, 0, y1, xx) - alpha.at(n, 0, y0, xx));
        }
        out.at(n, 0, y, x) = gx;
        out.at(n, 1, y, x) = gy;
      }
    }
  }
  return out;
}

Tensor4 sobel_gradient_backward(const Tensor4& dgrad) {
  if (dgrad.c() != 2) throw ShapeError("sobel_gradient_backward: expected 2 channels");
  const int h = dgrad.h(), w = dgrad.w();
  Tensor4 dx_out(dgrad.n(), 1, h, w);
  for (int n = 0; n < dgrad.n(); ++n) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double gx = dgrad.at(n, 0, y, x);
        const double gy = dgrad.at(n, 1, y, x);
        if (gx == 0 && gy == 0) continue;
        for (int dy = -1; dy <= 1; ++dy) {
          const int yy = std::clamp(y + dy, 0, h - 1);
          for (int dx = -1; dx <= 1; ++dx) {
            const int xx = std::clamp(x + dx, 0, w - 1);
            dx_out.at(n, 0, yy, xx) +=
                kSmooth[dy + 1] * kDiff[dx + 1] * gx + kDiff[dy + 1] * kSmooth[dx + 1] * gy;
          }
        }
      }
    }
  }
  return dx_out;
}

double loss_alpha(const Tensor4& alpha, const Tensor4& target, Tensor4* dalpha) {
  require_shape("loss_alpha", alpha.shape(), target.shape());
  require_one_channel("loss_alpha", alpha);
  const std::size_t n = alpha.size();
  double l1 = 0;
  for (std::size_t i = 0; i < n; ++i) l1 += std::abs(alpha.data()[i] - target.data()[i]);

  const Tensor4 ga = sobel_gradient(alpha);
  const Tensor4 gt = sobel_gradient(target);
  const std::size_t m = ga.size();
  double lg = 0;
  for (std::size_t i = 0; i < m; ++i) lg += std::abs(ga.data()[i] - gt.data()[i]);

  if (dalpha) {
    require_shape("loss_alpha gradient", dalpha->shape(), alpha.shape());
    Tensor4 dg(ga.shape());
    for (std::size_t i = 0; i < m; ++i) dg.data()[i] = sign(ga.data()[i] - gt.data()[i]) / static_cast<double>(m);
    const Tensor4 back = sobel_gradient_backward(dg);
    double* d = dalpha->data();
    for (std::size_t i = 0; i < n; ++i) {
      d[i] += sign(alpha.data()[i] - target.data()[i]) / static_cast<double>(n) + back.data()[i];
    }
  }
  return l1 / static_cast<double>(n) + lg / static_cast<double>(m);
}

double loss_foreground(const Tensor4& fg, const Tensor4& target_fg, const Tensor4& target_alpha, Tensor4* dfg) {
  require_shape("loss_foreground", fg.shape(), target_fg.shape());
  require_one_channel("loss_foreground mask", target_alpha);
  if (target_alpha.n() != fg.n() || target_alpha.h() != fg.h() || target_alpha.w() != fg.w()) {
    throw ShapeError("loss_foreground: mask " + target_alpha.shape().str() + " does not match " + fg.shape().str());
  }
  std::size_t count = 0;
  double sum = 0;
  for (int n = 0; n < fg.n(); ++n)
    for (int y = 0; y < fg.h(); ++y)
      for (int x = 0; x < fg.w(); ++x) {
        if (!(target_alpha.at(n, 0, y, x) > 0)) continue;
        for (int c = 0; c < fg.c(); ++c) sum += std::abs(fg.at(n, c, y, x) - target_fg.at(n, c, y, x));
        count += static_cast<std::size_t>(fg.c());
      }
  if (count == 0) return 0.0;
  if (dfg) {
    require_shape("loss_foreground gradient", dfg->shape(), fg.shape());
    const double inv = 1.0 / static_cast<double>(count);
    for (int n = 0; n < fg.n(); ++n)
      for (int y = 0; y < fg.h(); ++y)
        for (int x = 0; x < fg.w(); ++x) {
          if (!(target_alpha.at(n, 0, y, x) > 0)) continue;
          for (int c = 0; c < fg.c(); ++c)
            dfg->at(n, c, y, x) += sign(fg.at(n, c, y, x) - target_fg.at(n, c, y, x)) * inv;
        }
  }
  return sum / static_cast<double>(count);
}

double loss_error(const Tensor4& err, const Tensor4& alpha, const Tensor4& target, Tensor4* derr) {
  require_shape("loss_error", err.shape(), alpha.shape());
  require_shape("loss_error", alpha.shape(), target.shape());
  const std::size_t n = err.size();
  double sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = err.data()[i] - std::abs(alpha.data()[i] - target.data()[i]);
    sum += d * d;
    if (derr) derr->data()[i] += 2.0 * d / static_cast<double>(n);
  }
  return sum / static_cast<double>(n);
}

namespace {

Tensor4 add_tensors(const Tensor4& a, const Tensor4& b) {
  Tensor4 out = a;
  out += b;
  return out;
}

// Foreground term on a residual prediction: F = clamp(residual + image, 0, 1).
double residual_foreground_loss(const Tensor4& residual, const Tensor4& image, const Tensor4& target_fg,
                                const Tensor4& target_alpha, Tensor4* dresidual) {
  const Tensor4 pre = add_tensors(residual, image);
  const Tensor4 fg = clamp(pre, 0.0, 1.0);
  if (!dresidual) return loss_foreground(fg, target_fg, target_alpha);
  Tensor4 dfg(fg.shape());
  const double l = loss_foreground(fg, target_fg, target_alpha, &dfg);
  *dresidual = clamp_backward(pre, dfg, 0.0, 1.0);
  return l;
}

}  // namespace

LossValues compute_losses(const BaseOutputs& coarse, const Tensor4* refined_alpha, const Tensor4* refined_fgr,
                          const Tensor4& image, const Tensor4& gt_alpha, const Tensor4& gt_fg, LossMode mode, int c,
                          LossGrads* grads) {
  if (c < 1) throw std::invalid_argument("compute_losses: c must be positive");
  require_shape("compute_losses ground truth", image.shape(), gt_fg.shape());
  const int hc = image.h() / c, wc = image.w() / c;
  if (coarse.alpha.h() != hc || coarse.alpha.w() != wc) {
    throw ShapeError("compute_losses: coarse outputs " + coarse.alpha.shape().str() + " are not 1/" +
                     std::to_string(c) + " of " + image.shape().str());
  }
  const Tensor4 image_c = resize(image, hc, wc, Resample::bilinear);
  const Tensor4 alpha_c_gt = resize(gt_alpha, hc, wc, Resample::bilinear);
  const Tensor4 fg_c_gt = resize(gt_fg, hc, wc, Resample::bilinear);

  LossValues v;
  if (grads) {
    grads->coarse = {};
    grads->coarse.alpha = Tensor4(coarse.alpha.shape());
    grads->coarse.err = Tensor4(coarse.err.shape());
  }
  v.l_alpha_c = loss_alpha(coarse.alpha, alpha_c_gt, grads ? &grads->coarse.alpha : nullptr);
  v.l_fgr_c =
      residual_foreground_loss(coarse.fgr, image_c, fg_c_gt, alpha_c_gt, grads ? &grads->coarse.fgr : nullptr);
  v.l_err = loss_error(coarse.err, coarse.alpha, alpha_c_gt, grads ? &grads->coarse.err : nullptr);
  v.l_base = v.l_alpha_c + v.l_fgr_c + v.l_err;

  if (mode == LossMode::joint) {
    if (!refined_alpha || !refined_fgr) throw std::invalid_argument("compute_losses: joint mode needs refined outputs");
    require_shape("compute_losses refined alpha", refined_alpha->shape(), gt_alpha.shape());
    if (grads) grads->refined_alpha = Tensor4(refined_alpha->shape());
    v.l_alpha = loss_alpha(*refined_alpha, gt_alpha, grads ? &grads->refined_alpha : nullptr);
    v.l_fgr = residual_foreground_loss(*refined_fgr, image, gt_fg, gt_alpha, grads ? &grads->refined_fgr : nullptr);
    v.l_refine = v.l_alpha + v.l_fgr;
  } else if (grads) {
    grads->refined_alpha = Tensor4();
    grads->refined_fgr = Tensor4();
  }
  v.total = v.l_base + v.l_refine;
  return v;
}

}  // namespace bgm

#include "bgm/imagecore.hpp"

namespace bgm {

Raster::Raster(int c, int h, int w, double fill)
    : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {
  if (c < 0 || h < 0 || w < 0) throw ShapeError("Raster: negative dimension");
}

std::vector<LerpTap> bilinear_taps(int src, int dst) {
  std::vector<LerpTap> taps(dst);
  const double scale = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    double s = (i + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const int i0 = std::min(static_cast<int>(std::floor(s)), src - 1);
    const int i1 = std::min(i0 + 1, src - 1);
    taps[i] = {i0, i1, s - i0};
  }
  return taps;
}

std::vector<int> nearest_taps(int src, int dst) {
  std::vector<int> taps(dst);
  const double scale = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    taps[i] = std::min(static_cast<int>(std::floor((i + 0.5) * scale)), src - 1);
  }
  return taps;
}

Raster resize(const Raster& src, int target_h, int target_w, Resample mode) {
  if (target_h < 1 || target_w < 1) throw ShapeError("resize: target size must be positive");
  Raster out(src.channels, target_h, target_w);
  if (mode == Resample::nearest) {
    const auto ty = nearest_taps(src.height, target_h);
    const auto tx = nearest_taps(src.width, target_w);
    for (int c = 0; c < src.channels; ++c)
      for (int y = 0; y < target_h; ++y)
        for (int x = 0; x < target_w; ++x) out.at(c, y, x) = src.at(c, ty[y], tx[x]);
    return out;
  }
  const auto ty = bilinear_taps(src.height, target_h);
  const auto tx = bilinear_taps(src.width, target_w);
  for (int c = 0; c < src.channels; ++c) {
    for (int y = 0; y < target_h; ++y) {
      const LerpTap& ry = ty[y];
      for (int x = 0; x < target_w; ++x) {
        const LerpTap& rx = tx[x];
        const double a = src.at(c, ry.i0, rx.i0);
        const double b = src.at(c, ry.i0, rx.i1);
        const double d = src.at(c, ry.i1, rx.i0);
        const double e = src.at(c, ry.i1, rx.i1);
        const double top = a + rx.t * (b - a);
        const double bottom = d + rx.t * (e - d);
        out.at(c, y, x) = top + ry.t * (bottom - top);
      }
    }
  }
  return out;
}

namespace {

void require_size(const char* op, int h, int w, int h2, int w2) {
  if (h != h2 || w != w2) {
    throw ShapeError(std::string(op) + ": size mismatch " + std::to_string(h) + "x" + std::to_string(w) +
                     " vs " + std::to_string(h2) + "x" + std::to_string(w2));
  }
}

}  // namespace

Image composite(const AlphaMatte& alpha, const Image& fg, const Image& bg) {
  require_size("composite", alpha.height(), alpha.width(), fg.height(), fg.width());
  require_size("composite", alpha.height(), alpha.width(), bg.height(), bg.width());
  Raster out(3, alpha.height(), alpha.width());
  const auto& a = alpha.raster();
  const auto& f = fg.raster();
  const auto& b = bg.raster();
  const std::size_t plane = out.plane();
  for (int c = 0; c < 3; ++c) {
    for (std::size_t p = 0; p < plane; ++p) {
      const double av = a.data[p];
      out.data[c * plane + p] = av * f.data[c * plane + p] + (1.0 - av) * b.data[c * plane + p];
    }
  }
  return Image(std::move(out));
}

Image recover_foreground(const ForegroundResidual& residual, const Image& image) {
  require_size("recover_foreground", residual.height(), residual.width(), image.height(), image.width());
  Raster out(3, image.height(), image.width());
  const auto& r = residual.raster();
  const auto& i = image.raster();
  for (std::size_t p = 0; p < out.data.size(); ++p) out.data[p] = std::clamp(r.data[p] + i.data[p], 0.0, 1.0);
  return Image(std::move(out));
}

ForegroundResidual residual_of(const Image& fg, const Image& image) {
  require_size("residual_of", fg.height(), fg.width(), image.height(), image.width());
  Raster out(3, image.height(), image.width());
  for (std::size_t p = 0; p < out.data.size(); ++p) out.data[p] = fg.raster().data[p] - image.raster().data[p];
  return ForegroundResidual(std::move(out));
}

}  // namespace bgm

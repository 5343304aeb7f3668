#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bgm {

/// Raised whenever two arrays that must agree in shape do not.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Untyped channel-major raster (c, y, x). Used by resampling and file I/O,
/// which work for any channel count.
struct Raster {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Raster() = default;
  Raster(int c, int h, int w, double fill = 0.0);

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const { return data.size(); }

  double& at(int c, int y, int x) { return data[(c * plane()) + static_cast<std::size_t>(y) * width + x]; }
  double at(int c, int y, int x) const { return data[(c * plane()) + static_cast<std::size_t>(y) * width + x]; }

  std::span<double> channel(int c) { return {data.data() + c * plane(), plane()}; }
  std::span<const double> channel(int c) const { return {data.data() + c * plane(), plane()}; }

  bool same_shape(const Raster& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

enum class Resample { bilinear, nearest };

/// Resample with half-pixel centers and no corner alignment. Source coordinate
/// for output index i is (i + 0.5) * src / dst - 0.5; bilinear clamps it to the
/// valid range, nearest takes floor((i + 0.5) * src / dst).
Raster resize(const Raster& src, int target_h, int target_w, Resample mode);

/// One axis of a half-pixel-center bilinear resampling: for every output index,
/// the two source taps and the weight of the second one.
struct LerpTap {
  int i0;
  int i1;
  double t;
};
std::vector<LerpTap> bilinear_taps(int src, int dst);
std::vector<int> nearest_taps(int src, int dst);

/// Value-range and channel traits for the typed rasters below.
struct ImageTraits {
  static constexpr int channels = 3;
  static constexpr double lo = 0.0;
  static constexpr double hi = 1.0;
  static constexpr const char* name = "Image";
};
struct AlphaTraits {
  static constexpr int channels = 1;
  static constexpr double lo = 0.0;
  static constexpr double hi = 1.0;
  static constexpr const char* name = "AlphaMatte";
};
struct ErrorTraits {
  static constexpr int channels = 1;
  static constexpr double lo = 0.0;
  static constexpr double hi = 1.0;
  static constexpr const char* name = "ErrorMap";
};
struct ResidualTraits {
  static constexpr int channels = 3;
  static constexpr double lo = -1.0;
  static constexpr double hi = 1.0;
  static constexpr const char* name = "ForegroundResidual";
};

/// Immutable raster whose values are guaranteed finite and inside
/// [Traits::lo, Traits::hi]. Out-of-range input is clamped at construction;
/// non-finite input is rejected.
template <class Traits>
class BoundedRaster {
 public:
  static constexpr int kChannels = Traits::channels;

  BoundedRaster(int height, int width, double fill = Traits::lo)
      : raster_(kChannels, height, width, std::clamp(fill, Traits::lo, Traits::hi)) {
    if (height < 1 || width < 1) throw ShapeError(std::string(Traits::name) + ": empty raster");
  }

  explicit BoundedRaster(Raster r) : raster_(std::move(r)) {
    if (raster_.channels != kChannels) {
      throw ShapeError(std::string(Traits::name) + ": expected " + std::to_string(kChannels) +
                       " channels, got " + std::to_string(raster_.channels));
    }
    if (raster_.height < 1 || raster_.width < 1) throw ShapeError(std::string(Traits::name) + ": empty raster");
    for (double& v : raster_.data) {
      if (!std::isfinite(v)) throw std::domain_error(std::string(Traits::name) + ": non-finite value");
      v = std::clamp(v, Traits::lo, Traits::hi);
    }
  }

  int height() const { return raster_.height; }
  int width() const { return raster_.width; }
  int channels() const { return kChannels; }
  double at(int c, int y, int x) const { return raster_.at(c, y, x); }
  double at(int y, int x) const
    requires(Traits::channels == 1)
  {
    return raster_.at(0, y, x);
  }
  std::span<const double> values() const { return raster_.data; }
  const Raster& raster() const { return raster_; }

  bool same_size(int h, int w) const { return raster_.height == h && raster_.width == w; }

 private:
  Raster raster_;
};

using Image = BoundedRaster<ImageTraits>;
using AlphaMatte = BoundedRaster<AlphaTraits>;
using ErrorMap = BoundedRaster<ErrorTraits>;
using ForegroundResidual = BoundedRaster<ResidualTraits>;

/// out = alpha * fg + (1 - alpha) * bg, per pixel.
Image composite(const AlphaMatte& alpha, const Image& fg, const Image& bg);

/// out = clamp(residual + image, 0, 1).
Image recover_foreground(const ForegroundResidual& residual, const Image& image);

/// fg - image, i.e. the residual that `recover_foreground` inverts.
ForegroundResidual residual_of(const Image& fg, const Image& image);

template <class Traits>
BoundedRaster<Traits> resize(const BoundedRaster<Traits>& src, int h, int w, Resample mode) {
  return BoundedRaster<Traits>(resize(src.raster(), h, w, mode));
}

}  // namespace bgm

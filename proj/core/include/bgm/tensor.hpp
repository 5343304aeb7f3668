#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bgm/imagecore.hpp"

namespace bgm {

struct Shape4 {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const { return static_cast<std::size_t>(n) * c * h * w; }
  bool operator==(const Shape4&) const = default;
  std::string str() const;
};

/// Dense NCHW tensor of doubles.
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(Shape4 s, double fill = 0.0);
  Tensor4(int n, int c, int h, int w, double fill = 0.0) : Tensor4(Shape4{n, c, h, w}, fill) {}

  const Shape4& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(shape_.h) * shape_.w; }
  bool empty() const { return data_.empty(); }

  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  double& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  double at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  std::span<double> plane_span(int n, int c) { return {data_.data() + index(n, c, 0, 0), plane()}; }
  std::span<const double> plane_span(int n, int c) const { return {data_.data() + index(n, c, 0, 0), plane()}; }

  void fill(double v);
  Tensor4& operator+=(const Tensor4& o);

  /// True when every element is finite.
  bool all_finite() const;

 private:
  Shape4 shape_;
  std::vector<double> data_;
};

void require_shape(const char* op, const Shape4& a, const Shape4& b);

/// Batch of typed rasters <-> tensor conversions.
template <class Traits>
Tensor4 stack(std::span<const BoundedRaster<Traits>> items) {
  if (items.empty()) throw ShapeError("stack: empty batch");
  const int h = items[0].height(), w = items[0].width();
  Tensor4 t(static_cast<int>(items.size()), Traits::channels, h, w);
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!items[i].same_size(h, w)) throw ShapeError("stack: batch items differ in size");
    auto v = items[i].values();
    std::copy(v.begin(), v.end(), t.data() + t.index(static_cast<int>(i), 0, 0, 0));
  }
  return t;
}

template <class Traits>
Tensor4 to_tensor(const BoundedRaster<Traits>& item) {
  return stack<Traits>(std::span<const BoundedRaster<Traits>>(&item, 1));
}

Tensor4 to_tensor(const Raster& r);

/// Copy of batch element `n` as an untyped raster.
Raster slice_raster(const Tensor4& t, int n);

template <class Traits>
BoundedRaster<Traits> slice(const Tensor4& t, int n) {
  return BoundedRaster<Traits>(slice_raster(t, n));
}

}  // namespace bgm

#include "bgm/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace bgm {

std::string Shape4::str() const {
  return "[" + std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w) + "]";
}

Tensor4::Tensor4(Shape4 s, double fill) : shape_(s) {
  if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) throw ShapeError("Tensor4: negative dimension " + s.str());
  data_.assign(s.numel(), fill);
}

void Tensor4::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor4& Tensor4::operator+=(const Tensor4& o) {
  require_shape("Tensor4::operator+=", shape_, o.shape_);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

bool Tensor4::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_shape(const char* op, const Shape4& a, const Shape4& b) {
  if (!(a == b)) throw ShapeError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

Tensor4 to_tensor(const Raster& r) {
  Tensor4 t(1, r.channels, r.height, r.width);
  std::copy(r.data.begin(), r.data.end(), t.data());
  return t;
}

Raster slice_raster(const Tensor4& t, int n) {
  if (n < 0 || n >= t.n()) throw ShapeError("slice: batch index out of range");
  Raster r(t.c(), t.h(), t.w());
  const double* src = t.data() + t.index(n, 0, 0, 0);
  std::copy(src, src + r.size(), r.data.begin());
  return r;
}

}  // namespace bgm

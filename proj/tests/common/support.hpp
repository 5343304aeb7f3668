#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "bgm/imagecore.hpp"
#include "bgm/tensor.hpp"

namespace testsupport {

inline bgm::Tensor4 random_tensor(int n, int c, int h, int w, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  bgm::Tensor4 t(n, c, h, w);
  for (double& v : t.values()) v = u(rng);
  return t;
}

inline bgm::Raster random_raster(int c, int h, int w, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  bgm::Raster r(c, h, w);
  for (double& v : r.data) v = u(rng);
  return r;
}

inline double dot(const bgm::Tensor4& a, const bgm::Tensor4& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
  return s;
}

/// Relative error between an analytic gradient and central differences of
/// `f` around `x`, over `coords` (all coordinates when empty):
/// ||g_a - g_n|| / max(||g_a||, ||g_n||, floor).
inline double fd_relative_error(const std::function<double()>& f, std::vector<double>& x,
                                const std::vector<double>& analytic, std::vector<std::size_t> coords = {},
                                double eps = 1e-6, double floor = 1e-10) {
  if (coords.empty()) {
    coords.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) coords[i] = i;
  }
  double diff = 0, na = 0, nn = 0;
  for (std::size_t i : coords) {
    const double keep = x[i];
    x[i] = keep + eps;
    const double fp = f();
    x[i] = keep - eps;
    const double fm = f();
    x[i] = keep;
    const double num = (fp - fm) / (2 * eps);
    diff += (num - analytic[i]) * (num - analytic[i]);
    na += analytic[i] * analytic[i];
    nn += num * num;
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), floor});
}

/// Every `stride`-th index of [0, n), starting at `offset`.
inline std::vector<std::size_t> strided(std::size_t n, std::size_t count, std::size_t offset = 0) {
  std::vector<std::size_t> out;
  const std::size_t stride = std::max<std::size_t>(1, n / std::max<std::size_t>(1, count));
  for (std::size_t i = offset % stride; i < n && out.size() < count; i += stride) out.push_back(i);
  return out;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("bgm_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testsupport

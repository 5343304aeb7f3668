#pragma once

// Reference implementations written straight from the definitions, shared by
// the unit tests and the acceptance runner. They favour clarity over speed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <tuple>
#include <vector>

#include "bgm/metrics.hpp"
#include "bgm/parameters.hpp"
#include "bgm/refiner.hpp"
#include "support.hpp"

namespace oracle {

/// Sorts every cell by (-err, batch, row, col) and keeps the first k.
inline std::vector<bgm::PatchIndex> brute_select(const bgm::Tensor4& e4, std::size_t k) {
  std::vector<std::tuple<double, int, int, int>> all;
  for (int n = 0; n < e4.n(); ++n)
    for (int y = 0; y < e4.h(); ++y)
      for (int x = 0; x < e4.w(); ++x) all.emplace_back(-e4.at(n, 0, y, x), n, y, x);
  std::sort(all.begin(), all.end());
  std::vector<bgm::PatchIndex> out;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i)
    out.push_back({std::get<1>(all[i]), std::get<2>(all[i]), std::get<3>(all[i])});
  return out;
}

/// Gradient metric: derivative-of-Gaussian magnitudes with replicate border,
/// squared differences summed over unknown pixels, times 1000.
inline double grad(const bgm::AlphaMatte& a, const bgm::AlphaMatte& b, const bgm::Trimap& t, double sigma) {
  using bgm::TrimapLabel;
  const int r = static_cast<int>(std::ceil(sigma * std::sqrt(-2.0 * std::log(std::sqrt(2 * std::numbers::pi) * sigma * 0.01))));
  auto g = [&](double x) { return std::exp(-x * x / (2 * sigma * sigma)) / (std::sqrt(2 * std::numbers::pi) * sigma); };
  auto dg = [&](double x) { return -x / (sigma * sigma) * g(x); };
  double norm = 0;
  for (int u = -r; u <= r; ++u)
    for (int v = -r; v <= r; ++v) norm += std::pow(g(u) * dg(v), 2);
  norm = std::sqrt(norm);
  auto mag = [&](const bgm::AlphaMatte& m, int y, int x) {
    double gx = 0, gy = 0;
    for (int u = -r; u <= r; ++u)
      for (int v = -r; v <= r; ++v) {
        const double s = m.at(std::clamp(y + u, 0, m.height() - 1), std::clamp(x + v, 0, m.width() - 1));
        gx += g(u) * dg(v) / norm * s;
        gy += dg(u) * g(v) / norm * s;
      }
    return std::hypot(gx, gy);
  };
  double sum = 0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x)
      if (t.at(y, x) == TrimapLabel::unknown) sum += std::pow(mag(a, y, x) - mag(b, y, x), 2);
  return sum * 1000;
}

/// Connectivity metric with a recursive flood fill per threshold.
inline double conn(const bgm::AlphaMatte& a, const bgm::AlphaMatte& b, const bgm::Trimap& t, double step, double theta) {
  using bgm::TrimapLabel;
  const int h = a.height(), w = a.width();
  std::vector<std::vector<double>> level(h, std::vector<double>(w, -1));
  const int steps = static_cast<int>(std::lround(1 / step));
  for (int k = 1; k <= steps; ++k) {
    const double th = k * step;
    std::vector<std::vector<int>> comp(h, std::vector<int>(w, -1));
    std::vector<int> sizes;
    std::function<int(int, int, int)> fill = [&](int y, int x, int id) -> int {
      if (y < 0 || y >= h || x < 0 || x >= w || comp[y][x] >= 0) return 0;
      if (!(a.at(y, x) >= th && b.at(y, x) >= th)) return 0;
      comp[y][x] = id;
      return 1 + fill(y - 1, x, id) + fill(y + 1, x, id) + fill(y, x - 1, id) + fill(y, x + 1, id);
    };
    for (int x = 0; x < w; ++x)
      for (int y = 0; y < h; ++y)
        if (comp[y][x] < 0 && a.at(y, x) >= th && b.at(y, x) >= th) {
          const int id = static_cast<int>(sizes.size());
          sizes.push_back(fill(y, x, id));
        }
    int best = -1;
    for (int i = 0; i < static_cast<int>(sizes.size()); ++i)
      if (best < 0 || sizes[i] > sizes[best]) best = i;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (level[y][x] < 0 && comp[y][x] != best) level[y][x] = (k - 1) * step;
  }
  double sum = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (t.at(y, x) != TrimapLabel::unknown) continue;
      const double l = level[y][x] < 0 ? 1.0 : level[y][x];
      const double da = a.at(y, x) - l, db = b.at(y, x) - l;
      const double pa = da >= theta ? 1 - da : 1;
      const double pb = db >= theta ? 1 - db : 1;
      sum += std::abs(pa - pb);
    }
  return sum * 1000;
}

/// Trimap of a binary matte: unknown iff a pixel of the other value lies
/// within L1 distance `reach` (the cross-shaped erosion, iterated `reach` times).
inline bgm::Trimap binary_trimap(const bgm::AlphaMatte& m, int reach) {
  using bgm::TrimapLabel;
  const int h = m.height(), w = m.width();
  bgm::Trimap t(h, w, TrimapLabel::background);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v = m.at(y, x);
      bool near = false;
      for (int dy = -reach; dy <= reach && !near; ++dy)
        for (int dx = -reach + std::abs(dy); dx <= reach - std::abs(dy) && !near; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < h && xx >= 0 && xx < w && m.at(yy, xx) != v) near = true;
        }
      t.at(y, x) = near ? TrimapLabel::unknown : (v == 1.0 ? TrimapLabel::foreground : TrimapLabel::background);
    }
  return t;
}

/// A few coordinates of one trainable parameter entry.
struct ParamProbe {
  std::vector<double>* values;
  const std::vector<double>* grads;
  std::vector<std::size_t> coords;
};

inline std::vector<ParamProbe> probe_params(bgm::ParameterStore& store, std::size_t per_entry) {
  std::vector<ParamProbe> out;
  std::size_t salt = 0;
  for (auto& [name, p] : store.entries()) {
    if (!p.trainable) continue;
    out.push_back({&p.value, &p.grad, testsupport::strided(p.size(), per_entry, salt++)});
  }
  return out;
}

/// One combined central-difference relative error over all probed coordinates.
///
/// With `kinks` non-null, coordinates whose one-sided slopes disagree by more
/// than kink_gap * (0.01 + |slope|) are treated as straddling a non-differentiable
/// point (ReLU, clamp, |x|): there the reference is the analytic value clamped
/// into the interval spanned by the two one-sided slopes, so only an analytic
/// value outside that interval counts as error. Their number is written to `kinks`.
inline double param_fd_error(const std::function<double()>& f, const std::vector<ParamProbe>& probes,
                             double eps = 1e-6, std::size_t* kinks = nullptr, double kink_gap = 1e-3) {
  double diff = 0, na = 0, nn = 0;
  const double f0 = kinks ? f() : 0.0;
  if (kinks) *kinks = 0;
  for (const auto& pr : probes)
    for (std::size_t i : pr.coords) {
      double& v = (*pr.values)[i];
      const double keep = v;
      v = keep + eps;
      const double fp = f();
      v = keep - eps;
      const double fm = f();
      v = keep;
      const double a = (*pr.grads)[i];
      double num = (fp - fm) / (2 * eps);
      if (kinks) {
        const double fwd = (fp - f0) / eps, bwd = (f0 - fm) / eps;
        if (std::abs(fwd - bwd) > kink_gap * (0.01 + std::abs(num))) {
          ++*kinks;
          num = std::clamp(a, std::min(fwd, bwd), std::max(fwd, bwd));
        }
      }
      diff += (num - a) * (num - a);
      na += a * a;
      nn += num * num;
    }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-10});
}

}  // namespace oracle

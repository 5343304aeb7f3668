#include "bgm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>

namespace bgm {

std::size_t Trimap::count(TrimapLabel l) const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), l)); }

Raster Trimap::to_raster() const {
  Raster r(1, height, width);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    r.data[i] = labels[i] == TrimapLabel::foreground ? 1.0 : (labels[i] == TrimapLabel::unknown ? 0.5 : 0.0);
  }
  return r;
}

std::vector<std::uint8_t> erode_cross(const std::vector<std::uint8_t>& mask, int h, int w) {
  std::vector<std::uint8_t> out(mask.size(), 0);
  auto in = [&](int y, int x) { return y < 0 || y >= h || x < 0 || x >= w || mask[static_cast<std::size_t>(y) * w + x]; };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out[static_cast<std::size_t>(y) * w + x] =
          in(y, x) && in(y - 1, x) && in(y + 1, x) && in(y, x - 1) && in(y, x + 1) ? 1 : 0;
  return out;
}

std::vector<std::uint8_t> dilate_cross(const std::vector<std::uint8_t>& mask, int h, int w) {
  std::vector<std::uint8_t> out(mask.size(), 0);
  auto in = [&](int y, int x) { return y >= 0 && y < h && x >= 0 && x < w && mask[static_cast<std::size_t>(y) * w + x]; };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out[static_cast<std::size_t>(y) * w + x] =
          in(y, x) || in(y - 1, x) || in(y + 1, x) || in(y, x - 1) || in(y, x + 1) ? 1 : 0;
  return out;
}

Trimap make_trimap(const AlphaMatte& alpha_star, const TrimapConfig& cfg) {
  if (cfg.iterations < 0) throw std::invalid_argument("make_trimap: iterations must be >= 0");
  const int h = alpha_star.height(), w = alpha_star.width();
  const auto a = alpha_star.values();
  Trimap t(h, w, TrimapLabel::unknown);
  if (cfg.mode == TrimapMode::erode_certain) {
    std::vector<std::uint8_t> fg(a.size()), bg(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      fg[i] = a[i] >= cfg.hi;
      bg[i] = a[i] <= cfg.lo;
    }
    for (int k = 0; k < cfg.iterations; ++k) {
      fg = erode_cross(fg, h, w);
      bg = erode_cross(bg, h, w);
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (fg[i]) t.labels[i] = TrimapLabel::foreground;
      else if (bg[i]) t.labels[i] = TrimapLabel::background;
    }
  } else {
    std::vector<std::uint8_t> band(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) band[i] = a[i] > cfg.lo && a[i] < cfg.hi;
    for (int k = 0; k < cfg.iterations; ++k) band = dilate_cross(band, h, w);
    for (int k = 0; k < cfg.iterations; ++k) band = erode_cross(band, h, w);
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (band[i]) continue;
      t.labels[i] = a[i] >= 0.5 ? TrimapLabel::foreground : TrimapLabel::background;
    }
  }
  return t;
}

namespace {

void check_sizes(const char* op, const AlphaMatte& a, const AlphaMatte& b, const Trimap& t) {
  if (!a.same_size(b.height(), b.width()) || !a.same_size(t.height, t.width)) {
    throw ShapeError(std::string(op) + ": alpha, reference and trimap sizes differ");
  }
}

}  // namespace

SadMse metric_sad_mse(const AlphaMatte& alpha, const AlphaMatte& alpha_star, const Trimap& trimap) {
  check_sizes("metric_sad_mse", alpha, alpha_star, trimap);
  const auto p = alpha.values(), g = alpha_star.values();
  double sad = 0, sq = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!trimap.unknown(i)) continue;
    const double d = p[i] - g[i];
    sad += std::abs(d);
    sq += d * d;
    ++n;
  }
  SadMse r;
  if (n == 0) {
    r.empty = true;
    return r;
  }
  r.sad = sad / 1000.0;
  r.mse = sq / static_cast<double>(n) * 1000.0;
  return r;
}

std::vector<double> gaussian_derivative_kernel(double sigma, int* radius) {
  if (!(sigma > 0)) throw std::invalid_argument("gaussian_derivative_kernel: sigma must be positive");
  const double eps = 1e-2;
  const int r = static_cast<int>(std::ceil(sigma * std::sqrt(-2.0 * std::log(std::sqrt(2.0 * std::numbers::pi) * sigma * eps))));
  const int size = 2 * r + 1;
  auto gauss = [&](double x) { return std::exp(-x * x / (2 * sigma * sigma)) / (sigma * std::sqrt(2 * std::numbers::pi)); };
  auto dgauss = [&](double x) { return -x * gauss(x) / (sigma * sigma); };
  std::vector<double> k(static_cast<std::size_t>(size) * size);
  double norm = 0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double v = gauss(y - r) * dgauss(x - r);
      k[static_cast<std::size_t>(y) * size + x] = v;
      norm += v * v;
    }
  norm = std::sqrt(norm);
  for (double& v : k) v /= norm;
  if (radius) *radius = r;
  return k;
}

namespace {

std::vector<double> gradient_magnitude(const AlphaMatte& a, const std::vector<double>& kx, int r) {
  const int h = a.height(), w = a.width(), size = 2 * r + 1;
  std::vector<double> mag(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double gx = 0, gy = 0;
      for (int u = 0; u < size; ++u) {
        const int yy = std::clamp(y + u - r, 0, h - 1);
        for (int v = 0; v < size; ++v) {
          const double s = a.at(yy, std::clamp(x + v - r, 0, w - 1));
          gx += kx[static_cast<std::size_t>(u) * size + v] * s;
          gy += kx[static_cast<std::size_t>(v) * size + u] * s;  // transposed kernel
        }
      }
      mag[static_cast<std::size_t>(y) * w + x] = std::sqrt(gx * gx + gy * gy);
    }
  return mag;
}

}  // namespace

double metric_grad(const AlphaMatte& alpha, const AlphaMatte& alpha_star, const Trimap& trimap, double sigma,
                   double q) {
  check_sizes("metric_grad", alpha, alpha_star, trimap);
  int r = 0;
  const auto kx = gaussian_derivative_kernel(sigma, &r);
  const auto mp = gradient_magnitude(alpha, kx, r);
  const auto mg = gradient_magnitude(alpha_star, kx, r);
  double sum = 0;
  for (std::size_t i = 0; i < mp.size(); ++i)
    if (trimap.unknown(i)) sum += std::pow(std::abs(mp[i] - mg[i]), q);
  return sum * 1000.0;
}

namespace {

// Largest 4-connected component of `mask`. Components are discovered in
// column-major scan order and the first one of maximal size wins ties.
std::vector<std::uint8_t> largest_component(const std::vector<std::uint8_t>& mask, int h, int w) {
  std::vector<int> label(mask.size(), -1);
  std::vector<std::size_t> sizes;
  std::queue<std::pair<int, int>> q;
  for (int x = 0; x < w; ++x)
    for (int y = 0; y < h; ++y) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (!mask[i] || label[i] >= 0) continue;
      const int id = static_cast<int>(sizes.size());
      std::size_t count = 0;
      label[i] = id;
      q.emplace(y, x);
      while (!q.empty()) {
        auto [cy, cx] = q.front();
        q.pop();
        ++count;
        const int ny[4] = {cy - 1, cy + 1, cy, cy};
        const int nx[4] = {cx, cx, cx - 1, cx + 1};
        for (int k = 0; k < 4; ++k) {
          if (ny[k] < 0 || ny[k] >= h || nx[k] < 0 || nx[k] >= w) continue;
          const std::size_t j = static_cast<std::size_t>(ny[k]) * w + nx[k];
          if (mask[j] && label[j] < 0) {
            label[j] = id;
            q.emplace(ny[k], nx[k]);
          }
        }
      }
      sizes.push_back(count);
    }
  std::vector<std::uint8_t> omega(mask.size(), 0);
  if (sizes.empty()) return omega;
  const int best = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  for (std::size_t i = 0; i < mask.size(); ++i) omega[i] = label[i] == best;
  return omega;
}

}  // namespace

double metric_conn(const AlphaMatte& alpha, const AlphaMatte& alpha_star, const Trimap& trimap, double step,
                   double theta) {
  check_sizes("metric_conn", alpha, alpha_star, trimap);
  if (!(step > 0 && step <= 1)) throw std::invalid_argument("metric_conn: step must be in (0, 1]");
  const int h = alpha.height(), w = alpha.width();
  const auto p = alpha.values(), g = alpha_star.values();
  const int steps = static_cast<int>(std::lround(1.0 / step));
  std::vector<double> level(p.size(), -1.0);
  std::vector<std::uint8_t> both(p.size());
  for (int k = 1; k <= steps; ++k) {
    const double t = k * step;
    for (std::size_t i = 0; i < p.size(); ++i) both[i] = p[i] >= t && g[i] >= t;
    const auto omega = largest_component(both, h, w);
    for (std::size_t i = 0; i < p.size(); ++i)
      if (level[i] == -1.0 && !omega[i]) level[i] = (k - 1) * step;
  }
  for (double& l : level)
    if (l == -1.0) l = 1.0;
  double sum = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!trimap.unknown(i)) continue;
    const double dp = p[i] - level[i], dg = g[i] - level[i];
    const double phi_p = 1.0 - dp * (dp >= theta ? 1.0 : 0.0);
    const double phi_g = 1.0 - dg * (dg >= theta ? 1.0 : 0.0);
    sum += std::abs(phi_p - phi_g);
  }
  return sum * 1000.0;
}

double metric_fg_mse(const Image& fg, const Image& fg_star, const AlphaMatte& alpha_star, const Trimap& trimap,
                     bool* empty) {
  if (!fg.same_size(fg_star.height(), fg_star.width()) || !fg.same_size(alpha_star.height(), alpha_star.width()) ||
      !fg.same_size(trimap.height, trimap.width)) {
    throw ShapeError("metric_fg_mse: sizes differ");
  }
  const std::size_t plane = static_cast<std::size_t>(fg.height()) * fg.width();
  const auto a = alpha_star.values();
  const auto p = fg.values(), g = fg_star.values();
  double sq = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < plane; ++i) {
    if (!trimap.unknown(i) || !(a[i] > 0)) continue;
    for (std::size_t c = 0; c < 3; ++c) {
      const double d = p[c * plane + i] - g[c * plane + i];
      sq += d * d;
    }
    n += 3;
  }
  if (empty) *empty = n == 0;
  return n == 0 ? 0.0 : sq / static_cast<double>(n) * 1000.0;
}

MetricReport compute_metrics(const AlphaMatte& alpha, const AlphaMatte& alpha_star, const Image& fg,
                             const Image& fg_star, const Trimap& trimap, const MetricParams& params) {
  MetricReport r;
  const SadMse sm = metric_sad_mse(alpha, alpha_star, trimap);
  r.sad = sm.sad;
  r.mse = sm.mse;
  r.empty_unknown = sm.empty;
  r.unknown_pixels = trimap.count(TrimapLabel::unknown);
  r.grad = metric_grad(alpha, alpha_star, trimap, params.grad_sigma, params.grad_q);
  r.conn = metric_conn(alpha, alpha_star, trimap, params.conn_step, params.conn_theta);
  r.fg_mse = metric_fg_mse(fg, fg_star, alpha_star, trimap);
  return r;
}

void write_metric_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "dataset,sample,sad,mse,grad,conn,fg_mse,unknown_pixel_count,note\n";
  const auto old_prec = out.precision(10);
  for (const auto& row : rows) {
    const auto& r = row.report;
    out << row.dataset << ',' << row.sample << ',' << r.sad << ',' << r.mse << ',' << r.grad << ',' << r.conn << ','
        << r.fg_mse << ',' << r.unknown_pixels << ',' << row.note << '\n';
  }
  out.precision(old_prec);
}

MetricReport mean_report(const std::vector<MetricRow>& rows) {
  MetricReport m;
  std::size_t n = 0;
  for (const auto& row : rows) {
    if (!row.note.empty()) continue;
    m.sad += row.report.sad;
    m.mse += row.report.mse;
    m.grad += row.report.grad;
    m.conn += row.report.conn;
    m.fg_mse += row.report.fg_mse;
    m.unknown_pixels += row.report.unknown_pixels;
    ++n;
  }
  if (n == 0) return m;
  const double inv = 1.0 / static_cast<double>(n);
  m.sad *= inv;
  m.mse *= inv;
  m.grad *= inv;
  m.conn *= inv;
  m.fg_mse *= inv;
  m.unknown_pixels /= n;
  return m;
}

}  // namespace bgm

#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "bgm/imagecore.hpp"

namespace bgm {

enum class TrimapLabel : std::uint8_t { background = 0, unknown = 128, foreground = 255 };

struct Trimap {
  int height = 0;
  int width = 0;
  std::vector<TrimapLabel> labels;  // row-major

  Trimap() = default;
  Trimap(int h, int w, TrimapLabel fill) : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill) {}
  TrimapLabel at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  TrimapLabel& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
  bool unknown(std::size_t i) const { return labels[i] == TrimapLabel::unknown; }
  std::size_t count(TrimapLabel l) const;
  /// Gray raster with background 0, unknown 0.5, foreground 1.
  Raster to_raster() const;
};

enum class TrimapMode {
  erode_certain,  // FG and BG certainty masks are eroded; the unknown band grows on both sides
  close_band,     // the fractional band is dilated then eroded (morphological closing)
};

struct TrimapConfig {
  double lo = 0.06;
  double hi = 0.96;
  int iterations = 10;
  TrimapMode mode = TrimapMode::erode_certain;
};

/// Morphology uses the 3x3 cross (4-neighbourhood). Pixels outside the image
/// count as members of the set being eroded.
Trimap make_trimap(const AlphaMatte& alpha_star, const TrimapConfig& cfg = {});

/// One step of binary erosion / dilation with the 3x3 cross.
std::vector<std::uint8_t> erode_cross(const std::vector<std::uint8_t>& mask, int h, int w);
std::vector<std::uint8_t> dilate_cross(const std::vector<std::uint8_t>& mask, int h, int w);

struct SadMse {
  double sad = 0;  // sum |d| / 1000
  double mse = 0;  // mean d^2 * 1000
  bool empty = false;  // no unknown pixels; both values reported as 0
};

SadMse metric_sad_mse(const AlphaMatte& alpha, const AlphaMatte& alpha_star, const Trimap& trimap);

/// Sum over unknown pixels of |mag - mag*|^q, where mag is the magnitude of
/// first-derivative-of-Gaussian responses (replicate border), times 1000.
double metric_grad(const AlphaMatte& alpha, const AlphaMatte& alpha_star, const Trimap& trimap, double sigma = 1.4,
                   double q = 2.0);

/// Normalised derivative-of-Gaussian kernel along x, (2r+1)^2 row-major,
/// r = ceil(sigma * sqrt(-2 ln(sqrt(2 pi) sigma 0.01))). The y kernel is its transpose.
std::vector<double> gaussian_derivative_kernel(double sigma, int* radius);

/// Connectivity error: for each threshold t = step, 2 step, ..., 1 the largest
/// 4-connected component of {alpha >= t} and {alpha* >= t} is found; a pixel's
/// level is the last threshold before it leaves that component. The per-pixel
/// degree is 1 - d [d >= theta] with d = value - level. Sum of |phi - phi*|
/// over unknown pixels, times 1000.
double metric_conn(const AlphaMatte& alpha, const AlphaMatte& alpha_star, const Trimap& trimap, double step = 0.1,
                   double theta = 0.15);

/// Mean squared error over the three channels on unknown pixels with
/// alpha* > 0, times 1000. `empty` is set when that mask has no pixels.
double metric_fg_mse(const Image& fg, const Image& fg_star, const AlphaMatte& alpha_star, const Trimap& trimap,
                     bool* empty = nullptr);

struct MetricParams {
  double grad_sigma = 1.4;
  double grad_q = 2.0;
  double conn_step = 0.1;
  double conn_theta = 0.15;
};

struct MetricReport {
  double sad = 0, mse = 0, grad = 0, conn = 0, fg_mse = 0;
  std::size_t unknown_pixels = 0;
  bool empty_unknown = false;
};

MetricReport compute_metrics(const AlphaMatte& alpha, const AlphaMatte& alpha_star, const Image& fg,
                             const Image& fg_star, const Trimap& trimap, const MetricParams& params = {});

struct MetricRow {
  std::string dataset;
  std::string sample;
  MetricReport report;
  std::string note;  // non-empty for skipped or degenerate samples
};

/// Header: dataset,sample,sad,mse,grad,conn,fg_mse,unknown_pixel_count,note
void write_metric_csv(std::ostream& out, const std::vector<MetricRow>& rows);
/// Mean of every metric over rows without a note.
MetricReport mean_report(const std::vector<MetricRow>& rows);

}  // namespace bgm

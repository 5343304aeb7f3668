#include "bgm/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace bgm {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finaliser over the combined input
  std::uint64_t z = seed ^ (index + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

double uniform(Rng& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

bool bernoulli(Rng& rng, double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

template <class Cfg, class F>
void visit_fields(Cfg& cfg, F&& f) {
  auto affine = [&](const std::string& p, auto& a) {
    f(p + ".rotation_deg", a.rotation_deg);
    f(p + ".scale_lo", a.scale_lo);
    f(p + ".scale_hi", a.scale_hi);
    f(p + ".translate", a.translate);
    f(p + ".shear_deg", a.shear_deg);
    f(p + ".flip_prob", a.flip_prob);
  };
  auto color = [&](const std::string& p, auto& c) {
    f(p + ".brightness_lo", c.brightness_lo);
    f(p + ".brightness_hi", c.brightness_hi);
    f(p + ".contrast_lo", c.contrast_lo);
    f(p + ".contrast_hi", c.contrast_hi);
    f(p + ".saturation_lo", c.saturation_lo);
    f(p + ".saturation_hi", c.saturation_hi);
    f(p + ".hue", c.hue);
  };
  affine("affine", cfg.affine);
  color("color", cfg.color);
  f("noise_var_max", cfg.noise_var_max);
  f("blur_prob", cfg.blur_prob);
  f("sharpen_prob", cfg.sharpen_prob);
  f("misalign_prob", cfg.misalign_prob);
  affine("misalign.affine", cfg.misalign_affine);
  color("misalign.color", cfg.misalign_color);
  f("shadow_prob", cfg.shadow_prob);
  f("shadow.max_offset", cfg.shadow.max_offset);
  f("shadow.blur", cfg.shadow.blur);
  f("shadow.strength_lo", cfg.shadow.strength_lo);
  f("shadow.strength_hi", cfg.shadow.strength_hi);
}

void check_prob(const char* name, double p) {
  if (!(p >= 0 && p <= 1)) throw std::invalid_argument(std::string("augment: ") + name + " must be in [0,1]");
}

void check_range(const char* name, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument(std::string("augment: ") + name + " range has lo > hi");
}

// Row-major 2x2 matrix plus translation: p' = m (p - center) + center + t.
struct Affine {
  double m00 = 1, m01 = 0, m10 = 0, m11 = 1;
  double tx = 0, ty = 0;
  bool identity() const { return m00 == 1 && m01 == 0 && m10 == 0 && m11 == 1 && tx == 0 && ty == 0; }
};

Affine draw_affine(const AffineRange& r, int h, int w, Rng& rng) {
  const double deg = std::numbers::pi / 180.0;
  const double theta = uniform(rng, -r.rotation_deg, r.rotation_deg) * deg;
  const double scale = uniform(rng, r.scale_lo, r.scale_hi);
  const double tx = uniform(rng, -r.translate, r.translate) * w;
  const double ty = uniform(rng, -r.translate, r.translate) * h;
  const double shear = std::tan(uniform(rng, -r.shear_deg, r.shear_deg) * deg);
  const bool flip = r.flip_prob > 0 && bernoulli(rng, r.flip_prob);
  // m = rotation * shear * diag(scale * flip, scale)
  const double c = std::cos(theta), s = std::sin(theta);
  const double sx = scale * (flip ? -1.0 : 1.0), sy = scale;
  Affine a;
  a.m00 = c * sx;
  a.m01 = (c * shear - s) * sy;
  a.m10 = s * sx;
  a.m11 = (s * shear + c) * sy;
  a.tx = tx;
  a.ty = ty;
  return a;
}

enum class Border { replicate, zero };

double sample_bilinear(const Raster& r, int c, double y, double x, Border border) {
  const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
  const double fy = y - y0, fx = x - x0;
  auto get = [&](int yy, int xx) {
    if (yy < 0 || yy >= r.height || xx < 0 || xx >= r.width) {
      if (border == Border::zero) return 0.0;
      yy = std::clamp(yy, 0, r.height - 1);
      xx = std::clamp(xx, 0, r.width - 1);
    }
    return r.at(c, yy, xx);
  };
  const double top = get(y0, x0) + fx * (get(y0, x0 + 1) - get(y0, x0));
  const double bot = get(y0 + 1, x0) + fx * (get(y0 + 1, x0 + 1) - get(y0 + 1, x0));
  return top + fy * (bot - top);
}

Raster warp(const Raster& in, const Affine& a, Border border) {
  if (a.identity()) return in;
  const double det = a.m00 * a.m11 - a.m01 * a.m10;
  const double i00 = a.m11 / det, i01 = -a.m01 / det, i10 = -a.m10 / det, i11 = a.m00 / det;
  const double cx = (in.width - 1) / 2.0, cy = (in.height - 1) / 2.0;
  Raster out(in.channels, in.height, in.width);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      const double px = x - cx - a.tx, py = y - cy - a.ty;
      const double sx = i00 * px + i01 * py + cx;
      const double sy = i10 * px + i11 * py + cy;
      for (int c = 0; c < in.channels; ++c) out.at(c, y, x) = sample_bilinear(in, c, sy, sx, border);
    }
  }
  return out;
}

Raster crop(const Raster& in, int y0, int x0, int h, int w) {
  Raster out(in.channels, h, w);
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < h; ++y)
      std::copy_n(&in.data[c * in.plane() + static_cast<std::size_t>(y0 + y) * in.width + x0], w, &out.at(c, y, 0));
  return out;
}

void clamp01(Raster& r) {
  for (double& v : r.data) v = std::clamp(v, 0.0, 1.0);
}

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

Raster sharpen(const Raster& in, double amount) {
  const Raster soft = box_blur(in, 1);
  Raster out = in;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = std::clamp(in.data[i] + amount * (in.data[i] - soft.data[i]), 0.0, 1.0);
  return out;
}

// Photometric part of the per-layer augmentation.
Raster photometric(Raster rgb, const AugmentConfig& cfg, Rng& rng) {
  const auto& col = cfg.color;
  const double b = uniform(rng, col.brightness_lo, col.brightness_hi);
  const double c = uniform(rng, col.contrast_lo, col.contrast_hi);
  const double s = uniform(rng, col.saturation_lo, col.saturation_hi);
  const double h = uniform(rng, -col.hue, col.hue);
  rgb = color_adjust(rgb, b, c, s, h);
  const double var = uniform(rng, 0.0, cfg.noise_var_max);
  if (var > 0) {
    add_gaussian_noise(rgb, 0.0, var, rng);
    clamp01(rgb);
  }
  if (cfg.blur_prob > 0 && bernoulli(rng, cfg.blur_prob)) {
    rgb = box_blur(rgb, std::uniform_int_distribution<int>(1, 2)(rng));
  }
  if (cfg.sharpen_prob > 0 && bernoulli(rng, cfg.sharpen_prob)) rgb = sharpen(rgb, uniform(rng, 0.0, 0.5));
  return rgb;
}

int round_down(int v, int m) { return (v / m) * m; }

}  // namespace

void AugmentConfig::validate() const {
  check_prob("misalign_prob", misalign_prob);
  check_prob("shadow_prob", shadow_prob);
  check_prob("blur_prob", blur_prob);
  check_prob("sharpen_prob", sharpen_prob);
  check_prob("affine.flip_prob", affine.flip_prob);
  check_prob("misalign.affine.flip_prob", misalign_affine.flip_prob);
  for (const AffineRange* a : {&affine, &misalign_affine}) {
    check_range("scale", a->scale_lo, a->scale_hi);
    if (a->scale_lo <= 0) throw std::invalid_argument("augment: scale must be positive");
  }
  for (const ColorRange* c : {&color, &misalign_color}) {
    check_range("brightness", c->brightness_lo, c->brightness_hi);
    check_range("contrast", c->contrast_lo, c->contrast_hi);
    check_range("saturation", c->saturation_lo, c->saturation_hi);
  }
  check_range("shadow strength", shadow.strength_lo, shadow.strength_hi);
  if (noise_var_max < 0) throw std::invalid_argument("augment: noise_var_max must be >= 0");
  if (crop_lo < 1) throw std::invalid_argument("augment: crop_lo must be >= 1");
  check_range("crop", crop_lo, crop_hi);
  if (crop_multiple < 1) throw std::invalid_argument("augment: crop_multiple must be >= 1");
}

AugmentConfig AugmentConfig::identity() {
  AugmentConfig cfg;
  cfg.affine = {};
  cfg.color = {};
  cfg.noise_var_max = 0;
  cfg.blur_prob = 0;
  cfg.sharpen_prob = 0;
  cfg.misalign_prob = 0;
  cfg.shadow_prob = 0;
  return cfg;
}

AugmentConfig AugmentConfig::from_keyvalues(const KeyValues& kv, const AugmentConfig& base) {
  AugmentConfig cfg = base;
  visit_fields(cfg, [&](const std::string& key, double& v) { v = kv.get_double(key, v); });
  cfg.crop_lo = static_cast<int>(kv.get_int("crop_lo", cfg.crop_lo));
  cfg.crop_hi = static_cast<int>(kv.get_int("crop_hi", cfg.crop_hi));
  cfg.crop_multiple = static_cast<int>(kv.get_int("crop_multiple", cfg.crop_multiple));
  cfg.validate();
  return cfg;
}

AugmentConfig AugmentConfig::from_keyvalues(const KeyValues& kv) { return from_keyvalues(kv, AugmentConfig{}); }

KeyValues AugmentConfig::to_keyvalues() const {
  KeyValues kv;
  AugmentConfig copy = *this;
  visit_fields(copy, [&](const std::string& key, double& v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    kv.set(key, os.str());
  });
  kv.set("crop_lo", std::to_string(crop_lo));
  kv.set("crop_hi", std::to_string(crop_hi));
  kv.set("crop_multiple", std::to_string(crop_multiple));
  return kv;
}

std::vector<std::pair<std::size_t, std::size_t>> zip_epoch(std::size_t n_samples, std::size_t n_backgrounds) {
  if (n_samples == 0 || n_backgrounds == 0) throw std::invalid_argument("zip_epoch: both sets must be non-empty");
  const std::size_t n = std::max(n_samples, n_backgrounds);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) pairs.emplace_back(i % n_samples, i % n_backgrounds);
  return pairs;
}

Raster subpixel_shift(const Raster& in, double dy, double dx) {
  if (dy == 0 && dx == 0) return in;
  Raster out(in.channels, in.height, in.width);
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x) out.at(c, y, x) = sample_bilinear(in, c, y - dy, x - dx, Border::replicate);
  return out;
}

void add_gaussian_noise(Raster& r, double mean, double variance, Rng& rng) {
  if (variance < 0) throw std::invalid_argument("add_gaussian_noise: negative variance");
  std::normal_distribution<double> dist(mean, std::sqrt(variance));
  for (double& v : r.data) v += dist(rng);
}

Raster box_blur(const Raster& in, int radius) {
  if (radius <= 0) return in;
  const double norm = 1.0 / (2 * radius + 1);
  Raster tmp(in.channels, in.height, in.width), out(in.channels, in.height, in.width);
  for (int c = 0; c < in.channels; ++c) {
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x) {
        double s = 0;
        for (int d = -radius; d <= radius; ++d) s += in.at(c, y, std::clamp(x + d, 0, in.width - 1));
        tmp.at(c, y, x) = s * norm;
      }
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x) {
        double s = 0;
        for (int d = -radius; d <= radius; ++d) s += tmp.at(c, std::clamp(y + d, 0, in.height - 1), x);
        out.at(c, y, x) = s * norm;
      }
  }
  return out;
}

Raster color_adjust(const Raster& rgb, double brightness, double contrast, double saturation, double hue) {
  if (rgb.channels != 3) throw ShapeError("color_adjust: expected 3 channels");
  Raster out = rgb;
  const std::size_t n = out.plane();
  double* r = out.channel(0).data();
  double* g = out.channel(1).data();
  double* b = out.channel(2).data();
  if (brightness != 1) {
    for (double& v : out.data) v = std::clamp(v * brightness, 0.0, 1.0);
  }
  if (contrast != 1) {
    double mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += luma(r[i], g[i], b[i]);
    mean /= static_cast<double>(n);
    for (double& v : out.data) v = std::clamp((v - mean) * contrast + mean, 0.0, 1.0);
  }
  if (saturation != 1) {
    for (std::size_t i = 0; i < n; ++i) {
      const double l = luma(r[i], g[i], b[i]);
      r[i] = std::clamp(l + saturation * (r[i] - l), 0.0, 1.0);
      g[i] = std::clamp(l + saturation * (g[i] - l), 0.0, 1.0);
      b[i] = std::clamp(l + saturation * (b[i] - l), 0.0, 1.0);
    }
  }
  if (hue != 0) {
    // rotate chroma in YIQ space
    const double a = hue * 2.0 * std::numbers::pi;
    const double cs = std::cos(a), sn = std::sin(a);
    for (std::size_t i = 0; i < n; ++i) {
      const double y = luma(r[i], g[i], b[i]);
      const double ci = 0.596 * r[i] - 0.274 * g[i] - 0.322 * b[i];
      const double cq = 0.211 * r[i] - 0.523 * g[i] + 0.312 * b[i];
      const double i2 = cs * ci - sn * cq, q2 = sn * ci + cs * cq;
      r[i] = std::clamp(y + 0.956 * i2 + 0.621 * q2, 0.0, 1.0);
      g[i] = std::clamp(y - 0.272 * i2 - 0.647 * q2, 0.0, 1.0);
      b[i] = std::clamp(y - 1.106 * i2 + 1.703 * q2, 0.0, 1.0);
    }
  }
  return out;
}

Raster shadow_mask(const AlphaMatte& alpha, const ShadowConfig& cfg, Rng& rng) {
  const int h = alpha.height(), w = alpha.width();
  const double dy = uniform(rng, -cfg.max_offset, cfg.max_offset) * h;
  const double dx = uniform(rng, -cfg.max_offset, cfg.max_offset) * w;
  const int radius = std::max(1, static_cast<int>(std::lround(cfg.blur * std::min(h, w))));
  Raster mask = box_blur(subpixel_shift(alpha.raster(), dy, dx), radius);
  const auto a = alpha.values();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!(a[i] < 0.5)) mask.data[i] = 0.0;
    mask.data[i] = std::clamp(mask.data[i], 0.0, 1.0);
  }
  return mask;
}

Image apply_shadow(const Image& image, const Raster& mask, double strength) {
  if (mask.channels != 1 || !image.same_size(mask.height, mask.width)) throw ShapeError("apply_shadow: mask size");
  Raster out = image.raster();
  for (int c = 0; c < 3; ++c) {
    auto ch = out.channel(c);
    for (std::size_t i = 0; i < ch.size(); ++i) ch[i] *= 1.0 - strength * mask.data[i];
  }
  return Image(std::move(out));
}

Image shadow_augment(const Image& image, const AlphaMatte& alpha, Rng& rng, const ShadowConfig& cfg) {
  if (!image.same_size(alpha.height(), alpha.width())) throw ShapeError("shadow_augment: image/alpha size mismatch");
  const Raster mask = shadow_mask(alpha, cfg, rng);
  return apply_shadow(image, mask, uniform(rng, cfg.strength_lo, cfg.strength_hi));
}

std::pair<int, int> draw_crop_size(int min_h, int min_w, const AugmentConfig& cfg, Rng& rng) {
  const int m = cfg.crop_multiple;
  if (min_h < m || min_w < m) {
    throw ShapeError("source " + std::to_string(min_h) + "x" + std::to_string(min_w) +
                     " is smaller than the crop multiple " + std::to_string(m));
  }
  std::uniform_int_distribution<int> dist(cfg.crop_lo, cfg.crop_hi);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const int h = std::max(m, round_down(dist(rng), m));
    const int w = std::max(m, round_down(dist(rng), m));
    if (h <= min_h && w <= min_w) return {h, w};
  }
  const int h = std::max(m, round_down(std::min(cfg.crop_hi, min_h), m));
  const int w = std::max(m, round_down(std::min(cfg.crop_hi, min_w), m));
  return {h, w};
}

AugmentedSample augment_sample(const Image& fg, const AlphaMatte& alpha, const Image& bg, int crop_h, int crop_w,
                               const AugmentConfig& cfg, Rng& rng) {
  if (!fg.same_size(alpha.height(), alpha.width())) throw ShapeError("augment_sample: fg/alpha size mismatch");
  if (crop_h > fg.height() || crop_w > fg.width() || crop_h > bg.height() || crop_w > bg.width()) {
    throw ShapeError("augment_sample: crop " + std::to_string(crop_h) + "x" + std::to_string(crop_w) +
                     " exceeds a source");
  }
  // Decide the optional perturbations first so their rates do not depend on
  // how many draws the transforms consume.
  const bool misalign = bernoulli(rng, cfg.misalign_prob);
  const bool shadow = bernoulli(rng, cfg.shadow_prob);

  const Affine fa = draw_affine(cfg.affine, fg.height(), fg.width(), rng);
  Raster f = photometric(warp(fg.raster(), fa, Border::replicate), cfg, rng);
  Raster a = warp(alpha.raster(), fa, Border::zero);
  const Affine ba = draw_affine(cfg.affine, bg.height(), bg.width(), rng);
  Raster b = photometric(warp(bg.raster(), ba, Border::replicate), cfg, rng);

  std::uniform_int_distribution<int> fy(0, fg.height() - crop_h), fx(0, fg.width() - crop_w);
  std::uniform_int_distribution<int> by(0, bg.height() - crop_h), bx(0, bg.width() - crop_w);
  const int fy0 = fy(rng), fx0 = fx(rng), by0 = by(rng), bx0 = bx(rng);

  const Image fg_crop(crop(f, fy0, fx0, crop_h, crop_w));
  const Image b_crop(crop(b, by0, bx0, crop_h, crop_w));
  AugmentedSample s{fg_crop, b_crop, b_crop, AlphaMatte(crop(a, fy0, fx0, crop_h, crop_w)), fg_crop};

  s.shadowed = shadow;
  if (shadow) {
    const Raster mask = shadow_mask(s.gt_alpha, cfg.shadow, rng);
    s.composite_background = apply_shadow(b_crop, mask, uniform(rng, cfg.shadow.strength_lo, cfg.shadow.strength_hi));
  }
  s.image = composite(s.gt_alpha, s.gt_fg, s.composite_background);

  s.misaligned = misalign;
  if (misalign) {
    const Affine ma = draw_affine(cfg.misalign_affine, crop_h, crop_w, rng);
    const auto& mc = cfg.misalign_color;
    Raster m = warp(b_crop.raster(), ma, Border::replicate);
    m = color_adjust(m, uniform(rng, mc.brightness_lo, mc.brightness_hi), uniform(rng, mc.contrast_lo, mc.contrast_hi),
                     uniform(rng, mc.saturation_lo, mc.saturation_hi), uniform(rng, -mc.hue, mc.hue));
    s.background = Image(std::move(m));
  }
  return s;
}

AugmentedSample augment_sample(const Image& fg, const AlphaMatte& alpha, const Image& bg, const AugmentConfig& cfg,
                               Rng& rng) {
  const auto [h, w] = draw_crop_size(std::min(fg.height(), bg.height()), std::min(fg.width(), bg.width()), cfg, rng);
  return augment_sample(fg, alpha, bg, h, w, cfg, rng);
}

SampleBatch augment_batch(std::span<const SourceTriple> sources, const AugmentConfig& cfg, std::uint64_t seed) {
  if (sources.empty()) throw std::invalid_argument("augment_batch: empty batch");
  cfg.validate();
  int min_h = sources[0].fg->height(), min_w = sources[0].fg->width();
  for (const auto& s : sources) {
    min_h = std::min({min_h, s.fg->height(), s.bg->height()});
    min_w = std::min({min_w, s.fg->width(), s.bg->width()});
  }
  Rng size_rng(derive_seed(seed, 0));
  const auto [h, w] = draw_crop_size(min_h, min_w, cfg, size_rng);

  const int n = static_cast<int>(sources.size());
  SampleBatch batch;
  batch.seed = seed;
  batch.image = Tensor4(n, 3, h, w);
  batch.background = Tensor4(n, 3, h, w);
  batch.composite_background = Tensor4(n, 3, h, w);
  batch.gt_alpha = Tensor4(n, 1, h, w);
  batch.gt_fg = Tensor4(n, 3, h, w);
  auto put = [](Tensor4& t, int i, std::span<const double> v) { std::copy(v.begin(), v.end(), t.data() + t.index(i, 0, 0, 0)); };
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i) + 1));
    const auto& src = sources[static_cast<std::size_t>(i)];
    const AugmentedSample s = augment_sample(*src.fg, *src.alpha, *src.bg, h, w, cfg, rng);
    put(batch.image, i, s.image.values());
    put(batch.background, i, s.background.values());
    put(batch.composite_background, i, s.composite_background.values());
    put(batch.gt_alpha, i, s.gt_alpha.values());
    put(batch.gt_fg, i, s.gt_fg.values());
    batch.misaligned.push_back(s.misaligned);
    batch.shadowed.push_back(s.shadowed);
  }
  return batch;
}

Image perturb_background_for_test(const Image& bg, Rng& rng, const TestPerturbConfig& cfg) {
  const double dy = uniform(rng, -cfg.max_shift, cfg.max_shift);
  const double dx = uniform(rng, -cfg.max_shift, cfg.max_shift);
  Raster r = subpixel_shift(bg.raster(), dy, dx);
  const double gamma = uniform(rng, cfg.gamma_lo, cfg.gamma_hi);
  if (gamma != 1) {
    for (double& v : r.data) v = std::pow(std::max(v, 0.0), gamma);
  }
  const double mean = uniform(rng, -cfg.noise_mean, cfg.noise_mean);
  const double var = uniform(rng, cfg.noise_var_lo, cfg.noise_var_hi);
  if (var > 0 || mean != 0) add_gaussian_noise(r, mean, var, rng);
  return Image(std::move(r));
}

}  // namespace bgm

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "bgm/imagecore.hpp"
#include "bgm/keyvalue.hpp"
#include "bgm/tensor.hpp"

namespace bgm {

using Rng = std::mt19937_64;

/// Deterministic child seed for stream `index` of `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

struct AffineRange {
  double rotation_deg = 0;  // uniform in [-r, r]
  double scale_lo = 1, scale_hi = 1;
  double translate = 0;  // fraction of the side, uniform in [-t, t]
  double shear_deg = 0;
  double flip_prob = 0;  // horizontal flip
};

struct ColorRange {
  double brightness_lo = 1, brightness_hi = 1;
  double contrast_lo = 1, contrast_hi = 1;
  double saturation_lo = 1, saturation_hi = 1;
  double hue = 0;  // shift in turns, uniform in [-h, h]
};

struct ShadowConfig {
  double max_offset = 0.05;  // translation of the silhouette, fraction of each side
  double blur = 0.01;        // box radius as a fraction of the shorter side (at least 1 px)
  double strength_lo = 0.3, strength_hi = 0.7;
};

/// Training-time augmentation ranges. The defaults are the full training
/// recipe except the crop range, which is sized for CPU training.
struct AugmentConfig {
  AffineRange affine{5, 0.3, 1.0, 0.1, 5, 0.5};
  ColorRange color{0.85, 1.15, 0.85, 1.15, 0.85, 1.15, 0.05};
  double noise_var_max = 0.03;  // gaussian noise variance, uniform in [0, max]
  double blur_prob = 0.1;       // box blur, radius 1 or 2
  double sharpen_prob = 0.1;    // unsharp mask, amount up to 0.5

  double misalign_prob = 0.3;
  AffineRange misalign_affine{1, 1, 1, 0.01, 0, 0};
  ColorRange misalign_color{0.82, 1.18, 0.82, 1.18, 0.82, 1.18, 0.1};

  double shadow_prob = 0.3;
  ShadowConfig shadow;

  int crop_lo = 128, crop_hi = 256;  // per-dimension crop size range
  int crop_multiple = 1;              // crop sides are rounded down to a multiple of this

  void validate() const;
  /// No geometric or photometric change and zero probabilities. Crops still apply.
  static AugmentConfig identity();

  /// Reads keys such as `affine.rotation_deg`, `misalign_prob`, `crop_lo`.
  static AugmentConfig from_keyvalues(const KeyValues& kv);
  static AugmentConfig from_keyvalues(const KeyValues& kv, const AugmentConfig& base);
  KeyValues to_keyvalues() const;
};

/// (sample, background) pairs of one epoch: max(n_samples, n_backgrounds)
/// entries, entry i pairing i mod n_samples with i mod n_backgrounds.
std::vector<std::pair<std::size_t, std::size_t>> zip_epoch(std::size_t n_samples, std::size_t n_backgrounds);

/// One augmented training example at crop resolution.
struct AugmentedSample {
  Image image;                  // composite the network sees
  Image background;             // background the network sees (possibly misaligned)
  Image composite_background;   // background used to form `image` (possibly shadowed)
  AlphaMatte gt_alpha;
  Image gt_fg;
  bool misaligned = false;
  bool shadowed = false;
};

/// A batch of equally sized augmented samples as tensors.
struct SampleBatch {
  Tensor4 image, background, composite_background, gt_alpha, gt_fg;
  std::vector<bool> misaligned, shadowed;
  std::uint64_t seed = 0;
};

struct SourceTriple {
  const Image* fg;
  const AlphaMatte* alpha;
  const Image* bg;
};

/// Transforms fg/alpha jointly and bg independently, crops both to
/// crop_h x crop_w, optionally shadows the compositing background, composites,
/// and optionally misaligns the background handed to the network.
AugmentedSample augment_sample(const Image& fg, const AlphaMatte& alpha, const Image& bg, int crop_h, int crop_w,
                               const AugmentConfig& cfg, Rng& rng);
/// Same, with the crop size drawn from the configured range.
AugmentedSample augment_sample(const Image& fg, const AlphaMatte& alpha, const Image& bg, const AugmentConfig& cfg,
                               Rng& rng);

/// Draws one crop size for sources no smaller than min_h x min_w. Up to ten
/// draws are tried; afterwards the largest admissible size is used.
std::pair<int, int> draw_crop_size(int min_h, int min_w, const AugmentConfig& cfg, Rng& rng);

/// One crop size for the whole batch, drawn from stream derive_seed(seed, 0);
/// sample i uses stream derive_seed(seed, i + 1).
SampleBatch augment_batch(std::span<const SourceTriple> sources, const AugmentConfig& cfg, std::uint64_t seed);

/// Soft silhouette of the subject shifted by a random offset, blurred, and
/// limited to pixels with alpha < 0.5.
Raster shadow_mask(const AlphaMatte& alpha, const ShadowConfig& cfg, Rng& rng);
/// image * (1 - strength * mask).
Image apply_shadow(const Image& image, const Raster& mask, double strength);
/// Darkens `image` behind the subject with a random mask and strength.
Image shadow_augment(const Image& image, const AlphaMatte& alpha, Rng& rng, const ShadowConfig& cfg = {});

// Building blocks, exposed for testing.

/// Bilinear sub-pixel translation: out(y, x) = in(y - dy, x - dx), replicate border.
Raster subpixel_shift(const Raster& in, double dy, double dx);
/// Adds N(mean, variance) independently to every element; no clamping.
void add_gaussian_noise(Raster& r, double mean, double variance, Rng& rng);
Raster box_blur(const Raster& in, int radius);
/// Brightness, contrast, saturation, then hue, each followed by a clamp to [0,1].
Raster color_adjust(const Raster& rgb, double brightness, double contrast, double saturation, double hue);

struct TestPerturbConfig {
  double max_shift = 0.3;  // pixels
  double gamma_lo = 0.85, gamma_hi = 1.15;
  double noise_mean = 0.02;  // mean uniform in [-m, m]
  double noise_var_lo = 0.08, noise_var_hi = 0.15;

  static TestPerturbConfig none() { return {0, 1, 1, 0, 0, 0}; }
};

/// Sub-pixel shift, gamma, then gaussian noise, applied to a captured background.
Image perturb_background_for_test(const Image& bg, Rng& rng, const TestPerturbConfig& cfg = {});

}  // namespace bgm

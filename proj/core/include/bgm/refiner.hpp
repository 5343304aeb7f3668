#pragma once

#include <cstddef>
#include <vector>

#include "bgm/basenet.hpp"

namespace bgm {

/// One cell of the quarter-resolution error grid. Cell (row, col) owns the
/// full-resolution block rows [4row, 4row+4) x cols [4col, 4col+4).
struct PatchIndex {
  int batch = 0;
  int row = 0;
  int col = 0;
  bool operator==(const PatchIndex&) const = default;
};

/// Selected cells, ordered by descending error, ties by (batch, row, col).
struct PatchIndexSet {
  int grid_n = 0;
  int grid_h = 0;
  int grid_w = 0;
  std::vector<PatchIndex> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
};

enum class SelectionMode { top_k, threshold };
enum class RefineKernel { k3x3, k1x1 };

struct RefineConfig {
  int c = 4;  // base-network downsample factor, 4 or 8
  SelectionMode selection = SelectionMode::top_k;
  std::size_t k = 5000;    // patch budget for the whole batch
  double threshold = 0.1;  // used by SelectionMode::threshold
  RefineKernel kernel = RefineKernel::k3x3;

  void validate() const;
};

/// Error map at 1/c -> E_4 at (H/4, W/4). c=4 is the identity; c=8 is a
/// bilinear x2 upsample.
Tensor4 resample_error(const Tensor4& err_c, int full_h, int full_w, int c);

PatchIndexSet select_patches(const Tensor4& e4, const RefineConfig& cfg);

/// Patch geometry for one refinement stage: the window for cell (i, j) starts
/// at (scale*i + offset, scale*j + offset) and is `size` pixels square.
struct CropWindow {
  int scale;
  int offset;
  int size;
};

/// 3x3 kernels: half-resolution 8x8 window at (2i-3, 2j-3); full-resolution 8x8
/// window at (4i-2, 4j-2). 1x1 kernels: 2x2 at (2i, 2j) and 4x4 at (4i, 4j).
CropWindow half_window(RefineKernel kernel);
CropWindow full_window(RefineKernel kernel);

/// Gathers windows with replicate padding -> [k, x.c, size, size].
Tensor4 crop_patches(const Tensor4& x, const PatchIndexSet& idx, const CropWindow& win);
/// Scatter-adds patch gradients back into a tensor of shape `x_shape`.
Tensor4 crop_patches_backward(const Tensor4& dpatches, const PatchIndexSet& idx, const CropWindow& win,
                              const Shape4& x_shape);

/// Copy of `coarse_up` with each selected 4x4 cell overwritten by its patch.
Tensor4 replace_patches(const Tensor4& coarse_up, const Tensor4& refined, const PatchIndexSet& idx);
/// Splits the upstream gradient: returns d(coarse_up) (zero on replaced cells)
/// and writes d(refined) to `drefined`.
Tensor4 replace_patches_backward(const Tensor4& dy, const PatchIndexSet& idx, Tensor4* drefined);

struct RefineOutputs {
  Tensor4 alpha;  // [n,1,H,W] in [0,1]
  Tensor4 fgr;    // [n,3,H,W] in [-1,1]
  // Intermediate patch tensors, kept for inspection.
  Shape4 stage1_shape;
  Shape4 concat_shape;
  Shape4 stage2_shape;
};

/// G_refine. Channel layout of the 42-channel half-resolution feature stack:
/// alpha_c (1), residual_c (3), hidden (32), image (3), background (3).
class Refiner {
 public:
  static constexpr int kFeatureChannels = 1 + 3 + BaseNetConfig::kHiddenChannels + 3 + 3;
  static constexpr std::size_t kEvalChunk = 2048;  // patches per chunk in eval mode

  Refiner(RefineKernel kernel, ParameterStore& store);

  RefineOutputs forward(const BaseOutputs& coarse, const Tensor4& image, const Tensor4& background,
                        const PatchIndexSet& idx, Mode mode);
  /// Gradients w.r.t. the coarse alpha, residual and hidden features.
  BaseGrads backward(const Tensor4& dalpha, const Tensor4& dfgr);

  RefineKernel kernel() const { return kernel_; }
  void set_clamp_gradient(ClampGrad mode) { clamp_grad_ = mode; }

 private:
  Tensor4 run_patches(const Tensor4& half_feats, const Tensor4& full_feats, const PatchIndexSet& idx, Mode mode,
                      RefineOutputs& out);

  RefineKernel kernel_;
  ClampGrad clamp_grad_ = ClampGrad::exact;
  ConvBlock s1a_, s1b_, s2a_, s2b_;

  // caches
  PatchIndexSet idx_;
  Shape4 coarse_shape_, half_shape_;
  int full_h_ = 0, full_w_ = 0;
  Tensor4 alpha_pre_, fgr_pre_;
  Shape4 stage1_shape_;
};

}  // namespace bgm

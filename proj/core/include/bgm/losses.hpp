#pragma once

#include "bgm/basenet.hpp"
#include "bgm/tensor.hpp"

namespace bgm {

/// Horizontal and vertical Sobel responses of a one-channel batch with
/// replicate padding: [n,1,h,w] -> [n,2,h,w]. Channel 0 uses
/// [[-1,0,1],[-2,0,2],[-1,0,1]], channel 1 its transpose.
Tensor4 sobel_gradient(const Tensor4& alpha);
/// Adjoint of sobel_gradient: [n,2,h,w] -> [n,1,h,w].
Tensor4 sobel_gradient_backward(const Tensor4& dgrad);

/// mean|alpha - target| + mean|sobel(alpha) - sobel(target)|.
/// When `dalpha` is non-null the gradient w.r.t. alpha is added to it.
double loss_alpha(const Tensor4& alpha, const Tensor4& target, Tensor4* dalpha = nullptr);

/// L1 over the three colour channels, restricted to pixels with
/// target_alpha > 0 and averaged over the masked elements. Zero for an empty mask.
double loss_foreground(const Tensor4& fg, const Tensor4& target_fg, const Tensor4& target_alpha,
                       Tensor4* dfg = nullptr);

/// mean (err - |alpha - target|)^2. alpha is treated as a constant: no gradient
/// is produced for it.
double loss_error(const Tensor4& err, const Tensor4& alpha, const Tensor4& target, Tensor4* derr = nullptr);

enum class LossMode { base_only, joint };

struct LossValues {
  double l_alpha_c = 0, l_fgr_c = 0, l_err = 0;  // coarse terms
  double l_alpha = 0, l_fgr = 0;                 // refined terms, zero in base_only mode
  double l_base = 0, l_refine = 0, total = 0;
};

/// Gradients of the total loss with respect to the network outputs.
struct LossGrads {
  BaseGrads coarse;       // alpha, fgr, err at 1/c (hid left empty)
  Tensor4 refined_alpha;  // empty in base_only mode
  Tensor4 refined_fgr;
};

/// Full training objective. Ground truth is at full resolution; coarse
/// targets are its bilinear 1/c downsample, and both coarse and refined
/// foregrounds are recovered from the residual before comparison.
/// In base_only mode the refined arguments may be null.
LossValues compute_losses(const BaseOutputs& coarse, const Tensor4* refined_alpha, const Tensor4* refined_fgr,
                          const Tensor4& image, const Tensor4& gt_alpha, const Tensor4& gt_fg, LossMode mode, int c,
                          LossGrads* grads = nullptr);

}  // namespace bgm

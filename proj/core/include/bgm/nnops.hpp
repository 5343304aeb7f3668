#pragma once

#include <span>
#include <vector>

#include "bgm/tensor.hpp"

namespace bgm {

enum class Padding { same, valid };

/// Convolution geometry. Weights are laid out [out_ch][in_ch][kernel][kernel].
struct ConvSpec {
  int in_ch = 1;
  int out_ch = 1;
  int kernel = 3;
  int stride = 1;
  int dilation = 1;
  Padding padding = Padding::same;
  bool bias = false;

  int pad() const { return padding == Padding::same ? dilation * (kernel - 1) / 2 : 0; }
  std::size_t weight_count() const { return static_cast<std::size_t>(out_ch) * in_ch * kernel * kernel; }
  int out_size(int in) const { return (in + 2 * pad() - dilation * (kernel - 1) - 1) / stride + 1; }
  void validate() const;
};

/// Cross-correlation with zero padding.
Tensor4 conv2d(const Tensor4& x, const ConvSpec& spec, std::span<const double> weight,
               std::span<const double> bias = {});

/// Accumulates into `dx` (may be null), `dweight` and `dbias` (may be empty).
void conv2d_backward(const Tensor4& x, const ConvSpec& spec, std::span<const double> weight, const Tensor4& dy,
                     Tensor4* dx, std::span<double> dweight, std::span<double> dbias);

struct BatchNormConfig {
  double momentum = 0.1;
  double epsilon = 1e-5;
};

/// Per-channel statistics saved by the train-mode forward for the backward.
struct BatchNormCache {
  std::vector<double> inv_std;
  Tensor4 xhat;
};

/// Train mode: normalise with batch statistics and fold them into the running
/// stats. Eval mode: normalise with the running stats.
Tensor4 batchnorm2d_train(const Tensor4& x, std::span<const double> gamma, std::span<const double> beta,
                          std::span<double> running_mean, std::span<double> running_var,
                          const BatchNormConfig& cfg, BatchNormCache* cache);
Tensor4 batchnorm2d_eval(const Tensor4& x, std::span<const double> gamma, std::span<const double> beta,
                         std::span<const double> running_mean, std::span<const double> running_var,
                         const BatchNormConfig& cfg);
/// Returns dx; accumulates dgamma and dbeta.
Tensor4 batchnorm2d_backward(const Tensor4& dy, std::span<const double> gamma, const BatchNormCache& cache,
                             std::span<double> dgamma, std::span<double> dbeta);

Tensor4 relu(const Tensor4& x);
/// Gradient of relu given its output.
Tensor4 relu_backward(const Tensor4& y, const Tensor4& dy);

Tensor4 clamp(const Tensor4& x, double lo, double hi);

/// How gradients cross an output clamp.
enum class ClampGrad {
  exact,      // derivative of the clamp: zero outside [lo, hi]
  restoring,  // outside [lo, hi], also passes gradients that move x back towards the range
};

/// With ClampGrad::exact the gradient passes where lo <= x <= hi.
Tensor4 clamp_backward(const Tensor4& x, const Tensor4& dy, double lo, double hi, ClampGrad mode = ClampGrad::exact);

/// Spatial resampling of every plane; same conventions as bgm::resize.
Tensor4 resize(const Tensor4& x, int h, int w, Resample mode);
Tensor4 resize_backward(const Tensor4& dy, int src_h, int src_w, Resample mode);

Tensor4 concat_channels(std::span<const Tensor4* const> parts);
Tensor4 concat_channels(std::initializer_list<const Tensor4*> parts);
/// Channels [first, first + count).
Tensor4 slice_channels(const Tensor4& x, int first, int count);
/// Adds `dpart` into channels [first, first + dpart.c()) of `dx`.
void accumulate_channels(Tensor4& dx, const Tensor4& dpart, int first);

Tensor4 global_avg_pool(const Tensor4& x);
Tensor4 global_avg_pool_backward(const Tensor4& dy, int h, int w);
/// [n,c,1,1] -> [n,c,h,w]
Tensor4 broadcast_spatial(const Tensor4& x, int h, int w);
Tensor4 broadcast_spatial_backward(const Tensor4& dy);

}  // namespace bgm

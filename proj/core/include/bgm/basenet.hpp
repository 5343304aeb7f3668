#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "bgm/layers.hpp"

namespace bgm {

/// Coarse network architecture. Only the backbone widths and the ASPP width
/// are free; the rest is fixed by the design.
struct BaseNetConfig {
  std::array<int, 4> stage_channels{16, 32, 64, 128};  // strides 2, 4, 8, 16
  int aspp_channels = 64;

  static constexpr std::array<int, 3> kAsppDilations{3, 6, 9};
  static constexpr std::array<int, 3> kDecoderChannels{128, 64, 48};
  static constexpr int kHiddenChannels = 32;
  static constexpr int kOutputChannels = 1 + 3 + 1 + kHiddenChannels;  // alpha, residual, error, hidden
  static constexpr int kInputChannels = 6;
  static constexpr int kOutputStride = 16;

  void validate() const;
};

/// Coarse predictions at 1/c scale.
/// alpha and err are clamped to [0,1], fgr to [-1,1]; hid is ReLU'd.
struct BaseOutputs {
  Tensor4 alpha;  // [n,1,h,w]
  Tensor4 fgr;    // [n,3,h,w]
  Tensor4 err;    // [n,1,h,w]
  Tensor4 hid;    // [n,32,h,w]
};

/// Upstream gradients w.r.t. BaseOutputs. Empty tensors mean zero.
struct BaseGrads {
  Tensor4 alpha;
  Tensor4 fgr;
  Tensor4 err;
  Tensor4 hid;
};

/// G_base: 6-channel stem, stride-16 backbone (last stage dilated), ASPP with
/// rates 3/6/9 plus image pooling, and a four-block decoder that upsamples x2
/// and concatenates the stride-8/4/2 skips and finally the raw input.
///
/// The object holds per-call caches; use one instance per thread.
class BaseNet {
 public:
  BaseNet(const BaseNetConfig& cfg, ParameterStore& store);

  /// image, background: [n,3,h,w] with h and w divisible by 16.
  BaseOutputs forward(const Tensor4& image, const Tensor4& background, Mode mode);
  /// Requires a preceding train-mode forward. Accumulates parameter gradients.
  void backward(const BaseGrads& grads);

  const BaseNetConfig& config() const { return cfg_; }
  /// Gradient rule at the alpha, residual and error clamps (exact by default).
  void set_clamp_gradient(ClampGrad mode) { clamp_grad_ = mode; }
  /// Shape of the deepest backbone feature from the last forward.
  Shape4 backbone_output_shape() const { return s16_shape_; }

 private:
  BaseNetConfig cfg_;
  ClampGrad clamp_grad_ = ClampGrad::exact;
  ConvBlock stem_, s1_down_, s1_conv_, s2_down_, s2_conv_, s3_down_, s3_dilated_;
  std::array<ConvBlock, 4> aspp_branches_;  // 1x1 plus three dilated 3x3
  ConvBlock aspp_pool_, aspp_project_;
  std::array<ConvBlock, 4> decoder_;

  // caches
  Shape4 x0_shape_, s2_shape_, s4_shape_, s8_shape_, s16_shape_;
  Shape4 d1_shape_, d2_shape_, d3_shape_;
  Tensor4 raw_;
};

/// Fresh parameter store for `cfg`, deterministically initialised from `seed`.
ParameterStore init_base(const BaseNetConfig& cfg, std::uint64_t seed);

}  // namespace bgm

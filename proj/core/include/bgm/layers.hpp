#pragma once

#include <cstdint>
#include <string>

#include "bgm/nnops.hpp"
#include "bgm/parameters.hpp"

namespace bgm {

enum class Mode { train, eval };

/// Convolution bound to named entries of a ParameterStore
/// (`<name>.weight`, optionally `<name>.bias`). Train-mode forward keeps the
/// input for the backward pass, so one layer object serves one caller.
class Conv2dLayer {
 public:
  Conv2dLayer() = default;
  Conv2dLayer(ParameterStore& store, const std::string& name, const ConvSpec& spec, ParamGroup group);

  Tensor4 forward(const Tensor4& x, Mode mode);
  /// Accumulates weight/bias gradients; returns dx unless `need_dx` is false.
  Tensor4 backward(const Tensor4& dy, bool need_dx = true);

  const ConvSpec& spec() const { return spec_; }

 private:
  ConvSpec spec_;
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
  Tensor4 input_;
};

class BatchNormLayer {
 public:
  BatchNormLayer() = default;
  BatchNormLayer(ParameterStore& store, const std::string& name, int channels, ParamGroup group,
                 BatchNormConfig cfg = {});

  Tensor4 forward(const Tensor4& x, Mode mode);
  Tensor4 backward(const Tensor4& dy);

 private:
  BatchNormConfig cfg_;
  Parameter* gamma_ = nullptr;
  Parameter* beta_ = nullptr;
  Parameter* mean_ = nullptr;
  Parameter* var_ = nullptr;
  BatchNormCache cache_;
};

/// conv -> batch norm -> ReLU, the "CBR" block. With `with_bn` false it is a
/// plain conv (with bias) optionally followed by ReLU.
class ConvBlock {
 public:
  ConvBlock() = default;
  ConvBlock(ParameterStore& store, const std::string& name, ConvSpec spec, ParamGroup group, bool with_bn,
            bool with_relu);

  Tensor4 forward(const Tensor4& x, Mode mode);
  Tensor4 backward(const Tensor4& dy, bool need_dx = true);

  const ConvSpec& spec() const { return conv_.spec(); }

 private:
  Conv2dLayer conv_;
  BatchNormLayer bn_;
  bool with_bn_ = false;
  bool with_relu_ = false;
  Tensor4 out_;
};

/// Deterministic initialisation: Kaiming-normal (fan-in) for `*.weight`,
/// ones for `*.gamma` and `*.running_var`, zeros otherwise. Each entry draws
/// from a stream seeded by (seed, name), so the values of one entry never
/// depend on which other entries exist.
void init_parameters(ParameterStore& store, std::uint64_t seed);

}  // namespace bgm

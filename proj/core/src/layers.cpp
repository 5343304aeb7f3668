#include "bgm/layers.hpp"

#include <cmath>
#include <random>

namespace bgm {

Conv2dLayer::Conv2dLayer(ParameterStore& store, const std::string& name, const ConvSpec& spec, ParamGroup group)
    : spec_(spec) {
  spec_.validate();
  weight_ = &store.add(name + ".weight", {spec.out_ch, spec.in_ch, spec.kernel, spec.kernel}, group);
  if (spec.bias) bias_ = &store.add(name + ".bias", {spec.out_ch}, group);
}

Tensor4 Conv2dLayer::forward(const Tensor4& x, Mode mode) {
  Tensor4 y = conv2d(x, spec_, weight_->value, bias_ ? std::span<const double>(bias_->value) : std::span<const double>{});
  if (mode == Mode::train) input_ = x;
  return y;
}

Tensor4 Conv2dLayer::backward(const Tensor4& dy, bool need_dx) {
  if (input_.empty()) throw std::logic_error("Conv2dLayer::backward without a train-mode forward");
  Tensor4 dx;
  if (need_dx) dx = Tensor4(input_.shape());
  conv2d_backward(input_, spec_, weight_->value, dy, need_dx ? &dx : nullptr, weight_->grad,
                  bias_ ? std::span<double>(bias_->grad) : std::span<double>{});
  return dx;
}

BatchNormLayer::BatchNormLayer(ParameterStore& store, const std::string& name, int channels, ParamGroup group,
                               BatchNormConfig cfg)
    : cfg_(cfg) {
  gamma_ = &store.add(name + ".gamma", {channels}, group);
  beta_ = &store.add(name + ".beta", {channels}, group);
  mean_ = &store.add(name + ".running_mean", {channels}, group, false);
  var_ = &store.add(name + ".running_var", {channels}, group, false);
}

Tensor4 BatchNormLayer::forward(const Tensor4& x, Mode mode) {
  if (mode == Mode::eval) return batchnorm2d_eval(x, gamma_->value, beta_->value, mean_->value, var_->value, cfg_);
  return batchnorm2d_train(x, gamma_->value, beta_->value, mean_->value, var_->value, cfg_, &cache_);
}

Tensor4 BatchNormLayer::backward(const Tensor4& dy) {
  return batchnorm2d_backward(dy, gamma_->value, cache_, gamma_->grad, beta_->grad);
}

ConvBlock::ConvBlock(ParameterStore& store, const std::string& name, ConvSpec spec, ParamGroup group, bool with_bn,
                     bool with_relu)
    : with_bn_(with_bn), with_relu_(with_relu) {
  spec.bias = !with_bn;
  conv_ = Conv2dLayer(store, name + ".conv", spec, group);
  if (with_bn) bn_ = BatchNormLayer(store, name + ".bn", spec.out_ch, group);
}

Tensor4 ConvBlock::forward(const Tensor4& x, Mode mode) {
  Tensor4 y = conv_.forward(x, mode);
  if (with_bn_) y = bn_.forward(y, mode);
  if (with_relu_) {
    y = relu(y);
    if (mode == Mode::train) out_ = y;
  }
  return y;
}

Tensor4 ConvBlock::backward(const Tensor4& dy, bool need_dx) {
  Tensor4 g = with_relu_ ? relu_backward(out_, dy) : dy;
  if (with_bn_) g = bn_.backward(g);
  return conv_.backward(g, need_dx);
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

void init_parameters(ParameterStore& store, std::uint64_t seed) {
  for (auto& [name, p] : store.entries()) {
    if (ends_with(name, ".weight")) {
      std::size_t fan_in = 1;
      for (std::size_t i = 1; i < p.shape.size(); ++i) fan_in *= static_cast<std::size_t>(p.shape[i]);
      std::mt19937_64 rng(fnv1a(name, seed ^ 0x9e3779b97f4a7c15ull));
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
      for (double& v : p.value) v = dist(rng);
    } else if (ends_with(name, ".gamma") || ends_with(name, ".running_var")) {
      std::fill(p.value.begin(), p.value.end(), 1.0);
    } else {
      std::fill(p.value.begin(), p.value.end(), 0.0);
    }
    std::fill(p.grad.begin(), p.grad.end(), 0.0);
    std::fill(p.adam_m.begin(), p.adam_m.end(), 0.0);
    std::fill(p.adam_v.begin(), p.adam_v.end(), 0.0);
    p.adam_steps = 0;
  }
  store.step = 0;
}

}  // namespace bgm

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "bgm/basenet.hpp"
#include "bgm/checkpoint.hpp"
#include "bgm/refiner.hpp"

namespace bgm {

/// Everything that determines parameter shapes. Its text form is stored in
/// checkpoints and its hash must match on load.
struct ModelConfig {
  BaseNetConfig base;
  RefineKernel refine_kernel = RefineKernel::k3x3;

  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
  std::uint64_t hash() const;
};

class ConfigMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ForwardResult {
  Tensor4 image_c;       // input downsampled by c
  Tensor4 background_c;  // background downsampled by c
  BaseOutputs coarse;
  Tensor4 e4;            // error map at 1/4
  PatchIndexSet patches;
  RefineOutputs refined;  // full-resolution alpha and residual
};

/// G_base + G_refine over one owned ParameterStore. Not copyable: the layers
/// point into the store.
class MattingModel {
 public:
  explicit MattingModel(const ModelConfig& cfg, std::uint64_t seed = 0);
  /// Adopts the values of `params`; every registered entry must be present.
  MattingModel(const ModelConfig& cfg, const ParameterStore& params);

  MattingModel(const MattingModel&) = delete;
  MattingModel& operator=(const MattingModel&) = delete;
  MattingModel(MattingModel&&) = default;
  MattingModel& operator=(MattingModel&&) = default;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& params() { return *store_; }
  const ParameterStore& params() const { return *store_; }
  BaseNet& base() { return *base_; }
  Refiner& refiner() { return *refiner_; }
  /// Applies to both networks; the default is the exact clamp derivative.
  void set_clamp_gradient(ClampGrad mode) {
    base_->set_clamp_gradient(mode);
    refiner_->set_clamp_gradient(mode);
  }

  /// Downsample by c and run G_base. Full-resolution sides must be divisible by 16c.
  BaseOutputs forward_base(const Tensor4& image, const Tensor4& background, int c, Mode mode,
                           Tensor4* image_c = nullptr, Tensor4* background_c = nullptr);

  /// Full pipeline: downsample, G_base, E_4 resampling, patch selection, G_refine.
  ForwardResult forward(const Tensor4& image, const Tensor4& background, const RefineConfig& rcfg, Mode mode);

  /// Back-propagates loss gradients. `dalpha`/`dfgr` are the gradients of the
  /// refined outputs (null in base-only training).
  void backward(const BaseGrads& coarse_grads, const Tensor4* dalpha, const Tensor4* dfgr);

  Checkpoint to_checkpoint(std::map<std::string, std::string> metadata = {}) const;
  static MattingModel from_checkpoint(const Checkpoint& ckpt);
  static MattingModel load(const std::filesystem::path& path);
  /// Throws ConfigMismatch when the checkpoint was written for another architecture.
  static MattingModel load(const std::filesystem::path& path, const ModelConfig& expected);

 private:
  ModelConfig cfg_;
  std::unique_ptr<ParameterStore> store_;
  std::unique_ptr<BaseNet> base_;
  std::unique_ptr<Refiner> refiner_;
};

}  // namespace bgm

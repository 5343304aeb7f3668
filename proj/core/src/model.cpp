#include "bgm/model.hpp"

#include "bgm/keyvalue.hpp"

namespace bgm {

std::string ModelConfig::to_text() const {
  KeyValues kv;
  const auto& ch = base.stage_channels;
  kv.set("stage_channels", std::to_string(ch[0]) + "," + std::to_string(ch[1]) + "," + std::to_string(ch[2]) + "," +
                               std::to_string(ch[3]));
  kv.set("aspp_channels", std::to_string(base.aspp_channels));
  kv.set("refine_kernel", refine_kernel == RefineKernel::k3x3 ? "3x3" : "1x1");
  return kv.to_text();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  const KeyValues kv = KeyValues::parse(text);
  ModelConfig cfg;
  const auto ch = kv.get_ints("stage_channels", {16, 32, 64, 128});
  if (ch.size() != 4) throw ConfigError("stage_channels needs exactly 4 values");
  std::copy(ch.begin(), ch.end(), cfg.base.stage_channels.begin());
  cfg.base.aspp_channels = static_cast<int>(kv.get_int("aspp_channels", 64));
  const std::string kernel = kv.get("refine_kernel", "3x3");
  if (kernel == "3x3") {
    cfg.refine_kernel = RefineKernel::k3x3;
  } else if (kernel == "1x1") {
    cfg.refine_kernel = RefineKernel::k1x1;
  } else {
    throw ConfigError("refine_kernel must be 3x3 or 1x1, got '" + kernel + "'");
  }
  cfg.base.validate();
  return cfg;
}

std::uint64_t ModelConfig::hash() const { return hash_text(to_text()); }

MattingModel::MattingModel(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), store_(std::make_unique<ParameterStore>()) {
  base_ = std::make_unique<BaseNet>(cfg.base, *store_);
  refiner_ = std::make_unique<Refiner>(cfg.refine_kernel, *store_);
  init_parameters(*store_, seed);
}

MattingModel::MattingModel(const ModelConfig& cfg, const ParameterStore& params) : MattingModel(cfg, 0) {
  copy_parameters(params, *store_);
}

BaseOutputs MattingModel::forward_base(const Tensor4& image, const Tensor4& background, int c, Mode mode,
                                       Tensor4* image_c, Tensor4* background_c) {
  if (c < 1) throw std::invalid_argument("forward_base: c must be positive");
  const int m = 16 * c;
  if (image.h() % m != 0) {
    throw ShapeError("height " + std::to_string(image.h()) + " is not divisible by " + std::to_string(m));
  }
  if (image.w() % m != 0) {
    throw ShapeError("width " + std::to_string(image.w()) + " is not divisible by " + std::to_string(m));
  }
  Tensor4 ic = resize(image, image.h() / c, image.w() / c, Resample::bilinear);
  Tensor4 bc = resize(background, background.h() / c, background.w() / c, Resample::bilinear);
  BaseOutputs out = base_->forward(ic, bc, mode);
  if (image_c) *image_c = std::move(ic);
  if (background_c) *background_c = std::move(bc);
  return out;
}

ForwardResult MattingModel::forward(const Tensor4& image, const Tensor4& background, const RefineConfig& rcfg,
                                    Mode mode) {
  rcfg.validate();
  ForwardResult r;
  r.coarse = forward_base(image, background, rcfg.c, mode, &r.image_c, &r.background_c);
  r.e4 = resample_error(r.coarse.err, image.h(), image.w(), rcfg.c);
  r.patches = select_patches(r.e4, rcfg);
  r.refined = refiner_->forward(r.coarse, image, background, r.patches, mode);
  return r;
}

void MattingModel::backward(const BaseGrads& coarse_grads, const Tensor4* dalpha, const Tensor4* dfgr) {
  if (!dalpha && !dfgr) {
    base_->backward(coarse_grads);
    return;
  }
  if (!dalpha || !dfgr) throw std::invalid_argument("MattingModel::backward: need both refined gradients");
  BaseGrads g = refiner_->backward(*dalpha, *dfgr);
  if (!coarse_grads.alpha.empty()) g.alpha += coarse_grads.alpha;
  if (!coarse_grads.fgr.empty()) g.fgr += coarse_grads.fgr;
  if (!coarse_grads.hid.empty()) g.hid += coarse_grads.hid;
  g.err = coarse_grads.err;
  base_->backward(g);
}

Checkpoint MattingModel::to_checkpoint(std::map<std::string, std::string> metadata) const {
  Checkpoint ck;
  ck.config_text = cfg_.to_text();
  ck.config_hash = cfg_.hash();
  ck.metadata = std::move(metadata);
  ck.params = *store_;
  return ck;
}

MattingModel MattingModel::from_checkpoint(const Checkpoint& ckpt) {
  const ModelConfig cfg = ModelConfig::from_text(ckpt.config_text);
  if (cfg.hash() != ckpt.config_hash) throw ConfigMismatch("checkpoint config hash does not match its config text");
  return MattingModel(cfg, ckpt.params);
}

MattingModel MattingModel::load(const std::filesystem::path& path) { return from_checkpoint(load_checkpoint(path)); }

MattingModel MattingModel::load(const std::filesystem::path& path, const ModelConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.config_hash != expected.hash()) {
    throw ConfigMismatch("checkpoint " + path.string() + " was written for a different architecture");
  }
  return from_checkpoint(ck);
}

}  // namespace bgm

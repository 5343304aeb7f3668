#include "bgm/basenet.hpp"

namespace bgm {

void BaseNetConfig::validate() const {
  for (int c : stage_channels)
    if (c < 1) throw std::invalid_argument("BaseNetConfig: stage channels must be positive");
  if (aspp_channels < 1) throw std::invalid_argument("BaseNetConfig: aspp_channels must be positive");
}

namespace {

ConvSpec conv3(int in, int out, int stride = 1, int dilation = 1) {
  return ConvSpec{in, out, 3, stride, dilation, Padding::same, false};
}
ConvSpec conv1(int in, int out) { return ConvSpec{in, out, 1, 1, 1, Padding::same, false}; }

Tensor4 zeros_if_empty(const Tensor4& t, const Shape4& s) { return t.empty() ? Tensor4(s) : t; }

}  // namespace

BaseNet::BaseNet(const BaseNetConfig& cfg, ParameterStore& store) : cfg_(cfg) {
  cfg.validate();
  const auto& ch = cfg.stage_channels;
  const auto B = ParamGroup::backbone;
  stem_ = ConvBlock(store, "backbone.stem", conv3(BaseNetConfig::kInputChannels, ch[0], 2), B, true, true);
  s1_down_ = ConvBlock(store, "backbone.stage1.down", conv3(ch[0], ch[1], 2), B, true, true);
  s1_conv_ = ConvBlock(store, "backbone.stage1.conv", conv3(ch[1], ch[1]), B, true, true);
  s2_down_ = ConvBlock(store, "backbone.stage2.down", conv3(ch[1], ch[2], 2), B, true, true);
  s2_conv_ = ConvBlock(store, "backbone.stage2.conv", conv3(ch[2], ch[2]), B, true, true);
  s3_down_ = ConvBlock(store, "backbone.stage3.down", conv3(ch[2], ch[3], 2), B, true, true);
  s3_dilated_ = ConvBlock(store, "backbone.stage3.dilated", conv3(ch[3], ch[3], 1, 2), B, true, true);

  const auto A = ParamGroup::aspp;
  const int a = cfg.aspp_channels;
  aspp_branches_[0] = ConvBlock(store, "aspp.branch0", conv1(ch[3], a), A, true, true);
  for (int i = 0; i < 3; ++i) {
    aspp_branches_[i + 1] = ConvBlock(store, "aspp.branch" + std::to_string(i + 1),
                                      conv3(ch[3], a, 1, BaseNetConfig::kAsppDilations[i]), A, true, true);
  }
  aspp_pool_ = ConvBlock(store, "aspp.pool", conv1(ch[3], a), A, true, true);
  aspp_project_ = ConvBlock(store, "aspp.project", conv1(5 * a, a), A, true, true);

  const auto D = ParamGroup::decoder;
  const auto& dc = BaseNetConfig::kDecoderChannels;
  decoder_[0] = ConvBlock(store, "decoder.block1", conv3(a + ch[2], dc[0]), D, true, true);
  decoder_[1] = ConvBlock(store, "decoder.block2", conv3(dc[0] + ch[1], dc[1]), D, true, true);
  decoder_[2] = ConvBlock(store, "decoder.block3", conv3(dc[1] + ch[0], dc[2]), D, true, true);
  decoder_[3] = ConvBlock(store, "decoder.block4",
                          conv3(dc[2] + BaseNetConfig::kInputChannels, BaseNetConfig::kOutputChannels), D, false,
                          false);
}

BaseOutputs BaseNet::forward(const Tensor4& image, const Tensor4& background, Mode mode) {
  require_shape("base_forward", image.shape(), background.shape());
  if (image.c() != 3) throw ShapeError("base_forward: expected 3-channel images, got " + image.shape().str());
  if (image.h() % BaseNetConfig::kOutputStride != 0) {
    throw ShapeError("base_forward: height " + std::to_string(image.h()) + " is not divisible by 16");
  }
  if (image.w() % BaseNetConfig::kOutputStride != 0) {
    throw ShapeError("base_forward: width " + std::to_string(image.w()) + " is not divisible by 16");
  }

  const Tensor4 x0 = concat_channels({&image, &background});
  const Tensor4 s2 = stem_.forward(x0, mode);
  const Tensor4 s4 = s1_conv_.forward(s1_down_.forward(s2, mode), mode);
  const Tensor4 s8 = s2_conv_.forward(s2_down_.forward(s4, mode), mode);
  const Tensor4 s16 = s3_dilated_.forward(s3_down_.forward(s8, mode), mode);
  x0_shape_ = x0.shape();
  s2_shape_ = s2.shape();
  s4_shape_ = s4.shape();
  s8_shape_ = s8.shape();
  s16_shape_ = s16.shape();

  std::array<Tensor4, 5> branches;
  for (int i = 0; i < 4; ++i) branches[i] = aspp_branches_[i].forward(s16, mode);
  branches[4] = broadcast_spatial(aspp_pool_.forward(global_avg_pool(s16), mode), s16.h(), s16.w());
  const Tensor4 aspp = aspp_project_.forward(
      concat_channels({&branches[0], &branches[1], &branches[2], &branches[3], &branches[4]}), mode);

  Tensor4 up = resize(aspp, s8.h(), s8.w(), Resample::bilinear);
  const Tensor4 d1 = decoder_[0].forward(concat_channels({&up, &s8}), mode);
  up = resize(d1, s4.h(), s4.w(), Resample::bilinear);
  const Tensor4 d2 = decoder_[1].forward(concat_channels({&up, &s4}), mode);
  up = resize(d2, s2.h(), s2.w(), Resample::bilinear);
  const Tensor4 d3 = decoder_[2].forward(concat_channels({&up, &s2}), mode);
  up = resize(d3, x0.h(), x0.w(), Resample::bilinear);
  Tensor4 raw = decoder_[3].forward(concat_channels({&up, &x0}), mode);
  d1_shape_ = d1.shape();
  d2_shape_ = d2.shape();
  d3_shape_ = d3.shape();

  BaseOutputs out;
  out.alpha = clamp(slice_channels(raw, 0, 1), 0.0, 1.0);
  out.fgr = clamp(slice_channels(raw, 1, 3), -1.0, 1.0);
  out.err = clamp(slice_channels(raw, 4, 1), 0.0, 1.0);
  out.hid = relu(slice_channels(raw, 5, BaseNetConfig::kHiddenChannels));
  if (mode == Mode::train) raw_ = std::move(raw);
  return out;
}

void BaseNet::backward(const BaseGrads& g) {
  if (raw_.empty()) throw std::logic_error("BaseNet::backward without a train-mode forward");
  const Shape4 s1{raw_.n(), 1, raw_.h(), raw_.w()};
  const Shape4 s3{raw_.n(), 3, raw_.h(), raw_.w()};
  const Shape4 sh{raw_.n(), BaseNetConfig::kHiddenChannels, raw_.h(), raw_.w()};

  Tensor4 draw(raw_.shape());
  accumulate_channels(draw, clamp_backward(slice_channels(raw_, 0, 1), zeros_if_empty(g.alpha, s1), 0.0, 1.0, clamp_grad_), 0);
  accumulate_channels(draw, clamp_backward(slice_channels(raw_, 1, 3), zeros_if_empty(g.fgr, s3), -1.0, 1.0, clamp_grad_), 1);
  accumulate_channels(draw, clamp_backward(slice_channels(raw_, 4, 1), zeros_if_empty(g.err, s1), 0.0, 1.0, clamp_grad_), 4);
  const Tensor4 hid = relu(slice_channels(raw_, 5, BaseNetConfig::kHiddenChannels));
  accumulate_channels(draw, relu_backward(hid, zeros_if_empty(g.hid, sh)), 5);

  const auto& dc = BaseNetConfig::kDecoderChannels;
  // block4: [d3 up (48) | x0 (6)]
  Tensor4 dcat = decoder_[3].backward(draw);
  Tensor4 dd = resize_backward(slice_channels(dcat, 0, dc[2]), d3_shape_.h, d3_shape_.w, Resample::bilinear);
  // block3: [d2 up (64) | s2]
  dcat = decoder_[2].backward(dd);
  Tensor4 ds2 = slice_channels(dcat, dc[1], s2_shape_.c);
  dd = resize_backward(slice_channels(dcat, 0, dc[1]), d2_shape_.h, d2_shape_.w, Resample::bilinear);
  // block2: [d1 up (128) | s4]
  dcat = decoder_[1].backward(dd);
  Tensor4 ds4 = slice_channels(dcat, dc[0], s4_shape_.c);
  dd = resize_backward(slice_channels(dcat, 0, dc[0]), d1_shape_.h, d1_shape_.w, Resample::bilinear);
  // block1: [aspp up | s8]
  dcat = decoder_[0].backward(dd);
  const int a = cfg_.aspp_channels;
  Tensor4 ds8 = slice_channels(dcat, a, s8_shape_.c);
  const Tensor4 daspp = resize_backward(slice_channels(dcat, 0, a), s16_shape_.h, s16_shape_.w, Resample::bilinear);

  const Tensor4 dbranches = aspp_project_.backward(daspp);
  Tensor4 ds16(s16_shape_);
  for (int i = 0; i < 4; ++i) ds16 += aspp_branches_[i].backward(slice_channels(dbranches, i * a, a));
  const Tensor4 dpooled = aspp_pool_.backward(broadcast_spatial_backward(slice_channels(dbranches, 4 * a, a)));
  ds16 += global_avg_pool_backward(dpooled, s16_shape_.h, s16_shape_.w);

  ds8 += s3_down_.backward(s3_dilated_.backward(ds16));
  ds4 += s2_down_.backward(s2_conv_.backward(ds8));
  ds2 += s1_down_.backward(s1_conv_.backward(ds4));
  stem_.backward(ds2, false);
}

ParameterStore init_base(const BaseNetConfig& cfg, std::uint64_t seed) {
  ParameterStore store;
  BaseNet net(cfg, store);
  init_parameters(store, seed);
  return store;
}

}  // namespace bgm

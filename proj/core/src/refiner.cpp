#include "bgm/refiner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bgm {

void RefineConfig::validate() const {
  if (c != 4 && c != 8) throw std::invalid_argument("RefineConfig: c must be 4 or 8, got " + std::to_string(c));
  if (selection == SelectionMode::threshold && !(threshold >= 0.0 && threshold <= 1.0)) {
    throw std::invalid_argument("RefineConfig: threshold must lie in [0,1]");
  }
}

Tensor4 resample_error(const Tensor4& err_c, int full_h, int full_w, int c) {
  if (c != 4 && c != 8) throw std::invalid_argument("resample_error: c must be 4 or 8");
  if (full_h % 4 != 0) throw ShapeError("resample_error: height " + std::to_string(full_h) + " not divisible by 4");
  if (full_w % 4 != 0) throw ShapeError("resample_error: width " + std::to_string(full_w) + " not divisible by 4");
  if (c == 4) {
    if (err_c.h() != full_h / 4 || err_c.w() != full_w / 4) {
      throw ShapeError("resample_error: error map " + err_c.shape().str() + " is not at 1/4 scale");
    }
    return err_c;
  }
  return resize(err_c, full_h / 4, full_w / 4, Resample::bilinear);
}

namespace {

struct Cell {
  double err;
  PatchIndex at;
};

bool before(const Cell& a, const Cell& b) {
  if (a.err != b.err) return a.err > b.err;
  if (a.at.batch != b.at.batch) return a.at.batch < b.at.batch;
  if (a.at.row != b.at.row) return a.at.row < b.at.row;
  return a.at.col < b.at.col;
}

void check_entries(const PatchIndexSet& idx, int n, int gh, int gw, const char* op) {
  for (const auto& e : idx.entries) {
    if (e.batch < 0 || e.batch >= n || e.row < 0 || e.row >= gh || e.col < 0 || e.col >= gw) {
      throw std::out_of_range(std::string(op) + ": cell (" + std::to_string(e.batch) + "," + std::to_string(e.row) +
                              "," + std::to_string(e.col) + ") outside the " + std::to_string(n) + "x" +
                              std::to_string(gh) + "x" + std::to_string(gw) + " grid");
    }
  }
}

PatchIndexSet subset(const PatchIndexSet& idx, std::size_t first, std::size_t last) {
  PatchIndexSet s{idx.grid_n, idx.grid_h, idx.grid_w, {}};
  s.entries.assign(idx.entries.begin() + static_cast<std::ptrdiff_t>(first),
                   idx.entries.begin() + static_cast<std::ptrdiff_t>(last));
  return s;
}

}  // namespace

PatchIndexSet select_patches(const Tensor4& e4, const RefineConfig& cfg) {
  cfg.validate();
  if (e4.c() != 1) throw ShapeError("select_patches: error map must have one channel");
  PatchIndexSet out{e4.n(), e4.h(), e4.w(), {}};
  std::vector<Cell> cells;
  cells.reserve(e4.size());
  for (int n = 0; n < e4.n(); ++n)
    for (int y = 0; y < e4.h(); ++y)
      for (int x = 0; x < e4.w(); ++x) {
        const double v = e4.at(n, 0, y, x);
        if (cfg.selection == SelectionMode::threshold && !(v > cfg.threshold)) continue;
        cells.push_back({std::isnan(v) ? -1.0 : v, {n, y, x}});
      }
  std::size_t take = cells.size();
  if (cfg.selection == SelectionMode::top_k) {
    take = std::min(cfg.k, cells.size());
    std::partial_sort(cells.begin(), cells.begin() + static_cast<std::ptrdiff_t>(take), cells.end(), before);
  } else {
    std::sort(cells.begin(), cells.end(), before);
  }
  out.entries.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.entries.push_back(cells[i].at);
  return out;
}

CropWindow half_window(RefineKernel kernel) {
  return kernel == RefineKernel::k3x3 ? CropWindow{2, -3, 8} : CropWindow{2, 0, 2};
}

CropWindow full_window(RefineKernel kernel) {
  return kernel == RefineKernel::k3x3 ? CropWindow{4, -2, 8} : CropWindow{4, 0, 4};
}

Tensor4 crop_patches(const Tensor4& x, const PatchIndexSet& idx, const CropWindow& win) {
  Tensor4 out(static_cast<int>(idx.size()), x.c(), win.size, win.size);
  const int H = x.h(), W = x.w();
  std::vector<int> cols(win.size);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const PatchIndex& e = idx.entries[k];
    if (e.batch < 0 || e.batch >= x.n()) throw std::out_of_range("crop_patches: batch index out of range");
    const int y0 = win.scale * e.row + win.offset;
    const int x0 = win.scale * e.col + win.offset;
    for (int j = 0; j < win.size; ++j) cols[j] = std::clamp(x0 + j, 0, W - 1);
    for (int c = 0; c < x.c(); ++c) {
      const double* src = x.data() + x.index(e.batch, c, 0, 0);
      double* dst = out.data() + out.index(static_cast<int>(k), c, 0, 0);
      for (int i = 0; i < win.size; ++i) {
        const double* row = src + static_cast<std::size_t>(std::clamp(y0 + i, 0, H - 1)) * W;
        for (int j = 0; j < win.size; ++j) dst[i * win.size + j] = row[cols[j]];
      }
    }
  }
  return out;
}

Tensor4 crop_patches_backward(const Tensor4& dpatches, const PatchIndexSet& idx, const CropWindow& win,
                              const Shape4& x_shape) {
  Tensor4 dx(x_shape);
  const int H = x_shape.h, W = x_shape.w;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const PatchIndex& e = idx.entries[k];
    const int y0 = win.scale * e.row + win.offset;
    const int x0 = win.scale * e.col + win.offset;
    for (int c = 0; c < x_shape.c; ++c) {
      double* dst = dx.data() + dx.index(e.batch, c, 0, 0);
      const double* src = dpatches.data() + dpatches.index(static_cast<int>(k), c, 0, 0);
      for (int i = 0; i < win.size; ++i) {
        const int yy = std::clamp(y0 + i, 0, H - 1);
        for (int j = 0; j < win.size; ++j) {
          dst[static_cast<std::size_t>(yy) * W + std::clamp(x0 + j, 0, W - 1)] += src[i * win.size + j];
        }
      }
    }
  }
  return dx;
}

Tensor4 replace_patches(const Tensor4& coarse_up, const Tensor4& refined, const PatchIndexSet& idx) {
  if (static_cast<std::size_t>(refined.n()) != idx.size()) {
    throw ShapeError("replace_patches: " + std::to_string(refined.n()) + " patches for " +
                     std::to_string(idx.size()) + " cells");
  }
  if (idx.empty()) return coarse_up;
  if (refined.c() != coarse_up.c() || refined.h() != 4 || refined.w() != 4) {
    throw ShapeError("replace_patches: patches " + refined.shape().str() + " do not match " + coarse_up.shape().str());
  }
  check_entries(idx, coarse_up.n(), coarse_up.h() / 4, coarse_up.w() / 4, "replace_patches");
  Tensor4 out = coarse_up;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const PatchIndex& e = idx.entries[k];
    for (int c = 0; c < out.c(); ++c)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
          out.at(e.batch, c, 4 * e.row + i, 4 * e.col + j) = refined.at(static_cast<int>(k), c, i, j);
  }
  return out;
}

Tensor4 replace_patches_backward(const Tensor4& dy, const PatchIndexSet& idx, Tensor4* drefined) {
  Tensor4 dcoarse = dy;
  if (drefined) *drefined = Tensor4(static_cast<int>(idx.size()), dy.c(), 4, 4);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const PatchIndex& e = idx.entries[k];
    for (int c = 0; c < dy.c(); ++c)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          double& g = dcoarse.at(e.batch, c, 4 * e.row + i, 4 * e.col + j);
          if (drefined) drefined->at(static_cast<int>(k), c, i, j) = g;
          g = 0.0;
        }
  }
  return dcoarse;
}

Refiner::Refiner(RefineKernel kernel, ParameterStore& store) : kernel_(kernel) {
  const int ks = kernel == RefineKernel::k3x3 ? 3 : 1;
  const auto R = ParamGroup::refiner;
  auto spec = [ks](int in, int out) { return ConvSpec{in, out, ks, 1, 1, Padding::valid, false}; };
  s1a_ = ConvBlock(store, "refiner.stage1.conv1", spec(kFeatureChannels, 24), R, true, true);
  s1b_ = ConvBlock(store, "refiner.stage1.conv2", spec(24, 16), R, true, true);
  s2a_ = ConvBlock(store, "refiner.stage2.conv1", spec(16 + 6, 12), R, true, true);
  s2b_ = ConvBlock(store, "refiner.stage2.conv2", spec(12, 4), R, false, false);
}

Tensor4 Refiner::run_patches(const Tensor4& half_feats, const Tensor4& full_feats, const PatchIndexSet& idx,
                             Mode mode, RefineOutputs& out) {
  const Tensor4 p = crop_patches(half_feats, idx, half_window(kernel_));
  const Tensor4 s1 = s1b_.forward(s1a_.forward(p, mode), mode);
  const Tensor4 up = resize(s1, s1.h() * 2, s1.w() * 2, Resample::nearest);
  const Tensor4 q = crop_patches(full_feats, idx, full_window(kernel_));
  const Tensor4 cat = concat_channels({&up, &q});
  Tensor4 s2 = s2b_.forward(s2a_.forward(cat, mode), mode);
  out.stage1_shape = s1.shape();
  out.concat_shape = cat.shape();
  out.stage2_shape = s2.shape();
  return s2;
}

RefineOutputs Refiner::forward(const BaseOutputs& coarse, const Tensor4& image, const Tensor4& background,
                               const PatchIndexSet& idx, Mode mode) {
  require_shape("refine_forward", image.shape(), background.shape());
  const int H = image.h(), W = image.w();
  if (H % 4 != 0) throw ShapeError("refine_forward: height " + std::to_string(H) + " not divisible by 4");
  if (W % 4 != 0) throw ShapeError("refine_forward: width " + std::to_string(W) + " not divisible by 4");
  if (coarse.alpha.n() != image.n()) throw ShapeError("refine_forward: coarse and full batches differ");
  check_entries(idx, image.n(), H / 4, W / 4, "refine_forward");

  RefineOutputs out;
  Tensor4 alpha_pre = resize(coarse.alpha, H, W, Resample::bilinear);
  Tensor4 fgr_pre = resize(coarse.fgr, H, W, Resample::bilinear);

  if (!idx.empty()) {
    const int hh = H / 2, hw = W / 2;
    const Tensor4 a = resize(coarse.alpha, hh, hw, Resample::bilinear);
    const Tensor4 f = resize(coarse.fgr, hh, hw, Resample::bilinear);
    const Tensor4 h = resize(coarse.hid, hh, hw, Resample::bilinear);
    const Tensor4 i = resize(image, hh, hw, Resample::bilinear);
    const Tensor4 b = resize(background, hh, hw, Resample::bilinear);
    const Tensor4 half_feats = concat_channels({&a, &f, &h, &i, &b});
    const Tensor4 full_feats = concat_channels({&image, &background});

    Tensor4 patches;
    if (mode == Mode::train || idx.size() <= kEvalChunk) {
      patches = run_patches(half_feats, full_feats, idx, mode, out);
    } else {
      patches = Tensor4(static_cast<int>(idx.size()), 4, 4, 4);
      for (std::size_t first = 0; first < idx.size(); first += kEvalChunk) {
        const std::size_t last = std::min(idx.size(), first + kEvalChunk);
        const Tensor4 part = run_patches(half_feats, full_feats, subset(idx, first, last), mode, out);
        std::copy(part.data(), part.data() + part.size(), patches.data() + patches.index(static_cast<int>(first), 0, 0, 0));
      }
      out.stage1_shape.n = out.concat_shape.n = out.stage2_shape.n = static_cast<int>(idx.size());
    }
    alpha_pre = replace_patches(alpha_pre, slice_channels(patches, 0, 1), idx);
    fgr_pre = replace_patches(fgr_pre, slice_channels(patches, 1, 3), idx);
    if (mode == Mode::train) half_shape_ = half_feats.shape();
  }

  out.alpha = clamp(alpha_pre, 0.0, 1.0);
  out.fgr = clamp(fgr_pre, -1.0, 1.0);
  if (mode == Mode::train) {
    idx_ = idx;
    coarse_shape_ = coarse.alpha.shape();
    full_h_ = H;
    full_w_ = W;
    alpha_pre_ = std::move(alpha_pre);
    fgr_pre_ = std::move(fgr_pre);
    stage1_shape_ = out.stage1_shape;
  }
  return out;
}

BaseGrads Refiner::backward(const Tensor4& dalpha, const Tensor4& dfgr) {
  if (alpha_pre_.empty()) throw std::logic_error("Refiner::backward without a train-mode forward");
  const Tensor4 dpa = clamp_backward(alpha_pre_, dalpha, 0.0, 1.0, clamp_grad_);
  const Tensor4 dpf = clamp_backward(fgr_pre_, dfgr, -1.0, 1.0, clamp_grad_);
  Tensor4 dpatch_a, dpatch_f;
  const Tensor4 dup_a = replace_patches_backward(dpa, idx_, &dpatch_a);
  const Tensor4 dup_f = replace_patches_backward(dpf, idx_, &dpatch_f);

  BaseGrads g;
  g.alpha = resize_backward(dup_a, coarse_shape_.h, coarse_shape_.w, Resample::bilinear);
  g.fgr = resize_backward(dup_f, coarse_shape_.h, coarse_shape_.w, Resample::bilinear);
  g.hid = Tensor4(coarse_shape_.n, BaseNetConfig::kHiddenChannels, coarse_shape_.h, coarse_shape_.w);
  if (idx_.empty()) return g;

  const Tensor4 dpatches = concat_channels({&dpatch_a, &dpatch_f});
  const Tensor4 dcat = s2a_.backward(s2b_.backward(dpatches));
  const Tensor4 ds1 =
      resize_backward(slice_channels(dcat, 0, 16), stage1_shape_.h, stage1_shape_.w, Resample::nearest);
  const Tensor4 dp = s1a_.backward(s1b_.backward(ds1));
  const Tensor4 dhalf = crop_patches_backward(dp, idx_, half_window(kernel_), half_shape_);

  g.alpha += resize_backward(slice_channels(dhalf, 0, 1), coarse_shape_.h, coarse_shape_.w, Resample::bilinear);
  g.fgr += resize_backward(slice_channels(dhalf, 1, 3), coarse_shape_.h, coarse_shape_.w, Resample::bilinear);
  g.hid = resize_backward(slice_channels(dhalf, 4, BaseNetConfig::kHiddenChannels), coarse_shape_.h,
                          coarse_shape_.w, Resample::bilinear);
  return g;
}

}  // namespace bgm

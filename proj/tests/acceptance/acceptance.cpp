// Acceptance runner. Each criterion prints one line:
//   criterion <n> <name>: PASS|FAIL  <measurements>
// The process exits non-zero when any criterion fails. Passing criterion
// numbers as arguments runs a subset; 6 and 8 share one training run, which
// starts from the model trained for 5.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bgm/augment.hpp"
#include "bgm/bench.hpp"
#include "bgm/datasetgen.hpp"
#include "bgm/evaluate.hpp"
#include "bgm/losses.hpp"
#include "bgm/metrics.hpp"
#include "bgm/model.hpp"
#include "bgm/nnops.hpp"
#include "bgm/refiner.hpp"
#include "bgm/trainer.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace bgm;
using testsupport::dot;
using testsupport::fd_relative_error;
using testsupport::random_tensor;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

/// Collects named checks; the first failures are reported in the detail.
class Ledger {
 public:
  void check(bool ok, const std::string& what) {
    ++count_;
    if (!ok) {
      ++failed_;
      if (failures_.size() < 4) failures_.push_back(what);
    }
  }
  /// Records err < tol and tracks the worst ratio.
  void within(double err, double tol, const std::string& what) {
    worst_ = std::max(worst_, err / tol);
    std::ostringstream os;
    os << what << " err " << err;
    check(err < tol, os.str());
  }
  void kinks(std::size_t n) { kinks_ += n; }
  Outcome outcome(std::string extra = {}) const {
    std::ostringstream os;
    os << (count_ - failed_) << "/" << count_ << " checks";
    if (kinks_ > 0) os << ", " << kinks_ << " probe coordinates on a kink";
    if (worst_ > 0) os << ", worst err/tol " << worst_;
    if (!extra.empty()) os << ", " << extra;
    for (const auto& f : failures_) os << "; failed: " << f;
    return {failed_ == 0, os.str()};
  }

 private:
  int count_ = 0, failed_ = 0;
  double worst_ = 0;
  std::size_t kinks_ = 0;
  std::vector<std::string> failures_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void avoid_kinks(Tensor4& t, std::initializer_list<double> kinks, double gap = 0.02) {
  for (double& v : t.values())
    for (double k : kinks)
      if (std::abs(v - k) < gap) v = k + (v < k ? -gap : gap);
}

BaseNetConfig tiny_base() {
  BaseNetConfig cfg;
  cfg.stage_channels = {4, 6, 8, 8};
  cfg.aspp_channels = 6;
  return cfg;
}

// ---------------------------------------------------------------------------
// 1. Finite-difference gradients

Outcome gradient_suite() {
  constexpr double kPrim = 1e-4, kNet = 1e-3;
  Ledger L;
  std::uint64_t seed = 1000;

  for (const ConvSpec spec : {ConvSpec{3, 4, 3, 1, 1, Padding::same, true}, ConvSpec{2, 3, 3, 2, 1, Padding::same, false},
                              ConvSpec{2, 2, 3, 1, 2, Padding::same, true}, ConvSpec{3, 2, 3, 1, 1, Padding::valid, true},
                              ConvSpec{4, 3, 1, 1, 1, Padding::valid, true}, ConvSpec{3, 3, 3, 2, 1, Padding::same, true}}) {
    Tensor4 x = random_tensor(2, spec.in_ch, 9, 7, seed++);
    std::vector<double> w = random_tensor(1, 1, 1, static_cast<int>(spec.weight_count()), seed++).values();
    std::vector<double> b = spec.bias ? random_tensor(1, 1, 1, spec.out_ch, seed++).values() : std::vector<double>{};
    const Tensor4 y = conv2d(x, spec, w, b);
    const Tensor4 probe = random_tensor(y.n(), y.c(), y.h(), y.w(), seed++);
    auto f = [&] { return dot(conv2d(x, spec, w, b), probe); };
    Tensor4 dx(x.shape());
    std::vector<double> dw(w.size()), db(b.size());
    conv2d_backward(x, spec, w, probe, &dx, dw, db);
    const std::string tag = "conv k" + std::to_string(spec.kernel) + " s" + std::to_string(spec.stride) + " d" +
                            std::to_string(spec.dilation);
    L.within(fd_relative_error(f, x.values(), dx.values()), kPrim, tag + " dx");
    L.within(fd_relative_error(f, w, dw), kPrim, tag + " dw");
    if (spec.bias) L.within(fd_relative_error(f, b, db), kPrim, tag + " db");
  }

  {
    Tensor4 x = random_tensor(3, 2, 4, 5, seed++, -2, 2);
    std::vector<double> gamma{1.3, -0.7}, beta{0.2, 0.5};
    const Tensor4 probe = random_tensor(3, 2, 4, 5, seed++);
    auto f = [&] {
      std::vector<double> rm(2, 0.0), rv(2, 1.0);
      return dot(batchnorm2d_train(x, gamma, beta, rm, rv, {}, nullptr), probe);
    };
    std::vector<double> rm(2, 0.0), rv(2, 1.0), dgamma(2), dbeta(2);
    BatchNormCache cache;
    batchnorm2d_train(x, gamma, beta, rm, rv, {}, &cache);
    const Tensor4 dx = batchnorm2d_backward(probe, gamma, cache, dgamma, dbeta);
    L.within(fd_relative_error(f, x.values(), dx.values()), kPrim, "batchnorm dx");
    L.within(fd_relative_error(f, gamma, dgamma), kPrim, "batchnorm dgamma");
    L.within(fd_relative_error(f, beta, dbeta), kPrim, "batchnorm dbeta");
  }

  {
    Tensor4 x = random_tensor(2, 2, 3, 4, seed++, -1.5, 1.5);
    avoid_kinks(x, {0.0, 1.0, -1.0});
    const Tensor4 probe = random_tensor(2, 2, 3, 4, seed++);
    L.within(fd_relative_error([&] { return dot(relu(x), probe); }, x.values(), relu_backward(relu(x), probe).values()),
             kPrim, "relu");
    L.within(fd_relative_error([&] { return dot(clamp(x, -1.0, 1.0), probe); }, x.values(),
                               clamp_backward(x, probe, -1.0, 1.0).values()),
             kPrim, "clamp");
  }

  for (auto mode : {Resample::bilinear, Resample::nearest})
    for (auto [sh, sw, dh, dw] : {std::array{4, 6, 8, 12}, std::array{8, 8, 4, 4}, std::array{5, 7, 9, 3}}) {
      Tensor4 x = random_tensor(2, 2, sh, sw, seed++);
      const Tensor4 probe = random_tensor(2, 2, dh, dw, seed++);
      L.within(fd_relative_error([&] { return dot(resize(x, dh, dw, mode), probe); }, x.values(),
                                 resize_backward(probe, sh, sw, mode).values()),
               kPrim, mode == Resample::bilinear ? "bilinear resize" : "nearest resize");
    }

  {
    Tensor4 x = random_tensor(2, 3, 4, 5, seed++);
    const Tensor4 pp = random_tensor(2, 3, 1, 1, seed++);
    L.within(fd_relative_error([&] { return dot(global_avg_pool(x), pp); }, x.values(),
                               global_avg_pool_backward(pp, 4, 5).values()),
             kPrim, "global pool");
    Tensor4 s = random_tensor(2, 3, 1, 1, seed++);
    const Tensor4 bp = random_tensor(2, 3, 4, 5, seed++);
    L.within(fd_relative_error([&] { return dot(broadcast_spatial(s, 4, 5), bp); }, s.values(),
                               broadcast_spatial_backward(bp).values()),
             kPrim, "broadcast");
    const Tensor4 sp = random_tensor(2, 2, 4, 5, seed++);
    Tensor4 dx(x.shape());
    accumulate_channels(dx, sp, 1);
    L.within(fd_relative_error([&] { return dot(slice_channels(x, 1, 2), sp); }, x.values(), dx.values()), kPrim,
             "slice");
  }

  {
    Tensor4 x = random_tensor(2, 3, 8, 12, seed++);
    const PatchIndexSet idx{2, 4, 6, {{0, 0, 0}, {1, 3, 5}, {0, 2, 3}, {1, 0, 5}, {0, 2, 3}}};
    for (auto kernel : {RefineKernel::k3x3, RefineKernel::k1x1})
      for (const CropWindow win : {half_window(kernel), full_window(kernel)}) {
        const Tensor4 probe = random_tensor(static_cast<int>(idx.size()), 3, win.size, win.size, seed++);
        L.within(fd_relative_error([&] { return dot(crop_patches(x, idx, win), probe); }, x.values(),
                                   crop_patches_backward(probe, idx, win, x.shape()).values()),
                 kPrim, "crop_patches");
      }
    const PatchIndexSet cells{2, 2, 3, {{0, 1, 2}, {1, 0, 0}, {0, 0, 1}}};
    Tensor4 coarse = random_tensor(2, 3, 8, 12, seed++);
    Tensor4 patches = random_tensor(3, 3, 4, 4, seed++);
    const Tensor4 probe = random_tensor(2, 3, 8, 12, seed++);
    auto f = [&] { return dot(replace_patches(coarse, patches, cells), probe); };
    Tensor4 dpatches;
    const Tensor4 dcoarse = replace_patches_backward(probe, cells, &dpatches);
    L.within(fd_relative_error(f, coarse.values(), dcoarse.values()), kPrim, "replace_patches coarse");
    L.within(fd_relative_error(f, patches.values(), dpatches.values()), kPrim, "replace_patches patches");
  }

  {
    Tensor4 a = random_tensor(2, 1, 6, 7, seed++);
    const Tensor4 probe = random_tensor(2, 2, 6, 7, seed++);
    L.within(fd_relative_error([&] { return dot(sobel_gradient(a), probe); }, a.values(),
                               sobel_gradient_backward(probe).values()),
             kPrim, "sobel");

    Tensor4 alpha = random_tensor(2, 1, 6, 5, seed++, 0, 1);
    const Tensor4 target = random_tensor(2, 1, 6, 5, seed++, 0, 1);
    Tensor4 dalpha(alpha.shape());
    loss_alpha(alpha, target, &dalpha);
    L.within(fd_relative_error([&] { return loss_alpha(alpha, target); }, alpha.values(), dalpha.values()), kPrim,
             "loss_alpha");
    Tensor4 fg = random_tensor(2, 3, 6, 5, seed++, 0, 1);
    const Tensor4 tfg = random_tensor(2, 3, 6, 5, seed++, 0, 1);
    const Tensor4 mask = random_tensor(2, 1, 6, 5, seed++, -1, 1);
    Tensor4 dfg(fg.shape());
    loss_foreground(fg, tfg, mask, &dfg);
    L.within(fd_relative_error([&] { return loss_foreground(fg, tfg, mask); }, fg.values(), dfg.values()), kPrim,
             "loss_foreground");
    Tensor4 err = random_tensor(2, 1, 6, 5, seed++, 0, 1);
    Tensor4 derr(err.shape());
    loss_error(err, alpha, target, &derr);
    L.within(fd_relative_error([&] { return loss_error(err, alpha, target); }, err.values(), derr.values()), kPrim,
             "loss_error");
  }

  {
    const int c = 4, H = 16, W = 24;
    const Tensor4 image = random_tensor(2, 3, H, W, seed++, 0, 1);
    const Tensor4 gta = random_tensor(2, 1, H, W, seed++, 0, 1);
    const Tensor4 gtf = random_tensor(2, 3, H, W, seed++, 0, 1);
    BaseOutputs coarse{random_tensor(2, 1, H / c, W / c, seed++, 0, 1), random_tensor(2, 3, H / c, W / c, seed++, -0.5, 0.5),
                       random_tensor(2, 1, H / c, W / c, seed++, 0, 1), Tensor4()};
    Tensor4 ra = random_tensor(2, 1, H, W, seed++, 0, 1);
    Tensor4 rf = random_tensor(2, 3, H, W, seed++, -0.5, 0.5);
    const Tensor4 ac = resize(gta, H / c, W / c, Resample::bilinear);
    const Tensor4 alpha0 = coarse.alpha;
    for (auto mode : {LossMode::base_only, LossMode::joint}) {
      LossGrads g;
      compute_losses(coarse, &ra, &rf, image, gta, gtf, mode, c, &g);
      // The error target |alpha - alpha*| is held constant.
      auto f = [&] {
        return compute_losses(coarse, &ra, &rf, image, gta, gtf, mode, c).total - loss_error(coarse.err, coarse.alpha, ac) +
               loss_error(coarse.err, alpha0, ac);
      };
      L.within(fd_relative_error(f, coarse.alpha.values(), g.coarse.alpha.values()), kPrim, "objective alpha_c");
      L.within(fd_relative_error(f, coarse.fgr.values(), g.coarse.fgr.values()), kPrim, "objective fgr_c");
      L.within(fd_relative_error(f, coarse.err.values(), g.coarse.err.values()), kPrim, "objective err_c");
      if (mode == LossMode::joint) {
        L.within(fd_relative_error(f, ra.values(), g.refined_alpha.values()), kPrim, "objective alpha");
        L.within(fd_relative_error(f, rf.values(), g.refined_fgr.values()), kPrim, "objective fgr");
      }
    }
  }

  {
    const BaseNetConfig cfg = tiny_base();
    ParameterStore store = init_base(cfg, 3);
    BaseNet net(cfg, store);
    const Tensor4 image = random_tensor(2, 3, 32, 48, seed++, 0, 1);
    const Tensor4 bg = random_tensor(2, 3, 32, 48, seed++, 0, 1);
    const BaseGrads probe{random_tensor(2, 1, 32, 48, seed++), random_tensor(2, 3, 32, 48, seed++),
                          random_tensor(2, 1, 32, 48, seed++), random_tensor(2, 32, 32, 48, seed++)};
    auto f = [&] {
      const BaseOutputs o = net.forward(image, bg, Mode::train);
      return dot(o.alpha, probe.alpha) + dot(o.fgr, probe.fgr) + dot(o.err, probe.err) + dot(o.hid, probe.hid);
    };
    store.zero_grad();
    f();
    net.backward(probe);
    std::size_t kinks = 0;
    L.within(oracle::param_fd_error(f, oracle::probe_params(store, 3), 1e-6, &kinks), kNet, "base network");
    L.kinks(kinks);
  }

  for (auto kernel : {RefineKernel::k3x3, RefineKernel::k1x1}) {
    ParameterStore store;
    Refiner refiner(kernel, store);
    init_parameters(store, 5);
    const int H = 32, W = 32, c = 4;
    const Tensor4 image = random_tensor(2, 3, H, W, seed++, 0, 1);
    const Tensor4 bg = random_tensor(2, 3, H, W, seed++, 0, 1);
    BaseOutputs coarse{random_tensor(2, 1, H / c, W / c, seed++, 0.2, 0.8), random_tensor(2, 3, H / c, W / c, seed++, -0.3, 0.3),
                       random_tensor(2, 1, H / c, W / c, seed++, 0, 1), random_tensor(2, 32, H / c, W / c, seed++, 0, 1)};
    const PatchIndexSet idx{2, 8, 8, {{0, 0, 0}, {0, 3, 4}, {1, 7, 7}, {1, 2, 5}, {0, 7, 0}, {1, 4, 4}}};
    const Tensor4 pa = random_tensor(2, 1, H, W, seed++);
    const Tensor4 pf = random_tensor(2, 3, H, W, seed++);
    auto f = [&] {
      const RefineOutputs o = refiner.forward(coarse, image, bg, idx, Mode::train);
      return dot(o.alpha, pa) + dot(o.fgr, pf);
    };
    store.zero_grad();
    f();
    const BaseGrads g = refiner.backward(pa, pf);
    const std::string tag = kernel == RefineKernel::k3x3 ? "refiner 3x3" : "refiner 1x1";
    std::size_t kinks = 0;
    L.within(oracle::param_fd_error(f, oracle::probe_params(store, 4), 1e-6, &kinks), kNet, tag + " params");
    L.kinks(kinks);
    L.within(fd_relative_error(f, coarse.alpha.values(), g.alpha.values()), kNet, tag + " alpha_c");
    L.within(fd_relative_error(f, coarse.fgr.values(), g.fgr.values()), kNet, tag + " fgr_c");
    L.within(fd_relative_error(f, coarse.hid.values(), g.hid.values(), testsupport::strided(coarse.hid.size(), 200)),
             kNet, tag + " hid");
  }

  {
    ModelConfig cfg;
    cfg.base = tiny_base();
    MattingModel model(cfg, 11);
    const int H = 64, W = 64;
    const Tensor4 image = random_tensor(2, 3, H, W, seed++, 0, 1);
    const Tensor4 bg = random_tensor(2, 3, H, W, seed++, 0, 1);
    const Tensor4 gta = random_tensor(2, 1, H, W, seed++, 0, 1);
    const Tensor4 gtf = random_tensor(2, 3, H, W, seed++, 0, 1);
    RefineConfig rcfg;
    rcfg.k = 40;
    model.params().zero_grad();
    const ForwardResult r = model.forward(image, bg, rcfg, Mode::train);
    const Tensor4 ac = resize(gta, H / 4, W / 4, Resample::bilinear);
    auto f = [&] {
      const ForwardResult p = model.forward(image, bg, rcfg, Mode::train);
      return compute_losses(p.coarse, &p.refined.alpha, &p.refined.fgr, image, gta, gtf, LossMode::joint, 4).total -
             loss_error(p.coarse.err, p.coarse.alpha, ac) + loss_error(p.coarse.err, r.coarse.alpha, ac);
    };
    LossGrads g;
    compute_losses(r.coarse, &r.refined.alpha, &r.refined.fgr, image, gta, gtf, LossMode::joint, 4, &g);
    model.backward(g.coarse, &g.refined_alpha, &g.refined_fgr);
    const auto probes = oracle::probe_params(model.params(), 2);
    std::size_t kinks = 0, coords = 0;
    for (const auto& p : probes) coords += p.coords.size();
    // ReLU and clamp boundaries crossed by chance scale with the step, so the
    // whole-model probe uses a smaller one than the per-op checks.
    L.within(oracle::param_fd_error(f, probes, 1e-7, &kinks), kNet, "whole model");
    L.kinks(kinks);
    L.check(kinks * 20 <= coords, "whole model: " + std::to_string(kinks) + " of " + std::to_string(coords) +
                                      " coordinates straddle a kink");
  }
  return L.outcome();
}

// ---------------------------------------------------------------------------
// 2. Refiner patch geometry

Outcome geometry_suite() {
  Ledger L;

  // 8 -> 6 -> 4 under two valid 3x3 convolutions, for both stages.
  const ConvSpec valid{1, 1, 3, 1, 1, Padding::valid, false};
  L.check(valid.out_size(8) == 6 && valid.out_size(6) == 4, "valid 3x3 shrink");

  // Windows, traced with coordinate-valued tensors on interior cells so that
  // replicate padding does not interfere.
  const int Hh = 32, Wh = 32, H = 64, W = 64;
  Tensor4 half_rows(1, 1, Hh, Wh), half_cols(1, 1, Hh, Wh), full_rows(1, 1, H, W), full_cols(1, 1, H, W);
  for (int y = 0; y < Hh; ++y)
    for (int x = 0; x < Wh; ++x) half_rows.at(0, 0, y, x) = y, half_cols.at(0, 0, y, x) = x;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) full_rows.at(0, 0, y, x) = y, full_cols.at(0, 0, y, x) = x;
  PatchIndexSet interior{1, H / 4, W / 4, {}};
  for (int i = 1; i < H / 4 - 1; ++i)
    for (int j = 1; j < W / 4 - 1; ++j) interior.entries.push_back({0, i, j});

  for (auto kernel : {RefineKernel::k3x3, RefineKernel::k1x1}) {
    const bool k3 = kernel == RefineKernel::k3x3;
    const int shrink = k3 ? 2 : 0;  // pixels lost per side by two convolutions
    const CropWindow hw = half_window(kernel), fw = full_window(kernel);
    const Tensor4 hr = crop_patches(half_rows, interior, hw), hc = crop_patches(half_cols, interior, hw);
    const Tensor4 fr = crop_patches(full_rows, interior, fw), fc = crop_patches(full_cols, interior, fw);
    const int stage1 = hw.size - 2 * shrink;
    L.check(2 * stage1 == fw.size, "stage-1 output doubles to the full window");
    L.check(fw.size - 2 * shrink == 4, "stage-2 output is one 4x4 cell");
    for (std::size_t k = 0; k < interior.size(); ++k) {
      const auto& e = interior.entries[k];
      const int n = static_cast<int>(k);
      bool aligned = true, cell = true;
      for (int y = 0; y < fw.size; ++y)
        for (int x = 0; x < fw.size; ++x) {
          // Nearest x2 of the stage-1 output: full pixel (y, x) reads stage-1 (y/2, x/2).
          const double src_r = hr.at(n, 0, shrink + y / 2, shrink + x / 2);
          const double src_c = hc.at(n, 0, shrink + y / 2, shrink + x / 2);
          aligned = aligned && static_cast<int>(fr.at(n, 0, y, x)) / 2 == src_r &&
                    static_cast<int>(fc.at(n, 0, y, x)) / 2 == src_c;
        }
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
          cell = cell && fr.at(n, 0, shrink + y, shrink + x) == 4 * e.row + y &&
                 fc.at(n, 0, shrink + y, shrink + x) == 4 * e.col + x;
      L.check(aligned, std::string(k3 ? "3x3" : "1x1") + " half/full alignment");
      L.check(cell, std::string(k3 ? "3x3" : "1x1") + " stage-2 output covers its cell");
    }
  }

  // Nearest x2 covers every source pixel with exactly one 2x2 block.
  {
    const Tensor4 src = random_tensor(2, 3, 5, 7, 1);
    const Tensor4 up = resize(src, 10, 14, Resample::nearest);
    bool same = true;
    for (int n = 0; n < 2; ++n)
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 10; ++y)
          for (int x = 0; x < 14; ++x) same = same && up.at(n, c, y, x) == src.at(n, c, y / 2, x / 2);
    L.check(same, "nearest x2 replicates 2x2 blocks");
    const Tensor4 back = resize_backward(Tensor4(1, 1, 10, 14, 1.0), 5, 7, Resample::nearest);
    L.check(std::all_of(back.values().begin(), back.values().end(), [](double v) { return v == 4.0; }),
            "nearest x2 adjoint counts four per source pixel");
  }

  // Shapes of the refiner stages.
  {
    ParameterStore store;
    Refiner r(RefineKernel::k3x3, store);
    init_parameters(store, 1);
    const BaseOutputs coarse{random_tensor(1, 1, 8, 8, 2, 0, 1), random_tensor(1, 3, 8, 8, 3, -0.5, 0.5),
                             random_tensor(1, 1, 8, 8, 4, 0, 1), random_tensor(1, 32, 8, 8, 5, 0, 1)};
    const Tensor4 image = random_tensor(1, 3, 32, 32, 6, 0, 1);
    const RefineOutputs o = r.forward(coarse, image, image, {1, 8, 8, {{0, 0, 0}, {0, 3, 5}, {0, 7, 7}}}, Mode::eval);
    L.check(o.stage1_shape == Shape4{3, 16, 4, 4}, "stage-1 shape");
    L.check(o.concat_shape == Shape4{3, 22, 8, 8}, "concat shape");
    L.check(o.stage2_shape == Shape4{3, 4, 4, 4}, "stage-2 shape");
  }

  // Unrefined cells are bit-identical to the k=0 upsample path.
  {
    ModelConfig cfg;
    cfg.base = tiny_base();
    MattingModel model(cfg, 9);
    const int n = 2, Hm = 128, Wm = 256;
    const Tensor4 image = random_tensor(n, 3, Hm, Wm, 20, 0, 1);
    const Tensor4 bg = random_tensor(n, 3, Hm, Wm, 21, 0, 1);
    for (int c : {4, 8}) {
      RefineConfig k0;
      k0.c = c;
      k0.k = 0;
      RefineConfig k;
      k.c = c;
      k.k = 97;
      const ForwardResult a = model.forward(image, bg, k0, Mode::eval);
      const ForwardResult b = model.forward(image, bg, k, Mode::eval);
      const Tensor4 up = clamp(resize(a.coarse.alpha, Hm, Wm, Resample::bilinear), 0, 1);
      L.check(a.refined.alpha.values() == up.values(), "k=0 is the clamped bilinear upsample");
      std::set<std::tuple<int, int, int>> chosen;
      for (const auto& e : b.patches.entries) chosen.emplace(e.batch, e.row, e.col);
      L.check(chosen.size() == 97, "97 distinct cells refined");
      std::size_t diffs = 0, inside = 0;
      for (int bi = 0; bi < n; ++bi)
        for (int y = 0; y < Hm; ++y)
          for (int x = 0; x < Wm; ++x) {
            const bool sel = chosen.count({bi, y / 4, x / 4}) > 0;
            bool differs = a.refined.alpha.at(bi, 0, y, x) != b.refined.alpha.at(bi, 0, y, x);
            for (int ch = 0; ch < 3; ++ch) differs = differs || a.refined.fgr.at(bi, ch, y, x) != b.refined.fgr.at(bi, ch, y, x);
            (sel ? inside : diffs) += differs;
          }
      L.check(diffs == 0, "c=" + std::to_string(c) + ": " + std::to_string(diffs) + " unrefined pixels changed");
      L.check(inside > 0, "refined cells change");
    }
  }
  return L.outcome();
}

// ---------------------------------------------------------------------------
// 3. Base-network output contracts

Outcome shape_clamp_suite() {
  Ledger L;
  const BaseNetConfig cfg;  // default widths
  ParameterStore store = init_base(cfg, 17);
  BaseNet net(cfg, store);
  const std::vector<std::pair<int, int>> sizes{{64, 64}, {48, 112}, {96, 80}};
  std::uint64_t seed = 3000;
  for (auto [h, w] : sizes)
    for (int trial = 0; trial < 2; ++trial) {
      // The second trial drives the network with out-of-range inputs so the
      // clamps are exercised.
      const double lo = trial == 0 ? 0.0 : -4.0, hi = trial == 0 ? 1.0 : 5.0;
      const Tensor4 image = random_tensor(2, 3, h, w, seed++, lo, hi);
      const Tensor4 bg = random_tensor(2, 3, h, w, seed++, lo, hi);
      const BaseOutputs o = net.forward(image, bg, Mode::eval);
      const std::string tag = std::to_string(h) + "x" + std::to_string(w);
      L.check(o.alpha.shape() == Shape4{2, 1, h, w}, tag + " alpha shape");
      L.check(o.fgr.shape() == Shape4{2, 3, h, w}, tag + " fgr shape");
      L.check(o.err.shape() == Shape4{2, 1, h, w}, tag + " err shape");
      L.check(o.hid.shape() == Shape4{2, 32, h, w}, tag + " hid shape");
      L.check(net.backbone_output_shape().h == h / 16 && net.backbone_output_shape().w == w / 16, tag + " stride 16");
      auto in = [](const Tensor4& t, double a, double b) {
        return std::all_of(t.values().begin(), t.values().end(), [&](double v) { return v >= a && v <= b; });
      };
      L.check(in(o.alpha, 0, 1), tag + " alpha in [0,1]");
      L.check(in(o.err, 0, 1), tag + " err in [0,1]");
      L.check(in(o.fgr, -1, 1), tag + " fgr in [-1,1]");
      L.check(in(o.hid, 0, HUGE_VAL), tag + " hid >= 0");
    }
  return L.outcome();
}

// ---------------------------------------------------------------------------
// 4. Oracle comparisons

Trimap random_trimap(int h, int w, std::uint64_t seed) {
  const Raster r = testsupport::random_raster(1, h, w, seed);
  Trimap t(h, w, TrimapLabel::background);
  for (std::size_t i = 0; i < r.size(); ++i)
    t.labels[i] = r.data[i] < 0.6 ? TrimapLabel::unknown : (r.data[i] < 0.8 ? TrimapLabel::foreground : TrimapLabel::background);
  return t;
}

Outcome oracle_suite() {
  Ledger L;
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor4 e(1 + trial % 3, 1, 2 + trial % 9, 3 + trial % 11);
    std::uniform_int_distribution<int> q(0, 1 + trial % 8);  // coarse levels produce ties
    for (double& v : e.values()) v = q(rng) / 8.0;
    RefineConfig cfg;
    cfg.k = static_cast<std::size_t>((trial * 7) % (e.size() + 5));
    L.check(select_patches(e, cfg).entries == oracle::brute_select(e, cfg.k), "select_patches trial " + std::to_string(trial));
  }

  double grad_worst = 0;
  for (std::uint64_t s = 0; s < 12; ++s) {
    const int h = 8 + static_cast<int>(s % 4) * 8, w = 32 - static_cast<int>(s % 3) * 8;
    const AlphaMatte a(testsupport::random_raster(1, h, w, 100 + s));
    // Smooth ground truth so connectivity sees large components.
    const AlphaMatte b(resize(testsupport::random_raster(1, 4, 4, 200 + s), h, w, Resample::bilinear));
    const Trimap t = random_trimap(h, w, 300 + s);
    double sad = 0, sq = 0;
    int n = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (t.at(y, x) == TrimapLabel::unknown) {
          const double d = a.at(y, x) - b.at(y, x);
          sad += std::abs(d);
          sq += d * d;
          ++n;
        }
    const SadMse m = metric_sad_mse(a, b, t);
    L.check(m.sad == sad / 1000, "SAD");
    L.check(m.mse == sq / n * 1000, "MSE");
    L.check(metric_conn(a, b, t) == oracle::conn(a, b, t, 0.1, 0.15), "Conn");
    const double g = oracle::grad(a, b, t, 1.4);
    const double rel = std::abs(metric_grad(a, b, t) - g) / std::max(1.0, std::abs(g));
    grad_worst = std::max(grad_worst, rel);
    L.check(rel <= 1e-5, "Grad");
  }

  // Disk: the unknown band reaches 10 pixels to each side of the edge.
  const int N = 96, cy = 48, cx = 47, radius = 25;
  Raster disk(1, N, N);
  for (int y = 0; y < N; ++y)
    for (int x = 0; x < N; ++x) disk.at(0, y, x) = (y - cy) * (y - cy) + (x - cx) * (x - cx) <= radius * radius ? 1.0 : 0.0;
  const AlphaMatte da(disk);
  const Trimap t = make_trimap(da);
  const Trimap ref = oracle::binary_trimap(da, 10);
  std::size_t mism = 0;
  for (std::size_t i = 0; i < t.labels.size(); ++i) mism += t.labels[i] != ref.labels[i];
  L.check(mism == 0, std::to_string(mism) + " trimap pixels differ from the reference");
  int inside = 0, outside = 0;
  for (int x = cx; x < N; ++x)
    if (t.at(cy, x) == TrimapLabel::unknown) (x - cx <= radius ? inside : outside)++;
  L.check(inside == 10 && outside == 10, "annulus width 10 on each side");

  std::ostringstream os;
  os << "Grad worst rel " << grad_worst;
  return L.outcome(os.str());
}

// ---------------------------------------------------------------------------
// 5, 6, 8. Training

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.base.stage_channels = {8, 16, 32, 64};
  return cfg;
}

constexpr std::uint64_t kOverfitSeed = 1;      // first sample seed of the 4 overfit samples
constexpr std::uint64_t kTrainSeed = 10'000;   // 64 training samples
constexpr std::uint64_t kHeldOutSeed = 20'000; // 16 held-out samples

StageConfig overfit_stage() {
  StageConfig st;
  st.name = "overfit";
  st.networks = LossMode::joint;
  st.max_steps = 300;
  st.batch_size = 4;
  st.lr = {1e-3, 1e-3, 1e-3, 1e-3};
  st.k_fraction = 0.3;
  return st;
}

struct TrainedModel {
  std::unique_ptr<MattingModel> model;
  bool ok = false;
};

TrainedModel g_overfit;

Outcome overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  SynthSpec spec;
  spec.size_lo = spec.size_hi = 128;
  spec.size_multiple = 16;
  const Dataset data = Dataset::synthetic("overfit", spec, 4, kOverfitSeed);
  TrainState state;
  state.model = std::make_unique<MattingModel>(tiny_model(), 1);
  TrainOptions opt;
  opt.seed = 5;
  opt.augment = AugmentConfig::identity();
  opt.augment.crop_lo = opt.augment.crop_hi = 128;
  std::vector<double> totals;
  opt.on_step = [&](const StepLog& s) { totals.push_back(s.loss.total); };
  const StageConfig st = overfit_stage();
  train_stage(state, st, data, opt);
  g_overfit = {std::move(state.model), true};

  const double at10 = totals.at(10), last = totals.back();
  const double ratio = at10 / last;
  std::ostringstream os;
  os << "loss step 10 " << at10 << ", step " << totals.size() - 1 << " " << last << ", drop " << ratio << "x (need 10x), "
     << seconds_since(t0) << " s";
  return {ratio >= 10.0, os.str()};
}

struct HeldOut {
  std::vector<SynthSample> samples;
  std::vector<EvalSample> eval;
  std::vector<Image> backgrounds;
};

HeldOut held_out_set() {
  HeldOut h;
  const SynthSpec spec;
  for (std::uint64_t i = 0; i < 16; ++i) h.samples.push_back(generate_sample(spec, kHeldOutSeed + i));
  for (std::size_t i = 0; i < h.samples.size(); ++i) {
    h.eval.push_back({"h" + std::to_string(i), &h.samples[i].fg, &h.samples[i].alpha});
    h.backgrounds.push_back(h.samples[i].bg);
  }
  return h;
}

struct BenefitResult {
  Outcome refinement;
  Outcome error_map;
};

std::optional<BenefitResult> g_benefit;

BenefitResult refinement_benefit() {
  const auto t0 = std::chrono::steady_clock::now();
  if (!g_overfit.ok) overfit();

  const Dataset data = Dataset::synthetic("train", SynthSpec{}, 64, kTrainSeed);
  TrainState state;
  state.model = std::move(g_overfit.model);
  g_overfit.ok = false;
  TrainOptions opt;
  opt.seed = 6;
  opt.augment.crop_lo = opt.augment.crop_hi = 128;
  StageConfig st;
  st.name = "benefit";
  st.max_steps = 2000;
  st.batch_size = 4;
  st.lr = {1e-3, 1e-3, 1e-3, 1e-3};
  st.k_fraction = 0.3;
  double recent = 0;
  opt.on_step = [&](const StepLog& s) { recent = s.loss.total; };
  train_stage(state, st, data, opt);
  MattingModel& trained = *state.model;
  const double train_s = seconds_since(t0);

  const HeldOut h = held_out_set();
  EvalOptions eo;
  eo.backgrounds_per_sample = 1;
  eo.seed = 8;

  // Coarse, 10%-area and full refinement on identical cases; the error map
  // statistics come from the coarse pass.
  struct Measured {
    double share = 0, mc = 0, m10 = 0, mf = 0, gain_full = 0, gain_ratio = 0;
    std::size_t better = 0, n = 0;
    double e_frac = 0, e_bin = 0;
    std::size_t n_frac = 0, n_bin = 0;
  };
  auto measure = [&](const EvalOptions& options) {
    Measured m;
    std::vector<double> coarse_sad, ten_sad, full_sad;
    auto run = [&](const std::string& budget, std::vector<double>& out, bool collect_error) {
      const Predictor p = [&](const EvalCase& ec) {
        RefineConfig r;
        r.c = 4;
        r.k = PatchBudget::parse(budget).resolve(ec.image.height(), ec.image.width(), 1);
        Prediction pr = predict(trained, ec.image, ec.background, r);
        if (collect_error) {
          const auto& ea = pr.error.raster().data;
          const auto& ga = ec.gt_alpha.raster().data;
          for (std::size_t i = 0; i < ga.size(); ++i) {
            if (ga[i] > 0.05 && ga[i] < 0.95) {
              m.e_frac += ea[i];
              ++m.n_frac;
            } else {
              m.e_bin += ea[i];
              ++m.n_bin;
            }
          }
        }
        return pr;
      };
      for (const auto& row : evaluate(h.eval, h.backgrounds, p, options)) out.push_back(row.report.sad);
    };
    run("0", coarse_sad, true);
    run("10%", ten_sad, false);
    run("full", full_sad, false);
    m.n = coarse_sad.size();
    for (std::size_t i = 0; i < m.n; ++i) {
      m.better += full_sad[i] <= coarse_sad[i];
      m.mc += coarse_sad[i];
      m.m10 += ten_sad[i];
      m.mf += full_sad[i];
    }
    const double n = static_cast<double>(m.n);
    m.mc /= n, m.m10 /= n, m.mf /= n;
    m.share = static_cast<double>(m.better) / n;
    m.gain_full = m.mc - m.mf;
    m.gain_ratio = m.gain_full > 0 ? (m.mc - m.m10) / m.gain_full : 0.0;
    m.e_frac = m.n_frac ? m.e_frac / static_cast<double>(m.n_frac) : 0.0;
    m.e_bin = m.n_bin ? m.e_bin / static_cast<double>(m.n_bin) : 0.0;
    return m;
  };
  auto e_ratio = [](const Measured& m) {
    return m.e_bin > 0 ? m.e_frac / m.e_bin : (m.e_frac > 0 ? HUGE_VAL : 0.0);
  };

  const Measured m = measure(eo);
  EvalOptions clean = eo;
  clean.perturb = TestPerturbConfig::none();
  const Measured mc = measure(clean);
  std::printf("note: with the clean background: refined<=coarse on %zu/%zu, mean SAD coarse %g 10%% %g full %g, "
              "10%% recovers %g%% of full gain, E ratio %g\n",
              mc.better, mc.n, mc.mc, mc.m10, mc.mf, mc.gain_ratio * 100, e_ratio(mc));

  BenefitResult r;
  std::ostringstream os;
  os << "refined<=coarse on " << m.better << "/" << m.n << " (need 90%), mean SAD coarse " << m.mc << " 10% " << m.m10
     << " full " << m.mf << ", 10% recovers " << m.gain_ratio * 100
     << "% of full gain (need 80%), final train loss " << recent << ", train " << train_s << " s, total "
     << seconds_since(t0) << " s";
  r.refinement = {m.share >= 0.9 && m.gain_full > 0 && m.gain_ratio >= 0.8, os.str()};

  const double ratio = e_ratio(m);
  std::ostringstream oe;
  oe << "mean E over fractional pixels " << m.e_frac << " (" << m.n_frac << " px), binary " << m.e_bin << " ("
     << m.n_bin << " px), ratio " << ratio << " (need 2)";
  r.error_map = {m.n_frac > 0 && ratio >= 2.0, oe.str()};

  // Background-only input should give an almost empty matte.
  double empty_alpha = 0;
  for (const auto& s : h.samples) {
    RefineConfig rc;
    rc.k = PatchBudget::parse("4%").resolve(s.bg.height(), s.bg.width(), 1);
    const Prediction p = predict(trained, s.bg, s.bg, rc);
    double m = 0;
    for (double v : p.alpha.values()) m += v;
    empty_alpha += m / static_cast<double>(p.alpha.values().size());
  }
  std::printf("note: image == background gives mean alpha %.4f over %zu held-out backgrounds (expected < 0.05)\n",
              empty_alpha / static_cast<double>(h.samples.size()), h.samples.size());
  return r;
}

// ---------------------------------------------------------------------------
// 7. Throughput

Outcome throughput() {
  MattingModel model(tiny_model(), 3);
  BenchConfig cfg;
  cfg.resolutions = {{128, 128}, {256, 256}};
  cfg.budgets = parse_budgets("0,4%,10%,25%,full");
  cfg.repeats = 50;
  cfg.warmup = 3;
  const BenchResult r = bench(model, cfg);
  const int top = std::max_element(cfg.resolutions.begin(), cfg.resolutions.end(),
                                   [](auto a, auto b) { return a.first * a.second < b.first * b.second; })->first;
  std::vector<BenchRow> rows;
  for (const auto& row : r.rows)
    if (row.height == top) rows.push_back(row);
  std::sort(rows.begin(), rows.end(), [](const BenchRow& a, const BenchRow& b) { return a.k < b.k; });
  bool monotone = true;
  for (std::size_t i = 1; i < rows.size(); ++i) monotone = monotone && rows[i].median_ms >= rows[i - 1].median_ms;
  double ms4 = 0, msfull = 0;
  std::ostringstream os;
  os << top << "x" << top << " median ms:";
  for (const auto& row : rows) {
    os << " " << row.k_label << "=" << row.median_ms;
    if (row.k_label == "4%") ms4 = row.median_ms;
    if (row.k_label == "full") msfull = row.median_ms;
  }
  const double ratio = ms4 > 0 ? msfull / ms4 : 0.0;
  os << ", full/4% " << ratio << " (need 1.2), " << (monotone ? "non-decreasing" : "NOT monotone") << ", 1 thread";
  return {monotone && ratio >= 1.2, os.str()};
}

// ---------------------------------------------------------------------------
// 9. Augmentation statistics

Outcome augmentation_stats() {
  SynthSpec spec;
  spec.size_lo = spec.size_hi = 48;
  spec.size_multiple = 16;
  std::vector<SynthSample> src;
  for (std::uint64_t i = 0; i < 8; ++i) src.push_back(generate_sample(spec, 900 + i));
  AugmentConfig cfg;  // training defaults: 30% misalignment, 30% shadow
  cfg.crop_lo = 32;
  cfg.crop_hi = 48;
  const int batches = 2500, per_batch = 4;
  std::size_t mis = 0, sha = 0, draws = 0;
  double worst = 0;
  for (int b = 0; b < batches; ++b) {
    std::vector<SourceTriple> triples;
    for (int i = 0; i < per_batch; ++i) {
      const auto& s = src[static_cast<std::size_t>((b * per_batch + i) % src.size())];
      triples.push_back({&s.fg, &s.alpha, &s.bg});
    }
    const SampleBatch batch = augment_batch(triples, cfg, derive_seed(77, static_cast<std::uint64_t>(b)));
    for (int i = 0; i < per_batch; ++i) {
      mis += batch.misaligned[static_cast<std::size_t>(i)];
      sha += batch.shadowed[static_cast<std::size_t>(i)];
      ++draws;
    }
    const std::size_t plane = batch.image.plane();
    for (std::size_t i = 0; i < batch.image.size(); ++i) {
      const std::size_t n = i / (3 * plane), p = i % plane;
      const double a = batch.gt_alpha.values()[n * plane + p];
      const double expect = a * batch.gt_fg.values()[i] + (1 - a) * batch.composite_background.values()[i];
      worst = std::max(worst, std::abs(batch.image.values()[i] - expect));
    }
  }
  const double rm = static_cast<double>(mis) / static_cast<double>(draws);
  const double rs = static_cast<double>(sha) / static_cast<double>(draws);
  std::ostringstream os;
  os << draws << " draws: misalignment " << rm << ", shadow " << rs << " (0.3 +- 0.015), worst compositing residual "
     << worst << " (tol 1e-6)";
  return {std::abs(rm - 0.3) <= 0.015 && std::abs(rs - 0.3) <= 0.015 && worst <= 1e-6, os.str()};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  auto want = [&](int n) { return wanted.empty() || wanted.count(n) > 0; };

  const std::vector<std::pair<int, std::string>> names{
      {1, "gradient suite"},       {2, "geometry suite"},        {3, "shape/clamp suite"},
      {4, "oracle suite"},         {5, "overfit"},               {6, "refinement benefit"},
      {7, "throughput"},           {8, "error-map behaviour"},   {9, "augmentation statistics"}};

  int failures = 0;
  for (const auto& [n, name] : names) {
    if (!want(n)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      switch (n) {
        case 1: o = gradient_suite(); break;
        case 2: o = geometry_suite(); break;
        case 3: o = shape_clamp_suite(); break;
        case 4: o = oracle_suite(); break;
        case 5: o = overfit(); break;
        case 6:
        case 8:
          if (!g_benefit) g_benefit = refinement_benefit();
          o = n == 6 ? g_benefit->refinement : g_benefit->error_map;
          break;
        case 7: o = throughput(); break;
        case 9: o = augmentation_stats(); break;
      }
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %d %s: %s  %s  [%.1f s]\n", n, name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}

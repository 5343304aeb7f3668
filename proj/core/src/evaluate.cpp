#include "bgm/evaluate.hpp"

#include "bgm/datasetgen.hpp"
#include "bgm/png_io.hpp"

namespace bgm {

namespace {

Raster pad_replicate(const Raster& r, int h, int w) {
  if (r.height == h && r.width == w) return r;
  Raster out(r.channels, h, w);
  for (int c = 0; c < r.channels; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = r.at(c, std::min(y, r.height - 1), std::min(x, r.width - 1));
  return out;
}

Raster crop_top_left(const Raster& r, int h, int w) {
  if (r.height == h && r.width == w) return r;
  Raster out(r.channels, h, w);
  for (int c = 0; c < r.channels; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = r.at(c, y, x);
  return out;
}

int round_up(int v, int m) { return (v + m - 1) / m * m; }

}  // namespace

Prediction predict(MattingModel& model, const Image& image, const Image& background, const RefineConfig& rcfg) {
  if (!image.same_size(background.height(), background.width())) {
    throw ShapeError("predict: image is " + std::to_string(image.height()) + "x" + std::to_string(image.width()) +
                     " but background is " + std::to_string(background.height()) + "x" +
                     std::to_string(background.width()));
  }
  rcfg.validate();
  const int h = image.height(), w = image.width();
  const int m = 16 * rcfg.c;
  const int hp = round_up(h, m), wp = round_up(w, m);
  const Tensor4 it = to_tensor(pad_replicate(image.raster(), hp, wp));
  const Tensor4 bt = to_tensor(pad_replicate(background.raster(), hp, wp));
  const ForwardResult r = model.forward(it, bt, rcfg, Mode::eval);

  const Image padded_image(pad_replicate(image.raster(), hp, wp));
  const ForegroundResidual residual(slice_raster(r.refined.fgr, 0));
  const Image fg_full = recover_foreground(residual, padded_image);
  const Tensor4 err_full = resize(r.coarse.err, hp, wp, Resample::bilinear);
  return Prediction{AlphaMatte(crop_top_left(slice_raster(r.refined.alpha, 0), h, w)),
                    Image(crop_top_left(fg_full.raster(), h, w)),
                    ErrorMap(crop_top_left(slice_raster(err_full, 0), h, w)), r.patches.size()};
}

Prediction predict_coarse(MattingModel& model, const Image& image, const Image& background, int c) {
  RefineConfig rcfg;
  rcfg.c = c;
  rcfg.k = 0;
  rcfg.kernel = model.config().refine_kernel;
  return predict(model, image, background, rcfg);
}

Predictor model_predictor(MattingModel& model, const RefineConfig& rcfg) {
  return [&model, rcfg](const EvalCase& ec) { return predict(model, ec.image, ec.background, rcfg); };
}

std::vector<MetricRow> evaluate(const std::vector<EvalSample>& samples, const std::vector<Image>& backgrounds,
                                const Predictor& predictor, const EvalOptions& opt) {
  if (backgrounds.empty()) throw std::invalid_argument("evaluate: no backgrounds");
  if (opt.backgrounds_per_sample < 1) throw std::invalid_argument("evaluate: backgrounds_per_sample must be >= 1");
  std::vector<MetricRow> rows;
  const auto per = static_cast<std::size_t>(opt.backgrounds_per_sample);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const EvalSample& s = samples[i];
    if (!s.fg || !s.alpha) {
      rows.push_back({opt.dataset_name, s.name, {}, "missing ground truth"});
      continue;
    }
    const Trimap trimap = make_trimap(*s.alpha, opt.trimap);
    for (std::size_t j = 0; j < per; ++j) {
      const std::size_t bi = (i * per + j) % backgrounds.size();
      const Image bg(resize(backgrounds[bi].raster(), s.fg->height(), s.fg->width(), Resample::bilinear));
      const Image image = composite(*s.alpha, *s.fg, bg);
      Rng rng(derive_seed(opt.seed, i * per + j));
      const Image captured = perturb_background_for_test(bg, rng, opt.perturb);
      const Prediction p = predictor(EvalCase{image, captured, *s.alpha, *s.fg});
      MetricRow row{opt.dataset_name, s.name + "/bg" + std::to_string(bi), {}, {}};
      row.report = compute_metrics(p.alpha, *s.alpha, p.fg, *s.fg, trimap, opt.metrics);
      if (row.report.empty_unknown) row.note = "empty unknown region";
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<MetricRow> evaluate_directory(const std::filesystem::path& dir, const Predictor& predictor,
                                          const EvalOptions& opt) {
  const DatasetListing listing = list_dataset(dir);
  std::vector<Image> fgs;
  std::vector<AlphaMatte> alphas;
  fgs.reserve(listing.samples.size());
  alphas.reserve(listing.samples.size());
  std::vector<EvalSample> samples;
  for (const auto& e : listing.samples) {
    if (e.fgr.empty() || e.pha.empty()) {
      samples.push_back({e.name, nullptr, nullptr});
      continue;
    }
    fgs.push_back(read_image(e.fgr));
    alphas.push_back(read_alpha(e.pha));
    samples.push_back({e.name, &fgs.back(), &alphas.back()});
  }
  std::vector<Image> backgrounds;
  for (const auto& b : listing.backgrounds) backgrounds.push_back(read_image(b));
  return evaluate(samples, backgrounds, predictor, opt);
}

}  // namespace bgm

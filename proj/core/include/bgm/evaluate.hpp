#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "bgm/augment.hpp"
#include "bgm/metrics.hpp"
#include "bgm/model.hpp"

namespace bgm {

/// Network output at the input's resolution.
struct Prediction {
  AlphaMatte alpha;
  Image fg;            // recovered foreground
  ErrorMap error;      // coarse error map upsampled to full resolution
  std::size_t patches = 0;
};

/// Full pipeline on one image pair of any size. Inputs are padded with
/// replicated borders up to a multiple of 16c and the outputs cropped back.
Prediction predict(MattingModel& model, const Image& image, const Image& background, const RefineConfig& rcfg);

/// Coarse-only variant: the same forward with a zero patch budget.
Prediction predict_coarse(MattingModel& model, const Image& image, const Image& background, int c);

/// One evaluation composite. The ground truth is exposed so oracle predictors
/// can be expressed; real models must only read image and background.
struct EvalCase {
  const Image& image;
  const Image& background;  // perturbed capture handed to the model
  const AlphaMatte& gt_alpha;
  const Image& gt_fg;
};

using Predictor = std::function<Prediction(const EvalCase&)>;

struct EvalOptions {
  std::string dataset_name = "dataset";
  int backgrounds_per_sample = 5;
  TestPerturbConfig perturb;
  TrimapConfig trimap;
  MetricParams metrics;
  std::uint64_t seed = 0;
};

struct EvalSample {
  std::string name;
  const Image* fg;
  const AlphaMatte* alpha;
};

/// Composites sample i onto backgrounds (i * per_sample + j) mod n_bg for
/// j < per_sample (backgrounds are resized to the sample when sizes differ),
/// perturbs the background given to the predictor, and scores the prediction
/// over the unknown region of the ground-truth trimap.
/// Samples whose ground truth is missing (null) produce a row with a note.
std::vector<MetricRow> evaluate(const std::vector<EvalSample>& samples, const std::vector<Image>& backgrounds,
                                const Predictor& predictor, const EvalOptions& opt = {});

/// Same over an fgr/pha/bgr directory.
std::vector<MetricRow> evaluate_directory(const std::filesystem::path& dir, const Predictor& predictor,
                                          const EvalOptions& opt = {});

/// Predictor wrapping a model and refinement settings.
Predictor model_predictor(MattingModel& model, const RefineConfig& rcfg);

}  // namespace bgm

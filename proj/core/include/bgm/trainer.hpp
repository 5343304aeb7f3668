#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bgm/augment.hpp"
#include "bgm/datasetgen.hpp"
#include "bgm/losses.hpp"
#include "bgm/model.hpp"
#include "bgm/parameters.hpp"

namespace bgm {

/// Refined-area fraction used when a stage gives no explicit patch budget:
/// 5000 patches of 16 pixels over a 1920x1080 frame.
inline constexpr double kDefaultRefineFraction = 16.0 * 5000.0 / (1920.0 * 1080.0);

struct StageConfig {
  std::string name = "stage";
  LossMode networks = LossMode::joint;
  int epochs = 1;
  std::int64_t max_steps = 0;  // when > 0, overrides the epoch budget
  int batch_size = 4;
  GroupRates lr{5e-5, 5e-5, 1e-4, 3e-4};  // backbone, aspp, decoder, refiner
  std::string dataset = "default";
  int c = 4;
  double k_fraction = kDefaultRefineFraction;  // patch budget as a fraction of all 4x4 cells
  /// Optional plateau stop: every `plateau_window` steps the mean total loss
  /// of the window is compared with the previous window; the stage ends after
  /// `plateau_patience` consecutive windows improving by less than 1%.
  int plateau_window = 0;
  int plateau_patience = 3;
  /// Clamp rule used during this stage's backward passes. The exact derivative
  /// zeroes heads that start saturated, so training defaults to restoring.
  ClampGrad clamp_gradient = ClampGrad::restoring;

  void validate() const;
  /// Effective learning rates; base_only stages never update the refiner.
  GroupRates effective_lr() const;
};

/// Fully materialised training data.
struct Dataset {
  std::string id;
  std::vector<Image> fg;
  std::vector<AlphaMatte> alpha;
  std::vector<Image> bg;

  std::size_t samples() const { return fg.size(); }
  std::size_t backgrounds() const { return bg.size(); }
  /// Samples generate_sample(spec, first_seed + i); backgrounds are the generated ones.
  static Dataset synthetic(const std::string& id, const SynthSpec& spec, std::size_t count, std::uint64_t first_seed);
  /// fgr/pha/bgr directory layout.
  static Dataset load(const std::string& id, const std::filesystem::path& dir);
};

struct DatasetSource {
  std::string id;
  std::filesystem::path dir;      // used when non-empty
  std::size_t synthetic_count = 0;
  std::uint64_t synthetic_seed = 0;
  SynthSpec synth;

  Dataset materialise() const;
};

struct StepLog {
  int stage = 0;
  std::int64_t step = 0;  // within the stage
  std::size_t patches = 0;
  LossValues loss;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainState {
  std::unique_ptr<MattingModel> model;
  int stage_index = 0;
  std::int64_t step_in_stage = 0;
  std::vector<StepLog> history;
};

struct TrainOptions {
  std::uint64_t seed = 0;
  AugmentConfig augment;
  /// Run directory for config, loss log and checkpoints. Empty disables all output.
  std::filesystem::path run_dir;
  std::int64_t checkpoint_every = 0;  // steps; 0 writes only end-of-stage checkpoints
  std::function<void(const StepLog&)> on_step;
};

/// Runs one stage from state.step_in_stage to its end. On a non-finite loss or
/// gradient it throws TrainingDiverged; checkpoints already written are kept.
void train_stage(TrainState& state, const StageConfig& stage, const Dataset& data, const TrainOptions& opt);

/// Steps one stage would run on `data`.
std::int64_t stage_steps(const StageConfig& stage, const Dataset& data);

/// Complete training recipe, readable from a flat key = value file.
struct TrainConfig {
  ModelConfig model;
  std::uint64_t seed = 0;
  std::vector<StageConfig> stages;
  std::map<std::string, DatasetSource> datasets;
  AugmentConfig augment;
  std::int64_t checkpoint_every = 0;

  static TrainConfig from_keyvalues(const KeyValues& kv);
  KeyValues to_keyvalues() const;
};

/// Executes the stages in order, checkpointing after each. All datasets are
/// materialised before any step runs. With a run directory, a `latest.ckpt`
/// there is resumed from.
TrainState run_schedule(const TrainConfig& cfg, const std::filesystem::path& run_dir,
                        std::function<void(const StepLog&)> on_step = {});

/// Same with already materialised datasets, keyed by id.
TrainState run_schedule(const TrainConfig& cfg, const std::map<std::string, const Dataset*>& datasets,
                        const std::filesystem::path& run_dir, std::function<void(const StepLog&)> on_step = {});

/// One optimisation step on a prepared batch; exposed for tests and tools.
StepLog train_step(MattingModel& model, const SampleBatch& batch, const StageConfig& stage);

/// Reads loss.csv back.
std::vector<StepLog> read_loss_log(const std::filesystem::path& csv);

}  // namespace bgm

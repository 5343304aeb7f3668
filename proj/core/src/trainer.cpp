#include "bgm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "bgm/checkpoint.hpp"
#include "bgm/png_io.hpp"

namespace bgm {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

const char* mode_name(LossMode m) { return m == LossMode::base_only ? "base_only" : "joint"; }

const char* clamp_name(ClampGrad g) { return g == ClampGrad::exact ? "exact" : "restoring"; }

ClampGrad parse_clamp(const std::string& s) {
  if (s == "exact") return ClampGrad::exact;
  if (s == "restoring") return ClampGrad::restoring;
  throw ConfigError("clamp_gradient must be exact or restoring, got '" + s + "'");
}

LossMode parse_mode(const std::string& s) {
  if (s == "base_only") return LossMode::base_only;
  if (s == "joint") return LossMode::joint;
  throw ConfigError("networks must be base_only or joint, got '" + s + "'");
}

void merge(KeyValues& into, const std::string& prefix, const KeyValues& from) {
  for (const auto& [k, v] : from.entries()) into.set(prefix + "." + k, v);
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? "," : "") + parts[i];
  return out;
}

const char* kLossHeader = "stage,step,patches,l_alpha_c,l_fgr_c,l_err,l_alpha,l_fgr,l_base,l_refine,total";

void write_log_row(std::ostream& out, const StepLog& s) {
  const auto& l = s.loss;
  out << s.stage << ',' << s.step << ',' << s.patches << ',' << fmt(l.l_alpha_c) << ',' << fmt(l.l_fgr_c) << ','
      << fmt(l.l_err) << ',' << fmt(l.l_alpha) << ',' << fmt(l.l_fgr) << ',' << fmt(l.l_base) << ','
      << fmt(l.l_refine) << ',' << fmt(l.total) << '\n';
}

// Sample and background order of one epoch; both lists are shuffled independently.
struct EpochOrder {
  std::int64_t epoch = -1;
  std::vector<std::size_t> samples, backgrounds;
};

void prepare_epoch(EpochOrder& order, std::int64_t epoch, const Dataset& data, std::uint64_t stream) {
  if (order.epoch == epoch) return;
  order.epoch = epoch;
  Rng rng(derive_seed(stream, static_cast<std::uint64_t>(epoch)));
  order.samples.resize(data.samples());
  order.backgrounds.resize(data.backgrounds());
  std::iota(order.samples.begin(), order.samples.end(), std::size_t{0});
  std::iota(order.backgrounds.begin(), order.backgrounds.end(), std::size_t{0});
  std::shuffle(order.samples.begin(), order.samples.end(), rng);
  std::shuffle(order.backgrounds.begin(), order.backgrounds.end(), rng);
}

std::map<std::string, std::string> position_metadata(const TrainState& s, std::uint64_t seed) {
  return {{"stage_index", std::to_string(s.stage_index)},
          {"step_in_stage", std::to_string(s.step_in_stage)},
          {"seed", std::to_string(seed)}};
}

}  // namespace

void StageConfig::validate() const {
  if (c != 4 && c != 8) throw ConfigError("stage " + name + ": c must be 4 or 8");
  if (epochs < 0) throw ConfigError("stage " + name + ": epochs must be >= 0");
  if (max_steps < 0) throw ConfigError("stage " + name + ": max_steps must be >= 0");
  if (batch_size < 1) throw ConfigError("stage " + name + ": batch_size must be >= 1");
  if (!(k_fraction >= 0 && k_fraction <= 1)) throw ConfigError("stage " + name + ": k_fraction must be in [0,1]");
  for (double r : lr)
    if (!(r >= 0)) throw ConfigError("stage " + name + ": learning rates must be >= 0");
  if (plateau_window < 0 || plateau_patience < 1) throw ConfigError("stage " + name + ": invalid plateau settings");
}

GroupRates StageConfig::effective_lr() const {
  GroupRates r = lr;
  if (networks == LossMode::base_only) r[static_cast<std::size_t>(ParamGroup::refiner)] = 0.0;
  return r;
}

Dataset Dataset::synthetic(const std::string& id, const SynthSpec& spec, std::size_t count, std::uint64_t first_seed) {
  if (count == 0) throw std::invalid_argument("dataset " + id + ": synthetic count must be positive");
  Dataset d;
  d.id = id;
  for (std::size_t i = 0; i < count; ++i) {
    SynthSample s = generate_sample(spec, first_seed + i);
    d.fg.push_back(std::move(s.fg));
    d.alpha.push_back(std::move(s.alpha));
    d.bg.push_back(std::move(s.bg));
  }
  return d;
}

Dataset Dataset::load(const std::string& id, const fs::path& dir) {
  const DatasetListing listing = list_dataset(dir);
  Dataset d;
  d.id = id;
  for (const auto& e : listing.samples) {
    if (e.fgr.empty() || e.pha.empty()) continue;
    Image fg = read_image(e.fgr);
    AlphaMatte a = read_alpha(e.pha);
    if (!fg.same_size(a.height(), a.width())) throw ShapeError("dataset " + id + ": " + e.name + " fg/alpha size mismatch");
    d.fg.push_back(std::move(fg));
    d.alpha.push_back(std::move(a));
  }
  for (const auto& b : listing.backgrounds) d.bg.push_back(read_image(b));
  if (d.fg.empty()) throw IoError("dataset " + id + ": no complete fgr/pha pairs in " + dir.string());
  if (d.bg.empty()) throw IoError("dataset " + id + ": no backgrounds in " + dir.string());
  return d;
}

Dataset DatasetSource::materialise() const {
  if (!dir.empty()) return Dataset::load(id, dir);
  return Dataset::synthetic(id, synth, synthetic_count, synthetic_seed);
}

std::int64_t stage_steps(const StageConfig& stage, const Dataset& data) {
  if (stage.max_steps > 0) return stage.max_steps;
  const auto epoch = static_cast<std::int64_t>(std::max(data.samples(), data.backgrounds()));
  return (stage.epochs * epoch + stage.batch_size - 1) / stage.batch_size;
}

StepLog train_step(MattingModel& model, const SampleBatch& batch, const StageConfig& stage) {
  ParameterStore& store = model.params();
  store.zero_grad();
  StepLog log;
  LossGrads grads;
  model.set_clamp_gradient(stage.clamp_gradient);
  if (stage.networks == LossMode::base_only) {
    const BaseOutputs coarse = model.forward_base(batch.image, batch.background, stage.c, Mode::train);
    log.loss = compute_losses(coarse, nullptr, nullptr, batch.image, batch.gt_alpha, batch.gt_fg, LossMode::base_only,
                              stage.c, &grads);
    if (!std::isfinite(log.loss.total)) throw TrainingDiverged("non-finite loss in stage " + stage.name);
    model.backward(grads.coarse, nullptr, nullptr);
  } else {
    RefineConfig rcfg;
    rcfg.c = stage.c;
    rcfg.kernel = model.config().refine_kernel;
    const double cells = static_cast<double>(batch.image.n()) * (batch.image.h() / 4) * (batch.image.w() / 4);
    rcfg.k = static_cast<std::size_t>(std::llround(stage.k_fraction * cells));
    const ForwardResult r = model.forward(batch.image, batch.background, rcfg, Mode::train);
    log.patches = r.patches.size();
    log.loss = compute_losses(r.coarse, &r.refined.alpha, &r.refined.fgr, batch.image, batch.gt_alpha, batch.gt_fg,
                              LossMode::joint, stage.c, &grads);
    if (!std::isfinite(log.loss.total)) throw TrainingDiverged("non-finite loss in stage " + stage.name);
    model.backward(grads.coarse, &grads.refined_alpha, &grads.refined_fgr);
  }
  try {
    adam_step(store, stage.effective_lr());
  } catch (const NonFiniteGradient& e) {
    throw TrainingDiverged(std::string(e.what()) + " in stage " + stage.name);
  }
  return log;
}

void train_stage(TrainState& state, const StageConfig& stage, const Dataset& data, const TrainOptions& opt) {
  stage.validate();
  if (!state.model) throw std::invalid_argument("train_stage: state has no model");
  if (data.samples() == 0 || data.backgrounds() == 0) throw std::invalid_argument("train_stage: empty dataset");
  AugmentConfig aug = opt.augment;
  aug.crop_multiple = std::lcm(aug.crop_multiple, 16 * stage.c);

  const std::int64_t total = stage_steps(stage, data);
  const auto epoch_len = static_cast<std::int64_t>(std::max(data.samples(), data.backgrounds()));
  const std::uint64_t stage_stream = derive_seed(opt.seed, static_cast<std::uint64_t>(state.stage_index));
  const std::uint64_t order_stream = derive_seed(stage_stream, 1);
  const std::uint64_t batch_stream = derive_seed(stage_stream, 2);

  std::ofstream log_file;
  if (!opt.run_dir.empty()) {
    const fs::path csv = opt.run_dir / "loss.csv";
    const bool fresh = !fs::exists(csv);
    note_file_open();
    log_file.open(csv, std::ios::app);
    if (!log_file) throw IoError("cannot append to " + csv.string());
    if (fresh) log_file << kLossHeader << '\n';
  }

  EpochOrder order;
  std::vector<SourceTriple> sources(static_cast<std::size_t>(stage.batch_size));
  double window_sum = 0, last_window = -1;
  int stale = 0;
  for (std::int64_t s = state.step_in_stage; s < total; ++s) {
    for (int j = 0; j < stage.batch_size; ++j) {
      const std::int64_t i = s * stage.batch_size + j;
      prepare_epoch(order, i / epoch_len, data, order_stream);
      const auto pos = static_cast<std::size_t>(i % epoch_len);
      const std::size_t si = order.samples[pos % data.samples()];
      const std::size_t bi = order.backgrounds[pos % data.backgrounds()];
      sources[static_cast<std::size_t>(j)] = {&data.fg[si], &data.alpha[si], &data.bg[bi]};
    }
    const SampleBatch batch = augment_batch(sources, aug, derive_seed(batch_stream, static_cast<std::uint64_t>(s)));
    StepLog log = train_step(*state.model, batch, stage);
    log.stage = state.stage_index;
    log.step = s;
    state.history.push_back(log);
    state.step_in_stage = s + 1;
    if (log_file.is_open()) {
      write_log_row(log_file, log);
      log_file.flush();
    }
    if (opt.on_step) opt.on_step(log);
    if (!opt.run_dir.empty() && opt.checkpoint_every > 0 && state.step_in_stage % opt.checkpoint_every == 0) {
      save_checkpoint(opt.run_dir / "latest.ckpt", state.model->to_checkpoint(position_metadata(state, opt.seed)));
    }
    if (stage.plateau_window > 0) {
      window_sum += log.loss.total;
      if ((s + 1) % stage.plateau_window == 0) {
        const double mean = window_sum / stage.plateau_window;
        window_sum = 0;
        if (last_window > 0 && mean > 0.99 * last_window) {
          if (++stale >= stage.plateau_patience) break;
        } else {
          stale = 0;
        }
        last_window = mean;
      }
    }
  }
}

TrainConfig TrainConfig::from_keyvalues(const KeyValues& kv) {
  TrainConfig cfg;
  cfg.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  cfg.checkpoint_every = kv.get_int("checkpoint_every", 0);
  cfg.model = ModelConfig::from_text(kv.section("model").to_text());
  cfg.augment = AugmentConfig::from_keyvalues(kv.section("augment"));

  for (const auto& id : split(kv.require("datasets"), ',')) {
    const KeyValues d = kv.section("dataset." + id);
    DatasetSource src;
    src.id = id;
    src.dir = d.get("dir", "");
    src.synthetic_count = static_cast<std::size_t>(d.get_int("synthetic_count", 0));
    src.synthetic_seed = static_cast<std::uint64_t>(d.get_int("synthetic_seed", 0));
    src.synth = SynthSpec::from_keyvalues(d.section("synth"));
    if (src.dir.empty() && src.synthetic_count == 0) {
      throw ConfigError("dataset " + id + " needs either dir or synthetic_count");
    }
    cfg.datasets[id] = src;
  }

  for (const auto& name : split(kv.require("stages"), ',')) {
    const KeyValues s = kv.section("stage." + name);
    StageConfig st;
    st.name = name;
    st.networks = parse_mode(s.get("networks", "joint"));
    st.epochs = static_cast<int>(s.get_int("epochs", st.epochs));
    st.max_steps = s.get_int("max_steps", 0);
    st.batch_size = static_cast<int>(s.get_int("batch_size", st.batch_size));
    if (st.networks == LossMode::base_only) st.lr = {1e-4, 5e-4, 5e-4, 0.0};
    const auto lr = s.get_doubles("lr", {st.lr.begin(), st.lr.end()});
    if (lr.size() != 3 && lr.size() != 4) throw ConfigError("stage " + name + ": lr needs 3 or 4 values");
    st.lr = {lr[0], lr[1], lr[2], lr.size() == 4 ? lr[3] : 0.0};
    st.dataset = s.require("dataset");
    st.c = static_cast<int>(s.get_int("c", 4));
    st.k_fraction = s.get_double("k_fraction", kDefaultRefineFraction);
    st.plateau_window = static_cast<int>(s.get_int("plateau_window", 0));
    st.plateau_patience = static_cast<int>(s.get_int("plateau_patience", 3));
    st.clamp_gradient = parse_clamp(s.get("clamp_gradient", "restoring"));
    st.validate();
    if (!cfg.datasets.count(st.dataset)) throw ConfigError("stage " + name + ": unknown dataset '" + st.dataset + "'");
    cfg.stages.push_back(st);
  }
  return cfg;
}

KeyValues TrainConfig::to_keyvalues() const {
  KeyValues kv;
  kv.set("seed", std::to_string(seed));
  kv.set("checkpoint_every", std::to_string(checkpoint_every));
  merge(kv, "model", KeyValues::parse(model.to_text()));
  merge(kv, "augment", augment.to_keyvalues());
  std::vector<std::string> ids, names;
  for (const auto& [id, d] : datasets) {
    ids.push_back(id);
    const std::string p = "dataset." + id;
    if (!d.dir.empty()) kv.set(p + ".dir", d.dir.string());
    kv.set(p + ".synthetic_count", std::to_string(d.synthetic_count));
    kv.set(p + ".synthetic_seed", std::to_string(d.synthetic_seed));
    merge(kv, p + ".synth", d.synth.to_keyvalues());
  }
  for (const auto& st : stages) {
    names.push_back(st.name);
    const std::string p = "stage." + st.name;
    kv.set(p + ".networks", mode_name(st.networks));
    kv.set(p + ".epochs", std::to_string(st.epochs));
    kv.set(p + ".max_steps", std::to_string(st.max_steps));
    kv.set(p + ".batch_size", std::to_string(st.batch_size));
    kv.set(p + ".lr", fmt(st.lr[0]) + "," + fmt(st.lr[1]) + "," + fmt(st.lr[2]) + "," + fmt(st.lr[3]));
    kv.set(p + ".dataset", st.dataset);
    kv.set(p + ".c", std::to_string(st.c));
    kv.set(p + ".k_fraction", fmt(st.k_fraction));
    kv.set(p + ".plateau_window", std::to_string(st.plateau_window));
    kv.set(p + ".plateau_patience", std::to_string(st.plateau_patience));
    kv.set(p + ".clamp_gradient", clamp_name(st.clamp_gradient));
  }
  kv.set("datasets", join(ids));
  kv.set("stages", join(names));
  return kv;
}

std::vector<StepLog> read_loss_log(const fs::path& csv) {
  std::vector<StepLog> out;
  note_file_open();
  std::ifstream in(csv);
  if (!in) return out;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    const auto f = split(line, ',');
    if (f.size() != 11) continue;
    StepLog s;
    s.stage = std::stoi(f[0]);
    s.step = std::stoll(f[1]);
    s.patches = std::stoull(f[2]);
    s.loss = {std::stod(f[3]), std::stod(f[4]), std::stod(f[5]), std::stod(f[6]),
              std::stod(f[7]), std::stod(f[8]), std::stod(f[9]), std::stod(f[10])};
    out.push_back(s);
  }
  return out;
}

TrainState run_schedule(const TrainConfig& cfg, const std::map<std::string, const Dataset*>& datasets,
                        const fs::path& run_dir, std::function<void(const StepLog&)> on_step) {
  for (const auto& st : cfg.stages) {
    st.validate();
    auto it = datasets.find(st.dataset);
    if (it == datasets.end() || !it->second) throw ConfigError("stage " + st.name + ": dataset '" + st.dataset + "' is missing");
  }
  TrainState state;
  const fs::path latest = run_dir.empty() ? fs::path() : run_dir / "latest.ckpt";
  if (!latest.empty() && fs::exists(latest)) {
    const Checkpoint ck = load_checkpoint(latest);
    if (ck.config_hash != cfg.model.hash()) throw ConfigMismatch("run directory holds a checkpoint for another model");
    state.model = std::make_unique<MattingModel>(MattingModel::from_checkpoint(ck));
    state.stage_index = std::stoi(ck.metadata.at("stage_index"));
    state.step_in_stage = std::stoll(ck.metadata.at("step_in_stage"));
    for (const auto& s : read_loss_log(run_dir / "loss.csv")) {
      if (s.stage < state.stage_index || (s.stage == state.stage_index && s.step < state.step_in_stage)) {
        state.history.push_back(s);
      }
    }
    // Drop rows logged after the checkpoint so the log continues seamlessly.
    note_file_open();
    std::ofstream out(run_dir / "loss.csv", std::ios::trunc);
    out << kLossHeader << '\n';
    for (const auto& s : state.history) write_log_row(out, s);
  } else {
    state.model = std::make_unique<MattingModel>(cfg.model, cfg.seed);
    if (!run_dir.empty()) fs::remove(run_dir / "loss.csv");
  }
  if (!run_dir.empty()) {
    fs::create_directories(run_dir);
    note_file_open();
    std::ofstream(run_dir / "config.txt") << cfg.to_keyvalues().to_text();
  }

  TrainOptions opt;
  opt.seed = cfg.seed;
  opt.augment = cfg.augment;
  opt.run_dir = run_dir;
  opt.checkpoint_every = cfg.checkpoint_every;
  opt.on_step = std::move(on_step);
  for (; state.stage_index < static_cast<int>(cfg.stages.size()); ++state.stage_index) {
    const StageConfig& st = cfg.stages[static_cast<std::size_t>(state.stage_index)];
    train_stage(state, st, *datasets.at(st.dataset), opt);
    if (!run_dir.empty()) {
      state.step_in_stage = 0;
      TrainState next_pos;
      next_pos.stage_index = state.stage_index + 1;
      const Checkpoint ck = state.model->to_checkpoint(position_metadata(next_pos, cfg.seed));
      save_checkpoint(run_dir / ("stage" + std::to_string(state.stage_index) + "-" + st.name + ".ckpt"), ck);
      save_checkpoint(latest, ck);
    }
    state.step_in_stage = 0;
  }
  return state;
}

TrainState run_schedule(const TrainConfig& cfg, const fs::path& run_dir, std::function<void(const StepLog&)> on_step) {
  for (const auto& st : cfg.stages) {
    if (!cfg.datasets.count(st.dataset)) throw ConfigError("stage " + st.name + ": dataset '" + st.dataset + "' is missing");
  }
  std::map<std::string, Dataset> owned;
  for (const auto& [id, src] : cfg.datasets) owned.emplace(id, src.materialise());
  std::map<std::string, const Dataset*> view;
  for (const auto& [id, d] : owned) view[id] = &d;
  return run_schedule(cfg, view, run_dir, std::move(on_step));
}

}  // namespace bgm

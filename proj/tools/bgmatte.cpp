// bgmatte: command-line front end for training, inference, evaluation,
// benchmarking and dataset generation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "bgm/bench.hpp"
#include "bgm/datasetgen.hpp"
#include "bgm/evaluate.hpp"
#include "bgm/metrics.hpp"
#include "bgm/png_io.hpp"
#include "bgm/trainer.hpp"

namespace fs = std::filesystem;
using namespace bgm;

namespace {

RefineConfig refine_settings(const MattingModel& model, const std::string& k, int c, int height, int width) {
  RefineConfig rcfg;
  rcfg.c = c;
  rcfg.kernel = model.config().refine_kernel;
  const int m = 16 * c;
  const int hp = (height + m - 1) / m * m, wp = (width + m - 1) / m * m;
  rcfg.k = PatchBudget::parse(k).resolve(hp, wp, 1);
  return rcfg;
}

TrimapMode parse_trimap_mode(const std::string& s) {
  if (s == "erode") return TrimapMode::erode_certain;
  if (s == "close") return TrimapMode::close_band;
  throw CLI::ValidationError("--trimap-mode", "expected erode or close");
}

int run_train(const std::string& config, const fs::path& out, int log_every) {
  const TrainConfig cfg = TrainConfig::from_keyvalues(KeyValues::load(config));
  std::cout << "training " << cfg.stages.size() << " stage(s) into " << out.string() << '\n';
  const TrainState state = run_schedule(cfg, out, [&](const StepLog& s) {
    if (log_every > 0 && s.step % log_every == 0) {
      std::printf("stage %d step %lld  l_base %.5f  l_refine %.5f  total %.5f  patches %zu\n", s.stage,
                  static_cast<long long>(s.step), s.loss.l_base, s.loss.l_refine, s.loss.total, s.patches);
      std::fflush(stdout);
    }
  });
  std::cout << "done after " << state.history.size() << " steps; checkpoint " << (out / "latest.ckpt").string() << '\n';
  return 0;
}

struct InferArgs {
  std::string image, background, checkpoint, new_background, out_dir = ".", k = "4%";
  int c = 4;
  bool write_error = false;
};

int run_infer(const InferArgs& a) {
  MattingModel model = MattingModel::load(a.checkpoint);
  const Image image = read_image(a.image);
  const Image background = read_image(a.background);
  const RefineConfig rcfg = refine_settings(model, a.k, a.c, image.height(), image.width());
  const Prediction p = predict(model, image, background, rcfg);
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  write_png(dir / "alpha.png", p.alpha.raster(), 16);
  write_png(dir / "foreground.png", p.fg.raster(), 16);
  if (a.write_error) write_png(dir / "error.png", p.error.raster(), 16);
  if (!a.new_background.empty()) {
    const Image nb = read_image(a.new_background);
    if (!nb.same_size(image.height(), image.width())) {
      throw ShapeError("new background must be " + std::to_string(image.width()) + "x" +
                       std::to_string(image.height()));
    }
    write_png(dir / "composite.png", composite(p.alpha, p.fg, nb).raster(), 16);
  }
  std::cout << "refined " << p.patches << " patches; outputs in " << dir.string() << '\n';
  return 0;
}

struct EvalArgs {
  std::string data, checkpoint, out, k = "4%", trimap_mode = "erode";
  int c = 4, per_sample = 5;
  std::uint64_t seed = 0;
  bool coarse = false, no_perturb = false;
};

int run_evaluate(const EvalArgs& a) {
  MattingModel model = MattingModel::load(a.checkpoint);
  EvalOptions opt;
  opt.dataset_name = fs::path(a.data).filename().string();
  opt.backgrounds_per_sample = a.per_sample;
  opt.seed = a.seed;
  opt.trimap.mode = parse_trimap_mode(a.trimap_mode);
  if (a.no_perturb) opt.perturb = TestPerturbConfig::none();
  const std::string k = a.coarse ? "0" : a.k;
  const Predictor predictor = [&](const EvalCase& ec) {
    return predict(model, ec.image, ec.background, refine_settings(model, k, a.c, ec.image.height(), ec.image.width()));
  };
  const auto rows = evaluate_directory(a.data, predictor, opt);
  if (a.out.empty() || a.out == "-") {
    write_metric_csv(std::cout, rows);
  } else {
    std::ofstream out(a.out);
    if (!out) throw IoError("cannot write " + a.out);
    write_metric_csv(out, rows);
    const MetricReport m = mean_report(rows);
    std::printf("%zu rows; mean SAD %.4f  MSE %.4f  Grad %.4f  Conn %.4f  FgMSE %.4f\n", rows.size(), m.sad, m.mse,
                m.grad, m.conn, m.fg_mse);
  }
  return 0;
}

struct BenchArgs {
  std::string checkpoint, resolutions = "256x256,512x512", k = "0,256,1024,full", out;
  int c = 4, batch = 1, warmup = 3, repeats = 50, threads = 1;
};

int run_bench(const BenchArgs& a) {
  if (a.threads != 1) {
    throw CLI::ValidationError("--threads", "the inference path is single-threaded; only 1 is supported");
  }
  MattingModel model = MattingModel::load(a.checkpoint);
  BenchConfig cfg;
  cfg.resolutions = parse_resolutions(a.resolutions);
  cfg.budgets = parse_budgets(a.k);
  cfg.c = a.c;
  cfg.batch = a.batch;
  cfg.warmup = a.warmup;
  cfg.repeats = a.repeats;
  const BenchResult r = bench(model, cfg);
  if (a.out.empty() || a.out == "-") {
    write_bench_csv(std::cout, r);
  } else {
    std::ofstream out(a.out);
    if (!out) throw IoError("cannot write " + a.out);
    write_bench_csv(out, r);
  }
  return 0;
}

int run_make_trimap(const std::string& alpha, const std::string& out, const TrimapConfig& cfg) {
  const Trimap t = make_trimap(read_alpha(alpha), cfg);
  write_png(out, t.to_raster(), 8);
  std::printf("unknown %zu  foreground %zu  background %zu\n", t.count(TrimapLabel::unknown),
              t.count(TrimapLabel::foreground), t.count(TrimapLabel::background));
  return 0;
}

int run_generate(const std::string& spec_path, std::size_t count, const fs::path& out, std::uint64_t seed) {
  const SynthSpec spec = spec_path.empty() ? SynthSpec{} : SynthSpec::from_keyvalues(KeyValues::load(spec_path));
  write_dataset(out, spec, count, seed);
  std::cout << "wrote " << count << " samples to " << out.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Background matting: train, infer, evaluate and benchmark"};
  app.require_subcommand(1);

  std::string train_config, train_out;
  int log_every = 10;
  auto* train = app.add_subcommand("train", "Run a staged training schedule");
  train->add_option("--config", train_config, "Training configuration (key = value)")->required()->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "Run directory; an existing latest.ckpt is resumed")->required();
  train->add_option("--log-every", log_every, "Print every n-th step (0 disables)");

  InferArgs ia;
  auto* infer = app.add_subcommand("infer", "Matte one image against its captured background");
  infer->add_option("--image", ia.image)->required()->check(CLI::ExistingFile);
  infer->add_option("--background", ia.background)->required()->check(CLI::ExistingFile);
  infer->add_option("--checkpoint", ia.checkpoint)->required()->check(CLI::ExistingFile);
  infer->add_option("--new-background", ia.new_background, "Also write composite.png over this image")
      ->check(CLI::ExistingFile);
  infer->add_option("--k", ia.k, "Patch budget: count, percentage of 4x4 cells, or full");
  infer->add_option("--c", ia.c, "Base-network downsample factor")->check(CLI::IsMember({4, 8}));
  infer->add_option("--out-dir", ia.out_dir);
  infer->add_flag("--error-map", ia.write_error, "Also write error.png");

  EvalArgs ea;
  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on an fgr/pha/bgr directory");
  evaluate->add_option("--data", ea.data)->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--checkpoint", ea.checkpoint)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--out", ea.out, "CSV path, or - for stdout");
  evaluate->add_option("--k", ea.k);
  evaluate->add_option("--c", ea.c)->check(CLI::IsMember({4, 8}));
  evaluate->add_option("--per-sample", ea.per_sample, "Backgrounds per sample");
  evaluate->add_option("--seed", ea.seed, "Seed of the background perturbation");
  evaluate->add_option("--trimap-mode", ea.trimap_mode, "erode or close");
  evaluate->add_flag("--coarse", ea.coarse, "Skip refinement (k = 0)");
  evaluate->add_flag("--no-perturb", ea.no_perturb, "Hand the model the clean background");

  BenchArgs ba;
  auto* benchc = app.add_subcommand("bench", "Time model pass-through against the patch budget");
  benchc->add_option("--checkpoint", ba.checkpoint)->required()->check(CLI::ExistingFile);
  benchc->add_option("--resolutions", ba.resolutions, "Comma-separated WxH list");
  benchc->add_option("--k", ba.k, "Comma-separated budgets, e.g. 0,256,4%,full");
  benchc->add_option("--repeats", ba.repeats)->check(CLI::PositiveNumber);
  benchc->add_option("--warmup", ba.warmup)->check(CLI::NonNegativeNumber);
  benchc->add_option("--c", ba.c)->check(CLI::IsMember({4, 8}));
  benchc->add_option("--batch", ba.batch)->check(CLI::PositiveNumber);
  benchc->add_option("--threads", ba.threads, "Worker threads (pinned)");
  benchc->add_option("--out", ba.out, "CSV path, or - for stdout");

  std::string trimap_alpha, trimap_out = "trimap.png", trimap_mode = "erode";
  TrimapConfig tcfg;
  auto* trimap = app.add_subcommand("make-trimap", "Derive a trimap from a ground-truth alpha");
  trimap->add_option("--alpha", trimap_alpha)->required()->check(CLI::ExistingFile);
  trimap->add_option("--lo", tcfg.lo);
  trimap->add_option("--hi", tcfg.hi);
  trimap->add_option("--iters", tcfg.iterations)->check(CLI::NonNegativeNumber);
  trimap->add_option("--mode", trimap_mode, "erode or close");
  trimap->add_option("--out", trimap_out);

  std::string gen_spec, gen_out;
  std::size_t gen_count = 16;
  std::uint64_t gen_seed = 0;
  auto* generate = app.add_subcommand("generate", "Write a synthetic fgr/pha/bgr dataset");
  generate->add_option("--spec", gen_spec, "Generator settings (key = value)")->check(CLI::ExistingFile);
  generate->add_option("--count", gen_count)->check(CLI::PositiveNumber);
  generate->add_option("--out", gen_out)->required();
  generate->add_option("--seed", gen_seed, "Seed of the first sample");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return run_train(train_config, train_out, log_every);
    if (*infer) return run_infer(ia);
    if (*evaluate) return run_evaluate(ea);
    if (*benchc) return run_bench(ba);
    if (*trimap) {
      tcfg.mode = parse_trimap_mode(trimap_mode);
      return run_make_trimap(trimap_alpha, trimap_out, tcfg);
    }
    if (*generate) return run_generate(gen_spec, gen_count, gen_out, gen_seed);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

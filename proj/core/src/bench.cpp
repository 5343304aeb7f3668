#include "bgm/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "bgm/datasetgen.hpp"
#include "bgm/keyvalue.hpp"
#include "bgm/png_io.hpp"

namespace bgm {

PatchBudget PatchBudget::parse(const std::string& text) {
  const std::string t = trim(text);
  if (t == "full") return {Kind::full, 1.0};
  try {
    std::size_t pos = 0;
    if (!t.empty() && t.back() == '%') {
      const double pct = std::stod(t.substr(0, t.size() - 1), &pos);
      if (pos != t.size() - 1 || pct < 0 || pct > 100) throw std::invalid_argument(t);
      return {Kind::fraction, pct / 100.0};
    }
    const long long n = std::stoll(t, &pos);
    if (pos != t.size() || n < 0) throw std::invalid_argument(t);
    return {Kind::count, static_cast<double>(n)};
  } catch (const std::exception&) {
    throw std::invalid_argument("patch budget '" + text + "' must be a count, a percentage or 'full'");
  }
}

std::size_t PatchBudget::resolve(int height, int width, int batch) const {
  const auto cells = static_cast<std::size_t>(batch) * static_cast<std::size_t>(height / 4) * (width / 4);
  switch (kind) {
    case Kind::full:
      return cells;
    case Kind::fraction:
      return static_cast<std::size_t>(std::llround(value * static_cast<double>(cells)));
    case Kind::count:
      break;
  }
  return static_cast<std::size_t>(value);
}

std::string PatchBudget::label() const {
  switch (kind) {
    case Kind::full:
      return "full";
    case Kind::fraction: {
      std::string s = std::to_string(value * 100.0);
      s.erase(s.find_last_not_of('0') + 1);
      if (s.back() == '.') s.pop_back();
      return s + "%";
    }
    case Kind::count:
      break;
  }
  return std::to_string(static_cast<long long>(value));
}

std::vector<PatchBudget> parse_budgets(const std::string& csv) {
  std::vector<PatchBudget> out;
  for (const auto& part : split(csv, ',')) out.push_back(PatchBudget::parse(part));
  if (out.empty()) throw std::invalid_argument("no patch budgets given");
  return out;
}

std::vector<std::pair<int, int>> parse_resolutions(const std::string& csv) {
  std::vector<std::pair<int, int>> out;
  for (const auto& part : split(csv, ',')) {
    const auto x = part.find('x');
    try {
      if (x == std::string::npos) throw std::invalid_argument(part);
      const int w = std::stoi(part.substr(0, x)), h = std::stoi(part.substr(x + 1));
      if (w < 1 || h < 1) throw std::invalid_argument(part);
      out.emplace_back(h, w);
    } catch (const std::exception&) {
      throw std::invalid_argument("resolution '" + part + "' must look like 512x384 (width x height)");
    }
  }
  if (out.empty()) throw std::invalid_argument("no resolutions given");
  return out;
}

BenchResult bench(MattingModel& model, const BenchConfig& cfg) {
  if (cfg.repeats < 1 || cfg.warmup < 0 || cfg.batch < 1) throw std::invalid_argument("bench: invalid repeat settings");
  std::vector<PatchBudget> budgets = cfg.budgets;
  if (budgets.empty()) budgets = {PatchBudget{}, PatchBudget{PatchBudget::Kind::full, 1.0}};
  BenchResult result;
  SynthSpec spec;
  for (const auto& [h, w] : cfg.resolutions) {
    const int m = 16 * cfg.c;
    if (h % m != 0 || w % m != 0) {
      throw ShapeError("bench: resolution " + std::to_string(w) + "x" + std::to_string(h) + " is not a multiple of " +
                       std::to_string(m));
    }
    // Inputs are prepared outside the timed region.
    Tensor4 image(cfg.batch, 3, h, w), background(cfg.batch, 3, h, w);
    for (int n = 0; n < cfg.batch; ++n) {
      const SynthSample s = generate_sample(spec, cfg.seed + static_cast<std::uint64_t>(n));
      const Image fg(resize(s.fg.raster(), h, w, Resample::bilinear));
      const AlphaMatte a(resize(s.alpha.raster(), h, w, Resample::bilinear));
      const Image bg(resize(s.bg.raster(), h, w, Resample::bilinear));
      const Image comp = composite(a, fg, bg);
      std::copy(comp.values().begin(), comp.values().end(), image.data() + image.index(n, 0, 0, 0));
      std::copy(bg.values().begin(), bg.values().end(), background.data() + background.index(n, 0, 0, 0));
    }
    for (const auto& budget : budgets) {
      RefineConfig rcfg;
      rcfg.c = cfg.c;
      rcfg.kernel = model.config().refine_kernel;
      rcfg.k = budget.resolve(h, w, cfg.batch);
      for (int i = 0; i < cfg.warmup; ++i) model.forward(image, background, rcfg, Mode::eval);

      std::vector<double> ms;
      ms.reserve(static_cast<std::size_t>(cfg.repeats));
      std::size_t patches = 0;
      const std::uint64_t opens_before = file_open_count();
      for (int i = 0; i < cfg.repeats; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        const ForwardResult r = model.forward(image, background, rcfg, Mode::eval);
        const auto t1 = std::chrono::steady_clock::now();
        patches = r.patches.size();
        ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count() / cfg.batch);
      }
      if (file_open_count() != opens_before) throw std::logic_error("bench: a file was opened inside the timed region");

      BenchRow row;
      row.height = h;
      row.width = w;
      row.c = cfg.c;
      row.batch = cfg.batch;
      row.k_label = budget.label();
      row.k = rcfg.k;
      row.patches = patches;
      row.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
      std::nth_element(ms.begin(), ms.begin() + static_cast<std::ptrdiff_t>(ms.size() / 2), ms.end());
      row.median_ms = ms[ms.size() / 2];
      if (ms.size() % 2 == 0) {
        const double lower = *std::max_element(ms.begin(), ms.begin() + static_cast<std::ptrdiff_t>(ms.size() / 2));
        row.median_ms = 0.5 * (row.median_ms + lower);
      }
      row.fps = 1000.0 / row.median_ms;
      row.refined_fraction = 16.0 * static_cast<double>(patches) / (static_cast<double>(cfg.batch) * h * w);
      result.rows.push_back(row);
    }
  }
  std::stable_sort(result.rows.begin(), result.rows.end(), [](const BenchRow& a, const BenchRow& b) {
    if (a.height * a.width != b.height * b.width) return a.height * a.width < b.height * b.width;
    if (a.height != b.height) return a.height < b.height;
    return a.k < b.k;
  });
  return result;
}

void write_bench_csv(std::ostream& out, const BenchResult& result) {
  out << "height,width,c,k,k_resolved,batch,patches,median_ms,mean_ms,fps,refined_fraction\n";
  const auto old = out.precision(8);
  for (const auto& r : result.rows) {
    out << r.height << ',' << r.width << ',' << r.c << ',' << r.k_label << ',' << r.k << ',' << r.batch << ','
        << r.patches << ',' << r.median_ms << ',' << r.mean_ms << ',' << r.fps << ',' << r.refined_fraction << '\n';
  }
  out.precision(old);
}

}  // namespace bgm

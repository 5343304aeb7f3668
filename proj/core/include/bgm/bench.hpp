#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "bgm/model.hpp"

namespace bgm {

/// A patch budget: an absolute count, a fraction of all 4x4 cells, or every cell.
struct PatchBudget {
  enum class Kind { count, fraction, full } kind = Kind::count;
  double value = 0;

  static PatchBudget parse(const std::string& text);  // "1024", "4%", "full"
  std::size_t resolve(int height, int width, int batch) const;
  std::string label() const;
};

std::vector<PatchBudget> parse_budgets(const std::string& csv);
/// "256x256,512x384" -> {(256,256), (512,384)} as (height, width).
std::vector<std::pair<int, int>> parse_resolutions(const std::string& csv);

struct BenchConfig {
  std::vector<std::pair<int, int>> resolutions{{256, 256}, {512, 512}};
  std::vector<PatchBudget> budgets;
  int c = 4;
  int batch = 1;
  int warmup = 3;
  int repeats = 50;
  std::uint64_t seed = 7;
};

struct BenchRow {
  int height = 0, width = 0, c = 4, batch = 1;
  std::string k_label;
  std::size_t k = 0;           // resolved budget
  std::size_t patches = 0;     // patches actually refined
  double median_ms = 0;        // per frame
  double mean_ms = 0;          // per frame
  double fps = 0;              // 1000 / median_ms
  double refined_fraction = 0; // refined pixels / all pixels
};

struct BenchResult {
  std::vector<BenchRow> rows;  // sorted by (resolution, k)
};

/// Times model pass-through (eval-mode forward, inputs already in memory)
/// for every resolution and budget. Warmup runs precede timing; no file may
/// be opened inside the timed region (checked via file_open_count()).
BenchResult bench(MattingModel& model, const BenchConfig& cfg);

/// Header: height,width,c,k,k_resolved,batch,patches,median_ms,mean_ms,fps,refined_fraction
void write_bench_csv(std::ostream& out, const BenchResult& result);

}  // namespace bgm

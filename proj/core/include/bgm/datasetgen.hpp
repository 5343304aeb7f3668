#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bgm/imagecore.hpp"
#include "bgm/keyvalue.hpp"

namespace bgm {

enum class SubjectKind { blob = 0, strands = 1, polygon = 2 };
enum class BackgroundKind { flat = 0, gradient = 1, noise = 2, checker = 3 };

/// Parameters of the procedural foreground/alpha/background generator.
struct SynthSpec {
  int size_lo = 192, size_hi = 256;  // height and width drawn independently
  int size_multiple = 64;            // sides are rounded down to a multiple of this

  std::array<double, 3> subject_weights{0.3, 0.4, 0.3};  // blob, strands, polygon
  double strands_on_body_prob = 0.5;  // blob and polygon subjects also grow strands
  int strand_count_lo = 12, strand_count_hi = 40;
  double strand_width_lo = 0.6, strand_width_hi = 2.0;  // pixels
  double strand_opacity_lo = 0.35, strand_opacity_hi = 0.9;

  std::array<double, 4> background_weights{1, 1, 1, 1};  // flat, gradient, noise, checker

  void validate() const;
  static SynthSpec from_keyvalues(const KeyValues& kv);
  KeyValues to_keyvalues() const;
};

struct SynthSample {
  Image fg;
  AlphaMatte alpha;
  Image bg;
  SubjectKind subject;
  BackgroundKind background;
};

/// Deterministic in (spec, seed). alpha has solid interior, fractional edges
/// and, for strand subjects, thin partially transparent strands. fg is
/// defined and non-zero on the whole canvas.
SynthSample generate_sample(const SynthSpec& spec, std::uint64_t seed);

/// Just the background of generate_sample, at a chosen size.
Image generate_background(const SynthSpec& spec, int height, int width, std::uint64_t seed,
                          BackgroundKind* kind = nullptr);

/// On-disk layout: fgr/, pha/ and bgr/ hold NNNN.png files (16-bit) and
/// manifest.txt lists `index seed` per line.
void write_dataset(const std::filesystem::path& dir, const SynthSpec& spec, std::size_t count,
                   std::uint64_t first_seed);

struct DatasetEntry {
  std::string name;  // file stem
  std::filesystem::path fgr, pha;
};

struct DatasetListing {
  std::vector<DatasetEntry> samples;  // sorted by name; entries missing a file are kept with an empty path
  std::vector<std::filesystem::path> backgrounds;
};

DatasetListing list_dataset(const std::filesystem::path& dir);

}  // namespace bgm

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>

#include "bgm/imagecore.hpp"

namespace bgm {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads an 8- or 16-bit PNG. Gray files give 1 channel, color files 3;
/// any alpha channel in the file is dropped. Values are code / max_code.
Raster read_png(const std::filesystem::path& path);

/// Writes 1- or 3-channel rasters; `bit_depth` is 8 or 16. Values are clamped
/// to [0,1] and rounded to the nearest code.
void write_png(const std::filesystem::path& path, const Raster& raster, int bit_depth = 8);

Image read_image(const std::filesystem::path& path);
AlphaMatte read_alpha(const std::filesystem::path& path);

/// Number of files opened by this library since process start. The benchmark
/// harness reads it before and after its timed region.
std::uint64_t file_open_count();
void note_file_open();

}  // namespace bgm

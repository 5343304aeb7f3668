#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "bgm/parameters.hpp"

namespace bgm {

/// Checkpoint file layout, version 1. All integers and doubles little-endian.
///
///   char[8]  magic "BGMCKPT\0"
///   u32      format version (1)
///   u64      architecture config hash
///   str      architecture config text       (str = u32 length + bytes)
///   u32      metadata count, then (str key, str value) pairs
///   i64      optimizer step counter
///   u32      entry count, then per entry:
///              str name, u8 group, u8 trainable, i64 adam_steps,
///              u32 ndims, i32 dims[ndims],
///              f64 value[n], f64 adam_m[n], f64 adam_v[n]
struct Checkpoint {
  std::string config_text;
  std::uint64_t config_hash = 0;
  std::map<std::string, std::string> metadata;
  ParameterStore params;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies every value and optimizer moment of `src` into the matching entry
/// of `dst`. Missing entries or shape disagreements throw ShapeError.
void copy_parameters(const ParameterStore& src, ParameterStore& dst);

std::uint64_t hash_text(const std::string& text);

}  // namespace bgm

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace bgm {

enum class ParamGroup : std::uint8_t { backbone = 0, aspp = 1, decoder = 2, refiner = 3 };
inline constexpr std::size_t kParamGroupCount = 4;
const char* to_string(ParamGroup g);

/// One named array plus its gradient and Adam moments. Non-trainable entries
/// (batch-norm running statistics) are stored and checkpointed but never
/// touched by the optimizer.
struct Parameter {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  ParamGroup group = ParamGroup::backbone;
  bool trainable = true;
  std::int64_t adam_steps = 0;  // bias-correction counter; advances only when updated

  std::size_t size() const { return value.size(); }
};

class ParameterStore {
 public:
  /// Registers a zero-initialised entry, or returns the existing one after
  /// checking its shape and group.
  Parameter& add(const std::string& name, std::vector<int> shape, ParamGroup group, bool trainable = true);

  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  std::map<std::string, Parameter>& entries() { return entries_; }
  const std::map<std::string, Parameter>& entries() const { return entries_; }

  void zero_grad();
  std::size_t trainable_count() const;

  std::int64_t step = 0;

 private:
  std::map<std::string, Parameter> entries_;
};

/// Learning rate per ParamGroup. A rate of exactly zero skips the group.
using GroupRates = std::array<double, kParamGroupCount>;

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(const std::string& param)
      : std::runtime_error("non-finite gradient in parameter '" + param + "'"), parameter(param) {}
  std::string parameter;
};

/// Bias-corrected Adam. Increments store.step and the per-entry counter of
/// every updated entry, then zeroes every gradient.
/// Throws NonFiniteGradient (before touching any value) if a gradient of a
/// trainable parameter in an active group is NaN or infinite.
void adam_step(ParameterStore& store, const GroupRates& lr, const AdamConfig& cfg = {});

}  // namespace bgm

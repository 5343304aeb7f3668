#include "bgm/parameters.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "bgm/imagecore.hpp"

namespace bgm {

const char* to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::backbone: return "backbone";
    case ParamGroup::aspp: return "aspp";
    case ParamGroup::decoder: return "decoder";
    case ParamGroup::refiner: return "refiner";
  }
  return "?";
}

Parameter& ParameterStore::add(const std::string& name, std::vector<int> shape, ParamGroup group, bool trainable) {
  const std::size_t count =
      std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<std::size_t>());
  auto it = entries_.find(name);
  if (it != entries_.end()) {
    if (it->second.shape != shape || it->second.group != group || it->second.trainable != trainable) {
      throw ShapeError("ParameterStore: '" + name + "' re-registered with a different layout");
    }
    return it->second;
  }
  Parameter p;
  p.shape = std::move(shape);
  p.value.assign(count, 0.0);
  p.grad.assign(count, 0.0);
  p.adam_m.assign(count, 0.0);
  p.adam_v.assign(count, 0.0);
  p.group = group;
  p.trainable = trainable;
  return entries_.emplace(name, std::move(p)).first->second;
}

Parameter& ParameterStore::get(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("ParameterStore: no parameter '" + name + "'");
  return it->second;
}

const Parameter& ParameterStore::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("ParameterStore: no parameter '" + name + "'");
  return it->second;
}

void ParameterStore::zero_grad() {
  for (auto& [name, p] : entries_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

std::size_t ParameterStore::trainable_count() const {
  std::size_t total = 0;
  for (const auto& [name, p] : entries_)
    if (p.trainable) total += p.size();
  return total;
}

void adam_step(ParameterStore& store, const GroupRates& lr, const AdamConfig& cfg) {
  for (const auto& [name, p] : store.entries()) {
    if (!p.trainable || lr[static_cast<std::size_t>(p.group)] == 0.0) continue;
    for (double g : p.grad)
      if (!std::isfinite(g)) throw NonFiniteGradient(name);
  }
  store.step += 1;
  for (auto& [name, p] : store.entries()) {
    const double rate = lr[static_cast<std::size_t>(p.group)];
    if (p.trainable && rate != 0.0) {
      p.adam_steps += 1;
      const double t = static_cast<double>(p.adam_steps);
      const double bc1 = 1.0 - std::pow(cfg.beta1, t);
      const double bc2 = 1.0 - std::pow(cfg.beta2, t);
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        p.adam_m[i] = cfg.beta1 * p.adam_m[i] + (1.0 - cfg.beta1) * g;
        p.adam_v[i] = cfg.beta2 * p.adam_v[i] + (1.0 - cfg.beta2) * g * g;
        const double mhat = p.adam_m[i] / bc1;
        const double vhat = p.adam_v[i] / bc2;
        p.value[i] -= rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
      }
    }
    std::fill(p.grad.begin(), p.grad.end(), 0.0);
  }
}

}  // namespace bgm

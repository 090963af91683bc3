#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "dtcn/tensor.hpp"

namespace dtcn {

/// Handle to a parameter inside a ParamStore. Stable across store growth.
struct ParamId {
  std::size_t index = static_cast<std::size_t>(-1);
  bool valid() const { return index != static_cast<std::size_t>(-1); }
  friend bool operator==(ParamId, ParamId) = default;
};

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
};

/// Named parameters with matching gradient slots.
class ParamStore {
 public:
  ParamId add(const std::string& name, Tensor value) {
    if (by_name_.contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    ParamId id{params_.size()};
    Tensor grad(value.shape());
    params_.push_back({name, std::move(value), std::move(grad)});
    by_name_.emplace(name, id.index);
    return id;
  }

  Tensor& value(ParamId id) { return params_.at(id.index).value; }
  const Tensor& value(ParamId id) const { return params_.at(id.index).value; }
  Tensor& grad(ParamId id) { return params_.at(id.index).grad; }
  const Tensor& grad(ParamId id) const { return params_.at(id.index).grad; }

  ParamId find(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw std::out_of_range("no parameter named " + name);
    return ParamId{it->second};
  }
  bool contains(const std::string& name) const { return by_name_.contains(name); }

  std::size_t size() const { return params_.size(); }
  std::vector<Param>& all() { return params_; }
  const std::vector<Param>& all() const { return params_; }

  std::size_t count_scalars() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.grad.fill(0.0);
  }

  double grad_norm() const {
    double s = 0.0;
    for (const auto& p : params_) s += sum_sq(p.grad.data());
    return std::sqrt(s);
  }

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

/// splitmix64 finalizer; used to derive independent RNG streams from (seed, id).
constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

inline Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

inline Tensor fan_in_init(Shape shape, std::size_t fan_in, Rng& rng) {
  return uniform_tensor(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

}  // namespace dtcn

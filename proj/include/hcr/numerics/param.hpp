#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "hcr/numerics/errors.hpp"
#include "hcr/numerics/rng.hpp"
#include "hcr/numerics/tensor.hpp"

namespace hcr {

struct Param {
  Tensor tensor;
  std::string name;
};

/// Owns every learnable tensor of a model, in registration order.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  Tensor add(const std::string& name, Tensor t) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    t.set_requires_grad(true);
    index_[name] = params_.size();
    params_.push_back({t, name});
    return t;
  }

  /// Weight [fan_in × fan_out] ~ U(±1/sqrt(fan_in)).
  Tensor add_weight(const std::string& name, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    return add(name, uniform_tensor({fan_in, fan_out}, fan_in, rng));
  }
  /// Bias [fan_out] ~ U(±1/sqrt(fan_in)).
  Tensor add_bias(const std::string& name, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    return add(name, uniform_tensor({fan_out}, fan_in, rng));
  }
  Tensor add_constant(const std::string& name, Shape shape, double v) {
    return add(name, Tensor::full(std::move(shape), v));
  }

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  std::size_t size() const { return params_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Tensor& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return params_[it->second].tensor;
  }
  const Tensor& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return params_[it->second].tensor;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

 private:
  static Tensor uniform_tensor(Shape shape, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = rng.uniform(-bound, bound);
    return Tensor(std::move(shape), std::move(v));
  }

  std::vector<Param> params_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace hcr

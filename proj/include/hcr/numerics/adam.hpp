#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "hcr/numerics/errors.hpp"
#include "hcr/numerics/param.hpp"

namespace hcr {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment buffers, one pair per parameter in store order.
struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamState for_params(const std::vector<Param>& params) {
    AdamState s;
    for (const auto& p : params) {
      s.m.emplace_back(p.tensor.numel(), 0.0);
      s.v.emplace_back(p.tensor.numel(), 0.0);
    }
    return s;
  }
};

/// One bias-corrected Adam update using each parameter's accumulated grad.
/// Parameters without a gradient buffer are treated as having zero gradient.
inline void adam_step(std::vector<Param>& params, AdamState& state, double lr,
                      const AdamOptions& opt = {}) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adam_step: optimizer state does not match parameter list");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& w = params[i].tensor;
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != w.numel() || v.size() != w.numel()) {
      throw DimensionError("adam_step: state shape mismatch for " + params[i].name);
    }
    const bool has = w.has_grad();
    auto g = w.grad();
    auto x = w.mutable_data();
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double gk = has ? g[k] : 0.0;
      m[k] = opt.beta1 * m[k] + (1.0 - opt.beta1) * gk;
      v[k] = opt.beta2 * v[k] + (1.0 - opt.beta2) * gk * gk;
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      x[k] -= lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
  }
}

}  // namespace hcr

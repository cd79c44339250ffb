#pragma once

#include "hcr/numerics/errors.hpp"
#include "hcr/numerics/ops.hpp"
#include "hcr/numerics/rng.hpp"

namespace hcr {

/// Per-forward switches: dropout is active only when `training` is set, and
/// then draws its masks from `rng`.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;

  Tensor drop(const Tensor& x, double p) const {
    if (!training || p == 0.0) {
      Rng unused;
      return dropout(x, p, false, unused);
    }
    if (!rng) throw ConfigError("training forward pass needs an rng for dropout");
    return dropout(x, p, true, *rng);
  }
};

}  // namespace hcr

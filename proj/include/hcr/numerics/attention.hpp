#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hcr/numerics/ops.hpp"
#include "hcr/numerics/param.hpp"

namespace hcr {

/// Affine token map with registered weight [in×out] and bias [out].
struct Linear {
  Tensor weight;
  Tensor bias;

  Linear() = default;
  Linear(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng)
      : weight(store.add_weight(prefix + ".weight", in, out, rng)),
        bias(store.add_bias(prefix + ".bias", in, out, rng)) {}

  Tensor operator()(const Tensor& x) const { return pointwise_linear(x, weight, bias); }

  void zero() {
    for (double& v : weight.mutable_data()) v = 0.0;
    for (double& v : bias.mutable_data()) v = 0.0;
  }
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;
  double eps = 1e-5;

  LayerNormParams() = default;
  LayerNormParams(ParamStore& store, const std::string& prefix, std::size_t dim)
      : gamma(store.add_constant(prefix + ".gamma", {dim}, 1.0)),
        beta(store.add_constant(prefix + ".beta", {dim}, 0.0)) {}

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }
};

/// Scaled dot-product self-attention with `heads` heads of width dim/heads and
/// an output projection.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& store, const std::string& prefix, std::size_t dim,
                     std::size_t heads, Rng& rng)
      : dim_(dim), heads_(heads) {
    if (heads == 0 || dim % heads != 0) {
      throw ConfigError("multi-head attention: model dim " + std::to_string(dim) +
                        " is not divisible by " + std::to_string(heads) + " heads");
    }
    q_ = Linear(store, prefix + ".q", dim, dim, rng);
    k_ = Linear(store, prefix + ".k", dim, dim, rng);
    v_ = Linear(store, prefix + ".v", dim, dim, rng);
    o_ = Linear(store, prefix + ".o", dim, dim, rng);
  }

  std::size_t dim() const { return dim_; }
  std::size_t heads() const { return heads_; }
  Linear& value_proj() { return v_; }
  Linear& output_proj() { return o_; }

  /// x [t×D] -> [t×D]. When `weights` is non-null it receives one t×t
  /// attention matrix per head.
  Tensor operator()(const Tensor& x, std::vector<Tensor>* weights = nullptr) const {
    detail::require_matrix(x, "multi_head_attention");
    if (x.dim(1) != dim_) {
      throw DimensionError("multi_head_attention: expected width " + std::to_string(dim_) +
                           ", got " + shape_str(x.shape()));
    }
    const std::size_t dh = dim_ / heads_;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    const Tensor q = q_(x), k = k_(x), v = v_(x);
    std::vector<Tensor> outs;
    outs.reserve(heads_);
    for (std::size_t h = 0; h < heads_; ++h) {
      const Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
      const Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
      const Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
      const Tensor attn = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), 1);
      if (weights) weights->push_back(attn);
      outs.push_back(matmul(attn, vh));
    }
    const Tensor merged = heads_ == 1 ? outs.front() : concat_cols(outs);
    return o_(merged);
  }

 private:
  std::size_t dim_ = 0;
  std::size_t heads_ = 1;
  Linear q_, k_, v_, o_;
};

}  // namespace hcr

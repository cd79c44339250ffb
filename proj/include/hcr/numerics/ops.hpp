#pragma once

// Differentiable primitives. Matrices are rank-2 row-major tensors; bias and
// LayerNorm vectors are rank-1.

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "hcr/numerics/errors.hpp"
#include "hcr/numerics/rng.hpp"
#include "hcr/numerics/tensor.hpp"

namespace hcr {

namespace detail {

inline void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
  }
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

inline void require_finite(std::span<const double> v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " * " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return Tensor::from_op({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const double* g = self.grad.data();
    const double* A = self.parents[0]->value.data();
    const double* B = self.parents[1]->value.data();
    if (double* ga = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * B[p * n + j];
          ga[i * k + p] += s;
        }
    }
    if (double* gb = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
        }
    }
  });
}

inline Tensor transpose(const Tensor& a) {
  detail::require_matrix(a, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.data()[i * c + j];
  return Tensor::from_op({c, r}, std::move(out), {a}, [r, c](Node& self) {
    double* ga = parent_grad(self, 0);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += self.grad[j * r + i];
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p)
      if (double* g = parent_grad(self, p))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (double* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (double* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
  });
}

/// Elementwise product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (double* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    if (double* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
  });
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * s;
  return Tensor::from_op(a.shape(), std::move(out), {a}, [s](Node& self) {
    double* g = parent_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * s;
  });
}

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tensor::from_op({}, {s}, {a}, [](Node& self) {
    double* g = parent_grad(self, 0);
    const std::size_t n = self.parents[0]->value.size();
    for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
  });
}

/// x[t×D] + row, where row is [D] or [1×D], added to every row of x.
inline Tensor add_row(const Tensor& x, const Tensor& row) {
  detail::require_matrix(x, "add_row");
  const std::size_t t = x.dim(0), d = x.dim(1);
  if (row.numel() != d || (row.rank() == 2 && row.dim(0) != 1) || row.rank() > 2) {
    throw DimensionError("add_row: cannot broadcast " + shape_str(row.shape()) + " over " +
                         shape_str(x.shape()));
  }
  std::vector<double> out(t * d);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x[i * d + j] + row[j];
  return Tensor::from_op({t, d}, std::move(out), {x, row}, [t, d](Node& self) {
    if (double* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < t * d; ++i) g[i] += self.grad[i];
    if (double* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[i * d + j];
  });
}

inline Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return Tensor::from_op(x.shape(), std::move(out), {x}, [](Node& self) {
    double* g = parent_grad(self, 0);
    const auto& xv = self.parents[0]->value;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (xv[i] > 0.0) g[i] += self.grad[i];
  });
}

/// Softmax along `axis` (0 or 1 for matrices, 0 for vectors), max-subtracted.
inline Tensor softmax(const Tensor& x, std::size_t axis) {
  if (x.rank() == 0 || x.rank() > 2 || axis >= x.rank()) {
    throw DimensionError("softmax: invalid axis " + std::to_string(axis) + " for shape " +
                         shape_str(x.shape()));
  }
  detail::require_finite(x.data(), "softmax");
  const std::size_t rows = x.rank() == 2 ? x.dim(0) : 1;
  const std::size_t cols = x.cols();
  // Lanes are the 1-D slices being normalised.
  const bool along_rows = (x.rank() == 1) || axis == 1;
  const std::size_t lanes = along_rows ? rows : cols;
  const std::size_t len = along_rows ? cols : rows;
  const std::size_t stride = along_rows ? 1 : cols;
  auto lane_start = [=](std::size_t l) { return along_rows ? l * cols : l; };

  std::vector<double> out(x.numel());
  for (std::size_t l = 0; l < lanes; ++l) {
    const std::size_t s = lane_start(l);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, x[s + k * stride]);
    double z = 0.0;
    for (std::size_t k = 0; k < len; ++k) {
      const double e = std::exp(x[s + k * stride] - mx);
      out[s + k * stride] = e;
      z += e;
    }
    for (std::size_t k = 0; k < len; ++k) out[s + k * stride] /= z;
  }
  return Tensor::from_op(x.shape(), std::move(out), {x},
                         [=](Node& self) {
                           double* g = parent_grad(self, 0);
                           const auto& y = self.value;
                           for (std::size_t l = 0; l < lanes; ++l) {
                             const std::size_t s = lane_start(l);
                             double dot = 0.0;
                             for (std::size_t k = 0; k < len; ++k)
                               dot += self.grad[s + k * stride] * y[s + k * stride];
                             for (std::size_t k = 0; k < len; ++k) {
                               const std::size_t i = s + k * stride;
                               g[i] += y[i] * (self.grad[i] - dot);
                             }
                           }
                         });
}

/// Row-wise LayerNorm over the last dimension with affine gamma/beta [D].
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         double eps = 1e-5) {
  detail::require_matrix(x, "layer_norm");
  const std::size_t t = x.dim(0), d = x.dim(1);
  if (gamma.numel() != d || beta.numel() != d) {
    throw DimensionError("layer_norm: feature size " + std::to_string(d) + " vs gamma " +
                         shape_str(gamma.shape()) + ", beta " + shape_str(beta.shape()));
  }
  std::vector<double> out(t * d), xhat(t * d), inv_std(t);
  for (std::size_t i = 0; i < t; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += x[i * d + j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x[i * d + j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (x[i * d + j] - mu) * inv_std[i];
      out[i * d + j] = gamma[j] * xhat[i * d + j] + beta[j];
    }
  }
  return Tensor::from_op(
      {t, d}, std::move(out), {x, gamma, beta},
      [t, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const double* g = self.grad.data();
        const auto& gam = self.parents[1]->value;
        if (double* gx = parent_grad(self, 0)) {
          for (std::size_t i = 0; i < t; ++i) {
            double mean_g = 0.0, mean_gx = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double gh = g[i * d + j] * gam[j];
              mean_g += gh;
              mean_gx += gh * xhat[i * d + j];
            }
            mean_g /= static_cast<double>(d);
            mean_gx /= static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j) {
              const double gh = g[i * d + j] * gam[j];
              gx[i * d + j] += inv_std[i] * (gh - mean_g - xhat[i * d + j] * mean_gx);
            }
          }
        }
        if (double* gg = parent_grad(self, 1))
          for (std::size_t i = 0; i < t; ++i)
            for (std::size_t j = 0; j < d; ++j) gg[j] += g[i * d + j] * xhat[i * d + j];
        if (double* gb = parent_grad(self, 2))
          for (std::size_t i = 0; i < t; ++i)
            for (std::size_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
      });
}

/// Inverted dropout: identity unless training with p > 0.
inline Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
  if (!(p >= 0.0) || p >= 1.0) {
    throw NumericError("dropout: probability must lie in [0, 1), got " + std::to_string(p));
  }
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = rng.uniform() < p ? 0.0 : keep_scale;
    out[i] = x[i] * mask[i];
  }
  return Tensor::from_op(x.shape(), std::move(out), {x}, [mask = std::move(mask)](Node& self) {
    double* g = parent_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

/// Per-token affine map: x[t×a] · w[a×b] + bias[b].
inline Tensor pointwise_linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  detail::require_matrix(x, "pointwise_linear");
  detail::require_matrix(w, "pointwise_linear");
  if (x.dim(1) != w.dim(0) || bias.numel() != w.dim(1)) {
    throw DimensionError("pointwise_linear: x " + shape_str(x.shape()) + ", w " +
                         shape_str(w.shape()) + ", bias " + shape_str(bias.shape()));
  }
  return add_row(matmul(x, w), bias);
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t d = parts.front().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::require_matrix(p, "concat_rows");
    if (p.dim(1) != d) {
      throw DimensionError("concat_rows: column mismatch " + shape_str(parts.front().shape()) +
                           " vs " + shape_str(p.shape()));
    }
    total += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(total * d);
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    out.insert(out.end(), p.data().begin(), p.data().end());
    sizes.push_back(p.numel());
  }
  return Tensor::from_op({total, d}, std::move(out), parts, [sizes](Node& self) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < sizes.size(); ++p) {
      if (double* g = parent_grad(self, p))
        for (std::size_t i = 0; i < sizes[p]; ++i) g[i] += self.grad[off + i];
      off += sizes[p];
    }
  });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t r = parts.front().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::require_matrix(p, "concat_cols");
    if (p.dim(0) != r) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(parts.front().shape()) +
                           " vs " + shape_str(p.shape()));
    }
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<double> out(r * total);
  std::size_t off = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < widths[p]; ++j)
        out[i * total + off + j] = parts[p][i * widths[p] + j];
    off += widths[p];
  }
  return Tensor::from_op({r, total}, std::move(out), parts, [r, total, widths](Node& self) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < widths.size(); ++p) {
      if (double* g = parent_grad(self, p))
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < widths[p]; ++j)
            g[i * widths[p] + j] += self.grad[i * total + off + j];
      off += widths[p];
    }
  });
}

/// Columns [begin, end) of a matrix.
inline Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  detail::require_matrix(x, "slice_cols");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (begin >= end || end > c) throw DimensionError("slice_cols: bad range for " + shape_str(x.shape()));
  const std::size_t w = end - begin;
  std::vector<double> out(r * w);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x[i * c + begin + j];
  return Tensor::from_op({r, w}, std::move(out), {x}, [r, c, w, begin](Node& self) {
    double* g = parent_grad(self, 0);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) g[i * c + begin + j] += self.grad[i * w + j];
  });
}

/// Rows [begin, end) of a matrix.
inline Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  detail::require_matrix(x, "slice_rows");
  const std::size_t c = x.dim(1);
  if (begin >= end || end > x.dim(0)) throw DimensionError("slice_rows: bad range for " + shape_str(x.shape()));
  std::vector<double> out(x.data().begin() + begin * c, x.data().begin() + end * c);
  return Tensor::from_op({end - begin, c}, std::move(out), {x}, [begin, c](Node& self) {
    double* g = parent_grad(self, 0) + begin * c;
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

/// Per-column maximum over the rows of x[t×D] -> [1×D]. Ties go to the
/// earliest row.
inline Tensor max_rows(const Tensor& x) {
  detail::require_matrix(x, "max_rows");
  const std::size_t t = x.dim(0), d = x.dim(1);
  std::vector<double> out(d);
  std::vector<std::size_t> arg(d, 0);
  for (std::size_t j = 0; j < d; ++j) {
    out[j] = x[j];
    for (std::size_t i = 1; i < t; ++i) {
      if (x[i * d + j] > out[j]) {
        out[j] = x[i * d + j];
        arg[j] = i;
      }
    }
  }
  return Tensor::from_op({1, d}, std::move(out), {x}, [d, arg = std::move(arg)](Node& self) {
    double* g = parent_grad(self, 0);
    for (std::size_t j = 0; j < d; ++j) g[arg[j] * d + j] += self.grad[j];
  });
}

/// Per-column mean over the rows of x[t×D] -> [1×D].
inline Tensor mean_rows(const Tensor& x) {
  detail::require_matrix(x, "mean_rows");
  const std::size_t t = x.dim(0), d = x.dim(1);
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += x[i * d + j];
  for (double& v : out) v /= static_cast<double>(t);
  return Tensor::from_op({1, d}, std::move(out), {x}, [t, d](Node& self) {
    double* g = parent_grad(self, 0);
    const double inv = 1.0 / static_cast<double>(t);
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < d; ++j) g[i * d + j] += self.grad[j] * inv;
  });
}

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  return Tensor::from_op(std::move(shape), x.values(), {x}, [](Node& self) {
    double* g = parent_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

/// Mean over the batch of -log softmax(logits)[label]. Accepts [K] or [B×K].
inline Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
  if (logits.rank() == 0 || logits.rank() > 2) {
    throw DimensionError("cross_entropy: logits must be [K] or [B x K], got " + shape_str(logits.shape()));
  }
  const std::size_t b = logits.rows(), k = logits.cols();
  if (labels.size() != b) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                         std::to_string(b));
  }
  for (std::size_t l : labels) {
    if (l >= k) {
      throw NumericError("cross_entropy: label " + std::to_string(l) + " out of range [0," +
                         std::to_string(k) + ")");
    }
  }
  detail::require_finite(logits.data(), "cross_entropy");
  std::vector<double> probs(b * k);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double* row = logits.data().data() + i * k;
    double mx = row[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    loss += lse - row[labels[i]];
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] = std::exp(row[j] - lse);
  }
  loss /= static_cast<double>(b);
  return Tensor::from_op({}, {loss}, {logits},
                         [b, k, labels, probs = std::move(probs)](Node& self) {
                           double* g = parent_grad(self, 0);
                           const double s = self.grad[0] / static_cast<double>(b);
                           for (std::size_t i = 0; i < b; ++i)
                             for (std::size_t j = 0; j < k; ++j) {
                               const double onehot = j == labels[i] ? 1.0 : 0.0;
                               g[i * k + j] += s * (probs[i * k + j] - onehot);
                             }
                         });
}

}  // namespace hcr

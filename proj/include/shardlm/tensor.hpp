// Copyright (C) 2026 The shardlm Authors
// SPDX-License-Identifier: Apache-2.0

// Dense kernels for a decoder-only transformer.
//
// Every reduction accumulates in the scalar type in ascending index order.
// That order is part of the contract: ranks and the reference forward pass
// agree bit-for-bit whenever they see identical inputs.

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "shardlm/errors.hpp"

namespace shardlm {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using MatrixMap = Eigen::Map<Matrix<Scalar>>;

template <typename Scalar>
using ConstMatrixMap = Eigen::Map<const Matrix<Scalar>>;

/// Row-major f32 matrix; vectors are 1 x n.
using Tensor = Matrix<float>;

/// A (global vocabulary index, logit) pair produced by top-k selection.
struct Candidate {
  std::uint32_t index = 0;
  float value = 0.0f;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

/// Strict "ranks before" order: larger value first, lower index on ties.
inline bool ranks_before(const Candidate& a, const Candidate& b) {
  if (a.value != b.value) return a.value > b.value;
  return a.index < b.index;
}

inline std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
  std::ostringstream os;
  os << '[' << rows << 'x' << cols << ']';
  return os.str();
}

template <typename Derived>
std::string shape_string(const Eigen::MatrixBase<Derived>& m) {
  return shape_string(m.rows(), m.cols());
}

namespace detail {

template <typename A, typename B>
void require_same_shape(const char* op, const Eigen::MatrixBase<A>& a,
                        const Eigen::MatrixBase<B>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                         shape_string(b));
  }
}

}  // namespace detail

/// out = a * b, written into an existing destination (a registered
/// communication region, a block of a cache, ...).
template <typename DerivedA, typename DerivedB, typename DerivedOut>
void matmul_into(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
                 const Eigen::MatrixBase<DerivedOut>& out_) {
  auto& out = const_cast<Eigen::MatrixBase<DerivedOut>&>(out_);
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ " + shape_string(a) + " x " +
                         shape_string(b));
  }
  if (out.rows() != a.rows() || out.cols() != b.cols()) {
    throw DimensionError("matmul: destination " + shape_string(out) + " for " + shape_string(a) +
                         " x " + shape_string(b));
  }
  using Scalar = typename DerivedOut::Scalar;
  out.setZero();
  // i-p-j order: each out(i, j) still sees its terms for p = 0, 1, ... in turn.
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index p = 0; p < a.cols(); ++p) {
      const Scalar s = a(i, p);
      out.row(i) += s * b.row(p);
    }
  }
}

template <typename DerivedA, typename DerivedB>
Matrix<typename DerivedA::Scalar> matmul(const Eigen::MatrixBase<DerivedA>& a,
                                         const Eigen::MatrixBase<DerivedB>& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ " + shape_string(a) + " x " +
                         shape_string(b));
  }
  Matrix<typename DerivedA::Scalar> out(a.rows(), b.cols());
  matmul_into(a, b, out);
  return out;
}

template <typename DerivedA, typename DerivedB>
Matrix<typename DerivedA::Scalar> add(const Eigen::MatrixBase<DerivedA>& a,
                                      const Eigen::MatrixBase<DerivedB>& b) {
  detail::require_same_shape("add", a, b);
  return a + b;
}

template <typename Derived>
Matrix<typename Derived::Scalar> scale(const Eigen::MatrixBase<Derived>& x,
                                       typename Derived::Scalar factor) {
  return x * factor;
}

/// Row-wise numerically stable softmax.
template <typename Derived>
Matrix<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (x.cols() == 0) continue;
    Scalar max = x(i, 0);
    for (Eigen::Index j = 1; j < x.cols(); ++j) max = std::max(max, x(i, j));
    Scalar sum = 0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      y(i, j) = std::exp(x(i, j) - max);
      sum += y(i, j);
    }
    for (Eigen::Index j = 0; j < x.cols(); ++j) y(i, j) /= sum;
  }
  return y;
}

/// y = x / sqrt(mean(x^2) + eps) * gain, applied to every row of x.
template <typename DerivedX, typename DerivedG>
Matrix<typename DerivedX::Scalar> rms_norm(const Eigen::MatrixBase<DerivedX>& x,
                                           const Eigen::MatrixBase<DerivedG>& gain,
                                           typename DerivedX::Scalar eps) {
  using Scalar = typename DerivedX::Scalar;
  if (gain.rows() != 1 || gain.cols() != x.cols()) {
    throw DimensionError("rms_norm: gain " + shape_string(gain) + " does not match input " +
                         shape_string(x));
  }
  if (x.cols() == 0) throw DimensionError("rms_norm: empty row");
  if (!(eps > 0)) throw ArgumentError("rms_norm: eps must be positive");
  Matrix<Scalar> y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Scalar sum_sq = 0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) sum_sq += x(i, j) * x(i, j);
    const Scalar denom = std::sqrt(sum_sq / static_cast<Scalar>(x.cols()) + eps);
    for (Eigen::Index j = 0; j < x.cols(); ++j) y(i, j) = x(i, j) / denom * gain(0, j);
  }
  return y;
}

/// tanh-approximated GELU.
template <typename Derived>
Matrix<typename Derived::Scalar> gelu(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  const Scalar k_sqrt_2_over_pi = static_cast<Scalar>(0.7978845608028654);
  const Scalar k_cubic = static_cast<Scalar>(0.044715);
  return x.unaryExpr([=](Scalar v) {
    const Scalar inner = k_sqrt_2_over_pi * (v + k_cubic * v * v * v);
    return static_cast<Scalar>(0.5) * v * (static_cast<Scalar>(1) + std::tanh(inner));
  });
}

/// Causal multi-head attention.
///
/// q is m x (n_heads * d_head); the caches hold T >= m positions and row i
/// of q sits at position T - m + i, so it may attend to positions
/// 0 ..= T - m + i. Scores are scaled by 1/sqrt(d_head).
template <typename DerivedQ, typename DerivedK, typename DerivedV>
Matrix<typename DerivedQ::Scalar> attention(const Eigen::MatrixBase<DerivedQ>& q,
                                            const Eigen::MatrixBase<DerivedK>& k_cache,
                                            const Eigen::MatrixBase<DerivedV>& v_cache,
                                            Eigen::Index n_heads) {
  using Scalar = typename DerivedQ::Scalar;
  if (n_heads <= 0 || q.cols() % n_heads != 0) {
    throw DimensionError("attention: width " + std::to_string(q.cols()) +
                         " is not a multiple of n_heads=" + std::to_string(n_heads));
  }
  if (k_cache.cols() != q.cols() || v_cache.cols() != q.cols() ||
      k_cache.rows() != v_cache.rows()) {
    throw DimensionError("attention: q " + shape_string(q) + ", k " + shape_string(k_cache) +
                         ", v " + shape_string(v_cache));
  }
  if (k_cache.rows() < q.rows()) {
    throw DimensionError("attention: cache shorter than query block");
  }
  const Eigen::Index d_head = q.cols() / n_heads;
  const Eigen::Index total = k_cache.rows();
  const Scalar inv_scale = static_cast<Scalar>(1) / std::sqrt(static_cast<Scalar>(d_head));

  Matrix<Scalar> out = Matrix<Scalar>::Zero(q.rows(), q.cols());
  Matrix<Scalar> scores(1, total);
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    const Eigen::Index visible = total - q.rows() + i + 1;
    for (Eigen::Index h = 0; h < n_heads; ++h) {
      const Eigen::Index c0 = h * d_head;
      for (Eigen::Index t = 0; t < visible; ++t) {
        Scalar dot = 0;
        for (Eigen::Index d = 0; d < d_head; ++d) dot += q(i, c0 + d) * k_cache(t, c0 + d);
        scores(0, t) = dot * inv_scale;
      }
      const Matrix<Scalar> probs = softmax_rows(scores.leftCols(visible));
      for (Eigen::Index t = 0; t < visible; ++t) {
        const Scalar p = probs(0, t);
        for (Eigen::Index d = 0; d < d_head; ++d) out(i, c0 + d) += p * v_cache(t, c0 + d);
      }
    }
  }
  return out;
}

/// Index of the largest entry; the lowest index wins ties.
std::uint32_t argmax(std::span<const float> x);

/// The k largest entries ordered by ranks_before. index_offset is added to
/// every returned index (a shard's position in the global vocabulary).
std::vector<Candidate> topk(std::span<const float> x, std::size_t k,
                            std::uint32_t index_offset = 0);

template <typename Derived>
std::span<const float> row_span(const Eigen::PlainObjectBase<Derived>& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

}  // namespace shardlm

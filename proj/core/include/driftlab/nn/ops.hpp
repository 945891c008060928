#pragma once

#include <cstddef>
#include <span>

#include "driftlab/nn/graph.hpp"

namespace driftlab::nn {

/// Norm below which l2_normalize refuses to divide.
inline constexpr double kNormalizeFloor = 1e-12;

// All shapes are row-major; "batch" tensors are [n, features].

[[nodiscard]] Var matmul(Graph& g, Var a, Var b);
/// x[n,in] * w[in,out] + b[out]
[[nodiscard]] Var affine(Graph& g, Var x, Var w, Var b);
[[nodiscard]] Var relu(Graph& g, Var x);

[[nodiscard]] Var add(Graph& g, Var a, Var b);
[[nodiscard]] Var sub(Graph& g, Var a, Var b);
[[nodiscard]] Var mul(Graph& g, Var a, Var b);
[[nodiscard]] Var scale(Graph& g, Var a, double factor);
[[nodiscard]] Var add_scalar(Graph& g, Var a, double offset);

[[nodiscard]] Var sum(Graph& g, Var a);
[[nodiscard]] Var mean(Graph& g, Var a);

/// Unit Euclidean norm along `axis` (rank-1: axis 0; rank-2: 0 = columns, 1 = rows).
/// Throws NormalizationError when a slice norm is below kNormalizeFloor.
[[nodiscard]] Var l2_normalize(Graph& g, Var x, std::size_t axis = 1);

/// Per-row squared norm: [n, d] -> [n].
[[nodiscard]] Var row_squared_norm(Graph& g, Var x);
[[nodiscard]] Var gather_rows(Graph& g, Var x, std::span<const std::size_t> rows);
/// Per-row Euclidean distance between two [n, d] tensors -> [n].
/// The subgradient at zero distance is taken as zero.
[[nodiscard]] Var row_distance(Graph& g, Var a, Var b);
/// sqrt(sum of squares) over all entries; zero subgradient at the origin.
[[nodiscard]] Var frobenius_norm(Graph& g, Var x);

/// Mean negative log-softmax of the labelled logit. Throws std::out_of_range
/// for labels outside [0, cols).
[[nodiscard]] Var softmax_cross_entropy(Graph& g, Var logits, std::span<const int> labels);

/// 0.5 * sum_p weight_p * (theta_p - anchor_p)^2
/// `anchor` and `weight` are referenced, not copied: they must outlive the graph.
[[nodiscard]] Var weighted_squared_distance(Graph& g, Var theta, const Tensor& anchor, const Tensor& weight);

}  // namespace driftlab::nn

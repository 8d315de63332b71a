#pragma once

#include "simsr/ad/tape.hpp"

#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace simsr::ad {

// Elementwise binary ops require identical shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);

/// x[R, C] + b[C] broadcast over rows.
Var add_bias(const Var& x, const Var& b);
/// v[C] (or [1, C]) repeated into [rows, C].
Var broadcast_rows(const Var& v, std::size_t rows);

Var matmul(const Var& a, const Var& b);
/// x W + b in one node.
Var linear(const Var& x, const Var& w, const Var& b);

Var concat(std::span<const Var> parts, std::size_t axis);
Var concat(std::initializer_list<Var> parts, std::size_t axis);
Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end);
Var reshape(const Var& x, Shape shape);

Var sin(const Var& x);
/// sin(omega * x) in one node.
Var sine(const Var& x, double omega);
Var cos(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var abs(const Var& x);
Var square(const Var& x);
Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope);

/// Numerically stable softmax along one axis. Throws on an empty axis.
Var softmax(const Var& x, std::size_t axis);

// Axis reductions drop the reduced axis.
Var reduce_sum(const Var& x, std::size_t axis);
Var reduce_mean(const Var& x, std::size_t axis);
/// Gradient flows to the first maximal element.
Var reduce_max(const Var& x, std::size_t axis);
Var sum(const Var& x);
Var mean(const Var& x);

/// Scalar sum of |a - b|.
Var l1_distance(const Var& a, const Var& b);
/// Euclidean norm along an axis; the subgradient at zero is zero.
Var l2_norm(const Var& x, std::size_t axis);
Var cosine_similarity(const Var& a, const Var& b, std::size_t axis);

/// Rows x[indices[r]] of a rank-2 tensor.
Var gather_rows(const Var& x, std::vector<std::uint32_t> indices);
/// out[j] = sum_s weights[j, s] * z[indices[j * k + s]] with weights [M, k],
/// z [N, C]; out is [M, C].
Var weighted_gather(const Var& weights, std::vector<std::uint32_t> indices, const Var& z);
/// Row-wise cross product of [R, 3] tensors.
Var cross3(const Var& a, const Var& b);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(double c, const Var& a) { return scale(a, c); }

}  // namespace simsr::ad

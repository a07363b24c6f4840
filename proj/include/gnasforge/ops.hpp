#pragma once

// Differentiable primitives. Every function records one node on the tape
// owning its inputs and returns the handle to it.
//
// All operands are rank-2. Binary elementwise primitives broadcast a size-1
// row or column dimension of either operand ([1,n] over rows, [m,1] along
// the last axis, [1,1] everywhere). Shape errors throw std::invalid_argument
// naming the primitive and both shapes; bad indices throw std::out_of_range.

#include <cstddef>
#include <span>
#include <vector>

#include "gnasforge/tape.hpp"

namespace gnasforge::ops {

inline constexpr double kAttentionLeakySlope = 0.2;
inline constexpr double kActivationLeakySlope = 0.01;

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double factor);

Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);

Var softmax_rows(Var a);
Var log_softmax_rows(Var a);

/// Natural log; throws std::domain_error on non-positive input.
Var log(Var a);
Var exp(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var leaky_relu(Var a, double slope);
Var relu(Var a);
Var relu6(Var a);
Var elu(Var a);
Var softplus(Var a);

/// out[r] = a[index[r]]
Var gather_rows(Var a, std::span<const std::size_t> index);

/// out[s] = reduction over rows r with segment[r] == s. Empty segments
/// produce zero rows for all three reductions.
Var segment_sum(Var values, std::span<const std::size_t> segment, std::size_t num_segments);
Var segment_mean(Var values, std::span<const std::size_t> segment, std::size_t num_segments);
/// Column-wise maximum; ties resolve to the lowest row, which also receives
/// the whole incoming gradient.
Var segment_max(Var values, std::span<const std::size_t> segment, std::size_t num_segments);

Var sum(Var a);       // -> [1,1]
Var mean(Var a);      // -> [1,1]
Var row_sum(Var a);   // -> [m,1]
Var broadcast_rows(Var row, std::size_t rows);

/// Same value, no gradient path.
Var detach(Var a);

}  // namespace gnasforge::ops

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "metaslot/tensor.hpp"

// Differentiable tensor operations. Every op checks its output for NaN/Inf and
// records a backward closure when a tape is active and any input requires grad.
namespace metaslot::ops {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

// Binary elementwise ops on 2-D operands. `b` may equal `a` in shape, be a
// single row [1 x n], a single column [m x 1], or a [1 x 1] scalar.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor square(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Sum of a 2-D tensor along `axis`, keeping the reduced dimension (size 1).
Tensor sum_axis(const Tensor& x, std::size_t axis);

/// Softmax along `axis`, stabilised by max subtraction. When `mask` is given it
/// must have one entry per position along `axis`; positions with mask 0 are
/// excluded and produce exactly 0.
Tensor softmax(const Tensor& x, std::size_t axis, std::span<const double> mask = {});

/// Normalises each lane along `axis` to zero mean and unit variance, then
/// applies the affine `gamma`, `beta` (each with dim(axis) entries).
Tensor layer_norm(const Tensor& x, std::size_t axis, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

/// x[m x k] * W[k x n] + b[1 x n]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);

/// Forward identity, backward contributes nothing.
Tensor stop_gradient(const Tensor& x);

/// out[j*N + i] = slots[j] + positions[i] for slots [K x D], positions [N x D].
Tensor broadcast_pairs(const Tensor& slots, const Tensor& positions);

/// out[i] = sum_j weights[i, j] * values[j*N + i] for weights [N x K],
/// values [K*N x D]. Inverse layout of broadcast_pairs.
Tensor mixture_combine(const Tensor& weights, const Tensor& values);

}  // namespace metaslot::ops

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "msvdd/tensor.hpp"

// Differentiable primitives. Every function records onto the tape of its
// inputs when any input is on a tape and is a plain computation otherwise.
// Shape mismatches throw DimensionError naming both shapes.
namespace msvdd::nd {

// Elementwise, equal shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double c);

// m: rows x cols, row: cols values (any shape of that size). Broadcast over rows.
Tensor add_row(const Tensor& m, const Tensor& row);
Tensor sub_row(const Tensor& m, const Tensor& row);
// Repeats a length-c vector into a rows x c matrix.
Tensor broadcast_rows(const Tensor& row, std::size_t rows);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Full reductions to a scalar.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Matrix reductions: axis 0 collapses rows (result: cols), axis 1 collapses cols (result: rows).
Tensor sum_axis(const Tensor& a, std::size_t axis);
Tensor mean_axis(const Tensor& a, std::size_t axis);

// Matrices joined along axis 0 or 1; vectors along axis 0.
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor reshape(const Tensor& a, Shape shape);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);
Tensor element(const Tensor& a, std::size_t index);
Tensor diag(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
// Backward at exactly 0 uses gradient 0.
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor softplus(const Tensor& a);

// Numerically stable softmax along `axis` (0 or 1 for matrices, 0 for vectors).
Tensor softmax(const Tensor& x, std::size_t axis);

// Mean over elements of the unit-delta Huber penalty.
Tensor huber(const Tensor& y, const Tensor& yhat);

// x: T x Cin, w: K x Cin x Cout. Cross-correlation,
// T' = floor((T + 2*padding - K) / stride) + 1.
Tensor conv1d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t padding);

// x: T x Cin, w: K x Cout x Cin (the layout of the conv1d it transposes).
// T' = (T - 1) * stride - 2 * padding + K. Forward equals the input gradient
// of conv1d with the same weights and hyperparameters.
Tensor deconv1d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t padding);

// Single-layer LSTM over x: T x Cin with zero initial state.
// w_ih: Cin x 4H, w_hh: H x 4H, bias: 4H, gate blocks ordered (input, forget, cell, output).
// Returns the hidden sequence T x H.
Tensor lstm(const Tensor& x, const Tensor& w_ih, const Tensor& w_hh, const Tensor& bias);

} // namespace msvdd::nd

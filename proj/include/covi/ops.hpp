#pragma once

#include <cstddef>
#include <vector>

#include "covi/tensor.hpp"

namespace covi {

// Floor applied to probabilities before taking logs inside the losses.
inline constexpr double kLogFloor = 1e-12;

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double factor);
// x[m×n] + bias[n] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor relu(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

// Row-wise [a | b].
Tensor concat_cols(const Tensor& a, const Tensor& b);
// Column k of a matrix as a vector [m].
Tensor column(const Tensor& a, std::size_t k);
Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& rows);
// out_i = (1 - t_i) * a_i + t_i * b_i with t of shape [m]; differentiable in all three.
Tensor lerp_rows(const Tensor& a, const Tensor& b, const Tensor& t);

// Row-wise, max-subtracted softmax.
Tensor softmax(const Tensor& logits);

// Per-row -sum_k target_k log softmax_k(logits), shape [m]. The target is a
// constant; rows must be nonnegative and sum to 1 (within 1e-6).
Tensor cross_entropy_rows(const Tensor& logits, const Tensor& target);
// Batch mean of cross_entropy_rows.
Tensor cross_entropy(const Tensor& logits, const Tensor& target);

// Per-row Shannon entropy of softmax(logits), shape [m].
Tensor entropy_rows(const Tensor& logits);
Tensor entropy(const Tensor& logits);

} // namespace covi

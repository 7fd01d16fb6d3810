#pragma once

// Reference implementations used to cross-check the library. They share no
// code with the tape ops: plain loops over std::vector, long double
// accumulation, no max-subtraction tricks.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace covi::oracle {

std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t m, std::size_t k,
                           std::size_t n);

// Direct exp/sum in long double; fine for |logit| up to ~1e4.
std::vector<double> softmax(const std::vector<double>& z, std::size_t m, std::size_t n);

// Mean over rows of -sum t log max(p, 1e-12).
double cross_entropy(const std::vector<double>& logits, const std::vector<double>& target, std::size_t m,
                     std::size_t n);
std::vector<double> entropy_rows(const std::vector<double>& logits, std::size_t m, std::size_t n);
double entropy(const std::vector<double>& logits, std::size_t m, std::size_t n);

// First index of the largest value.
std::size_t argmax(std::span<const double> v);
// Indices of the two largest values via a stable full sort (ties -> lower index).
std::pair<std::size_t, std::size_t> top2(std::span<const double> v);

// keep_i = v_i >= mean - alpha * sample_std, written out from the definitions.
std::vector<bool> confidence_filter(const std::vector<double>& v, double alpha);

// Central differences of f with respect to every entry of x, step h.
std::vector<double> numeric_gradient(const std::function<double()>& f, std::span<double> x, double h = 1e-5);

// ||a - b|| / max(||a||, ||b||), with 0 when both vanish below `floor`.
double relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-8);

} // namespace covi::oracle

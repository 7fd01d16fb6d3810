#pragma once

#include <random>
#include <vector>

#include "covi/domains.hpp"
#include "covi/tensor.hpp"

namespace testing {

inline covi::Tensor random_matrix(std::mt19937_64& rng, std::size_t m, std::size_t n, bool track = false,
                                  double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    std::vector<double> v(m * n);
    for (auto& x : v) x = g(rng);
    return covi::Tensor::from({m, n}, std::move(v), track);
}

inline std::vector<double> values(const covi::Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline covi::DomainBatch batch_of(const covi::Tensor& xs, const covi::Tensor& ys, const covi::Tensor& xt) {
    covi::DomainBatch b;
    b.xs = xs;
    b.ys = ys;
    b.xt = xt;
    for (std::size_t i = 0; i < xs.rows(); ++i) {
        b.source_index.push_back(i);
        b.target_index.push_back(i);
    }
    return b;
}

} // namespace testing

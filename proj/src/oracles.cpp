#include "covi/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace covi::oracle {

std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t m, std::size_t k,
                           std::size_t n) {
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            long double s = 0.0L;
            for (std::size_t p = 0; p < k; ++p)
                s += static_cast<long double>(a[i * k + p]) * static_cast<long double>(b[p * n + j]);
            out[i * n + j] = static_cast<double>(s);
        }
    return out;
}

namespace {

std::vector<long double> softmax_ld(const std::vector<double>& z, std::size_t m, std::size_t n) {
    std::vector<long double> p(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        long double total = 0.0L;
        for (std::size_t k = 0; k < n; ++k) total += std::exp(static_cast<long double>(z[i * n + k]));
        for (std::size_t k = 0; k < n; ++k) p[i * n + k] = std::exp(static_cast<long double>(z[i * n + k])) / total;
    }
    return p;
}

long double safe_log(long double p) { return std::log(std::max(p, 1e-12L)); }

} // namespace

std::vector<double> softmax(const std::vector<double>& z, std::size_t m, std::size_t n) {
    const auto p = softmax_ld(z, m, n);
    return {p.begin(), p.end()};
}

double cross_entropy(const std::vector<double>& logits, const std::vector<double>& target, std::size_t m,
                     std::size_t n) {
    const auto p = softmax_ld(logits, m, n);
    long double total = 0.0L;
    for (std::size_t i = 0; i < m * n; ++i) total -= target[i] * safe_log(p[i]);
    return static_cast<double>(total / m);
}

std::vector<double> entropy_rows(const std::vector<double>& logits, std::size_t m, std::size_t n) {
    const auto p = softmax_ld(logits, m, n);
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        long double h = 0.0L;
        for (std::size_t k = 0; k < n; ++k) h -= p[i * n + k] * safe_log(p[i * n + k]);
        out[i] = static_cast<double>(h);
    }
    return out;
}

double entropy(const std::vector<double>& logits, std::size_t m, std::size_t n) {
    const auto rows = entropy_rows(logits, m, n);
    long double s = 0.0L;
    for (double h : rows) s += h;
    return static_cast<double>(s / m);
}

std::size_t argmax(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

std::pair<std::size_t, std::size_t> top2(std::span<const double> v) {
    if (v.size() < 2) throw std::invalid_argument("top2 needs two entries");
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
    return {idx[0], idx[1]};
}

std::vector<bool> confidence_filter(const std::vector<double>& v, double alpha) {
    const std::size_t n = v.size();
    if (n < 2) return std::vector<bool>(n, true);
    double total = 0.0;
    for (double x : v) total += x;
    const double mean = total / static_cast<double>(n);
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double threshold = mean - alpha * std::sqrt(ss / static_cast<double>(n - 1));
    std::vector<bool> keep(n);
    for (std::size_t i = 0; i < n; ++i) keep[i] = !(v[i] < threshold);
    return keep;
}

std::vector<double> numeric_gradient(const std::function<double()>& f, std::span<double> x, double h) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double up = f();
        x[i] = saved - h;
        const double down = f();
        x[i] = saved;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

double relative_error(std::span<const double> a, std::span<const double> b, double floor) {
    if (a.size() != b.size()) throw std::invalid_argument("relative_error: size mismatch");
    long double diff = 0.0L, na = 0.0L, nb = 0.0L;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += static_cast<long double>(a[i] - b[i]) * (a[i] - b[i]);
        na += static_cast<long double>(a[i]) * a[i];
        nb += static_cast<long double>(b[i]) * b[i];
    }
    const long double scale = std::sqrt(std::max(na, nb));
    if (scale < floor) return std::sqrt(static_cast<double>(diff)) < floor ? 0.0 : 1.0;
    return static_cast<double>(std::sqrt(diff) / scale);
}

} // namespace covi::oracle

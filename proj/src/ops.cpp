#include "covi/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "covi/errors.hpp"

namespace covi {
namespace {

using detail::Node;

void require_matrix(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    }
}

// Adds `g` into parent i's grad if that parent is tracked.
template <typename F>
void accumulate(Node& self, std::size_t i, F&& fill) {
    Node& p = *self.parents[i];
    if (!p.requires_grad) return;
    fill(p.grad_buffer());
}

std::vector<double> softmax_rows(std::span<const double> z, std::size_t m, std::size_t n) {
    std::vector<double> p(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = z.data() + i * n;
        const double mx = *std::max_element(row, row + n);
        double total = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            p[i * n + k] = std::exp(row[k] - mx);
            total += p[i * n + k];
        }
        for (std::size_t k = 0; k < n; ++k) p[i * n + k] /= total;
    }
    return p;
}

// Strided view of a matrix operand: element (r, c) sits at data[r * row + c * col].
struct Operand {
    const double* data;
    std::size_t row;
    std::size_t col;
    double at(std::size_t r, std::size_t c) const { return data[r * row + c * col]; }
};

// Row-major operand whose rows are contiguous.
struct Rows {
    const double* data;
    std::size_t row;
    double at(std::size_t r, std::size_t c) const { return data[r * row + c]; }
};

enum class Accumulate { kIntoC, kSumThenAdd };

// C[rows x cols] gets sum_q X(r, q) * Y(q, c), q ascending. kIntoC adds each
// term straight into C; kSumThenAdd sums from zero and adds the total to C.
// Every element sees its terms in the same order as a plain triple loop, so
// the 4x4 register blocking changes speed only, never the bits.
void gemm(std::size_t rows, std::size_t cols, std::size_t depth, Operand X, Rows Y, double* C, Accumulate mode) {
    constexpr std::size_t kB = 4;
    auto element = [&](std::size_t r, std::size_t c) {
        double acc = mode == Accumulate::kIntoC ? C[r * cols + c] : 0.0;
        for (std::size_t q = 0; q < depth; ++q) acc += X.at(r, q) * Y.at(q, c);
        C[r * cols + c] = mode == Accumulate::kIntoC ? acc : C[r * cols + c] + acc;
    };
    const std::size_t r_full = rows - rows % kB, c_full = cols - cols % kB;
    for (std::size_t r0 = 0; r0 < r_full; r0 += kB) {
        for (std::size_t c0 = 0; c0 < c_full; c0 += kB) {
            double acc[kB][kB];
            for (std::size_t a = 0; a < kB; ++a)
                for (std::size_t b = 0; b < kB; ++b)
                    acc[a][b] = mode == Accumulate::kIntoC ? C[(r0 + a) * cols + c0 + b] : 0.0;
            for (std::size_t q = 0; q < depth; ++q) {
                const double* y = Y.data + q * Y.row + c0;
                for (std::size_t a = 0; a < kB; ++a) {
                    const double x = X.at(r0 + a, q);
                    for (std::size_t b = 0; b < kB; ++b) acc[a][b] += x * y[b];
                }
            }
            for (std::size_t a = 0; a < kB; ++a)
                for (std::size_t b = 0; b < kB; ++b) {
                    double& out = C[(r0 + a) * cols + c0 + b];
                    out = mode == Accumulate::kIntoC ? acc[a][b] : out + acc[a][b];
                }
        }
        for (std::size_t r = r0; r < r0 + kB; ++r)
            for (std::size_t c = c_full; c < cols; ++c) element(r, c);
    }
    for (std::size_t r = r_full; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) element(r, c);
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) {
        throw ShapeError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    std::vector<double> out(m * n, 0.0);
    gemm(m, n, k, {a.data().data(), k, 1}, {b.data().data(), n}, out.data(), Accumulate::kIntoC);
    return Tensor::make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
        const double* G = self.grad.data();
        const double* A = self.parents[0]->data.data();
        const double* B = self.parents[1]->data.data();
        // dA = G B^T, dB = A^T G
        accumulate(self, 0, [&](std::vector<double>& ga) {
            std::vector<double> bt(n * k);
            for (std::size_t p = 0; p < k; ++p)
                for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = B[p * n + j];
            gemm(m, k, n, {G, n, 1}, {bt.data(), k}, ga.data(), Accumulate::kSumThenAdd);
        });
        accumulate(self, 1, [&](std::vector<double>& gb) {
            gemm(k, n, m, {A, 1, k}, {G, n}, gb.data(), Accumulate::kIntoC);
        });
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    const auto A = a.data(), B = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] + B[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
        for (std::size_t i = 0; i < 2; ++i)
            accumulate(self, i, [&](std::vector<double>& g) {
                for (std::size_t j = 0; j < g.size(); ++j) g[j] += self.grad[j];
            });
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    const auto A = a.data(), B = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] - B[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
        accumulate(self, 0, [&](std::vector<double>& g) {
            for (std::size_t j = 0; j < g.size(); ++j) g[j] += self.grad[j];
        });
        accumulate(self, 1, [&](std::vector<double>& g) {
            for (std::size_t j = 0; j < g.size(); ++j) g[j] -= self.grad[j];
        });
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    const auto A = a.data(), B = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
        const auto& A = self.parents[0]->data;
        const auto& B = self.parents[1]->data;
        accumulate(self, 0, [&](std::vector<double>& g) {
            for (std::size_t j = 0; j < g.size(); ++j) g[j] += self.grad[j] * B[j];
        });
        accumulate(self, 1, [&](std::vector<double>& g) {
            for (std::size_t j = 0; j < g.size(); ++j) g[j] += self.grad[j] * A[j];
        });
    });
}

Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.size());
    const auto A = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * factor;
    return Tensor::make_result(a.shape(), std::move(out), {a}, [factor](Node& self) {
        accumulate(self, 0, [&](std::vector<double>& g) {
            for (std::size_t j = 0; j < g.size(); ++j) g[j] += self.grad[j] * factor;
        });
    });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    require_matrix(x, "add_bias");
    const std::size_t m = x.rows(), n = x.cols();
    if (bias.size() != n) {
        throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match " +
                         shape_str(x.shape()));
    }
    const auto X = x.data(), Bias = bias.data();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = X[i * n + j] + Bias[j];
    return Tensor::make_result(x.shape(), std::move(out), {x, bias}, [m, n](Node& self) {
        accumulate(self, 0, [&](std::vector<double>& g) {
            for (std::size_t j = 0; j < g.size(); ++j) g[j] += self.grad[j];
        });
        accumulate(self, 1, [&](std::vector<double>& g) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
        });
    });
}

Tensor relu(const Tensor& a) {
    std::vector<double> out(a.size());
    const auto A = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] > 0.0 ? A[i] : 0.0;
    return Tensor::make_result(a.shape(), std::move(out), {a}, [](Node& self) {
        const auto& A = self.parents[0]->data;
        accumulate(self, 0, [&](std::vector<double>& g) {
            for (std::size_t j = 0; j < g.size(); ++j)
                if (A[j] > 0.0) g[j] += self.grad[j];
        });
    });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return Tensor::make_result({}, {s}, {a}, [](Node& self) {
        accumulate(self, 0, [&](std::vector<double>& g) {
            for (auto& v : g) v += self.grad[0];
        });
    });
}

Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw ContractError("mean of an empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (numel(shape) != a.size()) {
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    return Tensor::make_result(std::move(shape), std::move(out), {a}, [](Node& self) {
        accumulate(self, 0, [&](std::vector<double>& g) {
            for (std::size_t j = 0; j < g.size(); ++j) g[j] += self.grad[j];
        });
    });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    require_matrix(a, "concat_cols");
    require_matrix(b, "concat_cols");
    if (a.rows() != b.rows()) {
        throw ShapeError("concat_cols: row counts differ " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    const std::size_t m = a.rows(), na = a.cols(), nb = b.cols(), n = na + nb;
    const auto A = a.data(), B = b.data();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < na; ++j) out[i * n + j] = A[i * na + j];
        for (std::size_t j = 0; j < nb; ++j) out[i * n + na + j] = B[i * nb + j];
    }
    return Tensor::make_result({m, n}, std::move(out), {a, b}, [m, na, nb, n](Node& self) {
        accumulate(self, 0, [&](std::vector<double>& g) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < na; ++j) g[i * na + j] += self.grad[i * n + j];
        });
        accumulate(self, 1, [&](std::vector<double>& g) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < nb; ++j) g[i * nb + j] += self.grad[i * n + na + j];
        });
    });
}

Tensor column(const Tensor& a, std::size_t k) {
    require_matrix(a, "column");
    const std::size_t m = a.rows(), n = a.cols();
    if (k >= n) throw ShapeError("column: index out of range for " + shape_str(a.shape()));
    std::vector<double> out(m);
    const auto A = a.data();
    for (std::size_t i = 0; i < m; ++i) out[i] = A[i * n + k];
    return Tensor::make_result({m}, std::move(out), {a}, [m, n, k](Node& self) {
        accumulate(self, 0, [&](std::vector<double>& g) {
            for (std::size_t i = 0; i < m; ++i) g[i * n + k] += self.grad[i];
        });
    });
}

Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& rows) {
    if (a.rank() == 0) throw ShapeError("gather_rows on a scalar");
    const std::size_t width = a.size() / a.rows();
    for (auto r : rows)
        if (r >= a.rows()) throw ShapeError("gather_rows: row index out of range");
    Shape shape = a.shape();
    shape[0] = rows.size();
    const auto A = a.data();
    std::vector<double> out;
    out.reserve(rows.size() * width);
    for (auto r : rows)
        for (std::size_t j = 0; j < width; ++j) out.push_back(A[r * width + j]);
    return Tensor::make_result(std::move(shape), std::move(out), {a}, [rows, width](Node& self) {
        accumulate(self, 0, [&](std::vector<double>& g) {
            for (std::size_t i = 0; i < rows.size(); ++i)
                for (std::size_t j = 0; j < width; ++j) g[rows[i] * width + j] += self.grad[i * width + j];
        });
    });
}

Tensor lerp_rows(const Tensor& a, const Tensor& b, const Tensor& t) {
    require_matrix(a, "lerp_rows");
    require_same_shape(a, b, "lerp_rows");
    const std::size_t m = a.rows(), n = a.cols();
    if (t.size() != m) {
        throw ShapeError("lerp_rows: weights " + shape_str(t.shape()) + " do not match " +
                         shape_str(a.shape()));
    }
    const auto A = a.data(), B = b.data(), T = t.data();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        const double w = T[i];
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = (1.0 - w) * A[i * n + j] + w * B[i * n + j];
    }
    return Tensor::make_result(a.shape(), std::move(out), {a, b, t}, [m, n](Node& self) {
        const auto& A = self.parents[0]->data;
        const auto& B = self.parents[1]->data;
        const auto& T = self.parents[2]->data;
        const auto& G = self.grad;
        accumulate(self, 0, [&](std::vector<double>& g) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) g[i * n + j] += (1.0 - T[i]) * G[i * n + j];
        });
        accumulate(self, 1, [&](std::vector<double>& g) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) g[i * n + j] += T[i] * G[i * n + j];
        });
        accumulate(self, 2, [&](std::vector<double>& g) {
            for (std::size_t i = 0; i < m; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < n; ++j) s += G[i * n + j] * (B[i * n + j] - A[i * n + j]);
                g[i] += s;
            }
        });
    });
}

Tensor softmax(const Tensor& logits) {
    require_matrix(logits, "softmax");
    const std::size_t m = logits.rows(), n = logits.cols();
    if (n == 0) throw ShapeError("softmax: zero columns");
    auto p = softmax_rows(logits.data(), m, n);
    return Tensor::make_result(logits.shape(), p, {logits}, [m, n, p](Node& self) {
        accumulate(self, 0, [&](std::vector<double>& g) {
            for (std::size_t i = 0; i < m; ++i) {
                double dot = 0.0;
                for (std::size_t k = 0; k < n; ++k) dot += self.grad[i * n + k] * p[i * n + k];
                for (std::size_t k = 0; k < n; ++k)
                    g[i * n + k] += p[i * n + k] * (self.grad[i * n + k] - dot);
            }
        });
    });
}

Tensor cross_entropy_rows(const Tensor& logits, const Tensor& target) {
    require_matrix(logits, "cross_entropy");
    require_same_shape(logits, target, "cross_entropy");
    const std::size_t m = logits.rows(), n = logits.cols();
    for (std::size_t i = 0; i < m; ++i) {
        double total = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double t = target[i * n + k];
            if (!(t >= 0.0)) throw ContractError("cross_entropy: negative target entry in row " + std::to_string(i));
            total += t;
        }
        if (std::abs(total - 1.0) > 1e-6) {
            throw ContractError("cross_entropy: target row " + std::to_string(i) + " sums to " +
                                std::to_string(total));
        }
    }
    auto p = softmax_rows(logits.data(), m, n);
    std::vector<double> tgt(target.data().begin(), target.data().end());
    std::vector<double> out(m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t k = 0; k < n; ++k)
            out[i] -= tgt[i * n + k] * std::log(std::max(p[i * n + k], kLogFloor));
    // Input order keeps the target out of the tape: it is a constant label.
    return Tensor::make_result({m}, std::move(out), {logits}, [m, n, p, tgt](Node& self) {
        accumulate(self, 0, [&](std::vector<double>& g) {
            for (std::size_t i = 0; i < m; ++i) {
                // d/dz_j of -sum_k t_k log max(p_k, floor); floored entries are flat.
                double active_mass = 0.0;
                for (std::size_t k = 0; k < n; ++k)
                    if (p[i * n + k] >= kLogFloor) active_mass += tgt[i * n + k];
                const double gi = self.grad[i];
                for (std::size_t j = 0; j < n; ++j) {
                    const double own = p[i * n + j] >= kLogFloor ? tgt[i * n + j] : 0.0;
                    g[i * n + j] += gi * (p[i * n + j] * active_mass - own);
                }
            }
        });
    });
}

Tensor cross_entropy(const Tensor& logits, const Tensor& target) {
    return mean(cross_entropy_rows(logits, target));
}

Tensor entropy_rows(const Tensor& logits) {
    require_matrix(logits, "entropy");
    const std::size_t m = logits.rows(), n = logits.cols();
    if (n < 2) throw ShapeError("entropy: need at least two classes");
    auto p = softmax_rows(logits.data(), m, n);
    std::vector<double> out(m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t k = 0; k < n; ++k)
            out[i] -= p[i * n + k] * std::log(std::max(p[i * n + k], kLogFloor));
    return Tensor::make_result({m}, std::move(out), {logits}, [m, n, p](Node& self) {
        accumulate(self, 0, [&](std::vector<double>& g) {
            for (std::size_t i = 0; i < m; ++i) {
                // H = -sum p_k L_k, L_k = log max(p_k, floor); a_k = 1 where L_k is unfloored.
                double avg = 0.0;
                std::vector<double> term(n);
                for (std::size_t k = 0; k < n; ++k) {
                    const double pk = p[i * n + k];
                    term[k] = std::log(std::max(pk, kLogFloor)) + (pk >= kLogFloor ? 1.0 : 0.0);
                    avg += pk * term[k];
                }
                const double gi = self.grad[i];
                for (std::size_t j = 0; j < n; ++j) g[i * n + j] += gi * p[i * n + j] * (avg - term[j]);
            }
        });
    });
}

Tensor entropy(const Tensor& logits) { return mean(entropy_rows(logits)); }

} // namespace covi

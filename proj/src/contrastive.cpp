#include "covi/contrastive.hpp"

#include <algorithm>
#include <cmath>

#include "covi/errors.hpp"
#include "covi/ops.hpp"

namespace covi {
namespace {

// Slack for grid arithmetic such as 0.9 + 0.1 landing a hair above 1.
constexpr double kBoundSlack = 1e-12;

Tensor top1_one_hot(const Tensor& logits) { return one_hot(argmax_rows(logits), logits.cols()); }

} // namespace

std::vector<bool> confidence_mask(std::span<const double> probs, double alpha) {
    const std::size_t m = probs.size();
    if (m < 2) return std::vector<bool>(m, true);
    double mean = 0.0;
    for (double v : probs) mean += v;
    mean /= static_cast<double>(m);
    double ss = 0.0;
    for (double v : probs) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(m - 1));
    const double threshold = mean - alpha * sd;
    std::vector<bool> keep(m);
    for (std::size_t i = 0; i < m; ++i) keep[i] = probs[i] >= threshold;
    return keep;
}

std::vector<double> top1_probabilities(const Tensor& logits) {
    const auto p = softmax(logits.detach());
    const std::size_t m = p.rows(), n = p.cols();
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        const auto row = p.data().subspan(i * n, n);
        out[i] = *std::max_element(row.begin(), row.end());
    }
    return out;
}

ContrastivePair build_contrastive_pairs(const DomainBatch& batch, const RatioVector& lam_star, double omega,
                                        const std::vector<bool>& mask, SpaceBounds bounds) {
    if (!(omega > 0.0 && omega < 0.5)) throw ContractError("build_contrastive_pairs: omega must lie in (0, 0.5)");
    const std::size_t m = batch.size();
    if (lam_star.size() != m || mask.size() != m) {
        throw ShapeError("build_contrastive_pairs: ratios/mask do not match the batch size");
    }
    ContrastivePair out;
    std::vector<double> sd, td;
    for (std::size_t i = 0; i < m; ++i) {
        const double lo = lam_star[i] - omega;
        const double hi = lam_star[i] + omega;
        if (!mask[i] || lo < bounds.sd_min - kBoundSlack || hi > bounds.td_max + kBoundSlack) continue;
        out.kept_indices.push_back(i);
        sd.push_back(std::clamp(lo, 0.0, 1.0));
        td.push_back(std::clamp(hi, 0.0, 1.0));
    }
    out.lam_sd = RatioVector::constant(std::move(sd));
    out.lam_td = RatioVector::constant(std::move(td));
    if (out.empty()) return out;
    const auto xs = gather_rows(batch.xs, out.kept_indices);
    const auto xt = gather_rows(batch.xt, out.kept_indices);
    out.x_sd = mix(xs, xt, out.lam_sd);
    out.x_td = mix(xs, xt, out.lam_td);
    return out;
}

std::vector<Top2> top2_of(const Tensor& logits) {
    const std::size_t m = logits.rows(), n = logits.cols();
    if (logits.rank() != 2 || n < 2) throw ShapeError("top2_of: need a matrix with at least two columns");
    auto d = logits.data();
    std::vector<Top2> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t a = 0, b = 1;
        if (d[i * n + 1] > d[i * n]) std::swap(a, b);
        for (std::size_t k = 2; k < n; ++k) {
            const double v = d[i * n + k];
            if (v > d[i * n + a]) {
                b = a;
                a = k;
            } else if (v > d[i * n + b]) {
                b = k;
            }
        }
        out[i] = {a, b};
    }
    return out;
}

ContrastiveLabels contrastive_labels(const ModelParams& p, const ContrastivePair& pairs, const Tensor& ys,
                                     const Tensor& yt_hat) {
    if (pairs.empty()) return {};
    const auto frozen = p.frozen();
    const auto top1_sd = top1_one_hot(predict_logits(frozen, pairs.x_sd));
    const auto top1_td = top1_one_hot(predict_logits(frozen, pairs.x_td));
    const auto ys_k = gather_rows(ys.detach(), pairs.kept_indices);
    const auto yt_k = gather_rows(yt_hat.detach(), pairs.kept_indices);
    return {lerp_rows(ys_k, top1_td, pairs.lam_sd.lam.detach()),
            lerp_rows(top1_sd, yt_k, pairs.lam_td.lam.detach())};
}

Tensor contrastive_loss(const ModelParams& p, const ContrastivePair& pairs, const Tensor& ys,
                        const Tensor& yt_hat) {
    if (pairs.empty()) return Tensor::scalar(0.0);
    const auto labels = contrastive_labels(p, pairs, ys, yt_hat);
    const auto r_sd = cross_entropy(predict_logits(p, pairs.x_sd), labels.sd);
    const auto r_td = cross_entropy(predict_logits(p, pairs.x_td), labels.td);
    return add(r_td, r_sd);
}

double contrastive_agreement(const ModelParams& p, const ContrastivePair& pairs) {
    if (pairs.empty()) return 0.0;
    const auto frozen = p.frozen();
    const auto sd = top2_of(predict_logits(frozen, pairs.x_sd));
    const auto td = top2_of(predict_logits(frozen, pairs.x_td));
    std::size_t agree = 0;
    for (std::size_t i = 0; i < sd.size(); ++i)
        if (sd[i].k1 == td[i].k2 && td[i].k1 == sd[i].k2) ++agree;
    return static_cast<double>(agree) / static_cast<double>(sd.size());
}

} // namespace covi

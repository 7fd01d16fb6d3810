#include "covi/vicinal.hpp"

#include <string>

#include "covi/errors.hpp"
#include "covi/ops.hpp"

namespace covi {
namespace {

void require_ratios(const RatioVector& lam, std::size_t m, const char* where) {
    if (lam.size() != m) {
        throw ShapeError(std::string(where) + ": " + std::to_string(lam.size()) + " ratios for " +
                         std::to_string(m) + " pairs");
    }
    for (double v : lam.lam.data()) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw ContractError(std::string(where) + ": ratio " + std::to_string(v) + " outside [0, 1]");
        }
    }
}

} // namespace

RatioVector RatioVector::constant(std::vector<double> values) {
    const std::size_t m = values.size();
    return {Tensor::from({m}, std::move(values))};
}

RatioVector RatioVector::filled(std::size_t m, double value) {
    return constant(std::vector<double>(m, value));
}

Tensor mix(const Tensor& xs, const Tensor& xt, const RatioVector& lam) {
    if (xs.shape() != xt.shape()) {
        throw ShapeError("mix: source " + shape_str(xs.shape()) + " and target " + shape_str(xt.shape()) +
                         " differ");
    }
    require_ratios(lam, xs.rows(), "mix");
    return lerp_rows(xs, xt, lam.lam);
}

Tensor mix_labels(const Tensor& ys, const Tensor& yt_hat, const RatioVector& lam) {
    if (ys.shape() != yt_hat.shape()) throw ShapeError("mix_labels: label shapes differ");
    require_ratios(lam, ys.rows(), "mix_labels");
    return lerp_rows(ys.detach(), yt_hat.detach(), lam.lam.detach());
}

VicinalBatch make_vicinal(const DomainBatch& batch, const Tensor& yt_hat, const RatioVector& lam) {
    return {mix(batch.xs, batch.xt, lam), mix_labels(batch.ys, yt_hat, lam), lam};
}

Tensor pair_entropy_profile(const ModelParams& p, const DomainBatch& batch) {
    const auto frozen = p.frozen();
    const std::size_t m = batch.size();
    std::vector<double> out(m * RatioGrid::kSize);
    for (std::size_t k = 0; k < RatioGrid::kSize; ++k) {
        const auto x = mix(batch.xs, batch.xt, RatioVector::filled(m, RatioGrid::value(k)));
        const auto h = entropy_rows(predict_logits(frozen, x));
        for (std::size_t i = 0; i < m; ++i) out[i * RatioGrid::kSize + k] = h[i];
    }
    return Tensor::from({m, RatioGrid::kSize}, std::move(out));
}

RatioVector brute_force_emp(const ModelParams& p, const DomainBatch& batch) {
    const auto best = argmax_rows(pair_entropy_profile(p, batch));
    std::vector<double> lam(best.size());
    for (std::size_t i = 0; i < best.size(); ++i) lam[i] = RatioGrid::value(best[i]);
    return RatioVector::constant(std::move(lam));
}

Tensor emp_grid_logits(const ModelParams& p, const DomainBatch& batch) {
    const auto frozen = p.frozen();
    const auto zs = encode(frozen, batch.xs);
    const auto zt = encode(frozen, batch.xt);
    return emp_forward(p, zs, zt);
}

RatioVector emp_soft(const ModelParams& p, const DomainBatch& batch) {
    const auto probs = softmax(emp_grid_logits(p, batch));
    return {reshape(matmul(probs, RatioGrid::column()), {batch.size()})};
}

RatioVector emp_argmax(const ModelParams& p, const DomainBatch& batch) {
    const auto best = argmax_rows(emp_grid_logits(p.frozen(), batch));
    std::vector<double> lam(best.size());
    for (std::size_t i = 0; i < best.size(); ++i) lam[i] = RatioGrid::value(best[i]);
    return RatioVector::constant(std::move(lam));
}

Tensor emp_learner_loss(const ModelParams& p, const DomainBatch& batch, EmpRelaxation relaxation) {
    const auto frozen_theta = p.frozen();
    switch (relaxation) {
    case EmpRelaxation::kExpectedRatio: {
        const auto lam = emp_soft(p, batch);
        return entropy(predict_logits(frozen_theta, mix(batch.xs, batch.xt, lam)));
    }
    case EmpRelaxation::kExpectedEntropy: {
        const auto probs = softmax(emp_grid_logits(p, batch));
        const auto profile = pair_entropy_profile(p, batch);
        return scale(sum(mul(probs, profile)), 1.0 / static_cast<double>(batch.size()));
    }
    case EmpRelaxation::kTargetMatching: {
        const auto target = one_hot(argmax_rows(pair_entropy_profile(p, batch)), RatioGrid::kSize);
        return scale(cross_entropy(emp_grid_logits(p, batch), target), -1.0);
    }
    }
    throw ContractError("emp_learner_loss: unknown relaxation");
}

Tensor emp_mixup_loss(const ModelParams& p, const DomainBatch& batch, const RatioVector& lam_star) {
    const auto lam = lam_star.detached();
    const auto yt_hat = pseudo_labels(p, batch.xt);
    const auto x = mix(batch.xs, batch.xt, lam);
    return cross_entropy(predict_logits(p, x), mix_labels(batch.ys, yt_hat, lam));
}

} // namespace covi

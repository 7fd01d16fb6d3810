#pragma once

#include <cstddef>
#include <vector>

#include "covi/domains.hpp"
#include "covi/model.hpp"
#include "covi/tensor.hpp"

namespace covi {

/// Per-pair mixup ratios. Every entry is the fraction of the TARGET instance
/// in the mix: 0 is pure source, 1 is pure target. This convention holds for
/// every ratio in the library (lambda*, the contrastive views, sweeps).
struct RatioVector {
    Tensor lam;  // [m]

    static RatioVector constant(std::vector<double> values);
    static RatioVector filled(std::size_t m, double value);

    std::size_t size() const { return lam.size(); }
    double operator[](std::size_t i) const { return lam[i]; }
    std::vector<double> values() const { return {lam.data().begin(), lam.data().end()}; }
    RatioVector detached() const { return {lam.detach()}; }
};

struct VicinalBatch {
    Tensor x_mix;  // [m x d]
    Tensor y_mix;  // soft labels [m x n]
    RatioVector lam;
};

// Row i: (1 - lam_i) * xs_i + lam_i * xt_i. Differentiable in all inputs.
Tensor mix(const Tensor& xs, const Tensor& xt, const RatioVector& lam);
// Row i: (1 - lam_i) * ys_i + lam_i * yt_hat_i (constant soft labels).
Tensor mix_labels(const Tensor& ys, const Tensor& yt_hat, const RatioVector& lam);
VicinalBatch make_vicinal(const DomainBatch& batch, const Tensor& yt_hat, const RatioVector& lam);

/// Entropy of the classifier's prediction for every pair at every grid ratio,
/// [m x 11]. No gradient.
Tensor pair_entropy_profile(const ModelParams& p, const DomainBatch& batch);

/// Grid search: per pair, the grid ratio with the largest prediction entropy
/// (ties -> lower ratio).
RatioVector brute_force_emp(const ModelParams& p, const DomainBatch& batch);

/// EMP-learner grid logits for the batch, [m x 11]. Encoder features enter
/// detached, so only phi is on the tape.
Tensor emp_grid_logits(const ModelParams& p, const DomainBatch& batch);

/// Expected grid ratio under softmax(grid logits); differentiable in phi.
RatioVector emp_soft(const ModelParams& p, const DomainBatch& batch);

/// Hard argmax of the grid logits times the grid spacing (ties -> lower).
RatioVector emp_argmax(const ModelParams& p, const DomainBatch& batch);

/// How the EMP-learner objective is made differentiable in phi.
enum class EmpRelaxation {
    // Entropy of the prediction at the mix built from emp_soft.
    kExpectedRatio,
    // Expectation over the grid distribution of the per-ratio entropies.
    kExpectedEntropy,
    // Negated cross-entropy of the grid logits against the one-hot grid
    // argmax of the entropy profile (supervision from the grid search).
    kTargetMatching,
};

/// Mean prediction entropy reached by the EMP-learner's ratios; the trainer
/// MAXIMISES this in phi with theta frozen.
Tensor emp_learner_loss(const ModelParams& p, const DomainBatch& batch,
                        EmpRelaxation relaxation = EmpRelaxation::kExpectedRatio);

/// Cross-entropy at the worst-case mix lam_star against
/// mix_labels(ys, pseudo_labels(xt), lam_star); gradient reaches theta only.
Tensor emp_mixup_loss(const ModelParams& p, const DomainBatch& batch, const RatioVector& lam_star);

} // namespace covi

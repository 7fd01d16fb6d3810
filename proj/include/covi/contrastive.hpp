#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "covi/domains.hpp"
#include "covi/model.hpp"
#include "covi/vicinal.hpp"

namespace covi {

/// Keeps instance i when top1_probs[i] >= mean - alpha * std, with the
/// unbiased (n-1) sample deviation. Fewer than two entries: everything kept.
std::vector<bool> confidence_mask(std::span<const double> top1_probs, double alpha);

// Largest softmax probability per row.
std::vector<double> top1_probabilities(const Tensor& logits);

/// Two views of the same (xs_i, xt_i) combination on either side of the
/// EMP: source-dominant at lambda* - omega, target-dominant at lambda* + omega
/// (target fractions).
struct ContrastivePair {
    Tensor x_sd;
    Tensor x_td;
    RatioVector lam_sd;
    RatioVector lam_td;
    std::vector<std::size_t> kept_indices;

    bool empty() const { return kept_indices.empty(); }
    std::size_t size() const { return kept_indices.size(); }
};

struct SpaceBounds {
    double sd_min = 0.0;  // lowest admissible source-dominant ratio
    double td_max = 1.0;  // highest admissible target-dominant ratio
};

/// Drops pair i when lambda*_i - omega < sd_min, lambda*_i + omega > td_max or
/// mask[i] is false. Requires 0 < omega < 0.5.
ContrastivePair build_contrastive_pairs(const DomainBatch& batch, const RatioVector& lam_star, double omega,
                                        const std::vector<bool>& mask, SpaceBounds bounds = {});

struct Top2 {
    std::size_t k1;
    std::size_t k2;
};

// Two largest logits per row, ties resolved towards the lower index.
std::vector<Top2> top2_of(const Tensor& logits);

/// Swapped top-1 supervision between the two views (R_td + R_sd):
///   td label = lam_td * yt_hat + (1 - lam_td) * top1(z_sd)
///   sd label = (1 - lam_sd) * ys + lam_sd * top1(z_td)
/// ys and yt_hat cover the whole batch; kept_indices select from them. An
/// empty pair set yields an untracked zero.
Tensor contrastive_loss(const ModelParams& p, const ContrastivePair& pairs, const Tensor& ys,
                        const Tensor& yt_hat);

/// The two soft labels used by contrastive_loss, exposed for inspection.
struct ContrastiveLabels {
    Tensor sd;
    Tensor td;
};
ContrastiveLabels contrastive_labels(const ModelParams& p, const ContrastivePair& pairs, const Tensor& ys,
                                     const Tensor& yt_hat);

/// Fraction of kept pairs where top1(sd) == top2(td) and top1(td) == top2(sd).
double contrastive_agreement(const ModelParams& p, const ContrastivePair& pairs);

} // namespace covi

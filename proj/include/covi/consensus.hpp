#pragma once

#include <cstddef>
#include <vector>

#include "covi/domains.hpp"
#include "covi/model.hpp"
#include "covi/rng.hpp"

namespace covi {

/// Two source-perturbed copies of the target batch:
///   x_v1 = lam_p * xs          + (1 - lam_p) * xt
///   x_v2 = lam_p * xs[shuffle] + (1 - lam_p) * xt
/// lam_p is the SOURCE fraction here, kept small so each view stays
/// target-dominant.
struct ConsensusViews {
    Tensor x_v1;
    Tensor x_v2;
    Tensor x_t;  // unmixed targets, used for the confidence mask
    std::vector<std::size_t> shuffle;
    double lam_p = 0.0;
};

ConsensusViews make_views(const DomainBatch& batch, double lam_p, Rng& rng);
ConsensusViews make_views(const DomainBatch& batch, double lam_p, std::vector<std::size_t> shuffle);

// One-hot argmax of softmax(z1) + softmax(z2); ties -> lower class index.
Tensor consensus_labels(const Tensor& z1, const Tensor& z2);

// Confidence mask over the pure-target top-1 probabilities.
std::vector<bool> consensus_mask(const ModelParams& p, const ConsensusViews& views, double beta);

/// Mean over kept rows of CE(z_v1, y) + CE(z_v2, y) with y the (constant)
/// consensus label. Nothing kept: untracked zero.
Tensor consensus_loss(const ModelParams& p, const ConsensusViews& views, double beta);

} // namespace covi

#include "covi/consensus.hpp"

#include <algorithm>
#include <numeric>

#include "covi/contrastive.hpp"
#include "covi/errors.hpp"
#include "covi/ops.hpp"

namespace covi {

ConsensusViews make_views(const DomainBatch& batch, double lam_p, Rng& rng) {
    std::vector<std::size_t> perm(batch.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    return make_views(batch, lam_p, std::move(perm));
}

ConsensusViews make_views(const DomainBatch& batch, double lam_p, std::vector<std::size_t> shuffle) {
    if (!(lam_p >= 0.0 && lam_p <= 0.5)) throw ContractError("make_views: lam_p must lie in [0, 0.5]");
    const std::size_t m = batch.size(), d = batch.xs.cols();
    if (shuffle.size() != m) throw ShapeError("make_views: shuffle length differs from batch size");
    std::vector<bool> seen(m, false);
    for (auto s : shuffle) {
        if (s >= m || seen[s]) throw ContractError("make_views: shuffle is not a permutation");
        seen[s] = true;
    }
    auto xs = batch.xs.data();
    auto xt = batch.xt.data();
    std::vector<double> v1(m * d), v2(m * d);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double tgt = (1.0 - lam_p) * xt[i * d + j];
            v1[i * d + j] = lam_p * xs[i * d + j] + tgt;
            v2[i * d + j] = lam_p * xs[shuffle[i] * d + j] + tgt;
        }
    ConsensusViews views;
    views.x_v1 = Tensor::from({m, d}, std::move(v1));
    views.x_v2 = Tensor::from({m, d}, std::move(v2));
    views.x_t = batch.xt.detach();
    views.shuffle = std::move(shuffle);
    views.lam_p = lam_p;
    return views;
}

Tensor consensus_labels(const Tensor& z1, const Tensor& z2) {
    if (z1.shape() != z2.shape()) throw ShapeError("consensus_labels: view logits differ in shape");
    const auto votes = add(softmax(z1.detach()), softmax(z2.detach()));
    return one_hot(argmax_rows(votes), z1.cols());
}

std::vector<bool> consensus_mask(const ModelParams& p, const ConsensusViews& views, double beta) {
    return confidence_mask(top1_probabilities(predict_logits(p.frozen(), views.x_t)), beta);
}

Tensor consensus_loss(const ModelParams& p, const ConsensusViews& views, double beta) {
    const auto mask = consensus_mask(p, views, beta);
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) kept.push_back(i);
    if (kept.empty()) return Tensor::scalar(0.0);

    const auto z1 = predict_logits(p, gather_rows(views.x_v1, kept));
    const auto z2 = predict_logits(p, gather_rows(views.x_v2, kept));
    const auto y = consensus_labels(z1, z2);
    return add(cross_entropy(z1, y), cross_entropy(z2, y));
}

} // namespace covi

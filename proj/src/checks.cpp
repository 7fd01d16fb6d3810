#include "covi/checks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "covi/consensus.hpp"
#include "covi/contrastive.hpp"
#include "covi/csv.hpp"
#include "covi/ops.hpp"
#include "covi/oracles.hpp"
#include "covi/rng.hpp"
#include "covi/vicinal.hpp"

namespace covi::checks {
namespace {

std::vector<double> as_vector(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Tensor random_matrix(Rng& rng, std::size_t m, std::size_t n, bool track, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    std::vector<double> v(m * n);
    for (auto& x : v) x = g(rng);
    return Tensor::from({m, n}, std::move(v), track);
}

Tensor random_soft_labels(Rng& rng, std::size_t m, std::size_t n) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    std::vector<double> v(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        double total = 0.0;
        for (std::size_t k = 0; k < n; ++k) total += v[i * n + k] = u(rng);
        for (std::size_t k = 0; k < n; ++k) v[i * n + k] /= total;
    }
    return Tensor::from({m, n}, std::move(v));
}

Tensor random_one_hot(Rng& rng, std::size_t m, std::size_t n) {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> labels(m);
    for (auto& l : labels) l = pick(rng);
    return one_hot(labels, n);
}

DomainBatch random_batch(Rng& rng, std::size_t m, std::size_t d, std::size_t n_classes) {
    DomainBatch b;
    b.xs = random_matrix(rng, m, d, false);
    b.xt = random_matrix(rng, m, d, false);
    b.ys = random_one_hot(rng, m, n_classes);
    b.source_index.resize(m);
    b.target_index.resize(m);
    std::iota(b.source_index.begin(), b.source_index.end(), std::size_t{0});
    std::iota(b.target_index.begin(), b.target_index.end(), std::size_t{0});
    return b;
}

struct Graph {
    std::string label;
    std::vector<Tensor> leaves;
    std::function<Tensor()> loss;
};

// Zero biases plus dead ReLUs can leave logits exactly tied, and a finite
// difference step would then flip argmax-based labels. Small random biases
// keep the graphs away from such ties.
ModelParams tiny_model(std::uint64_t seed, Rng& rng) {
    ModelDims dims;
    dims.input_dim = 2;
    dims.n_classes = 3;
    dims.hidden = 5;
    dims.feat_dim = 4;
    dims.emp_hidden = 6;
    dims.emp_layers = 2;
    auto p = init_model(dims, seed);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (auto& [name, t] : p.named())
        if (name.ends_with("bias"))
            for (auto& v : t.mutable_data()) v = u(rng);
    return p;
}

Graph make_graph(std::size_t g, Rng& rng) {
    std::uniform_int_distribution<std::size_t> dim(2, 4);
    const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
    switch (g % 10) {
    case 0: {
        auto x = random_matrix(rng, m, k, true), w = random_matrix(rng, k, n, true), b = random_matrix(rng, 1, n, true);
        auto target = random_soft_labels(rng, m, n);
        return {"matmul/add_bias/relu/cross_entropy", {x, w, b}, [=] {
                    return cross_entropy(relu(add_bias(matmul(x, w), reshape(b, {n}))), target);
                }};
    }
    case 1: {
        auto a = random_matrix(rng, m, n, true), b = random_matrix(rng, m, n, true), c = random_matrix(rng, m, n, true);
        return {"sub/mul/scale/sum/mean", {a, b, c},
                [=] { return add(sum(mul(sub(a, b), c)), scale(mean(mul(a, a)), 0.7)); }};
    }
    case 2: {
        auto a = random_matrix(rng, m, k, true), b = random_matrix(rng, m, n, true),
             w = random_matrix(rng, k + n, 3, true);
        return {"concat_cols/column", {a, b, w}, [=] {
                    const auto h = matmul(concat_cols(a, b), w);
                    return mean(mul(column(h, 1), column(h, 2)));
                }};
    }
    case 3: {
        auto a = random_matrix(rng, m, n, true);
        std::uniform_int_distribution<std::size_t> row(0, m - 1);
        std::vector<std::size_t> rows(m + 1);
        for (auto& r : rows) r = row(rng);
        return {"gather_rows/reshape/entropy", {a}, [=] {
                    const auto g2 = gather_rows(a, rows);
                    return entropy(reshape(reshape(g2, {(m + 1) * n}), {m + 1, n}));
                }};
    }
    case 4: {
        auto a = random_matrix(rng, m, n, true), b = random_matrix(rng, m, n, true);
        std::uniform_real_distribution<double> u(0.05, 0.95);
        std::vector<double> tv(m);
        for (auto& v : tv) v = u(rng);
        auto t = Tensor::from({m}, tv, true);
        auto weights = random_matrix(rng, m, n, false);
        return {"lerp_rows/softmax", {a, b, t}, [=] { return sum(mul(softmax(lerp_rows(a, b, t)), weights)); }};
    }
    case 5: {
        auto a = random_matrix(rng, m, n, true, 2.0), b = random_matrix(rng, m, n, true);
        auto target = random_soft_labels(rng, m, n);
        return {"cross_entropy_rows/entropy_rows", {a, b}, [=] {
                    const auto z = add(a, b);
                    return add(mean(cross_entropy_rows(z, target)), scale(sum(entropy_rows(z)), 0.3));
                }};
    }
    case 6: {
        auto p = tiny_model(g, rng);
        auto batch = random_batch(rng, 5, 2, 3);
        std::uniform_int_distribution<std::size_t> k11(0, 10);
        std::vector<double> lam(5);
        for (auto& v : lam) v = RatioGrid::value(k11(rng));
        const auto ratios = RatioVector::constant(lam);
        return {"emp_mixup_loss", p.theta(), [=] { return emp_mixup_loss(p, batch, ratios); }};
    }
    case 7: {
        auto p = tiny_model(g, rng);
        auto batch = random_batch(rng, 6, 2, 3);
        const auto lam_star = RatioVector::filled(6, 0.5);
        const auto pairs = build_contrastive_pairs(batch, lam_star, 0.2, std::vector<bool>(6, true));
        const auto yt_hat = random_one_hot(rng, 6, 3);
        return {"contrastive_loss", p.theta(), [=] { return contrastive_loss(p, pairs, batch.ys, yt_hat); }};
    }
    case 8: {
        auto p = tiny_model(g, rng);
        auto batch = random_batch(rng, 6, 2, 3);
        std::vector<std::size_t> shuffle = {3, 0, 5, 1, 4, 2};
        const auto views = make_views(batch, 0.2, shuffle);
        return {"consensus_loss", p.theta(), [=] { return consensus_loss(p, views, 1e9); }};
    }
    default: {
        auto p = tiny_model(g, rng);
        auto batch = random_batch(rng, 5, 2, 3);
        const EmpRelaxation relaxations[] = {EmpRelaxation::kExpectedRatio, EmpRelaxation::kExpectedEntropy,
                                             EmpRelaxation::kTargetMatching};
        const auto relax = relaxations[(g / 10) % 3];
        return {"emp_learner_loss/emp_soft", p.phi(), [=] {
                    return add(emp_learner_loss(p, batch, relax), mean(emp_soft(p, batch).lam));
                }};
    }
    }
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(3);
    os << v;
    return os.str();
}

} // namespace

CheckResult gradients(std::size_t n_graphs, std::uint64_t seed) {
    Rng rng(derive_seed(seed, streams::kDiagnostics));
    double worst = 0.0;
    std::string worst_label;
    for (std::size_t g = 0; g < n_graphs; ++g) {
        auto graph = make_graph(g, rng);
        for (auto& leaf : graph.leaves) leaf.clear_grad();
        backward(graph.loss());
        std::vector<double> analytic, numeric;
        for (auto& leaf : graph.leaves) {
            const auto grad = leaf.grad();
            analytic.insert(analytic.end(), grad.begin(), grad.end());
            leaf.clear_grad();
        }
        for (auto& leaf : graph.leaves) {
            const auto fd = oracle::numeric_gradient([&] { return graph.loss().item(); }, leaf.mutable_data());
            numeric.insert(numeric.end(), fd.begin(), fd.end());
        }
        const double err = oracle::relative_error(analytic, numeric);
        if (err > worst || worst_label.empty() || std::isnan(err)) {
            worst = std::isnan(err) ? 1.0 : err;
            worst_label = graph.label;
        }
    }
    return {"gradients", worst < 1e-4,
            std::to_string(n_graphs) + " graphs, worst relative error " + fmt(worst) + " (" + worst_label + ")"};
}

CheckResult reference_ops(std::uint64_t seed) {
    Rng rng(derive_seed(seed, streams::kDiagnostics));
    double worst = 0.0;
    auto track = [&](const std::vector<double>& a, const std::vector<double>& b) {
        for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    };
    for (int rep = 0; rep < 20; ++rep) {
        const auto a = random_matrix(rng, 3, 4, false), b = random_matrix(rng, 4, 2, false);
        track(as_vector(matmul(a, b)), oracle::matmul(as_vector(a), as_vector(b), 3, 4, 2));
        const auto z = random_matrix(rng, 4, 6, false, 5.0);
        track(as_vector(softmax(z)), oracle::softmax(as_vector(z), 4, 6));
        const auto t = random_soft_labels(rng, 4, 6);
        track({cross_entropy(z, t).item()}, {oracle::cross_entropy(as_vector(z), as_vector(t), 4, 6)});
        track(as_vector(entropy_rows(z)), oracle::entropy_rows(as_vector(z), 4, 6));
        track({entropy(z).item()}, {oracle::entropy(as_vector(z), 4, 6)});
    }
    return {"reference_ops", worst <= 1e-12, "max abs deviation " + fmt(worst)};
}

CheckResult brute_force_maximality(const ModelParams& p, const DomainPairDataset& ds, std::size_t n_batches,
                                   std::size_t batch_size, std::uint64_t seed) {
    SamplerState sampler(ds.source_size(), ds.target_size(), derive_seed(seed, streams::kDiagnostics));
    const auto frozen = p.frozen();
    std::size_t pairs = 0, violations = 0;
    double oracle_gap = 0.0;
    for (std::size_t b = 0; b < n_batches; ++b) {
        const auto batch = next_batch(ds, batch_size, sampler);
        const auto lam = brute_force_emp(p, batch);
        const auto profile = pair_entropy_profile(p, batch);
        const std::size_t m = batch.size();
        for (std::size_t k = 0; k < RatioGrid::kSize; ++k) {
            const auto logits = predict_logits(frozen, mix(batch.xs, batch.xt, RatioVector::filled(m, RatioGrid::value(k))));
            const auto ref = oracle::entropy_rows(as_vector(logits), m, logits.cols());
            for (std::size_t i = 0; i < m; ++i) oracle_gap = std::max(oracle_gap, std::abs(ref[i] - profile.at(i, k)));
        }
        for (std::size_t i = 0; i < m; ++i) {
            const auto best = static_cast<std::size_t>(std::lround(lam[i] / RatioGrid::kSpacing));
            for (std::size_t k = 0; k < RatioGrid::kSize; ++k) violations += profile.at(i, best) < profile.at(i, k);
            ++pairs;
        }
    }
    return {"brute_force_maximality", violations == 0 && oracle_gap <= 1e-12,
            std::to_string(pairs) + " pairs, " + std::to_string(violations) +
                " violations, entropy reference gap " + fmt(oracle_gap)};
}

CheckResult mixup_identities(std::uint64_t seed) {
    Rng rng(derive_seed(seed, streams::kDiagnostics));
    const auto xs = random_matrix(rng, 32, 5, false, 3.0), xt = random_matrix(rng, 32, 5, false, 3.0);
    const auto at0 = mix(xs, xt, RatioVector::filled(32, 0.0));
    const auto at1 = mix(xs, xt, RatioVector::filled(32, 1.0));
    const bool zero = std::ranges::equal(at0.data(), xs.data());
    const bool one = std::ranges::equal(at1.data(), xt.data());
    const auto mid = mix(Tensor::from({1, 2}, {2.0, 0.0}), Tensor::from({1, 2}, {0.0, 2.0}), RatioVector::filled(1, 0.5));
    const bool half = mid[0] == 1.0 && mid[1] == 1.0;
    return {"mixup_identities", zero && one && half,
            std::string("ratio 0 ") + (zero ? "exact" : "differs") + ", ratio 1 " + (one ? "exact" : "differs") +
                ", midpoint " + (half ? "exact" : "differs")};
}

CheckResult contrastive_label_sums(const ModelParams& p, const DomainPairDataset& ds, std::size_t n_batches,
                                   std::uint64_t seed) {
    SamplerState sampler(ds.source_size(), ds.target_size(), derive_seed(seed, streams::kDiagnostics));
    Rng rng(derive_seed(seed, streams::kDiagnostics));
    std::uniform_int_distribution<std::size_t> k11(1, 9);
    std::size_t rows = 0, bad = 0;
    for (std::size_t b = 0; b < n_batches; ++b) {
        const auto batch = next_batch(ds, 64, sampler);
        std::vector<double> lam(batch.size());
        for (auto& v : lam) v = RatioGrid::value(k11(rng));
        const auto pairs = build_contrastive_pairs(batch, RatioVector::constant(lam), 0.1,
                                                   std::vector<bool>(batch.size(), true));
        const auto labels = contrastive_labels(p, pairs, batch.ys, pseudo_labels(p, batch.xt));
        for (const Tensor* t : {&labels.sd, &labels.td}) {
            const std::size_t n = t->cols();
            for (std::size_t i = 0; i < t->rows(); ++i) {
                double s = 0.0;
                for (std::size_t k = 0; k < n; ++k) s += t->at(i, k);
                bad += s != 1.0;
                ++rows;
            }
        }
    }
    return {"contrastive_label_sums", bad == 0 && rows > 0,
            std::to_string(rows) + " label rows, " + std::to_string(bad) + " not summing to 1"};
}

CheckResult dominance_flip(const ModelParams& source_only, const DomainPairDataset& ds, double omega, double alpha,
                           std::size_t n_pairs, std::uint64_t seed) {
    SamplerState sampler(ds.source_size(), ds.target_size(), derive_seed(seed, streams::kDiagnostics));
    const auto batch = next_batch(ds, n_pairs, sampler);
    const auto frozen = source_only.frozen();
    const auto lam_star = brute_force_emp(source_only, batch);
    const auto mask = confidence_mask(top1_probabilities(predict_logits(frozen, batch.xt)), alpha);
    const auto pairs = build_contrastive_pairs(batch, lam_star, omega, mask);
    if (pairs.empty()) return {"dominance_flip", false, "no pairs kept"};
    const auto ys = argmax_rows(batch.ys);
    const auto sd = argmax_rows(predict_logits(frozen, pairs.x_sd));
    const auto td = argmax_rows(predict_logits(frozen, pairs.x_td));
    std::size_t sd_src = 0, td_src = 0;
    for (std::size_t j = 0; j < pairs.size(); ++j) {
        sd_src += sd[j] == ys[pairs.kept_indices[j]];
        td_src += td[j] == ys[pairs.kept_indices[j]];
    }
    const double n = static_cast<double>(pairs.size());
    return {"dominance_flip", sd_src > td_src,
            std::to_string(pairs.size()) + " kept pairs, source label from sd view " + fmt(sd_src / n) +
                " vs td view " + fmt(td_src / n)};
}

CheckResult consensus_zero_perturbation(const ModelParams& p, const DomainPairDataset& ds, std::uint64_t seed) {
    SamplerState sampler(ds.source_size(), ds.target_size(), derive_seed(seed, streams::kDiagnostics));
    const auto batch = next_batch(ds, 64, sampler);
    Rng rng(derive_seed(seed, streams::kConsensus));
    const auto views = make_views(batch, 0.0, rng);
    const double keep_all = std::numeric_limits<double>::max();

    auto grads = [&](const Tensor& loss) {
        auto params = p.theta();
        for (auto& t : params) t.clear_grad();
        backward(loss);
        std::vector<double> out;
        for (auto& t : params) {
            out.insert(out.end(), t.grad().begin(), t.grad().end());
            t.clear_grad();
        }
        return out;
    };

    const auto loss = consensus_loss(p, views, keep_all);
    const auto g_cons = grads(loss);
    const auto z_t = predict_logits(p, batch.xt);
    const auto self_label = one_hot(argmax_rows(z_t), p.dims.n_classes);
    const auto self = cross_entropy(z_t, self_label);
    const double value_gap = std::abs(loss.item() - 2.0 * self.item());
    const auto g_self = grads(self);
    double grad_gap = 0.0;
    for (std::size_t i = 0; i < g_self.size(); ++i) grad_gap = std::max(grad_gap, std::abs(g_cons[i] - 2.0 * g_self[i]));
    return {"consensus_zero_perturbation", value_gap <= 1e-10 && grad_gap <= 1e-8,
            "loss gap " + fmt(value_gap) + ", gradient gap " + fmt(grad_gap)};
}

CheckResult mask_equivalence(std::size_t n_vectors, std::uint64_t seed) {
    Rng rng(derive_seed(seed, streams::kDiagnostics));
    std::uniform_int_distribution<std::size_t> len(1, 64);
    std::uniform_real_distribution<double> prob(0.0, 1.0), alpha(0.0, 3.0);
    std::size_t mismatched = 0;
    for (std::size_t v = 0; v < n_vectors; ++v) {
        std::vector<double> probs(len(rng));
        for (auto& x : probs) x = prob(rng);
        // some vectors with repeated values to exercise the equality edge
        if (v % 10 == 0) std::fill(probs.begin(), probs.begin() + probs.size() / 2, probs.back());
        const double a = v % 7 == 0 ? 0.0 : alpha(rng);
        mismatched += confidence_mask(probs, a) != oracle::confidence_filter(probs, a);
    }
    return {"mask_equivalence", mismatched == 0,
            std::to_string(n_vectors) + " vectors, " + std::to_string(mismatched) + " mismatched"};
}

CheckResult emp_argmax_oracle(const ModelParams& p, const DomainPairDataset& ds, std::uint64_t seed) {
    SamplerState sampler(ds.source_size(), ds.target_size(), derive_seed(seed, streams::kDiagnostics));
    const auto batch = next_batch(ds, 64, sampler);
    const auto frozen = p.frozen();
    const auto logits = emp_forward(frozen, encode(frozen, batch.xs), encode(frozen, batch.xt));
    const auto lam = emp_argmax(p, batch);
    std::size_t bad = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto k = oracle::argmax(logits.data().subspan(i * RatioGrid::kSize, RatioGrid::kSize));
        bad += lam[i] != RatioGrid::value(k);
    }
    return {"emp_argmax_oracle", bad == 0, std::to_string(bad) + " of " + std::to_string(batch.size()) + " differ"};
}

} // namespace covi::checks

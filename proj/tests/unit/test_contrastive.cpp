#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "covi/checks.hpp"
#include "covi/contrastive.hpp"
#include "covi/errors.hpp"
#include "covi/ops.hpp"
#include "covi/oracles.hpp"
#include "covi/trainer.hpp"
#include "helpers.hpp"

using namespace covi;
using testing::random_matrix;
using testing::values;

namespace {

struct Fixture {
    TrainConfig cfg;
    DomainPairDataset ds;
    ModelParams source_only;

    Fixture() : ds(build_dataset(cfg)), source_only(warmup(build_model(cfg, ds), ds, cfg)) {}
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

DomainBatch sample(std::size_t m, std::uint64_t seed) {
    SamplerState st(fixture().ds.source_size(), fixture().ds.target_size(), seed);
    return next_batch(fixture().ds, m, st);
}

RatioVector random_grid_ratios(std::size_t m, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> k11(0, 10);
    std::vector<double> v(m);
    for (auto& x : v) x = RatioGrid::value(k11(rng));
    return RatioVector::constant(v);
}

} // namespace

TEST_CASE("confidence mask") {
    CHECK(confidence_mask(std::vector<double>{0.6, 0.6, 0.6}, 2.0) == std::vector<bool>{true, true, true});
    CHECK(confidence_mask(std::vector<double>{0.9, 0.5, 0.7}, 1.0) == std::vector<bool>{true, true, true});
    CHECK(confidence_mask(std::vector<double>{0.9, 0.5, 0.7}, 0.0) == std::vector<bool>{true, false, true});
    CHECK(confidence_mask(std::vector<double>{0.9, 0.5, 0.69}, 0.0) == std::vector<bool>{true, false, false});
    CHECK(confidence_mask(std::vector<double>{0.1}, 2.0) == std::vector<bool>{true});
    CHECK(confidence_mask(std::vector<double>{}, 2.0).empty());

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> probs(2 + rep % 40);
        for (auto& p : probs) p = u(rng);
        const double alpha = 3.0 * u(rng);
        CHECK(confidence_mask(probs, alpha) == oracle::confidence_filter(probs, alpha));
    }
}

TEST_CASE("contrastive pairs: bounds and views") {
    const auto batch = sample(4, 2);
    const auto pairs = build_contrastive_pairs(batch, RatioVector::constant({0.5, 0.95, 0.1, 0.2}), 0.2,
                                               {true, true, true, true});
    CHECK(pairs.kept_indices == std::vector<std::size_t>{0, 3});
    CHECK(pairs.lam_sd[0] == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(pairs.lam_td[0] == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(pairs.lam_sd[1] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(pairs.lam_sd[1] >= 0.0);
    for (std::size_t j = 0; j < pairs.size(); ++j) {
        const auto i = pairs.kept_indices[j];
        for (std::size_t c = 0; c < 2; ++c) {
            const double xs = batch.xs.at(i, c), xt = batch.xt.at(i, c);
            CHECK(pairs.x_sd.at(j, c) == (1.0 - pairs.lam_sd[j]) * xs + pairs.lam_sd[j] * xt);
            CHECK(pairs.x_td.at(j, c) == (1.0 - pairs.lam_td[j]) * xs + pairs.lam_td[j] * xt);
        }
    }
    CHECK_THROWS_AS(build_contrastive_pairs(batch, RatioVector::filled(4, 0.5), 0.0, std::vector<bool>(4, true)),
                    ContractError);
    CHECK_THROWS_AS(build_contrastive_pairs(batch, RatioVector::filled(4, 0.5), 0.5, std::vector<bool>(4, true)),
                    ContractError);
}

TEST_CASE("contrastive pairs: kept set equals the brute-force filter") {
    std::mt19937_64 rng(3);
    std::bernoulli_distribution coin(0.7);
    const auto batch = sample(64, 3);
    for (double omega : {0.1, 0.2, 0.3}) {
        const auto lam = random_grid_ratios(64, rng);
        std::vector<bool> mask(64);
        for (std::size_t i = 0; i < 64; ++i) mask[i] = coin(rng);
        const auto pairs = build_contrastive_pairs(batch, lam, omega, mask);
        std::vector<std::size_t> expect;
        for (std::size_t i = 0; i < 64; ++i) {
            // integer grid arithmetic avoids floating error in the reference
            const long k = std::lround(lam[i] * 10.0), w = std::lround(omega * 10.0);
            if (mask[i] && k - w >= 0 && k + w <= 10) expect.push_back(i);
        }
        CHECK(pairs.kept_indices == expect);
        for (std::size_t j = 0; j < pairs.size(); ++j) {
            const double star = lam[pairs.kept_indices[j]];
            CHECK(pairs.lam_sd[j] >= 0.0);
            CHECK(pairs.lam_sd[j] < star);
            CHECK(star < pairs.lam_td[j]);
            CHECK(pairs.lam_td[j] <= 1.0);
        }
    }
}

TEST_CASE("top2") {
    const auto t = top2_of(Tensor::from({1, 3}, {0.1, 3.0, 2.0}));
    CHECK(t[0].k1 == 1);
    CHECK(t[0].k2 == 2);
    const auto tie = top2_of(Tensor::from({2, 3}, {2.0, 2.0, 1.0, 0.0, 5.0, 5.0}));
    CHECK(tie[0].k1 == 0);
    CHECK(tie[0].k2 == 1);
    CHECK(tie[1].k1 == 1);
    CHECK(tie[1].k2 == 2);

    std::mt19937_64 rng(4);
    for (int rep = 0; rep < 100; ++rep) {
        const auto z = random_matrix(rng, 3, 2 + rep % 6);
        const auto got = top2_of(z);
        for (std::size_t i = 0; i < 3; ++i) {
            const auto ref = oracle::top2(z.data().subspan(i * z.cols(), z.cols()));
            CHECK(got[i].k1 == ref.first);
            CHECK(got[i].k2 == ref.second);
            CHECK(got[i].k1 != got[i].k2);
        }
    }
    CHECK_THROWS_AS(top2_of(Tensor::zeros({2, 1})), ContractError);
}

TEST_CASE("contrastive loss against the formula") {
    std::mt19937_64 rng(5);
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const auto p = init_model(2, 2, 32, seed);
        const auto batch = sample(48, 10 + seed);
        const auto lam = random_grid_ratios(48, rng);
        const auto pairs = build_contrastive_pairs(batch, lam, 0.1, std::vector<bool>(48, true));
        const auto yt_hat = pseudo_labels(p, batch.xt);
        const double got = contrastive_loss(p, pairs, batch.ys, yt_hat).item();

        const auto frozen = p.frozen();
        const auto z_sd = values(predict_logits(frozen, pairs.x_sd));
        const auto z_td = values(predict_logits(frozen, pairs.x_td));
        const std::size_t m = pairs.size();
        std::vector<double> y_sd(m * 2, 0.0), y_td(m * 2, 0.0);
        for (std::size_t j = 0; j < m; ++j) {
            const auto i = pairs.kept_indices[j];
            const auto top_sd = oracle::argmax(std::span(z_sd).subspan(j * 2, 2));
            const auto top_td = oracle::argmax(std::span(z_td).subspan(j * 2, 2));
            const auto ys = oracle::argmax(batch.ys.data().subspan(i * 2, 2));
            const auto yt = oracle::argmax(yt_hat.data().subspan(i * 2, 2));
            y_td[j * 2 + yt] += pairs.lam_td[j];
            y_td[j * 2 + top_sd] += 1.0 - pairs.lam_td[j];
            y_sd[j * 2 + ys] += 1.0 - pairs.lam_sd[j];
            y_sd[j * 2 + top_td] += pairs.lam_sd[j];
        }
        const double expect = oracle::cross_entropy(z_td, y_td, m, 2) + oracle::cross_entropy(z_sd, y_sd, m, 2);
        CHECK(std::abs(got - expect) <= 1e-10);
    }
}

TEST_CASE("contrastive labels reduce to the mixup label when views agree with the labels") {
    const auto& f = fixture();
    const auto batch = sample(128, 6);
    const auto lam = brute_force_emp(f.source_only, batch);
    const auto pairs = build_contrastive_pairs(batch, lam, 0.1, std::vector<bool>(128, true));
    const auto yt_hat = pseudo_labels(f.source_only, batch.xt);
    const auto labels = contrastive_labels(f.source_only, pairs, batch.ys, yt_hat);
    const auto frozen = f.source_only.frozen();
    const auto top_sd = argmax_rows(predict_logits(frozen, pairs.x_sd));
    const auto top_td = argmax_rows(predict_logits(frozen, pairs.x_td));
    const auto ys = argmax_rows(batch.ys), yt = argmax_rows(yt_hat);
    std::size_t checked = 0;
    for (std::size_t j = 0; j < pairs.size(); ++j) {
        const auto i = pairs.kept_indices[j];
        for (std::size_t c = 0; c < 2; ++c) {
            double s = 0.0;
            for (const Tensor* t : {&labels.sd, &labels.td}) s += t->at(j, 0) + t->at(j, 1);
            CHECK(s == 2.0);
        }
        if (top_sd[j] != ys[i] || top_td[j] != yt[i]) continue;
        ++checked;
        for (std::size_t c = 0; c < 2; ++c) {
            const double expect = (1.0 - pairs.lam_sd[j]) * (ys[i] == c) + pairs.lam_sd[j] * (yt[i] == c);
            CHECK(labels.sd.at(j, c) == doctest::Approx(expect).epsilon(1e-15));
        }
    }
    CHECK(checked > 0);
}

TEST_CASE("empty pair set contributes an untracked zero") {
    const auto& f = fixture();
    const auto batch = sample(8, 7);
    const auto pairs = build_contrastive_pairs(batch, RatioVector::filled(8, 0.0), 0.1, std::vector<bool>(8, true));
    CHECK(pairs.empty());
    const auto loss = contrastive_loss(f.source_only, pairs, batch.ys, batch.ys);
    CHECK(loss.item() == 0.0);
    CHECK_FALSE(loss.requires_grad());
}

TEST_CASE("per-pair contributions add up") {
    const auto& f = fixture();
    const auto batch = sample(16, 8);
    const auto lam = RatioVector::filled(16, 0.5);
    const auto yt_hat = pseudo_labels(f.source_only, batch.xt);
    const auto all = build_contrastive_pairs(batch, lam, 0.1, std::vector<bool>(16, true));
    double total = 0.0;
    for (std::size_t i = 0; i < 16; ++i) {
        std::vector<bool> only(16, false);
        only[i] = true;
        total += contrastive_loss(f.source_only, build_contrastive_pairs(batch, lam, 0.1, only), batch.ys, yt_hat).item();
    }
    CHECK(std::abs(contrastive_loss(f.source_only, all, batch.ys, yt_hat).item() * 16.0 - total) <= 1e-10);
}

TEST_CASE("swapped labels carry no gradient") {
    auto p = fixture().source_only.clone();
    const auto batch = sample(32, 9);
    const auto pairs = build_contrastive_pairs(batch, RatioVector::filled(32, 0.6), 0.1, std::vector<bool>(32, true));
    const auto labels = contrastive_labels(p, pairs, batch.ys, pseudo_labels(p, batch.xt));
    CHECK_FALSE(labels.sd.requires_grad());
    CHECK_FALSE(labels.td.requires_grad());
    backward(contrastive_loss(p, pairs, batch.ys, pseudo_labels(p, batch.xt)));
    for (const auto& t : p.phi()) CHECK_FALSE(t.has_grad());
}

TEST_CASE("dominance flips across the EMP on a source-only model") {
    const auto& f = fixture();
    const auto r = checks::dominance_flip(f.source_only, f.ds);
    INFO(r.detail);
    CHECK(r.passed);
}

TEST_CASE("agreement rate is a fraction") {
    const auto& f = fixture();
    const auto batch = sample(64, 10);
    const auto pairs = build_contrastive_pairs(batch, brute_force_emp(f.source_only, batch), 0.1,
                                               std::vector<bool>(64, true));
    const double a = contrastive_agreement(f.source_only, pairs);
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
}

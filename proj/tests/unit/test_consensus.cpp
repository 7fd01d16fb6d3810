#include <doctest.h>

#include <cfloat>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "covi/checks.hpp"
#include "covi/consensus.hpp"
#include "covi/errors.hpp"
#include "covi/ops.hpp"
#include "covi/oracles.hpp"
#include "covi/trainer.hpp"
#include "helpers.hpp"

using namespace covi;
using testing::random_matrix;
using testing::values;

namespace {

DomainBatch random_batch(std::mt19937_64& rng, std::size_t m, std::size_t d, std::size_t k) {
    std::vector<std::size_t> labels(m);
    for (std::size_t i = 0; i < m; ++i) labels[i] = i % k;
    const auto xs = random_matrix(rng, m, d);
    return testing::batch_of(xs, one_hot(labels, k), random_matrix(rng, m, d));
}

std::vector<std::size_t> identity(std::size_t m) {
    std::vector<std::size_t> v(m);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

} // namespace

TEST_CASE("views at zero perturbation are the targets") {
    std::mt19937_64 rng(1);
    const auto b = random_batch(rng, 12, 3, 2);
    Rng shuffle_rng(5);
    const auto v = make_views(b, 0.0, shuffle_rng);
    CHECK(values(v.x_v1) == values(b.xt));
    CHECK(values(v.x_v2) == values(b.xt));
}

TEST_CASE("identity shuffle gives identical views") {
    std::mt19937_64 rng(2);
    const auto b = random_batch(rng, 9, 2, 2);
    const auto v = make_views(b, 0.2, identity(9));
    CHECK(values(v.x_v1) == values(v.x_v2));
}

TEST_CASE("views decompose row by row") {
    std::mt19937_64 rng(3);
    const auto b = random_batch(rng, 10, 4, 3);
    auto perm = identity(10);
    std::shuffle(perm.begin(), perm.end(), rng);
    const double lam = 0.15;
    const auto v = make_views(b, lam, perm);
    for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(v.x_v1.at(i, j) == lam * b.xs.at(i, j) + (1.0 - lam) * b.xt.at(i, j));
            CHECK(v.x_v2.at(i, j) == lam * b.xs.at(perm[i], j) + (1.0 - lam) * b.xt.at(i, j));
        }
}

TEST_CASE("view preconditions") {
    std::mt19937_64 rng(4);
    const auto b = random_batch(rng, 4, 2, 2);
    CHECK_THROWS_AS(make_views(b, -0.1, identity(4)), ContractError);
    CHECK_THROWS_AS(make_views(b, 0.6, identity(4)), ContractError);
    CHECK_THROWS_AS(make_views(b, 0.1, identity(3)), ShapeError);
    CHECK_THROWS_AS(make_views(b, 0.1, std::vector<std::size_t>{0, 0, 1, 2}), ContractError);
}

TEST_CASE("consensus label follows the summed probabilities") {
    // view one leans to class 0 at 0.6, view two leans to class 1 at 0.9
    const auto z1 = Tensor::from({1, 2}, {std::log(0.6), std::log(0.4)});
    const auto z2 = Tensor::from({1, 2}, {std::log(0.1), std::log(0.9)});
    const auto y = consensus_labels(z1, z2);
    CHECK(values(y) == std::vector<double>{0.0, 1.0});

    const auto tie = consensus_labels(Tensor::from({1, 2}, {1.0, 0.0}), Tensor::from({1, 2}, {0.0, 1.0}));
    CHECK(values(tie) == std::vector<double>{1.0, 0.0});
    CHECK_THROWS_AS(consensus_labels(Tensor::zeros({1, 2}), Tensor::zeros({2, 2})), ShapeError);
}

TEST_CASE("consensus label is shift invariant and symmetric") {
    std::mt19937_64 rng(6);
    for (int rep = 0; rep < 20; ++rep) {
        const auto z1 = random_matrix(rng, 8, 3, false, 3.0);
        const auto z2 = random_matrix(rng, 8, 3, false, 3.0);
        const auto y = values(consensus_labels(z1, z2));
        CHECK(values(consensus_labels(z2, z1)) == y);
        auto shifted = values(z1);
        for (std::size_t i = 0; i < 8; ++i)
            for (std::size_t c = 0; c < 3; ++c) shifted[i * 3 + c] += 0.25 * static_cast<double>(i);
        CHECK(values(consensus_labels(Tensor::from({8, 3}, shifted), z2)) == y);
    }
}

TEST_CASE("zero perturbation reduces to twice self-training") {
    const auto p = init_model(2, 2, 16, 11);
    SUBCASE("via the shared check") {
        TrainConfig cfg;
        const auto ds = build_dataset(cfg);
        const auto r = checks::consensus_zero_perturbation(p, ds);
        INFO(r.detail);
        CHECK(r.passed);
    }
    SUBCASE("by hand") {
        std::mt19937_64 rng(7);
        const auto b = random_batch(rng, 16, 2, 2);
        auto perm = identity(16);
        std::shuffle(perm.begin(), perm.end(), rng);
        const auto v = make_views(b, 0.0, perm);
        const double got = consensus_loss(p, v, DBL_MAX).item();
        const double self = cross_entropy(predict_logits(p, b.xt), pseudo_labels(p, b.xt)).item();
        CHECK(std::abs(got - 2.0 * self) <= 1e-10);
    }
}

TEST_CASE("consensus loss against the formula") {
    std::mt19937_64 rng(8);
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const auto p = init_model(2, 3, 16, seed);
        const auto b = random_batch(rng, 24, 2, 3);
        auto perm = identity(24);
        std::shuffle(perm.begin(), perm.end(), rng);
        const auto v = make_views(b, 0.2, perm);
        const double beta = 0.5;
        const double got = consensus_loss(p, v, beta).item();

        const auto frozen = p.frozen();
        const auto zt = values(softmax(predict_logits(frozen, v.x_t)));
        std::vector<double> top(24);
        for (std::size_t i = 0; i < 24; ++i) top[i] = std::max({zt[i * 3], zt[i * 3 + 1], zt[i * 3 + 2]});
        const auto keep = oracle::confidence_filter(top, beta);
        const auto z1 = values(predict_logits(frozen, v.x_v1));
        const auto z2 = values(predict_logits(frozen, v.x_v2));
        std::vector<double> k1, k2, y;
        for (std::size_t i = 0; i < 24; ++i) {
            if (!keep[i]) continue;
            const std::span r1(z1.data() + i * 3, 3), r2(z2.data() + i * 3, 3);
            const auto p1 = oracle::softmax(std::vector<double>(r1.begin(), r1.end()), 1, 3);
            const auto p2 = oracle::softmax(std::vector<double>(r2.begin(), r2.end()), 1, 3);
            std::vector<double> vote(3);
            for (std::size_t c = 0; c < 3; ++c) vote[c] = p1[c] + p2[c];
            const auto label = oracle::argmax(vote);
            for (std::size_t c = 0; c < 3; ++c) {
                k1.push_back(r1[c]);
                k2.push_back(r2[c]);
                y.push_back(c == label ? 1.0 : 0.0);
            }
        }
        const std::size_t m = y.size() / 3;
        REQUIRE(m > 0);
        const double expect = oracle::cross_entropy(k1, y, m, 3) + oracle::cross_entropy(k2, y, m, 3);
        CHECK(std::abs(got - expect) <= 1e-10);
    }
}

TEST_CASE("large beta keeps every row") {
    const auto p = init_model(2, 2, 16, 3);
    std::mt19937_64 rng(9);
    const auto b = random_batch(rng, 20, 2, 2);
    const auto v = make_views(b, 0.1, identity(20));
    const auto mask = consensus_mask(p, v, 1e9);
    CHECK(std::count(mask.begin(), mask.end(), true) == 20);
}

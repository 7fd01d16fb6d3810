#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include "covi/errors.hpp"
#include "covi/trainer.hpp"
#include "helpers.hpp"

using namespace covi;
using testing::values;

namespace {

std::array<double, 2> centroid(const Tensor& x, const Tensor& y, std::size_t cls) {
    const auto labels = argmax_rows(y);
    std::array<double, 2> c{0.0, 0.0};
    double n = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        if (labels[i] != cls) continue;
        c[0] += x.at(i, 0);
        c[1] += x.at(i, 1);
        n += 1.0;
    }
    return {c[0] / n, c[1] / n};
}

} // namespace

TEST_CASE("two moons: rotation 0 without noise gives identical domains") {
    const auto ds = make_two_moons_pair(200, 0.0, 0.0, 7);
    CHECK(values(ds.source_x) == values(ds.target_x));
    CHECK(values(ds.source_y) == values(ds.target_y_eval));
}

TEST_CASE("two moons: rotation 180 negates coordinates") {
    const auto ds = make_two_moons_pair(200, 180.0, 0.0, 7);
    for (std::size_t i = 0; i < ds.source_x.size(); ++i) CHECK(std::abs(ds.target_x[i] + ds.source_x[i]) <= 1e-12);
}

TEST_CASE("two moons: shapes, balance and determinism") {
    const auto a = make_two_moons_pair(1000, 40.0, 0.05, 3);
    const auto b = make_two_moons_pair(1000, 40.0, 0.05, 3);
    CHECK(a.source_x.shape() == Shape{1000, 2});
    CHECK(a.target_y_eval.shape() == Shape{1000, 2});
    CHECK(class_counts(a.source_y) == std::vector<std::size_t>{500, 500});
    CHECK(values(a.source_x) == values(b.source_x));
    CHECK(values(a.target_x) == values(b.target_x));
    const auto c = make_two_moons_pair(1000, 40.0, 0.05, 4);
    CHECK(values(a.source_x) != values(c.source_x));
    const auto odd = make_two_moons_pair(7, 0.0, 0.0, 1);
    const auto counts = class_counts(odd.source_y);
    CHECK(std::max(counts[0], counts[1]) - std::min(counts[0], counts[1]) <= 1);
    CHECK_THROWS_AS(make_two_moons_pair(3, 0.0, 0.0, 1), ContractError);
    CHECK_THROWS_AS(make_two_moons_pair(10, 0.0, -1.0, 1), ContractError);
}

TEST_CASE("two moons: class centroids rotate with the domain") {
    const double deg = 40.0, rad = deg * std::numbers::pi / 180.0;
    const auto ds = make_two_moons_pair(1000, deg, 0.05, 11);
    for (std::size_t cls = 0; cls < 2; ++cls) {
        const auto s = centroid(ds.source_x, ds.source_y, cls);
        const auto t = centroid(ds.target_x, ds.target_y_eval, cls);
        CHECK(std::abs(t[0] - (std::cos(rad) * s[0] - std::sin(rad) * s[1])) < 0.02);
        CHECK(std::abs(t[1] - (std::sin(rad) * s[0] + std::cos(rad) * s[1])) < 0.02);
    }
}

TEST_CASE("two moons at 40 degrees: source-only model transfers poorly") {
    double src = 0.0, tgt = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        TrainConfig cfg;
        cfg.seed = seed;
        const auto ds = build_dataset(cfg);
        const auto acc = evaluate(warmup(build_model(cfg, ds), ds, cfg), ds);
        src += acc.source / 5.0;
        tgt += acc.target / 5.0;
    }
    CHECK(src > 0.98);
    CHECK(tgt < 0.90);
}

TEST_CASE("blobs") {
    const auto ds = make_blobs_pair(3, 4, 0.0, 5);
    CHECK(ds.source_x.shape() == Shape{1000, 4});
    CHECK(ds.n_classes == 3);
    const auto counts = class_counts(ds.source_y);
    CHECK(*std::max_element(counts.begin(), counts.end()) - *std::min_element(counts.begin(), counts.end()) <= 1);
    CHECK(class_counts(ds.target_y_eval) == counts);
    CHECK_THROWS_AS(make_blobs_pair(1, 4, 0.0, 5), ContractError);
    CHECK_THROWS_AS(make_blobs_pair(3, 1, 0.0, 5), ContractError);
}

TEST_CASE("blobs: zero shift keeps class means, large shift breaks transfer") {
    const auto same = make_blobs_pair(3, 4, 0.0, 5);
    for (std::size_t j = 0; j < 4; ++j) {
        double ms = 0.0, mt = 0.0;
        for (std::size_t i = 0; i < 1000; ++i) {
            ms += same.source_x.at(i, j) / 1000.0;
            mt += same.target_x.at(i, j) / 1000.0;
        }
        CHECK(std::abs(ms - mt) < 0.2);
    }

    double tgt = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        TrainConfig cfg;
        cfg.generator = "blobs";
        cfg.n_classes = 2;
        cfg.input_dim = 4;
        cfg.shift = 40.0;
        cfg.seed = seed;
        const auto ds = build_dataset(cfg);
        tgt += evaluate(warmup(build_model(cfg, ds), ds, cfg), ds).target / 5.0;
    }
    CHECK(std::abs(tgt - 0.5) <= 0.15);
}

TEST_CASE("source statistics standardize both domains") {
    const auto ds = standardize_by_source(make_two_moons_pair(500, 40.0, 0.05, 2));
    for (std::size_t j = 0; j < 2; ++j) {
        double mean = 0.0, sq = 0.0;
        for (std::size_t i = 0; i < 500; ++i) mean += ds.source_x.at(i, j) / 500.0;
        for (std::size_t i = 0; i < 500; ++i) sq += std::pow(ds.source_x.at(i, j) - mean, 2) / 500.0;
        CHECK(std::abs(mean) < 1e-12);
        CHECK(std::abs(sq - 1.0) < 1e-12);
    }
}

TEST_CASE("sampler") {
    const auto ds = make_two_moons_pair(100, 40.0, 0.05, 1);
    SUBCASE("full batch is a permutation") {
        SamplerState st(100, 100, 9);
        const auto b = next_batch(ds, 100, st);
        std::set<std::size_t> s(b.source_index.begin(), b.source_index.end());
        std::set<std::size_t> t(b.target_index.begin(), b.target_index.end());
        CHECK(s.size() == 100);
        CHECK(t.size() == 100);
    }
    SUBCASE("same state, same batches") {
        SamplerState a(100, 100, 9), b(100, 100, 9);
        for (int i = 0; i < 5; ++i) {
            const auto x = next_batch(ds, 30, a), y = next_batch(ds, 30, b);
            CHECK(x.source_index == y.source_index);
            CHECK(x.target_index == y.target_index);
            CHECK(values(x.xs) == values(y.xs));
        }
        CHECK(a == SamplerState::deserialize(b.serialize()));
    }
    SUBCASE("one epoch covers every index") {
        SamplerState st(100, 100, 3);
        std::set<std::size_t> s, t;
        for (std::size_t i = 0; i < batches_per_epoch(ds, 20); ++i) {
            const auto b = next_batch(ds, 20, st);
            s.insert(b.source_index.begin(), b.source_index.end());
            t.insert(b.target_index.begin(), b.target_index.end());
        }
        CHECK(s.size() == 100);
        CHECK(t.size() == 100);
    }
    SUBCASE("no duplicates inside a batch across the epoch boundary") {
        SamplerState st(100, 100, 4);
        for (int i = 0; i < 12; ++i) {
            const auto b = next_batch(ds, 30, st);
            CHECK(std::set<std::size_t>(b.source_index.begin(), b.source_index.end()).size() == 30);
        }
    }
    SUBCASE("oversized batch") {
        SamplerState st(100, 100, 3);
        CHECK_THROWS_AS(next_batch(ds, 101, st), ContractError);
        CHECK_THROWS_AS(next_batch(ds, 0, st), ContractError);
    }
}

TEST_CASE("dataset csv round trip") {
    const auto ds = make_blobs_pair(3, 4, 1.5, 8, 50);
    const auto path = std::filesystem::temp_directory_path() / "covi_ds_roundtrip.csv";
    write_dataset_csv(ds, path);
    const auto back = read_dataset_csv(path);
    CHECK(values(back.source_x) == values(ds.source_x));
    CHECK(values(back.target_x) == values(ds.target_x));
    CHECK(values(back.source_y) == values(ds.source_y));
    CHECK(values(back.target_y_eval) == values(ds.target_y_eval));
    std::filesystem::remove(path);
}

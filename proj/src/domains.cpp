#include "covi/domains.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "covi/csv.hpp"
#include "covi/errors.hpp"
#include "covi/ops.hpp"

namespace covi {
namespace {

// Class sizes for n points over k classes, balanced within one.
std::vector<std::size_t> balanced_sizes(std::size_t n, std::size_t k) {
    std::vector<std::size_t> sizes(k, n / k);
    for (std::size_t c = 0; c < n % k; ++c) ++sizes[c];
    return sizes;
}

struct MoonPoints {
    std::vector<double> xy;
    std::vector<std::size_t> labels;
};

MoonPoints sample_moons(std::size_t n, double noise_std, Rng& rng) {
    const auto sizes = balanced_sizes(n, 2);
    MoonPoints pts;
    pts.xy.reserve(2 * n);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t c = 0; c < 2; ++c) {
        const std::size_t nc = sizes[c];
        for (std::size_t i = 0; i < nc; ++i) {
            const double t = nc > 1 ? std::numbers::pi * static_cast<double>(i) / static_cast<double>(nc - 1) : 0.0;
            double x = c == 0 ? std::cos(t) : 1.0 - std::cos(t);
            double y = c == 0 ? std::sin(t) : 0.5 - std::sin(t);
            // centre of the pair of moons
            x -= 0.5;
            y -= 0.25;
            pts.xy.push_back(x);
            pts.xy.push_back(y);
            pts.labels.push_back(c);
        }
    }
    if (noise_std > 0.0)
        for (auto& v : pts.xy) v += noise_std * noise(rng);
    return pts;
}

} // namespace

std::vector<std::size_t> argmax_rows(const Tensor& scores) {
    const std::size_t m = scores.rows(), n = scores.cols();
    auto d = scores.data();
    std::vector<std::size_t> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < n; ++k)
            if (d[i * n + k] > d[i * n + best]) best = k;
        out[i] = best;
    }
    return out;
}

Tensor one_hot(const std::vector<std::size_t>& labels, std::size_t n_classes) {
    std::vector<double> v(labels.size() * n_classes, 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= n_classes) throw ContractError("one_hot: label out of range");
        v[i * n_classes + labels[i]] = 1.0;
    }
    return Tensor::from({labels.size(), n_classes}, std::move(v));
}

std::vector<std::size_t> class_counts(const Tensor& y) {
    std::vector<std::size_t> counts(y.cols(), 0);
    for (auto c : argmax_rows(y)) ++counts[c];
    return counts;
}

DomainPairDataset make_two_moons_pair(std::size_t n_per_domain, double rotation_deg,
                                      double noise_std, std::uint64_t seed) {
    if (n_per_domain < 4) throw ContractError("make_two_moons_pair: need at least 4 points per domain");
    if (!(noise_std >= 0.0)) throw ContractError("make_two_moons_pair: noise_std must be nonnegative");

    Rng rng(derive_seed(seed, streams::kData));
    auto src = sample_moons(n_per_domain, noise_std, rng);
    auto tgt = sample_moons(n_per_domain, noise_std, rng);

    const double theta = rotation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    for (std::size_t i = 0; i < n_per_domain; ++i) {
        const double x = tgt.xy[2 * i], y = tgt.xy[2 * i + 1];
        tgt.xy[2 * i] = c * x - s * y;
        tgt.xy[2 * i + 1] = s * x + c * y;
    }

    DomainPairDataset ds;
    ds.source_x = Tensor::from({n_per_domain, 2}, std::move(src.xy));
    ds.source_y = one_hot(src.labels, 2);
    ds.target_x = Tensor::from({n_per_domain, 2}, std::move(tgt.xy));
    ds.target_y_eval = one_hot(tgt.labels, 2);
    ds.n_classes = 2;
    ds.input_dim = 2;
    ds.generator_id = "two_moons";
    ds.seed = seed;
    return ds;
}

DomainPairDataset make_blobs_pair(std::size_t n_classes, std::size_t d, double shift,
                                  std::uint64_t seed, std::size_t n_per_domain) {
    if (n_classes < 2) throw ContractError("make_blobs_pair: need at least 2 classes");
    if (d < 2) throw ContractError("make_blobs_pair: need at least 2 dimensions");
    if (n_per_domain < n_classes) throw ContractError("make_blobs_pair: fewer points than classes");

    Rng rng(derive_seed(seed, streams::kData));
    std::normal_distribution<double> unit(0.0, 1.0);
    constexpr double kMeanSpread = 4.0;
    constexpr double kTargetJitter = 0.1;

    std::vector<double> source_means(n_classes * d), target_means(n_classes * d);
    const double along = shift / std::sqrt(static_cast<double>(d));
    for (std::size_t k = 0; k < n_classes; ++k)
        for (std::size_t j = 0; j < d; ++j) source_means[k * d + j] = kMeanSpread * unit(rng);
    for (std::size_t k = 0; k < n_classes; ++k) {
        for (std::size_t j = 0; j < d; ++j) {
            const double jitter = shift == 0.0 ? 0.0 : kTargetJitter * unit(rng);
            target_means[k * d + j] = source_means[k * d + j] + along + jitter;
        }
    }

    auto draw = [&](const std::vector<double>& means, std::vector<double>& xs, std::vector<std::size_t>& ys) {
        const auto sizes = balanced_sizes(n_per_domain, n_classes);
        for (std::size_t k = 0; k < n_classes; ++k)
            for (std::size_t i = 0; i < sizes[k]; ++i) {
                for (std::size_t j = 0; j < d; ++j) xs.push_back(means[k * d + j] + unit(rng));
                ys.push_back(k);
            }
    };
    std::vector<double> sx, tx;
    std::vector<std::size_t> sy, ty;
    draw(source_means, sx, sy);
    draw(target_means, tx, ty);

    DomainPairDataset ds;
    ds.source_x = Tensor::from({n_per_domain, d}, std::move(sx));
    ds.source_y = one_hot(sy, n_classes);
    ds.target_x = Tensor::from({n_per_domain, d}, std::move(tx));
    ds.target_y_eval = one_hot(ty, n_classes);
    ds.n_classes = n_classes;
    ds.input_dim = d;
    ds.generator_id = "blobs";
    ds.seed = seed;
    return ds;
}

DomainPairDataset standardize_by_source(const DomainPairDataset& ds) {
    const std::size_t n = ds.source_size(), d = ds.input_dim;
    std::vector<double> mu(d, 0.0), sd(d, 0.0);
    auto sx = ds.source_x.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mu[j] += sx[i * d + j];
    for (auto& v : mu) v /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) sd[j] += (sx[i * d + j] - mu[j]) * (sx[i * d + j] - mu[j]);
    for (auto& v : sd) {
        v = std::sqrt(v / static_cast<double>(n));
        if (v == 0.0) v = 1.0;
    }
    auto apply = [&](const Tensor& x) {
        std::vector<double> out(x.data().begin(), x.data().end());
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < d; ++j) out[i * d + j] = (out[i * d + j] - mu[j]) / sd[j];
        return Tensor::from(x.shape(), std::move(out));
    };
    DomainPairDataset out = ds;
    out.source_x = apply(ds.source_x);
    out.target_x = apply(ds.target_x);
    return out;
}

SamplerState::SamplerState(std::size_t n_source, std::size_t n_target, std::uint64_t seed)
    : rng_(seed) {
    source_.order.resize(n_source);
    target_.order.resize(n_target);
    reshuffle(source_);
    reshuffle(target_);
}

void SamplerState::reshuffle(Stream& s) {
    for (std::size_t i = 0; i < s.order.size(); ++i) s.order[i] = i;
    std::shuffle(s.order.begin(), s.order.end(), rng_);
    s.cursor = 0;
}

std::vector<std::size_t> SamplerState::take(Stream& s, std::size_t m) {
    std::vector<std::size_t> out;
    out.reserve(m);
    while (out.size() < m && s.cursor < s.order.size()) out.push_back(s.order[s.cursor++]);
    if (out.size() == m) return out;

    reshuffle(s);
    std::unordered_set<std::size_t> drawn(out.begin(), out.end());
    // Pull the first unused indices to the front of the new pass; the rest
    // keep their shuffled order.
    std::vector<std::size_t> front, rest;
    for (auto idx : s.order) {
        if (out.size() + front.size() < m && !drawn.contains(idx)) front.push_back(idx);
        else rest.push_back(idx);
    }
    out.insert(out.end(), front.begin(), front.end());
    s.order = front;
    s.order.insert(s.order.end(), rest.begin(), rest.end());
    s.cursor = front.size();
    return out;
}

std::string SamplerState::serialize() const {
    std::ostringstream os;
    os << rng_ << '\n';
    for (const Stream* s : {&source_, &target_}) {
        os << s->order.size() << ' ' << s->cursor;
        for (auto v : s->order) os << ' ' << v;
        os << '\n';
    }
    return os.str();
}

SamplerState SamplerState::deserialize(const std::string& text) {
    std::istringstream is(text);
    SamplerState st;
    is >> st.rng_;
    for (Stream* s : {&st.source_, &st.target_}) {
        std::size_t n = 0;
        is >> n >> s->cursor;
        s->order.resize(n);
        for (auto& v : s->order) is >> v;
    }
    if (!is) throw IoError("SamplerState: malformed serialized state");
    return st;
}

bool SamplerState::operator==(const SamplerState& o) const {
    return rng_ == o.rng_ && source_.order == o.source_.order && source_.cursor == o.source_.cursor &&
           target_.order == o.target_.order && target_.cursor == o.target_.cursor;
}

DomainBatch next_batch(const DomainPairDataset& ds, std::size_t m, SamplerState& state) {
    if (m == 0 || m > std::min(ds.source_size(), ds.target_size())) {
        throw ContractError("next_batch: batch size " + std::to_string(m) +
                            " must be in [1, min(N, M)]");
    }
    DomainBatch b;
    b.source_index = state.take_source(m);
    b.target_index = state.take_target(m);
    b.xs = gather_rows(ds.source_x, b.source_index);
    b.ys = gather_rows(ds.source_y, b.source_index);
    b.xt = gather_rows(ds.target_x, b.target_index);
    return b;
}

DomainPairDataset subset(const DomainPairDataset& ds, const std::vector<std::size_t>& source_rows,
                         const std::vector<std::size_t>& target_rows) {
    DomainPairDataset out = ds;
    out.source_x = gather_rows(ds.source_x, source_rows);
    out.source_y = gather_rows(ds.source_y, source_rows);
    out.target_x = gather_rows(ds.target_x, target_rows);
    out.target_y_eval = gather_rows(ds.target_y_eval, target_rows);
    return out;
}

std::size_t batches_per_epoch(const DomainPairDataset& ds, std::size_t m) {
    const std::size_t n = std::max(ds.source_size(), ds.target_size());
    return (n + m - 1) / m;
}

void write_dataset_csv(const DomainPairDataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "split,class";
    for (std::size_t j = 0; j < ds.input_dim; ++j) out << ",x" << j;
    out << '\n';
    char buf[40];
    auto dump = [&](const char* split, const Tensor& x, const Tensor& y) {
        const auto labels = argmax_rows(y);
        for (std::size_t i = 0; i < x.rows(); ++i) {
            out << split << ',' << labels[i];
            for (std::size_t j = 0; j < ds.input_dim; ++j) {
                std::snprintf(buf, sizeof buf, "%.17g", x.at(i, j));
                out << ',' << buf;
            }
            out << '\n';
        }
    };
    dump("source", ds.source_x, ds.source_y);
    dump("target", ds.target_x, ds.target_y_eval);
}

DomainPairDataset read_dataset_csv(const std::filesystem::path& path) {
    const auto table = read_csv(path);
    if (table.header.size() < 3 || table.header[0] != "split" || table.header[1] != "class") {
        throw IoError(path.string() + ": expected header split,class,x0..");
    }
    const std::size_t d = table.header.size() - 2;
    for (std::size_t j = 0; j < d; ++j)
        if (table.header[j + 2] != "x" + std::to_string(j)) throw IoError(path.string() + ": bad feature column name");

    std::vector<double> sx, tx;
    std::vector<std::size_t> sy, ty;
    std::size_t n_classes = 0;
    for (const auto& row : table.rows) {
        const bool source = row[0] == "source";
        if (!source && row[0] != "target") throw IoError(path.string() + ": unknown split '" + row[0] + "'");
        const std::size_t label = std::stoul(row[1]);
        n_classes = std::max(n_classes, label + 1);
        (source ? sy : ty).push_back(label);
        for (std::size_t j = 0; j < d; ++j) (source ? sx : tx).push_back(std::stod(row[j + 2]));
    }
    DomainPairDataset ds;
    ds.source_x = Tensor::from({sy.size(), d}, std::move(sx));
    ds.source_y = one_hot(sy, n_classes);
    ds.target_x = Tensor::from({ty.size(), d}, std::move(tx));
    ds.target_y_eval = one_hot(ty, n_classes);
    ds.n_classes = n_classes;
    ds.input_dim = d;
    ds.generator_id = "csv";
    return ds;
}

} // namespace covi

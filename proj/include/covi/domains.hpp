#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "covi/rng.hpp"
#include "covi/tensor.hpp"

namespace covi {

/// Labelled source domain plus unlabelled target domain. target_y_eval is kept
/// for evaluation and diagnostics only; training code receives DomainBatch,
/// which has no field for it.
struct DomainPairDataset {
    Tensor source_x;       // [N x d]
    Tensor source_y;       // one-hot [N x n]
    Tensor target_x;       // [M x d]
    Tensor target_y_eval;  // one-hot [M x n]
    std::size_t n_classes = 0;
    std::size_t input_dim = 0;
    std::string generator_id;
    std::uint64_t seed = 0;

    std::size_t source_size() const { return source_x.rows(); }
    std::size_t target_size() const { return target_x.rows(); }
};

struct DomainBatch {
    Tensor xs;  // [m x d]
    Tensor ys;  // one-hot [m x n]
    Tensor xt;  // [m x d]
    std::vector<std::size_t> source_index;
    std::vector<std::size_t> target_index;

    std::size_t size() const { return xs.rows(); }
};

/// Two interleaved half circles (centred on the origin) as the source domain;
/// the target is an independent draw of the same generator rotated by
/// rotation_deg about the origin.
DomainPairDataset make_two_moons_pair(std::size_t n_per_domain, double rotation_deg,
                                      double noise_std, std::uint64_t seed);

/// Isotropic Gaussian blobs with unit std. Target class means are the source
/// means moved by `shift` along the all-ones direction plus a small per-class
/// offset (std 0.1).
DomainPairDataset make_blobs_pair(std::size_t n_classes, std::size_t d, double shift,
                                  std::uint64_t seed, std::size_t n_per_domain = 1000);

/// Zero mean / unit variance per feature, with statistics from the source
/// domain only, applied to both domains.
DomainPairDataset standardize_by_source(const DomainPairDataset& ds);

// Rows of each domain picked by index, in the given order.
DomainPairDataset subset(const DomainPairDataset& ds, const std::vector<std::size_t>& source_rows,
                         const std::vector<std::size_t>& target_rows);

std::vector<std::size_t> class_counts(const Tensor& one_hot);
std::vector<std::size_t> argmax_rows(const Tensor& scores);  // ties -> lowest index
Tensor one_hot(const std::vector<std::size_t>& labels, std::size_t n_classes);

/// Independent without-replacement index streams over each domain. When a
/// pass is exhausted mid-batch a fresh permutation continues the batch,
/// skipping indices already drawn into it.
class SamplerState {
public:
    SamplerState(std::size_t n_source, std::size_t n_target, std::uint64_t seed);

    std::vector<std::size_t> take_source(std::size_t m) { return take(source_, m); }
    std::vector<std::size_t> take_target(std::size_t m) { return take(target_, m); }

    std::string serialize() const;
    static SamplerState deserialize(const std::string& text);

    bool operator==(const SamplerState& other) const;

private:
    struct Stream {
        std::vector<std::size_t> order;
        std::size_t cursor = 0;
    };
    SamplerState() = default;
    std::vector<std::size_t> take(Stream& s, std::size_t m);
    void reshuffle(Stream& s);

    Rng rng_;
    Stream source_;
    Stream target_;
};

DomainBatch next_batch(const DomainPairDataset& ds, std::size_t m, SamplerState& state);

// Batches needed for every index of the larger domain to appear once.
std::size_t batches_per_epoch(const DomainPairDataset& ds, std::size_t m);

/// CSV dump: header `split,class,x0..x{d-1}`, split is `source` or `target`.
void write_dataset_csv(const DomainPairDataset& ds, const std::filesystem::path& path);
DomainPairDataset read_dataset_csv(const std::filesystem::path& path);

} // namespace covi

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "covi/tensor.hpp"

namespace covi {

/// Candidate mixup ratios produced by the EMP-learner head: 0.0, 0.1, ..., 1.0.
struct RatioGrid {
    static constexpr std::size_t kSize = 11;
    static constexpr double kSpacing = 0.1;

    // k / 10 rounds to the nearest double of each grid point.
    static double value(std::size_t k) { return static_cast<double>(k) / 10.0; }
    static std::array<double, kSize> values();
    // [11 x 1] column, used to take expectations over the grid.
    static Tensor column();
};

struct ModelDims {
    std::size_t input_dim = 2;
    std::size_t n_classes = 2;
    std::size_t hidden = 64;
    std::size_t feat_dim = 32;
    std::size_t emp_hidden = 64;
    std::size_t emp_layers = 1;  // hidden layers in the EMP-learner
};

struct Linear {
    Tensor weight;  // [in x out]
    Tensor bias;    // [out]
};

/// Encoder f (d -> hidden -> feat_dim, ReLU after the hidden layer),
/// classifier h (feat_dim -> n_classes) and EMP-learner g
/// (2*feat_dim -> emp_hidden x emp_layers -> 11, ReLU after each hidden layer).
///
/// theta() and phi() are disjoint; each optimizer owns exactly one of them.
/// Like Tensor, copying ModelParams aliases the weights; use clone().
struct ModelParams {
    ModelDims dims;
    std::uint64_t seed = 0;
    Linear enc1, enc2, cls;
    std::vector<Linear> emp;  // emp_layers + 1 affine maps

    std::vector<Tensor> theta() const;
    std::vector<Tensor> phi() const;
    std::vector<std::pair<std::string, Tensor>> named() const;

    ModelParams clone() const;
    // Untracked copy: forward passes through it record nothing on the tape.
    ModelParams frozen() const;
};

ModelParams init_model(std::size_t d, std::size_t n_classes, std::size_t feat_dim, std::uint64_t seed);
ModelParams init_model(const ModelDims& dims, std::uint64_t seed);

Tensor encode(const ModelParams& p, const Tensor& x);
Tensor classify(const ModelParams& p, const Tensor& z);
Tensor predict_logits(const ModelParams& p, const Tensor& x);  // classify(encode(x))
// Grid logits [m x 11] for each (zs_i, zt_i) pair.
Tensor emp_forward(const ModelParams& p, const Tensor& zs, const Tensor& zt);
// Hard argmax of the classifier as one-hot; ties go to the lowest class.
Tensor pseudo_labels(const ModelParams& p, const Tensor& xt);

// FNV-1a over the raw bytes of a parameter group.
std::uint64_t checksum(const std::vector<Tensor>& params);

/// Binary checkpoint: magic "COVICKPT", u32 version, six u64 dims, u64 seed,
/// u64 entry count, then per entry a u32-length name, u32 rank, u64 dims and
/// little-endian float64 values. Optional extra entries (optimizer state,
/// trainer metadata) ride along under their own names.
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    ModelDims dims;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, Tensor>> entries;

    const Tensor* find(const std::string& name) const;
};

Checkpoint make_checkpoint(const ModelParams& p);
ModelParams params_from_checkpoint(const Checkpoint& ckpt);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

inline void save_model(const ModelParams& p, const std::filesystem::path& path) {
    save_checkpoint(make_checkpoint(p), path);
}
inline ModelParams load_model(const std::filesystem::path& path) {
    return params_from_checkpoint(load_checkpoint(path));
}

} // namespace covi

#pragma once

// Oracle-backed consistency checks shared by `covi selftest` and the
// acceptance runner. Each returns a verdict plus a one-line detail.

#include <cstddef>
#include <cstdint>
#include <string>

#include "covi/domains.hpp"
#include "covi/model.hpp"

namespace covi::checks {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

// Random small graphs cycling through every op and loss; autodiff against
// central differences (h = 1e-5), relative error below 1e-4 per graph.
CheckResult gradients(std::size_t n_graphs = 50, std::uint64_t seed = 0);

// matmul, softmax, cross-entropy and entropy against the long-double
// references, within 1e-12.
CheckResult reference_ops(std::uint64_t seed = 0);

// Every pair's brute-force ratio reaches the maximum of its entropy profile,
// and the profile matches the independent entropy reference.
CheckResult brute_force_maximality(const ModelParams& p, const DomainPairDataset& ds, std::size_t n_batches = 8,
                                   std::size_t batch_size = 64, std::uint64_t seed = 0);

// Bit-exact mix at ratio 0, 1 and the midpoint example.
CheckResult mixup_identities(std::uint64_t seed = 0);

// Contrastive soft labels summing to exactly 1 on every row.
CheckResult contrastive_label_sums(const ModelParams& p, const DomainPairDataset& ds, std::size_t n_batches = 8,
                                   std::uint64_t seed = 0);

// On a source-only model: among kept contrastive pairs, the source-dominant
// view predicts the source label more often than the target-dominant view.
CheckResult dominance_flip(const ModelParams& source_only, const DomainPairDataset& ds, double omega = 0.1,
                           double alpha = 2.0, std::size_t n_pairs = 512, std::uint64_t seed = 0);

// lam_p = 0 with everything kept: loss equals twice the self-training loss
// (1e-10) and so does its theta gradient (1e-8).
CheckResult consensus_zero_perturbation(const ModelParams& p, const DomainPairDataset& ds, std::uint64_t seed = 0);

// confidence_mask against the explicit mean / sample-std filter, exactly.
CheckResult mask_equivalence(std::size_t n_vectors = 1000, std::uint64_t seed = 0);

// emp_argmax against an independent argmax over emp_forward.
CheckResult emp_argmax_oracle(const ModelParams& p, const DomainPairDataset& ds, std::uint64_t seed = 0);

} // namespace covi::checks

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "covi/domains.hpp"
#include "covi/model.hpp"

namespace covi {

struct SweepRow {
    double lambda = 0.0;  // target fraction, on the ratio grid
    double mean_entropy = 0.0;
    double source_dominance = 0.0;  // top-1 == source label
    double target_dominance = 0.0;  // top-1 == target eval label
};

/// Fixed (source, target) index pairs reused across checkpoints so sweeps are
/// comparable.
struct SweepPairs {
    std::vector<std::size_t> source;
    std::vector<std::size_t> target;
};

SweepPairs select_sweep_pairs(const DomainPairDataset& ds, std::size_t n_samples, std::uint64_t seed);

std::vector<SweepRow> lambda_sweep(const ModelParams& p, const DomainPairDataset& ds, const SweepPairs& pairs,
                                   const std::vector<double>& grid);
// Uses select_sweep_pairs(ds, n_samples, ds.seed) and the 11-point ratio grid.
std::vector<SweepRow> lambda_sweep(const ModelParams& p, const DomainPairDataset& ds, std::size_t n_samples);

struct EmpEstimate {
    double at_max_entropy = 0.0;       // ties -> lower lambda
    std::optional<double> at_flip;     // first lambda with target_dominance > source_dominance
};

EmpEstimate empirical_emp(const std::vector<SweepRow>& sweep);

struct EquilibriumReport {
    std::vector<SweepRow> before;
    std::vector<SweepRow> after;
    EmpEstimate emp_before;
    EmpEstimate emp_after;

    std::string summary() const;
};

EquilibriumReport equilibrium_report(const ModelParams& before, const ModelParams& after,
                                     const DomainPairDataset& ds, std::size_t n_samples = 256);

/// How often emp_argmax lands on the grid search's answer for a batch of pairs.
struct EmpAgreement {
    double exact = 0.0;
    double within_one = 0.0;  // at most one grid step apart
};

EmpAgreement emp_agreement(const ModelParams& p, const DomainBatch& batch);

inline constexpr const char* kSweepHeader = "lambda,mean_entropy,source_dom,target_dom";
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);
std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& path);

// sweep_before.csv, sweep_after.csv and equilibrium_summary.txt under dir.
void write_equilibrium_report(const EquilibriumReport& report, const std::filesystem::path& dir);

} // namespace covi

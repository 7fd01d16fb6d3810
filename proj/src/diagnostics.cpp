#include "covi/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "covi/csv.hpp"
#include "covi/errors.hpp"
#include "covi/ops.hpp"
#include "covi/rng.hpp"
#include "covi/vicinal.hpp"

namespace covi {

SweepPairs select_sweep_pairs(const DomainPairDataset& ds, std::size_t n_samples, std::uint64_t seed) {
    if (n_samples == 0 || n_samples > std::min(ds.source_size(), ds.target_size())) {
        throw ContractError("lambda_sweep: n_samples must be in [1, dataset size]");
    }
    Rng rng(derive_seed(seed, streams::kDiagnostics));
    auto pick = [&](std::size_t n) {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(n_samples);
        return idx;
    };
    SweepPairs pairs;
    pairs.source = pick(ds.source_size());
    pairs.target = pick(ds.target_size());
    return pairs;
}

std::vector<SweepRow> lambda_sweep(const ModelParams& p, const DomainPairDataset& ds, const SweepPairs& pairs,
                                   const std::vector<double>& grid) {
    const auto frozen = p.frozen();
    const auto xs = gather_rows(ds.source_x, pairs.source);
    const auto xt = gather_rows(ds.target_x, pairs.target);
    const auto ys = argmax_rows(gather_rows(ds.source_y, pairs.source));
    const auto yt = argmax_rows(gather_rows(ds.target_y_eval, pairs.target));
    const std::size_t m = xs.rows();

    std::vector<SweepRow> rows;
    rows.reserve(grid.size());
    for (double lam : grid) {
        const auto logits = predict_logits(frozen, mix(xs, xt, RatioVector::filled(m, lam)));
        const auto top1 = argmax_rows(logits);
        SweepRow row;
        row.lambda = lam;
        row.mean_entropy = entropy(logits).item();
        std::size_t src = 0, tgt = 0;
        for (std::size_t i = 0; i < m; ++i) {
            src += top1[i] == ys[i];
            tgt += top1[i] == yt[i];
        }
        row.source_dominance = static_cast<double>(src) / static_cast<double>(m);
        row.target_dominance = static_cast<double>(tgt) / static_cast<double>(m);
        rows.push_back(row);
    }
    return rows;
}

std::vector<SweepRow> lambda_sweep(const ModelParams& p, const DomainPairDataset& ds, std::size_t n_samples) {
    const auto grid = RatioGrid::values();
    return lambda_sweep(p, ds, select_sweep_pairs(ds, n_samples, ds.seed), {grid.begin(), grid.end()});
}

EmpEstimate empirical_emp(const std::vector<SweepRow>& sweep) {
    if (sweep.empty()) throw ContractError("empirical_emp: empty sweep");
    EmpEstimate est;
    std::size_t best = 0;
    for (std::size_t i = 1; i < sweep.size(); ++i)
        if (sweep[i].mean_entropy > sweep[best].mean_entropy) best = i;
    est.at_max_entropy = sweep[best].lambda;
    for (const auto& row : sweep) {
        if (row.target_dominance > row.source_dominance) {
            est.at_flip = row.lambda;
            break;
        }
    }
    return est;
}

std::string EquilibriumReport::summary() const {
    std::ostringstream os;
    auto line = [&](const char* label, const EmpEstimate& e) {
        os << label << ": emp_at_max_entropy=" << format_fixed(e.at_max_entropy, 1)
           << " emp_at_dominance_flip=" << (e.at_flip ? format_fixed(*e.at_flip, 1) : std::string("none")) << '\n';
    };
    line("before", emp_before);
    line("after", emp_after);
    return os.str();
}

EquilibriumReport equilibrium_report(const ModelParams& before, const ModelParams& after,
                                     const DomainPairDataset& ds, std::size_t n_samples) {
    EquilibriumReport r;
    r.before = lambda_sweep(before, ds, n_samples);
    r.after = lambda_sweep(after, ds, n_samples);
    r.emp_before = empirical_emp(r.before);
    r.emp_after = empirical_emp(r.after);
    return r;
}

EmpAgreement emp_agreement(const ModelParams& p, const DomainBatch& batch) {
    const auto learned = emp_argmax(p, batch);
    const auto oracle = brute_force_emp(p, batch);
    std::size_t exact = 0, near = 0;
    for (std::size_t i = 0; i < learned.size(); ++i) {
        const auto gap = std::lround(std::abs(learned[i] - oracle[i]) / RatioGrid::kSpacing);
        exact += gap == 0;
        near += gap <= 1;
    }
    const auto m = static_cast<double>(learned.size());
    return {static_cast<double>(exact) / m, static_cast<double>(near) / m};
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << kSweepHeader << '\n';
    for (const auto& r : rows) {
        out << format_fixed(r.lambda, 1) << ',' << format_fixed(r.mean_entropy, 6) << ','
            << format_fixed(r.source_dominance, 6) << ',' << format_fixed(r.target_dominance, 6) << '\n';
    }
}

std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& path) {
    const auto table = read_csv(path);
    const auto c_lam = table.column_index("lambda");
    const auto c_ent = table.column_index("mean_entropy");
    const auto c_src = table.column_index("source_dom");
    const auto c_tgt = table.column_index("target_dom");
    std::vector<SweepRow> rows;
    for (const auto& cells : table.rows) {
        rows.push_back({std::stod(cells[c_lam]), std::stod(cells[c_ent]), std::stod(cells[c_src]),
                        std::stod(cells[c_tgt])});
    }
    return rows;
}

void write_equilibrium_report(const EquilibriumReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_sweep_csv(report.before, dir / "sweep_before.csv");
    write_sweep_csv(report.after, dir / "sweep_after.csv");
    std::ofstream out(dir / "equilibrium_summary.txt", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write equilibrium summary under " + dir.string());
    out << report.summary();
}

} // namespace covi

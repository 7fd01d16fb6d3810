#include "covi/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "covi/checks.hpp"
#include "covi/config.hpp"
#include "covi/csv.hpp"
#include "covi/diagnostics.hpp"
#include "covi/trainer.hpp"

namespace fs = std::filesystem;

namespace covi::cli {
namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string config;
    std::vector<std::string> sets;
    std::string out;
    std::optional<std::uint64_t> seed;
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

TrainConfig resolve(const Options& o) {
    TrainConfig cfg;
    if (!o.config.empty()) {
        if (!fs::is_regular_file(o.config)) throw UsageError("config file not found: " + o.config);
        cfg = load_config(o.config);
    }
    for (const auto& kv : o.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects KEY=VALUE, got '" + kv + "'");
        cfg.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    if (!o.out.empty()) cfg.out_dir = o.out;
    if (o.seed) cfg.seed = *o.seed;
    cfg.validate();
    return cfg;
}

fs::path checkpoint_or(const std::string& configured, const TrainConfig& cfg, const char* fallback) {
    return configured.empty() ? fs::path(cfg.out_dir) / fallback : fs::path(configured);
}

ModelParams load_for(const fs::path& path, const DomainPairDataset& ds) {
    auto p = load_model(path);
    if (p.dims.input_dim != ds.input_dim || p.dims.n_classes != ds.n_classes) {
        throw IoError("checkpoint " + path.string() + " was built for " + std::to_string(p.dims.input_dim) +
                      " inputs / " + std::to_string(p.dims.n_classes) + " classes; the dataset has " +
                      std::to_string(ds.input_dim) + " / " + std::to_string(ds.n_classes));
    }
    return p;
}

int do_train(const TrainConfig& cfg, std::ostream& out) {
    const auto result = train(cfg, &out);
    const auto acc = evaluate(result.params, build_dataset(cfg));
    out << "final: source_acc " << format_fixed(acc.source, 4) << " target_acc " << format_fixed(acc.target, 4)
        << "\nmetrics: " << result.metrics_path.string() << '\n';
    return kOk;
}

int do_eval(const TrainConfig& cfg, std::ostream& out) {
    const auto ds = build_dataset(cfg);
    const auto path = checkpoint_or(cfg.checkpoint, cfg, "final.ckpt");
    const auto acc = evaluate(load_for(path, ds), ds);
    std::ostringstream text;
    text << "checkpoint " << path.string() << "\nsource_acc " << format_fixed(acc.source, 6) << "\ntarget_acc "
         << format_fixed(acc.target, 6) << '\n';
    fs::create_directories(cfg.out_dir);
    std::ofstream(fs::path(cfg.out_dir) / "eval.txt", std::ios::binary | std::ios::trunc) << text.str();
    out << text.str();
    return kOk;
}

int do_sweep(const TrainConfig& cfg, std::ostream& out) {
    const auto ds = build_dataset(cfg);
    const auto path = checkpoint_or(cfg.checkpoint, cfg, "final.ckpt");
    const auto rows = lambda_sweep(load_for(path, ds), ds, cfg.sweep_samples);
    fs::create_directories(cfg.out_dir);
    const auto csv = fs::path(cfg.out_dir) / "sweep.csv";
    write_sweep_csv(rows, csv);
    const auto emp = empirical_emp(rows);
    out << "emp_at_max_entropy " << format_fixed(emp.at_max_entropy, 1) << "\nemp_at_dominance_flip "
        << (emp.at_flip ? format_fixed(*emp.at_flip, 1) : std::string("none")) << "\nsweep: " << csv.string()
        << '\n';
    return kOk;
}

int do_equilibrium(const TrainConfig& cfg, std::ostream& out) {
    const auto ds = build_dataset(cfg);
    const auto before = load_for(checkpoint_or(cfg.checkpoint_before, cfg, "warmup.ckpt"), ds);
    const auto after = load_for(checkpoint_or(cfg.checkpoint, cfg, "final.ckpt"), ds);
    const auto report = equilibrium_report(before, after, ds, cfg.sweep_samples);
    write_equilibrium_report(report, cfg.out_dir);
    out << report.summary() << "report: " << cfg.out_dir << '\n';
    return kOk;
}

int do_selftest(const TrainConfig& cfg, std::ostream& out) {
    std::vector<checks::CheckResult> results;
    results.push_back(checks::gradients(50, cfg.seed));
    results.push_back(checks::reference_ops(cfg.seed));
    results.push_back(checks::mask_equivalence(1000, cfg.seed));
    results.push_back(checks::mixup_identities(cfg.seed));

    TrainConfig base;  // oracle checks run on the default toy task
    base.seed = cfg.seed;
    const auto ds = build_dataset(base);
    const auto model = warmup(build_model(base, ds), ds, base);
    results.push_back(checks::brute_force_maximality(model, ds, 8, 64, cfg.seed));
    results.push_back(checks::emp_argmax_oracle(model, ds, cfg.seed));
    results.push_back(checks::contrastive_label_sums(model, ds, 8, cfg.seed));
    results.push_back(checks::dominance_flip(model, ds, base.omega, base.alpha, 512, cfg.seed));
    results.push_back(checks::consensus_zero_perturbation(model, ds, cfg.seed));

    bool all = true;
    for (const auto& r : results) {
        out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
        all = all && r.passed;
    }
    out << (all ? "selftest passed\n" : "selftest FAILED\n");
    return all ? kOk : kFailure;
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Vicinal-space domain adaptation on toy domain pairs", "covi"};
    app.require_subcommand(1, 1);
    Options opts;
    struct Verb {
        const char* name;
        const char* help;
        int (*fn)(const TrainConfig&, std::ostream&);
    };
    const Verb verbs[] = {
        {"train", "warm-up then adaptation; writes metrics and checkpoints", do_train},
        {"eval", "source/target accuracy of a checkpoint", do_eval},
        {"sweep", "entropy and dominance over the ratio grid for a checkpoint", do_sweep},
        {"equilibrium", "compare EMP estimates before and after adaptation", do_equilibrium},
        {"selftest", "run the oracle consistency checks", do_selftest},
    };
    std::vector<CLI::App*> subs;
    for (const auto& v : verbs) {
        auto* sub = app.add_subcommand(v.name, v.help);
        sub->add_option("--config", opts.config, "config file (key = value lines)");
        sub->add_option("--set", opts.sets, "override one key, KEY=VALUE (repeatable)")->allow_extra_args(false);
        sub->add_option("--out", opts.out, "output directory");
        sub->add_option("--seed", opts.seed, "random seed");
        subs.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n';
        return kUsage;
    }

    TrainConfig cfg;
    try {
        cfg = resolve(opts);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const ConfigError& e) {
        err << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }

    out << "# effective config\n" << cfg.to_text() << "# end config\n";
    try {
        for (std::size_t i = 0; i < subs.size(); ++i)
            if (subs[i]->parsed()) return verbs[i].fn(cfg, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kUsage;
}

} // namespace covi::cli

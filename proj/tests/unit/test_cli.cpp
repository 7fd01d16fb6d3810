#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "covi/cli.hpp"
#include "covi/csv.hpp"
#include "covi/trainer.hpp"

using namespace covi;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = 0;
    std::string out;
    std::string err;
};

Run run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "covi");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Run r;
    r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("covi_cli_" + name);
    fs::remove_all(dir);
    return dir;
}

std::vector<std::string> small_run(const fs::path& out) {
    return {"--out",       out.string(),        "--set", "n_per_domain=200", "--set",
            "batch_size=32", "--set", "warmup_epochs=3", "--set", "covi_epochs=1", "--set", "sweep_samples=128"};
}

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
    head.insert(head.end(), tail.begin(), tail.end());
    return head;
}

} // namespace

TEST_CASE("usage errors exit with 2") {
    CHECK(run_cli({}).code == 2);
    CHECK(run_cli({"fly"}).code == 2);
    CHECK(run_cli({"train", "--bogus"}).code == 2);
    CHECK(run_cli({"train", "--config", "/nonexistent/covi.cfg"}).code == 2);
    const auto bad_key = run_cli({"train", "--set", "bogus=1"});
    CHECK(bad_key.code == 2);
    CHECK(bad_key.err.find("bogus") != std::string::npos);
    CHECK(run_cli({"train", "--set", "omega=0.7"}).code == 2);
    CHECK(run_cli({"train", "--set", "no_equals_sign"}).code == 2);
    CHECK(run_cli({"sweep", "--set", "n_per_domain=100"}).code == 2);
}

TEST_CASE("help exits cleanly") {
    const auto r = run_cli({"--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("selftest") != std::string::npos);
}

TEST_CASE("config file and overrides") {
    const auto dir = scratch("config");
    fs::create_directories(dir);
    const auto cfg_path = dir / "run.cfg";
    std::ofstream(cfg_path) << "# comment\nomega = 0.2\nseed = 4\n";
    const auto missing = dir / "nothing_here";
    const auto r = run_cli({"eval", "--config", cfg_path.string(), "--set", "alpha=1.5", "--seed", "9", "--out",
                            dir.string(), "--set", "checkpoint=" + missing.string()});
    CHECK(r.out.find("omega = 0.2\n") != std::string::npos);
    CHECK(r.out.find("alpha = 1.5\n") != std::string::npos);
    CHECK(r.out.find("seed = 9\n") != std::string::npos);
    // missing checkpoint is a runtime failure, not a usage error
    CHECK(r.code == 1);
}

TEST_CASE("train, eval, sweep and equilibrium stay inside the output directory") {
    const auto dir = scratch("pipeline");
    const auto train = run_cli(with({"train"}, small_run(dir)));
    REQUIRE(train.code == 0);
    CHECK(train.out.find("final: source_acc") != std::string::npos);
    for (const char* f : {"metrics.csv", "warmup.ckpt", "final.ckpt"}) CHECK(fs::exists(dir / f));

    const auto eval = run_cli(with({"eval"}, small_run(dir)));
    REQUIRE(eval.code == 0);
    CHECK(fs::exists(dir / "eval.txt"));

    const auto sweep = run_cli(with({"sweep"}, small_run(dir)));
    REQUIRE(sweep.code == 0);
    CHECK(read_csv(dir / "sweep.csv").rows.size() == 11);

    const auto eq = run_cli(with({"equilibrium"}, small_run(dir)));
    REQUIRE(eq.code == 0);
    CHECK(eq.out.find("before: emp_at_max_entropy=") != std::string::npos);

    for (const auto& entry : fs::recursive_directory_iterator(dir))
        CHECK(entry.path().string().rfind(dir.string(), 0) == 0);
}

TEST_CASE("eval of untrained models sits near chance") {
    const auto dir = scratch("chance");
    fs::create_directories(dir);
    double total = 0.0;
    const int n_seeds = 5;
    for (int seed = 0; seed < n_seeds; ++seed) {
        TrainConfig cfg;
        cfg.seed = static_cast<std::uint64_t>(seed);
        const auto ckpt = dir / ("init_" + std::to_string(seed) + ".ckpt");
        save_model(build_model(cfg, build_dataset(cfg)), ckpt);
        const auto r = run_cli({"eval", "--seed", std::to_string(seed), "--out", dir.string(), "--set",
                                "checkpoint=" + ckpt.string()});
        REQUIRE(r.code == 0);
        const auto at = r.out.find("target_acc ");
        REQUIRE(at != std::string::npos);
        total += std::stod(r.out.substr(at + 11));
    }
    CHECK(std::abs(total / n_seeds - 0.5) <= 0.1);
}

TEST_CASE("selftest passes") {
    const auto r = run_cli({"selftest", "--out", scratch("selftest").string()});
    INFO(r.out);
    CHECK(r.code == 0);
    CHECK(r.out.find("FAIL") == std::string::npos);
}

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "covi/errors.hpp"
#include "covi/vicinal.hpp"

namespace covi {

// Unknown keys, malformed values, invalid combinations.
class ConfigError : public ContractError {
public:
    using ContractError::ContractError;
};

enum class UpdateMode { kPerLoss, kSummed };
enum class LamPMode { kFixed, kAdaptive };
enum class LrSchedule { kConstant, kAnnealed };

struct TrainConfig {
    // dataset
    std::string generator = "two_moons";  // two_moons | blobs
    std::size_t n_per_domain = 1000;
    double rotation_deg = 40.0;
    double noise_std = 0.05;
    std::size_t n_classes = 3;  // blobs only
    std::size_t input_dim = 4;  // blobs only
    double shift = 0.0;         // blobs only
    bool standardize = true;

    // model
    std::size_t hidden = 64;
    std::size_t feat_dim = 32;
    std::size_t emp_hidden = 64;
    std::size_t emp_layers = 1;

    // optimisation
    std::size_t batch_size = 64;
    std::size_t warmup_epochs = 20;
    std::size_t covi_epochs = 20;
    double lr = 0.01;
    double lr_phi = 0.01;
    double momentum = 0.9;
    LrSchedule lr_schedule = LrSchedule::kConstant;
    UpdateMode update_mode = UpdateMode::kPerLoss;
    EmpRelaxation emp_relaxation = EmpRelaxation::kExpectedEntropy;

    // method
    double omega = 0.1;
    double alpha = 2.0;
    double beta = 2.0;
    double lam_p = 0.1;
    LamPMode lam_p_mode = LamPMode::kFixed;
    double space_sd = 0.0;
    double space_td = 1.0;
    double w_emp = 1.0;
    double w_ct = 1.0;
    double w_cs = 1.0;

    // run
    std::uint64_t seed = 0;
    std::string out_dir = "runs/default";
    std::size_t checkpoint_every = 0;  // epochs; 0 = final only
    std::string resume_from;

    // eval / diagnostics
    std::string checkpoint;         // model to evaluate; default <out_dir>/final.ckpt
    std::string checkpoint_before;  // default <out_dir>/warmup.ckpt
    std::size_t sweep_samples = 256;

    static const std::vector<std::string>& keys();

    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;
    void validate() const;
    // `key = value` lines for every key, in keys() order.
    std::string to_text() const;
};

TrainConfig load_config(const std::filesystem::path& path);
// Parses the config text format: `key = value`, `#` comments, blank lines.
void apply_config_text(TrainConfig& cfg, const std::string& text, const std::string& origin = "<text>");

} // namespace covi

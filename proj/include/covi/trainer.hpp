#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "covi/config.hpp"
#include "covi/domains.hpp"
#include "covi/model.hpp"
#include "covi/optim.hpp"
#include "covi/rng.hpp"

namespace covi {

struct MetricsRow {
    std::size_t step = 0;
    double r_emp = 0.0;
    double r_ct = 0.0;
    double r_cs = 0.0;
    double source_acc = 0.0;
    double target_acc = 0.0;
    double mean_lambda_star = 0.0;
    double ct_keep = 0.0;
    double cs_keep = 0.0;
    double agreement = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "step,r_emp,r_ct,r_cs,source_acc,target_acc,mean_lambda_star,ct_keep,cs_keep,agreement";
std::string format_metrics_row(const MetricsRow& row);

struct Accuracy {
    double source = 0.0;
    double target = 0.0;
};

// Argmax accuracy on both domains (target labels are used here only).
Accuracy evaluate(const ModelParams& p, const DomainPairDataset& ds);
double accuracy(const ModelParams& p, const Tensor& x, const Tensor& y_one_hot);

DomainPairDataset build_dataset(const TrainConfig& cfg);
ModelParams build_model(const TrainConfig& cfg, const DomainPairDataset& ds);

// Source-only cross-entropy on theta for cfg.warmup_epochs (>= 1) epochs.
void warmup(ModelParams& p, const DomainPairDataset& ds, const TrainConfig& cfg, SgdMomentum& opt_theta,
            SamplerState& sampler);
ModelParams warmup(const ModelParams& p, const DomainPairDataset& ds, const TrainConfig& cfg);

/// One adaptation step, each phase with its own backward and optimizer step:
///   1. phi ascends the EMP-learner entropy objective (theta frozen)
///   2. theta descends w_emp * EMP-Mixup loss at lambda* = emp_argmax
///   3. theta descends w_ct * contrastive loss around lambda*
///   4. theta descends w_cs * consensus loss
/// In summed mode phases 2-4 become one step on the weighted sum. Accuracy
/// fields and the step number are left for the caller. A non-finite loss
/// throws TrainingAborted after writing a dump under cfg.out_dir.
MetricsRow covi_step(ModelParams& p, const DomainBatch& batch, const TrainConfig& cfg, SgdMomentum& opt_theta,
                     SgdMomentum& opt_phi, Rng& rng);

/// Phi-only training of the EMP-learner with theta frozen.
struct EmpFitConfig {
    std::size_t steps = 30000;
    std::size_t batch_size = 64;
    double lr = 0.05;
    double momentum = 0.9;
    double decay_at = 0.75;  // fraction of steps after which lr is scaled
    double decay = 0.1;
    EmpRelaxation relaxation = EmpRelaxation::kTargetMatching;
    std::uint64_t seed = 0;
};

void fit_emp_learner(ModelParams& p, const DomainPairDataset& ds, const EmpFitConfig& fc);

/// Everything needed to continue a run bit-for-bit.
class TrainingSession {
public:
    explicit TrainingSession(const TrainConfig& cfg);

    const TrainConfig& config() const { return cfg_; }
    const DomainPairDataset& dataset() const { return ds_; }
    ModelParams& params() { return params_; }
    std::size_t covi_epochs_done() const { return epochs_done_; }
    std::size_t steps_done() const { return steps_done_; }
    bool warmed_up() const { return warmed_up_; }

    void run_warmup();
    MetricsRow step();

    void save(const std::filesystem::path& ckpt_path) const;  // also writes <path>.state
    void restore(const std::filesystem::path& ckpt_path);
    void mark_epoch_done() { ++epochs_done_; }

private:
    void update_learning_rate();

    TrainConfig cfg_;
    DomainPairDataset ds_;
    ModelParams params_;
    SgdMomentum opt_theta_;
    SgdMomentum opt_phi_;
    SamplerState sampler_;
    Rng rng_;
    std::size_t epochs_done_ = 0;
    std::size_t steps_done_ = 0;
    bool warmed_up_ = false;
};

struct TrainResult {
    ModelParams params;
    std::filesystem::path metrics_path;
};

/// Warm-up (unless resuming) then covi_epochs of adaptation. Writes
/// metrics.csv row by row, warmup.ckpt, final.ckpt and epoch_<k>.ckpt every
/// checkpoint_every epochs, all under cfg.out_dir. A resumed run keeps the
/// metrics rows up to its restored step. The output directory is
/// checked for writability before any computation.
TrainResult train(const TrainConfig& cfg, std::ostream* log = nullptr);

} // namespace covi

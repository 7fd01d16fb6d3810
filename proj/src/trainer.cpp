#include "covi/trainer.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>

#include "covi/consensus.hpp"
#include "covi/contrastive.hpp"
#include "covi/csv.hpp"
#include "covi/ops.hpp"
#include "covi/vicinal.hpp"

namespace covi {
namespace {

namespace fs = std::filesystem;

void abort_run(const TrainConfig& cfg, const ModelParams& p, const std::string& phase, double value) {
    std::ostringstream msg;
    msg << "non-finite loss in phase '" << phase << "' (value " << value << ")";
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (!ec) {
        std::ofstream dump(fs::path(cfg.out_dir) / "abort_dump.txt");
        dump << msg.str() << "\n\n" << cfg.to_text();
        try {
            save_model(p, fs::path(cfg.out_dir) / "abort.ckpt");
        } catch (const IoError&) {
        }
    }
    throw TrainingAborted(msg.str());
}

double checked_value(const Tensor& loss, const TrainConfig& cfg, const ModelParams& p, const char* phase) {
    const double v = loss.item();
    if (!std::isfinite(v)) abort_run(cfg, p, phase, v);
    return v;
}

// Scaled backward + step; untracked losses (empty masks) leave theta alone.
void descend(const Tensor& loss, double weight, SgdMomentum& opt) {
    if (weight == 0.0 || !loss.requires_grad()) return;
    backward(scale(loss, weight));
    opt.step();
}

double keep_rate(const std::vector<bool>& mask, std::size_t kept) {
    return mask.empty() ? 0.0 : static_cast<double>(kept) / static_cast<double>(mask.size());
}

void check_writable(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
    const auto probe = dir / ".write_probe";
    {
        std::ofstream os(probe);
        if (!(os << "ok")) throw IoError("output directory " + dir.string() + " is not writable");
    }
    fs::remove(probe, ec);
}

// Metrics rows of an earlier run up to `step`, so a resumed run continues the
// same file. Missing file: nothing.
std::string rows_up_to(const fs::path& path, std::size_t step) {
    std::ifstream in(path, std::ios::binary);
    std::string line, kept;
    if (!in || !std::getline(in, line)) return kept;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (std::stoull(line.substr(0, line.find(','))) > step) break;
        kept += line + '\n';
    }
    return kept;
}

} // namespace

std::string format_metrics_row(const MetricsRow& r) {
    std::string out = std::to_string(r.step);
    for (double v : {r.r_emp, r.r_ct, r.r_cs, r.source_acc, r.target_acc, r.mean_lambda_star, r.ct_keep, r.cs_keep,
                     r.agreement}) {
        out += ',';
        out += format_fixed(v, 6);
    }
    return out;
}

double accuracy(const ModelParams& p, const Tensor& x, const Tensor& y) {
    const auto pred = argmax_rows(predict_logits(p.frozen(), x));
    const auto truth = argmax_rows(y);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i];
    return pred.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(pred.size());
}

Accuracy evaluate(const ModelParams& p, const DomainPairDataset& ds) {
    return {accuracy(p, ds.source_x, ds.source_y), accuracy(p, ds.target_x, ds.target_y_eval)};
}

DomainPairDataset build_dataset(const TrainConfig& cfg) {
    DomainPairDataset ds = cfg.generator == "blobs"
                               ? make_blobs_pair(cfg.n_classes, cfg.input_dim, cfg.shift, cfg.seed, cfg.n_per_domain)
                               : make_two_moons_pair(cfg.n_per_domain, cfg.rotation_deg, cfg.noise_std, cfg.seed);
    return cfg.standardize ? standardize_by_source(ds) : ds;
}

ModelParams build_model(const TrainConfig& cfg, const DomainPairDataset& ds) {
    ModelDims dims;
    dims.input_dim = ds.input_dim;
    dims.n_classes = ds.n_classes;
    dims.hidden = cfg.hidden;
    dims.feat_dim = cfg.feat_dim;
    dims.emp_hidden = cfg.emp_hidden;
    dims.emp_layers = cfg.emp_layers;
    return init_model(dims, cfg.seed);
}

void warmup(ModelParams& p, const DomainPairDataset& ds, const TrainConfig& cfg, SgdMomentum& opt_theta,
            SamplerState& sampler) {
    if (cfg.warmup_epochs < 1) throw ContractError("warmup: warmup_epochs must be at least 1");
    const std::size_t steps = cfg.warmup_epochs * batches_per_epoch(ds, cfg.batch_size);
    for (std::size_t s = 0; s < steps; ++s) {
        const auto batch = next_batch(ds, cfg.batch_size, sampler);
        const auto loss = cross_entropy(predict_logits(p, batch.xs), batch.ys);
        checked_value(loss, cfg, p, "warmup");
        backward(loss);
        opt_theta.step();
    }
}

ModelParams warmup(const ModelParams& p, const DomainPairDataset& ds, const TrainConfig& cfg) {
    ModelParams out = p.clone();
    SgdMomentum opt(out.theta(), cfg.lr, cfg.momentum);
    SamplerState sampler(ds.source_size(), ds.target_size(), derive_seed(cfg.seed, streams::kSampler));
    warmup(out, ds, cfg, opt, sampler);
    return out;
}

void fit_emp_learner(ModelParams& p, const DomainPairDataset& ds, const EmpFitConfig& fc) {
    SgdMomentum opt(p.phi(), fc.lr, fc.momentum);
    SamplerState sampler(ds.source_size(), ds.target_size(), derive_seed(fc.seed, streams::kSampler));
    const auto decay_step = static_cast<std::size_t>(fc.decay_at * static_cast<double>(fc.steps));
    for (std::size_t s = 0; s < fc.steps; ++s) {
        if (s == decay_step) opt.set_learning_rate(fc.lr * fc.decay);
        const auto batch = next_batch(ds, fc.batch_size, sampler);
        const auto objective = emp_learner_loss(p, batch, fc.relaxation);
        if (!std::isfinite(objective.item())) throw TrainingAborted("fit_emp_learner: non-finite objective");
        backward(scale(objective, -1.0));
        opt.step();
    }
}

MetricsRow covi_step(ModelParams& p, const DomainBatch& batch, const TrainConfig& cfg, SgdMomentum& opt_theta,
                     SgdMomentum& opt_phi, Rng& rng) {
    MetricsRow row;
    const std::size_t m = batch.size();

    // 1. EMP-learner ascent; theta is frozen inside emp_learner_loss.
    {
        const auto objective = emp_learner_loss(p, batch, cfg.emp_relaxation);
        checked_value(objective, cfg, p, "emp_learner");
        backward(scale(objective, -1.0));
        opt_phi.step();
    }

    const auto lam_star = emp_argmax(p, batch);
    double lam_sum = 0.0;
    for (double v : lam_star.lam.data()) lam_sum += v;
    row.mean_lambda_star = lam_sum / static_cast<double>(m);

    const bool summed = cfg.update_mode == UpdateMode::kSummed;
    Tensor total;
    auto accumulate_or_step = [&](const Tensor& loss, double weight) {
        if (!summed) {
            descend(loss, weight, opt_theta);
            return;
        }
        if (weight == 0.0 || !loss.requires_grad()) return;
        const auto term = scale(loss, weight);
        total = total.defined() ? add(total, term) : term;
    };

    // 2. EMP-Mixup at the worst-case ratios.
    {
        const auto loss = emp_mixup_loss(p, batch, lam_star);
        row.r_emp = checked_value(loss, cfg, p, "emp_mixup");
        accumulate_or_step(loss, cfg.w_emp);
    }

    // 3. Contrastive views around lambda*.
    {
        const auto mask = confidence_mask(top1_probabilities(predict_logits(p.frozen(), batch.xt)), cfg.alpha);
        const auto pairs =
            build_contrastive_pairs(batch, lam_star, cfg.omega, mask, SpaceBounds{cfg.space_sd, cfg.space_td});
        row.ct_keep = keep_rate(mask, pairs.size());
        row.agreement = contrastive_agreement(p, pairs);
        const auto loss = contrastive_loss(p, pairs, batch.ys, pseudo_labels(p, batch.xt));
        row.r_ct = checked_value(loss, cfg, p, "contrastive");
        accumulate_or_step(loss, cfg.w_ct);
    }

    // 4. Target-label consensus.
    {
        double lam_p = cfg.lam_p;
        if (cfg.lam_p_mode == LamPMode::kAdaptive) {
            // keep both views beyond the contrastive band on the target side
            lam_p = std::min(lam_p, std::max(0.0, 1.0 - (row.mean_lambda_star + cfg.omega)));
        }
        const auto views = make_views(batch, lam_p, rng);
        const auto mask = consensus_mask(p, views, cfg.beta);
        std::size_t kept = 0;
        for (bool b : mask) kept += b;
        row.cs_keep = keep_rate(mask, kept);
        const auto loss = consensus_loss(p, views, cfg.beta);
        row.r_cs = checked_value(loss, cfg, p, "consensus");
        accumulate_or_step(loss, cfg.w_cs);
    }

    if (summed && total.defined()) {
        backward(total);
        opt_theta.step();
    }
    return row;
}

TrainingSession::TrainingSession(const TrainConfig& cfg)
    : cfg_(cfg),
      ds_(build_dataset(cfg)),
      params_(build_model(cfg, ds_)),
      opt_theta_(params_.theta(), cfg.lr, cfg.momentum),
      opt_phi_(params_.phi(), cfg.lr_phi, cfg.momentum),
      sampler_(ds_.source_size(), ds_.target_size(), derive_seed(cfg.seed, streams::kSampler)),
      rng_(derive_seed(cfg.seed, streams::kConsensus)) {
    cfg_.validate();
}

void TrainingSession::run_warmup() {
    warmup(params_, ds_, cfg_, opt_theta_, sampler_);
    warmed_up_ = true;
}

void TrainingSession::update_learning_rate() {
    if (cfg_.lr_schedule != LrSchedule::kAnnealed) return;
    const std::size_t total = cfg_.covi_epochs * batches_per_epoch(ds_, cfg_.batch_size);
    const double progress = total == 0 ? 0.0 : static_cast<double>(steps_done_) / static_cast<double>(total);
    const double factor = std::pow(1.0 + 10.0 * progress, -0.75);
    opt_theta_.set_learning_rate(cfg_.lr * factor);
    opt_phi_.set_learning_rate(cfg_.lr_phi * factor);
}

MetricsRow TrainingSession::step() {
    update_learning_rate();
    const auto batch = next_batch(ds_, cfg_.batch_size, sampler_);
    auto row = covi_step(params_, batch, cfg_, opt_theta_, opt_phi_, rng_);
    row.step = ++steps_done_;
    const auto acc = evaluate(params_, ds_);
    row.source_acc = acc.source;
    row.target_acc = acc.target;
    return row;
}

void TrainingSession::save(const fs::path& path) const {
    auto ckpt = make_checkpoint(params_);
    auto add_velocity = [&](const char* prefix, const SgdMomentum& opt) {
        const auto& vel = opt.velocity();
        for (std::size_t i = 0; i < vel.size(); ++i) {
            ckpt.entries.emplace_back(std::string(prefix) + std::to_string(i),
                                      Tensor::from(opt.params()[i].shape(), vel[i]));
        }
    };
    add_velocity("opt_theta.velocity.", opt_theta_);
    add_velocity("opt_phi.velocity.", opt_phi_);
    save_checkpoint(ckpt, path);

    std::ofstream st(fs::path(path.string() + ".state"), std::ios::binary | std::ios::trunc);
    if (!st) throw IoError("cannot write session state next to " + path.string());
    st << "warmed_up " << warmed_up_ << '\n'
       << "epochs " << epochs_done_ << '\n'
       << "steps " << steps_done_ << '\n'
       << rng_ << '\n'
       << sampler_.serialize();
}

void TrainingSession::restore(const fs::path& path) {
    const auto ckpt = load_checkpoint(path);
    const auto loaded = params_from_checkpoint(ckpt);
    if (loaded.dims.input_dim != params_.dims.input_dim || loaded.dims.n_classes != params_.dims.n_classes ||
        loaded.dims.hidden != params_.dims.hidden || loaded.dims.feat_dim != params_.dims.feat_dim ||
        loaded.dims.emp_hidden != params_.dims.emp_hidden ||
        loaded.dims.emp_layers != params_.dims.emp_layers) {
        throw IoError("checkpoint " + path.string() + " does not match the configured model");
    }
    // Copy values in place so optimizer handles stay valid.
    auto dst = params_.named();
    auto src = loaded.named();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        auto out = dst[i].second.mutable_data();
        std::copy(src[i].second.data().begin(), src[i].second.data().end(), out.begin());
    }
    auto read_velocity = [&](const char* prefix, SgdMomentum& opt) {
        std::vector<std::vector<double>> vel;
        for (std::size_t i = 0; i < opt.params().size(); ++i) {
            const Tensor* t = ckpt.find(std::string(prefix) + std::to_string(i));
            if (!t) throw IoError("checkpoint " + path.string() + " has no optimizer state");
            vel.emplace_back(t->data().begin(), t->data().end());
        }
        opt.set_velocity(std::move(vel));
    };
    read_velocity("opt_theta.velocity.", opt_theta_);
    read_velocity("opt_phi.velocity.", opt_phi_);

    std::ifstream st(fs::path(path.string() + ".state"), std::ios::binary);
    if (!st) throw IoError("missing session state " + path.string() + ".state");
    std::string tag;
    st >> tag >> warmed_up_ >> tag >> epochs_done_ >> tag >> steps_done_ >> rng_;
    if (!st) throw IoError("malformed session state for " + path.string());
    std::stringstream rest;
    rest << st.rdbuf();
    sampler_ = SamplerState::deserialize(rest.str());
}

TrainResult train(const TrainConfig& cfg, std::ostream* log) {
    cfg.validate();
    const fs::path out(cfg.out_dir);
    check_writable(out);

    TrainingSession session(cfg);
    if (!cfg.resume_from.empty()) {
        session.restore(cfg.resume_from);
        if (log) *log << "resumed from " << cfg.resume_from << " after " << session.covi_epochs_done() << " epochs\n";
    }
    if (!session.warmed_up()) {
        session.run_warmup();
        session.save(out / "warmup.ckpt");
        if (log) {
            const auto acc = evaluate(session.params(), session.dataset());
            *log << "warm-up done: source_acc " << format_fixed(acc.source, 4) << " target_acc "
                 << format_fixed(acc.target, 4) << '\n';
        }
    }

    const auto metrics_path = out / "metrics.csv";
    const auto earlier = cfg.resume_from.empty() ? std::string() : rows_up_to(metrics_path, session.steps_done());
    std::ofstream metrics(metrics_path, std::ios::binary | std::ios::trunc);
    if (!metrics) throw IoError("cannot write " + metrics_path.string());
    metrics << kMetricsHeader << '\n' << earlier;

    const std::size_t per_epoch = batches_per_epoch(session.dataset(), cfg.batch_size);
    while (session.covi_epochs_done() < cfg.covi_epochs) {
        MetricsRow last;
        for (std::size_t s = 0; s < per_epoch; ++s) {
            last = session.step();
            metrics << format_metrics_row(last) << '\n';
            metrics.flush();
        }
        session.mark_epoch_done();
        const auto epoch = session.covi_epochs_done();
        if (log) {
            *log << "epoch " << epoch << ": target_acc " << format_fixed(last.target_acc, 4) << " mean_lambda* "
                 << format_fixed(last.mean_lambda_star, 3) << '\n';
        }
        if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) {
            session.save(out / ("epoch_" + std::to_string(epoch) + ".ckpt"));
        }
    }
    session.save(out / "final.ckpt");
    return {session.params().clone(), metrics_path};
}

} // namespace covi

#include "covi/optim.hpp"

#include <string>

#include "covi/errors.hpp"

namespace covi {

SgdMomentum::SgdMomentum(std::vector<Tensor> params, double learning_rate, double momentum)
    : params_(std::move(params)), lr_(learning_rate), momentum_(momentum) {
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw ContractError("SgdMomentum: momentum must lie in [0, 1)");
    }
    set_learning_rate(learning_rate);
    velocity_.reserve(params_.size());
    for (const auto& p : params_) {
        if (!p.requires_grad()) throw ContractError("SgdMomentum: parameter does not track gradients");
        velocity_.emplace_back(p.size(), 0.0);
    }
}

void SgdMomentum::set_learning_rate(double lr) {
    if (!(lr >= 0.0)) throw ContractError("SgdMomentum: learning rate must be nonnegative");
    lr_ = lr;
}

void SgdMomentum::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (!params_[i].has_grad()) {
            throw ContractError("SgdMomentum::step: parameter " + std::to_string(i) + " has no gradient");
        }
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        auto& v = velocity_[i];
        auto g = p.grad();
        auto w = p.mutable_data();
        for (std::size_t j = 0; j < w.size(); ++j) {
            v[j] = momentum_ * v[j] + g[j];
            w[j] -= lr_ * v[j];
        }
        p.clear_grad();
    }
}

void SgdMomentum::zero_grad() {
    for (auto& p : params_) p.clear_grad();
}

void SgdMomentum::set_velocity(std::vector<std::vector<double>> velocity) {
    if (velocity.size() != params_.size()) throw ShapeError("set_velocity: buffer count mismatch");
    for (std::size_t i = 0; i < velocity.size(); ++i) {
        if (velocity[i].size() != params_[i].size()) throw ShapeError("set_velocity: buffer size mismatch");
    }
    velocity_ = std::move(velocity);
}

} // namespace covi

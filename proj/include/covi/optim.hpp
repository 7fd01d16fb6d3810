#pragma once

#include <vector>

#include "covi/tensor.hpp"

namespace covi {

/// SGD with heavy-ball momentum over a fixed parameter group:
///   v <- momentum * v + grad;  p <- p - lr * v
/// Gradients are dropped after each step.
class SgdMomentum {
public:
    SgdMomentum(std::vector<Tensor> params, double learning_rate, double momentum);

    void step();
    void zero_grad();

    double learning_rate() const { return lr_; }
    void set_learning_rate(double lr);
    double momentum() const { return momentum_; }

    const std::vector<Tensor>& params() const { return params_; }
    const std::vector<std::vector<double>>& velocity() const { return velocity_; }
    // Restores velocity buffers (e.g. from a checkpoint); shapes must match.
    void set_velocity(std::vector<std::vector<double>> velocity);

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> velocity_;
    double lr_;
    double momentum_;
};

} // namespace covi

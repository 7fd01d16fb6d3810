#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace covi {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One vertex of the eager tape. Ops create a node holding their result and a
// closure that pushes the node's gradient into its parents.
struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty == no gradient accumulated yet
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    bool is_leaf() const { return !backward_fn; }
    std::vector<double>& grad_buffer();
};

} // namespace detail

/// Dense row-major float64 array with optional reverse-mode tracking.
///
/// A Tensor is a handle: copies share the same storage and tape node, the
/// same way framework tensors behave. Use clone() for an independent copy and
/// detach() for an untracked view of the current values.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor row_vector(std::vector<double> values);  // shape [n]

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t size() const;
    std::size_t rows() const;  // first dim (1 for scalars)
    std::size_t cols() const;  // second dim for matrices, 1 otherwise

    std::span<const double> data() const;
    // Only parameter owners (initialisers, optimizers, checkpoint loaders)
    // should write through this.
    std::span<double> mutable_data();
    double at(std::size_t r, std::size_t c) const;
    double operator[](std::size_t i) const { return data()[i]; }
    double item() const;

    bool requires_grad() const;
    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad();   // fill existing grad with zeros (allocates if absent)
    void clear_grad();  // drop the grad buffer entirely

    Tensor detach() const;
    Tensor clone() const;

    // Tape construction; used by the op implementations.
    static Tensor make_result(Shape shape, std::vector<double> data,
                              std::vector<Tensor> inputs,
                              std::function<void(detail::Node&)> backward_fn);
    const std::shared_ptr<detail::Node>& node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    detail::Node& checked() const;

    std::shared_ptr<detail::Node> node_;
};

/// Reverse pass from a scalar loss. Leaf gradients accumulate across calls;
/// intermediate gradients are recomputed from scratch every time.
void backward(const Tensor& loss);

} // namespace covi

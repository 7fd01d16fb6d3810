#include "covi/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "covi/errors.hpp"

namespace covi {

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::vector<double>& detail::Node::grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::vector<double> v(numel(shape), value);
    return from(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (numel(shape) != values.size()) {
        throw ShapeError("Tensor::from: shape " + shape_str(shape) + " needs " +
                         std::to_string(numel(shape)) + " values, got " +
                         std::to_string(values.size()));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from({}, {value}, requires_grad);
}

Tensor Tensor::row_vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return from({n}, std::move(values));
}

detail::Node& Tensor::checked() const {
    if (!node_) throw ContractError("use of an undefined Tensor");
    return *node_;
}

const Shape& Tensor::shape() const { return checked().shape; }
std::size_t Tensor::size() const { return checked().data.size(); }

std::size_t Tensor::rows() const {
    const auto& s = shape();
    return s.empty() ? 1 : s[0];
}

std::size_t Tensor::cols() const {
    const auto& s = shape();
    return s.size() >= 2 ? s[1] : 1;
}

std::span<const double> Tensor::data() const { return checked().data; }
std::span<double> Tensor::mutable_data() { return checked().data; }

double Tensor::at(std::size_t r, std::size_t c) const {
    return checked().data[r * cols() + c];
}

double Tensor::item() const {
    if (size() != 1) {
        throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    }
    return checked().data[0];
}

bool Tensor::requires_grad() const { return checked().requires_grad; }
bool Tensor::has_grad() const { return !checked().grad.empty(); }
std::span<const double> Tensor::grad() const { return checked().grad; }

void Tensor::zero_grad() {
    auto& n = checked();
    n.grad.assign(n.data.size(), 0.0);
}

void Tensor::clear_grad() {
    auto& n = checked();
    n.grad.clear();
    n.grad.shrink_to_fit();
}

Tensor Tensor::detach() const {
    const auto& n = checked();
    return from(n.shape, n.data, false);
}

Tensor Tensor::clone() const {
    const auto& n = checked();
    auto t = from(n.shape, n.data, n.requires_grad);
    t.node_->grad = n.grad;
    return t;
}

Tensor Tensor::make_result(Shape shape, std::vector<double> data,
                           std::vector<Tensor> inputs,
                           std::function<void(detail::Node&)> backward_fn) {
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    const bool tracked = std::any_of(inputs.begin(), inputs.end(),
                                     [](const Tensor& t) { return t.requires_grad(); });
    if (tracked) {
        node->requires_grad = true;
        node->parents.reserve(inputs.size());
        for (auto& in : inputs) node->parents.push_back(in.node_);
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(node));
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw ContractError("backward: loss must be a scalar, got shape " +
                            (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    }
    auto root = loss.node();
    if (!root->requires_grad) {
        throw ContractError("backward: loss does not depend on any tracked tensor");
    }

    // Post-order DFS; reversing it gives a valid processing order.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (auto* n : order) {
        if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
    }
    root->grad_buffer()[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if (!(*it)->is_leaf()) (*it)->backward_fn(**it);
    }
    for (auto* n : order) {
        if (!n->is_leaf()) n->grad.clear();
    }
}

} // namespace covi

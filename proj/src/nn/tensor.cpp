#include "elp/nn/tensor.hpp"

#include <algorithm>
#include <unordered_set>

#include "elp/error.hpp"

namespace elp::nn {

namespace {
#ifdef NDEBUG
thread_local bool g_check_numerics = false;
#else
thread_local bool g_check_numerics = true;
#endif
}  // namespace

void set_check_numerics(bool enabled) { g_check_numerics = enabled; }
bool check_numerics() { return g_check_numerics; }

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

std::string to_string(const Shape& s) {
    return "[" + std::to_string(s.rows) + "x" + std::to_string(s.cols) + "]";
}

std::span<double> detail::Node::grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (values.size() != shape.size()) {
        throw Error(ErrorKind::ShapeError, "tensor data size " + std::to_string(values.size()) +
                                               " does not match shape " + to_string(shape));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = shape;
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return from(shape, std::vector<double>(shape.size(), 0.0), requires_grad);
}

Tensor Tensor::scalar(double v) { return from({1, 1}, {v}); }

double Tensor::item() const {
    if (size() != 1) throw Error(ErrorKind::ShapeError, "item() on non-scalar " + to_string(shape()));
    return node_->value[0];
}

std::vector<double> Tensor::grad() const {
    if (node_->grad.size() == node_->value.size()) return node_->grad;
    return std::vector<double>(node_->value.size(), 0.0);
}

void Tensor::zero_grad() {
    auto g = node_->grad_buffer();
    std::fill(g.begin(), g.end(), 0.0);
}

void Tensor::backward(double seed) const {
    auto tape = ComputationTape::record(*this);
    tape.backward(seed);
}

ComputationTape ComputationTape::record(const Tensor& root) {
    if (root.size() != 1) {
        throw Error(ErrorKind::ShapeError, "backward requires a scalar root, got " + to_string(root.shape()));
    }
    ComputationTape tape;
    tape.root_ = root.node();
    // Iterative post-order DFS; only nodes that lead to a trainable leaf matter.
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
            continue;
        }
        tape.order_.push_back(node);
        stack.pop_back();
    }
    return tape;
}

void ComputationTape::backward(double seed) {
    if (!root_ || !root_->requires_grad) return;
    root_->grad_buffer()[0] += seed;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backward && n->grad.size() == n->value.size()) n->backward(*n);
    }
}

}  // namespace elp::nn

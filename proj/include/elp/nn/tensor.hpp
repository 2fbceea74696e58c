#pragma once

// Dense 2-D tensors of doubles with reverse-mode differentiation.
//
// Every tensor is a matrix (rows x cols); vectors are 1 x n and scalars 1 x 1.
// A Tensor is a cheap handle onto an immutable node: operations build new
// nodes that remember their parents and a backward rule. Calling backward()
// on a scalar orders the reachable graph topologically and runs each rule
// once in reverse.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace elp::nn {

struct Shape {
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t size() const { return rows * cols; }
    bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // sized lazily on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;  // reads this->grad, accumulates into parents

    std::span<double> grad_buffer();
};

}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor scalar(double v);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rows() const { return node_->shape.rows; }
    std::size_t cols() const { return node_->shape.cols; }
    std::size_t size() const { return node_->shape.size(); }
    bool requires_grad() const { return node_->requires_grad; }

    std::span<const double> values() const { return node_->value; }
    double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
    double item() const;

    /// Gradient accumulated by backward(); zeros if none has reached this node.
    std::vector<double> grad() const;

    /// Reverse pass from this scalar. `seed` scales the incoming gradient.
    void backward(double seed = 1.0) const;

    // Mutable access for leaf tensors owned by a parameter store or optimizer.
    std::span<double> mutable_values() { return node_->value; }
    std::span<double> mutable_grad() { return node_->grad_buffer(); }
    void zero_grad();

    const std::shared_ptr<detail::Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

/// Reverse topological schedule of a graph rooted at one scalar.
class ComputationTape {
public:
    static ComputationTape record(const Tensor& root);

    std::size_t size() const { return order_.size(); }
    void backward(double seed = 1.0);

private:
    std::shared_ptr<detail::Node> root_;
    std::vector<detail::Node*> order_;  // topological: parents before children
};

/// When enabled, every op verifies its output is finite and throws NumericsError.
/// Defaults to on in debug builds. Thread-local.
void set_check_numerics(bool enabled);
bool check_numerics();

/// While a guard is alive, ops on this thread record no backward graph.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};
bool grad_enabled();

}  // namespace elp::nn

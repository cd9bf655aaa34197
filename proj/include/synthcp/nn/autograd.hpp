#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "synthcp/nn/tensor.hpp"

namespace synthcp::nn {

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this node's grad and accumulates into the inputs' grads.
    std::function<void(Node&)> backward;

    Tensor<T>& ensure_grad() {
        if (grad.size() != value.size() || !(grad.shape() == value.shape())) grad = Tensor<T>(value.shape());
        return grad;
    }
};

// Handle onto a node of the recorded computation graph.
template <typename T>
class Var {
  public:
    Var() = default;
    explicit Var(Tensor<T> value, bool requires_grad = false);
    explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    bool defined() const { return static_cast<bool>(node_); }
    const Tensor<T>& value() const { return node_->value; }
    Tensor<T>& mutable_value() { return node_->value; }
    const Tensor<T>& grad() const { return node_->grad; }
    Tensor<T>& mutable_grad() { return node_->ensure_grad(); }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const std::shared_ptr<Node<T>>& node() const { return node_; }

    // Scalar value of a 1-element variable.
    T item() const { return node_->value[0]; }
    void zero_grad();

  private:
    std::shared_ptr<Node<T>> node_;
};

bool grad_enabled();

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool previous_;
};

// Creates an op result. The backward closure is kept only when recording is
// enabled and at least one input needs a gradient.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> backward);

// Reverse-mode sweep from a scalar.
template <typename T>
void backward(const Var<T>& loss);

}  // namespace synthcp::nn

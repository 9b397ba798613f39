#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "tnd/tensor.hpp"

namespace tnd::ad {

class Tape;

/// Handle to a tape node. Cheap to copy; valid until the tape is cleared.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t node) : tape_(tape), node_(node) {}

    const DenseTensor& value() const;
    const DenseTensor& grad() const;
    bool valid() const { return tape_ != nullptr; }
    std::size_t node() const { return node_; }

private:
    friend class Tape;
    Tape* tape_ = nullptr;
    std::size_t node_ = 0;
};

/// Reverse-mode differentiation tape over dense-tensor primitives.
///
/// Operations record a pull-back closure; backward() runs them in reverse
/// creation order, accumulating gradients into every node that requires
/// them. The tape owns all intermediate values.
class Tape {
public:
    Var leaf(DenseTensor value, bool requires_grad);

    Var contract(Var a, Var b, std::vector<std::pair<std::size_t, std::size_t>> axes);
    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var scale(Var a, double alpha);
    Var reshape(Var a, std::vector<std::size_t> shape);
    Var permute(Var a, std::vector<std::size_t> perm);
    Var relu(Var a);
    /// y = x + 1 b^T: broadcast a length-n bias over the rows of x (m x n).
    Var add_rowvec(Var x, Var bias);
    /// L -> L - L^T using only the strictly lower triangle of L.
    Var skew_from_lower(Var lower);
    /// Orthogonal matrix exp(skew) built from taped primitives
    /// (order-12 Taylor with scaling and squaring), so its gradient flows.
    Var expm_skew(Var lower);

    struct BatchNormState {
        DenseTensor running_mean;  // length n
        DenseTensor running_var;   // length n
    };
    /// Training-mode batch norm over rows; updates running stats in place.
    Var batchnorm_train(Var x, Var gamma, Var beta, BatchNormState& state, double eps,
                        double momentum);
    /// Eval-mode batch norm using frozen running statistics.
    Var batchnorm_eval(Var x, Var gamma, Var beta, const BatchNormState& state, double eps);

    /// Propagate `seed` as the gradient of `root` back to all leaves.
    void backward(Var root, const DenseTensor& seed);

    const DenseTensor& value(std::size_t node) const { return nodes_[node].value; }
    const DenseTensor& grad(std::size_t node) const { return nodes_[node].grad; }
    std::size_t size() const { return nodes_.size(); }
    void clear();

private:
    struct Node {
        DenseTensor value;
        DenseTensor grad;
        bool requires_grad = false;
        bool grad_alloc = false;
        std::function<void(Tape&)> pull;
    };

    std::size_t push(DenseTensor value, bool requires_grad, std::function<void(Tape&)> pull);
    void accumulate(std::size_t node, const DenseTensor& g);
    DenseTensor& grad_buffer(std::size_t node);

    std::vector<Node> nodes_;
    std::size_t pull_node_ = 0;  // node whose pull-back is currently running
};

}  // namespace tnd::ad

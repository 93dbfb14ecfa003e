#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <unordered_map>
#include <vector>

#include "tapnet/tensor.hpp"

namespace tapnet {

/// Handle to a node on a Tape.
struct Var {
    int id = -1;
};

/// Reverse-mode tape. Operations append nodes in topological order; backward
/// walks them in reverse and accumulates gradients into the participating
/// parameter tensors. A tape constructed with gradients disabled records only
/// values (parameters enter as constants), which is the evaluation path.
class Tape {
public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool grad_enabled() const { return grad_enabled_; }
    std::size_t node_count() const { return nodes_.size(); }

    /// A value with no gradient tracking.
    Var constant(Tensor value);

    /// A trainable leaf. Repeated registration of the same tensor returns the
    /// same node, so gradients from multiple uses accumulate. Falls back to a
    /// constant when gradients are disabled or the tensor has no grad slot.
    Var param(Tensor& t);

    const Tensor& value(Var v) const { return node_at(v.id).value; }

    // --- operations ---------------------------------------------------------
    Var matmul(Var a, Var b);                            // [m,k] x [k,n]
    Var matmul_const(Var a, const Eigen::MatrixXd& m);   // right-multiply by a frozen matrix
    Var add(Var a, Var b);                               // elementwise, same shape
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);                               // Hadamard
    Var scale(Var a, double c);
    Var neg(Var a);
    Var add_rows(Var a, Var b);                          // [m,n] + broadcast [n]
    Var relu(Var a);
    Var square(Var a);
    Var sqrt_elem(Var a);                                // d/dx at 0 defined as 0
    Var conv2d(Var x, Var w, Var b, std::size_t pad);    // x:[B,C,H,W] w:[OC,C,kh,kw]
    Var maxpool2d(Var x, std::size_t k);                 // non-overlapping k x k, floor
    Var flatten(Var x);                                  // [B,...] -> [B,prod]
    Var pairwise_sqdist(Var a, Var b);                   // [m,d],[n,d] -> [m,n]
    Var select_cols(Var a, const std::vector<std::size_t>& idx); // [m,n] -> [m]
    Var logsumexp_rows(Var a);                           // [m,n] -> [m], max-shifted
    Var sum_all(Var a);                                  // -> scalar
    Var mean_all(Var a);                                 // -> scalar

    /// Seed d(loss)/d(loss) = 1, sweep the tape in reverse, and accumulate
    /// into every participating parameter's grad slot. May be called more than
    /// once; each call adds its contribution.
    void backward(Var loss);

    /// Gradient buffer of a node from the most recent backward (tests/debug).
    const std::vector<double>& node_grad(Var v) const;

private:
    struct Node {
        Tensor value;
        std::vector<int> parents;
        std::function<void(Tape&, int)> backprop;
        Tensor* leaf = nullptr;
        bool needs_grad = false;
    };

    Var make(Tensor value, std::vector<int> parents, std::function<void(Tape&, int)> backprop);
    Node& node_at(int id);
    const Node& node_at(int id) const;
    bool wants_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
    std::vector<double>& grad_ref(int id) { return grads_[static_cast<std::size_t>(id)]; }

    std::vector<Node> nodes_;
    std::vector<std::vector<double>> grads_;
    std::unordered_map<const Tensor*, int> leaf_ids_;
    bool grad_enabled_;
};

} // namespace tapnet

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rxpp/tensor.hpp"

namespace rxpp {

struct Var {
    int id = -1;
    bool ok() const { return id >= 0; }
};

// Reverse-mode tape over small dense tensors. Nodes are appended in forward
// order, so walking the tape backwards is already a topological order.
// Construct with grad_enabled=false for inference: no grad buffers, no
// backward closures, same forward arithmetic.
class Tape {
  public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    bool grad_enabled() const { return grad_enabled_; }

    Var leaf(Tensor value, bool needs_grad = false);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    // y = W x (+ b). W: m*n, x: n, b: m.
    Var linear(Var W, Var x, Var b = {});
    // Y = M W^T (+ b per row). M: T*n, W: m*n -> T*m.
    Var linear_rows(Var W, Var M, Var b = {});

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var scale(Var x, double c);
    Var hadamard(Var a, Var b);
    Var scalar_mul(Var s, Var x);  // s: scalar var, x: vector

    Var concat(std::span<const Var> parts);
    Var silu(Var x);
    Var relu(Var x);
    Var sigmoid(Var x);
    Var tanh_(Var x);
    Var sin_(Var x);
    Var cos_(Var x);
    Var log_(Var x);

    Var layernorm(Var x, Var gamma, Var beta, double eps = 1e-5);
    Var layernorm_rows(Var M, Var gamma, Var beta, double eps = 1e-5);
    Var l2_normalize(Var x, double eps = 1e-12);
    Var softmax(Var x);
    Var mean_rows(Var M);
    Var stack_rows(std::span<const Var> rows);
    Var stack_scalars(std::span<const Var> scalars);

    Var dot(Var a, Var b);
    Var cosine(Var a, Var b);
    Var pick(Var x, size_t idx);
    Var row(Var M, size_t r);  // matrix row as vector
    Var sum_scalars(std::span<const Var> scalars);

    // -(1-p)^gamma * log(p) for scalar p.
    Var focal_nll(Var p, double gamma);

    // Multi-head attention of one query over a key/value bank.
    // q: D, K/V: Kn*D, head_bias: h per-head scalars added to that head's
    // logits (pass Var{} for none). Returns the attended vector, D.
    Var bank_attention(Var q, Var K, Var V, Var head_bias, int heads);

    // Token self-attention core: Q,K,V are T*D, softmax over keys per head.
    Var mhsa_rows(Var Q, Var K, Var V, int heads);

    const Tensor& val(Var v) const { return nodes_[v.id].value; }
    const Tensor& grad(Var v) const { return nodes_[v.id].grad; }
    double scalar(Var v) const { return nodes_[v.id].value.data[0]; }

    void backward(Var root);

    size_t size() const { return nodes_.size(); }
    double flops() const { return flops_; }

  private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void()> back;
    };

    Var push(Tensor value, std::function<void()> back = nullptr);
    Tensor& g(Var v) { return nodes_[v.id].grad; }
    const Tensor& v(Var v) const { return nodes_[v.id].value; }

    std::vector<Node> nodes_;
    bool grad_enabled_;
    double flops_ = 0.0;
};

}  // namespace rxpp

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "privshield/tensor.hpp"

namespace privshield::ad {

// Reverse-mode automatic differentiation over Tensor values. Each op builds a
// node holding its forward value and a closure that routes the node's
// gradient to its parents. backward() runs the closures in reverse creation
// order, which is a valid topological order because ops only consume already
// constructed nodes.

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily by backward()
  bool requires_grad = false;
  long id = 0;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& ensure_grad() {
    if (grad.empty()) grad = Tensor(value.dims());
    return grad;
  }
};

// Leaf that participates in gradient computation (model parameters).
Var leaf(Tensor value);
// Leaf treated as a constant (inputs, frozen parameters, detached values).
Var constant(Tensor value);
// Constant copy of an existing node's value, cutting the graph.
Var detach(const Var& v);

// Computes d(root)/d(node) for every reachable node that requires gradients.
// root must be scalar (shape {1}). Grads of reachable nodes are reset first.
void backward(const Var& root);

// ---- Elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, real c);
Var add_scalar(const Var& a, real c);
// c - a, elementwise.
Var rsub_scalar(real c, const Var& a);
Var square(const Var& a);
Var vlog(const Var& a);
// Gradient is passed through inside [lo, hi] and zero outside.
Var clamp(const Var& a, real lo, real hi);
Var relu(const Var& a);
Var leaky_relu(const Var& a, real slope);
Var sigmoid(const Var& a);
Var vtanh(const Var& a);

// ---- Shape ----
Var reshape(const Var& a, std::vector<int> dims);
// Flattens [N, ...] to [N, rest].
Var flatten(const Var& a);

// ---- Reductions ----
Var sum(const Var& a);
Var mean(const Var& a);

// ---- Linear algebra ----
// a [m,k] x b [k,n] -> [m,n]
Var matmul(const Var& a, const Var& b);
// a [m,n] + row vector b [n], broadcast over rows.
Var add_rowvec(const Var& a, const Var& b);

// ---- Convolution stack ----
// x [N,C,H,W], w [F,C,K,K], b [F]; zero padding `pad`, square stride.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
// Nearest-neighbour 2x upsampling of [N,C,H,W].
Var upsample2(const Var& x);

// ---- Classification losses (numerically stable fused ops) ----
// Mean over all N*k entries of binary cross entropy from logits against 0/1
// targets.
Var bce_with_logits_mean(const Var& logits, const Tensor& targets01);
// Mean over rows of -log softmax(logits)[label].
Var softmax_ce_mean(const Var& logits, const std::vector<int>& labels);

}  // namespace privshield::ad

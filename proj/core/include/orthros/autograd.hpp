#ifndef ORTHROS_AUTOGRAD_HPP
#define ORTHROS_AUTOGRAD_HPP

#include <functional>
#include <memory>
#include <vector>

#include "orthros/array.hpp"
#include "orthros/rng.hpp"

namespace orthros {

// Reverse-mode autodiff over dense f64 arrays. A graph is confined to one
// thread; leaf parameters may be shared read-only across threads.

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Array value;
  Array grad;  // allocated on first touch during backward
  bool requires_grad = false;
  bool grad_alloc = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward_fn;

  Array& ensure_grad() {
    if (!grad_alloc) {
      grad = Array(value.shape);
      grad_alloc = true;
    }
    return grad;
  }
};

// Thread-local switch: decoding runs with gradients off so no graph is
// recorded even though parameters are differentiable leaves.
struct GradMode {
  static bool enabled();
  static void set(bool on);
};

struct NoGradGuard {
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set(false); }
  ~NoGradGuard() { GradMode::set(prev_); }

 private:
  bool prev_;
};

class Var {
 public:
  Var() = default;

  static Var constant(Array v);
  static Var param(Array v);  // differentiable leaf
  static Var scalar(double v) { return constant(Array::scalar(v)); }

  bool defined() const { return node_ != nullptr; }
  // Ref-qualified so a reference can never bind into a temporary Var.
  const Array& value() const& { return node_->value; }
  Array value() && { return node_->value; }
  Array& mutable_value() & { return node_->value; }  // optimizer-only, leaves
  const Array& grad() const&;
  Array grad() &&;
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void zero_grad();

  // Root must be scalar; accumulates into leaf grads.
  void backward() const;

  NodePtr node() const { return node_; }
  static Var wrap(NodePtr n) {
    Var v;
    v.node_ = std::move(n);
    return v;
  }

 private:
  NodePtr node_;
};

// --- elementwise / broadcast ---
Var add(const Var& a, const Var& b);              // same shape
Var sub(const Var& a, const Var& b);              // same shape
Var mul(const Var& a, const Var& b);              // same shape
Var scale(const Var& a, double c);
Var add_bias(const Var& x, const Var& b);         // x [...,D] + b [D]
Var add_const_rows(const Var& x, const Array& r); // x [B,N,D] + r [N,D], r not differentiated

// --- linear algebra ---
Var matmul(const Var& a, const Var& b);           // [M,K]x[K,N]
Var affine(const Var& x, const Var& w, const Var& b);  // x [...,K] -> [...,N]
Var bmm(const Var& a, const Var& b);              // [B,M,K]x[B,K,N]
Var bmm_nt(const Var& a, const Var& b);           // [B,M,K]x[B,N,K]^T -> [B,M,N]

// --- shape ---
Var reshape(const Var& x, std::vector<int64_t> shape);
Var swap_axes_1_2(const Var& x);                  // [A,B,C,D] -> [A,C,B,D]

// --- nonlinearities / normalization ---
Var softmax(const Var& x);                        // last axis
Var silu(const Var& x);
Var glu(const Var& x);                            // split last axis: a * sigmoid(b)
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// --- convolution ---
Var depthwise_conv1d(const Var& x, const Var& kernel);  // x [B,U,D], kernel [K,D], same padding
Var conv1d_strided(const Var& x, const Var& w, const Var& b, int stride);
// x [B,U,Cin], w [K,Cin,Cout] -> [B,ceil(U/stride),Cout], pad (K-1)/2

// --- indexing / masking ---
Var embedding(const Var& table, const std::vector<int>& ids, int64_t batch, int64_t len);
Var zero_padded_rows(const Var& x, const std::vector<int>& lengths);   // x [B,U,D]
Var masked_mean_rows(const Var& x, const std::vector<int>& lengths);   // -> [B,D]
// scores [B*H,Q,K] += mask [B,Qm,K] (Qm in {1,Q}); mask is constant.
Var attn_mask_add(const Var& scores, const Array& mask, int heads);
// scores [B*H,Q,K] += bias[h, clamp(j-i+R, 0, 2R)]; bias [H,2R+1] learnable.
Var relative_bias_add(const Var& scores, const Var& bias, int heads);

// --- regularization / reductions ---
Var dropout(const Var& x, double rate, SplitMix64& rng);  // inverted scaling, train-time only
Var sum_all(const Var& x);
Var mean_all(const Var& x);

// Label-smoothed cross entropy over [B,N,V] logits. weight[b*N+n] scales the
// position's contribution (0 excludes it); targets likewise flattened.
Var smoothed_ce(const Var& logits, const std::vector<int>& targets,
                const std::vector<double>& weights, double label_smoothing);

// Checks reverse-mode gradients of f against central finite differences.
// f must be a pure function of `params` (re-seed any randomness inside).
// Samples at most max_coords coordinates per parameter when positive.
double grad_check(const std::function<Var()>& f, const std::vector<Var>& params,
                  double eps = 1e-5, int max_coords = -1, uint64_t seed = 0);

}  // namespace orthros

#endif

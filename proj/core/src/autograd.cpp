#include "orthros/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

namespace orthros {

namespace {

thread_local bool g_grad_enabled = true;

// C[M,N] += A[M,K] * B[K,N], all row-major contiguous.
void gemm_acc(const double* A, const double* B, double* C, int64_t M, int64_t K, int64_t N) {
  for (int64_t i = 0; i < M; ++i) {
    const double* a = A + i * K;
    double* c = C + i * N;
    for (int64_t k = 0; k < K; ++k) {
      double av = a[k];
      if (av == 0.0) continue;
      const double* b = B + k * N;
      for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

// C[M,N] += A[M,K] * B[N,K]^T  (dot of contiguous rows)
void gemm_nt_acc(const double* A, const double* B, double* C, int64_t M, int64_t K, int64_t N) {
  for (int64_t i = 0; i < M; ++i) {
    const double* a = A + i * K;
    double* c = C + i * N;
    for (int64_t j = 0; j < N; ++j) {
      const double* b = B + j * K;
      double s = 0.0;
      for (int64_t k = 0; k < K; ++k) s += a[k] * b[k];
      c[j] += s;
    }
  }
}

// C[K,N] += A[M,K]^T * B[M,N]
void gemm_tn_acc(const double* A, const double* B, double* C, int64_t M, int64_t K, int64_t N) {
  for (int64_t i = 0; i < M; ++i) {
    const double* a = A + i * K;
    const double* b = B + i * N;
    for (int64_t k = 0; k < K; ++k) {
      double av = a[k];
      if (av == 0.0) continue;
      double* c = C + k * N;
      for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

bool any_requires(const std::vector<NodePtr>& parents) {
  if (!g_grad_enabled) return false;
  for (const auto& p : parents)
    if (p->requires_grad) return true;
  return false;
}

Var make_op(Array value, std::vector<NodePtr> parents, std::function<void(Node&)> fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (any_requires(parents)) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(fn);
  }
  return Var::wrap(std::move(n));
}

}  // namespace

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set(bool on) { g_grad_enabled = on; }

Var Var::constant(Array v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  return wrap(std::move(n));
}

Var Var::param(Array v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = true;
  return wrap(std::move(n));
}

const Array& Var::grad() const& {
  return node_->ensure_grad();
}

Array Var::grad() && {
  return node_->ensure_grad();
}

void Var::zero_grad() {
  if (node_->grad_alloc) std::fill(node_->grad.data.begin(), node_->grad.data.end(), 0.0);
}

void Var::backward() const {
  if (!node_) throw UsageError("backward() on empty Var");
  if (node_->value.numel() != 1) {
    throw UsageError("backward() requires a scalar root, got shape " + node_->value.shape_str());
  }
  for (double v : node_->value.data) {
    if (!std::isfinite(v)) throw NumericError("backward(): non-finite loss value");
  }
  // Iterative post-order topological sort.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node* p = n->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->ensure_grad();
  node_->grad.data[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad_alloc) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Array out = a.value();
  const auto& bd = b.value().data;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += bd[i];
  return make_op(std::move(out), {a.node(), b.node()}, [](Node& self) {
    for (int s = 0; s < 2; ++s) {
      Node* p = self.parents[s].get();
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Array out = a.value();
  const auto& bd = b.value().data;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bd[i];
  return make_op(std::move(out), {a.node(), b.node()}, [](Node& self) {
    if (self.parents[0]->requires_grad) {
      auto& g = self.parents[0]->ensure_grad();
      for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& g = self.parents[1]->ensure_grad();
      for (size_t i = 0; i < g.data.size(); ++i) g.data[i] -= self.grad.data[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Array out = a.value();
  const auto& bd = b.value().data;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bd[i];
  return make_op(std::move(out), {a.node(), b.node()}, [](Node& self) {
    const auto& av = self.parents[0]->value.data;
    const auto& bv = self.parents[1]->value.data;
    if (self.parents[0]->requires_grad) {
      auto& g = self.parents[0]->ensure_grad();
      for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i] * bv[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& g = self.parents[1]->ensure_grad();
      for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i] * av[i];
    }
  });
}

Var scale(const Var& a, double c) {
  Array out = a.value();
  for (double& v : out.data) v *= c;
  return make_op(std::move(out), {a.node()}, [c](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += c * self.grad.data[i];
  });
}

Var add_bias(const Var& x, const Var& b) {
  int64_t d = x.value().dim(-1);
  if (b.value().rank() != 1 || b.value().dim(0) != d) {
    throw ShapeError("add_bias: bias " + b.value().shape_str() + " does not match last axis of " +
                     x.value().shape_str());
  }
  Array out = x.value();
  int64_t rows = out.numel() / d;
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < d; ++j) out.data[static_cast<size_t>(r * d + j)] += b.value().data[static_cast<size_t>(j)];
  return make_op(std::move(out), {x.node(), b.node()}, [d](Node& self) {
    int64_t rows = self.value.numel() / d;
    if (self.parents[0]->requires_grad) {
      auto& g = self.parents[0]->ensure_grad();
      for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& g = self.parents[1]->ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < d; ++j) g.data[static_cast<size_t>(j)] += self.grad.data[static_cast<size_t>(r * d + j)];
    }
  });
}

Var add_const_rows(const Var& x, const Array& r) {
  const Array& xv = x.value();
  if (xv.rank() != 3 || r.rank() != 2 || xv.dim(1) != r.dim(0) || xv.dim(2) != r.dim(1)) {
    throw ShapeError("add_const_rows: x " + xv.shape_str() + " vs rows " + r.shape_str());
  }
  Array out = xv;
  int64_t B = xv.dim(0), rest = r.numel();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t i = 0; i < rest; ++i) out.data[static_cast<size_t>(b * rest + i)] += r.data[static_cast<size_t>(i)];
  return make_op(std::move(out), {x.node()}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i];
  });
}

// ------------------------------------------------------------- linear algebra

Var matmul(const Var& a, const Var& b) {
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: " + av.shape_str() + " x " + bv.shape_str());
  }
  int64_t M = av.dim(0), K = av.dim(1), N = bv.dim(1);
  Array out({M, N});
  gemm_acc(av.data.data(), bv.data.data(), out.data.data(), M, K, N);
  return make_op(std::move(out), {a.node(), b.node()}, [M, K, N](Node& self) {
    const double* A = self.parents[0]->value.data.data();
    const double* B = self.parents[1]->value.data.data();
    const double* G = self.grad.data.data();
    if (self.parents[0]->requires_grad)
      gemm_nt_acc(G, B, self.parents[0]->ensure_grad().data.data(), M, N, K);
    if (self.parents[1]->requires_grad)
      gemm_tn_acc(A, G, self.parents[1]->ensure_grad().data.data(), M, K, N);
  });
}

Var affine(const Var& x, const Var& w, const Var& b) {
  const Array& xv = x.value();
  const Array& wv = w.value();
  const Array& bv = b.value();
  if (xv.rank() < 1 || wv.rank() != 2 || xv.dim(-1) != wv.dim(0)) {
    throw ShapeError("affine: x " + xv.shape_str() + " x w " + wv.shape_str());
  }
  int64_t K = wv.dim(0), N = wv.dim(1);
  if (bv.rank() != 1 || bv.dim(0) != N) {
    throw ShapeError("affine: bias " + bv.shape_str() + " vs w " + wv.shape_str());
  }
  int64_t M = xv.numel() / K;
  std::vector<int64_t> out_shape(xv.shape);
  out_shape.back() = N;
  Array out(out_shape);
  {
    double* o = out.data.data();
    for (int64_t r = 0; r < M; ++r)
      for (int64_t j = 0; j < N; ++j) o[r * N + j] = bv.data[static_cast<size_t>(j)];
  }
  gemm_acc(xv.data.data(), wv.data.data(), out.data.data(), M, K, N);
  return make_op(std::move(out), {x.node(), w.node(), b.node()}, [M, K, N](Node& self) {
    const double* X = self.parents[0]->value.data.data();
    const double* W = self.parents[1]->value.data.data();
    const double* G = self.grad.data.data();
    if (self.parents[0]->requires_grad)
      gemm_nt_acc(G, W, self.parents[0]->ensure_grad().data.data(), M, N, K);
    if (self.parents[1]->requires_grad)
      gemm_tn_acc(X, G, self.parents[1]->ensure_grad().data.data(), M, K, N);
    if (self.parents[2]->requires_grad) {
      auto& g = self.parents[2]->ensure_grad();
      for (int64_t r = 0; r < M; ++r)
        for (int64_t j = 0; j < N; ++j) g.data[static_cast<size_t>(j)] += G[r * N + j];
    }
  });
}

Var bmm(const Var& a, const Var& b) {
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.rank() != 3 || bv.rank() != 3 || av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(1)) {
    throw ShapeError("bmm: " + av.shape_str() + " x " + bv.shape_str());
  }
  int64_t Bn = av.dim(0), M = av.dim(1), K = av.dim(2), N = bv.dim(2);
  Array out({Bn, M, N});
  for (int64_t i = 0; i < Bn; ++i)
    gemm_acc(av.data.data() + i * M * K, bv.data.data() + i * K * N, out.data.data() + i * M * N, M, K, N);
  return make_op(std::move(out), {a.node(), b.node()}, [Bn, M, K, N](Node& self) {
    const double* A = self.parents[0]->value.data.data();
    const double* B = self.parents[1]->value.data.data();
    const double* G = self.grad.data.data();
    if (self.parents[0]->requires_grad) {
      double* da = self.parents[0]->ensure_grad().data.data();
      for (int64_t i = 0; i < Bn; ++i)
        gemm_nt_acc(G + i * M * N, B + i * K * N, da + i * M * K, M, N, K);
    }
    if (self.parents[1]->requires_grad) {
      double* db = self.parents[1]->ensure_grad().data.data();
      for (int64_t i = 0; i < Bn; ++i)
        gemm_tn_acc(A + i * M * K, G + i * M * N, db + i * K * N, M, K, N);
    }
  });
}

Var bmm_nt(const Var& a, const Var& b) {
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.rank() != 3 || bv.rank() != 3 || av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2)) {
    throw ShapeError("bmm_nt: " + av.shape_str() + " x " + bv.shape_str());
  }
  int64_t Bn = av.dim(0), M = av.dim(1), K = av.dim(2), N = bv.dim(1);
  Array out({Bn, M, N});
  for (int64_t i = 0; i < Bn; ++i)
    gemm_nt_acc(av.data.data() + i * M * K, bv.data.data() + i * N * K, out.data.data() + i * M * N, M, K, N);
  return make_op(std::move(out), {a.node(), b.node()}, [Bn, M, K, N](Node& self) {
    const double* A = self.parents[0]->value.data.data();
    const double* B = self.parents[1]->value.data.data();
    const double* G = self.grad.data.data();
    if (self.parents[0]->requires_grad) {
      double* da = self.parents[0]->ensure_grad().data.data();
      for (int64_t i = 0; i < Bn; ++i)
        gemm_acc(G + i * M * N, B + i * N * K, da + i * M * K, M, N, K);
    }
    if (self.parents[1]->requires_grad) {
      double* db = self.parents[1]->ensure_grad().data.data();
      for (int64_t i = 0; i < Bn; ++i)
        gemm_tn_acc(G + i * M * N, A + i * M * K, db + i * N * K, M, N, K);
    }
  });
}

// ------------------------------------------------------------------- shape

Var reshape(const Var& x, std::vector<int64_t> shape) {
  if (Array::checked_numel(shape) != x.value().numel()) {
    throw ShapeError("reshape: " + x.value().shape_str() + " -> " + Array::shape_str(shape));
  }
  Array out;
  out.shape = std::move(shape);
  out.data = x.value().data;
  return make_op(std::move(out), {x.node()}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i];
  });
}

Var swap_axes_1_2(const Var& x) {
  const Array& xv = x.value();
  if (xv.rank() != 4) throw ShapeError("swap_axes_1_2 expects rank 4, got " + xv.shape_str());
  int64_t A = xv.dim(0), B = xv.dim(1), C = xv.dim(2), D = xv.dim(3);
  Array out({A, C, B, D});
  for (int64_t a = 0; a < A; ++a)
    for (int64_t b = 0; b < B; ++b)
      for (int64_t c = 0; c < C; ++c) {
        const double* src = xv.data.data() + ((a * B + b) * C + c) * D;
        double* dst = out.data.data() + ((a * C + c) * B + b) * D;
        std::memcpy(dst, src, static_cast<size_t>(D) * sizeof(double));
      }
  return make_op(std::move(out), {x.node()}, [A, B, C, D](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (int64_t a = 0; a < A; ++a)
      for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
          const double* src = self.grad.data.data() + ((a * C + c) * B + b) * D;
          double* dst = g.data.data() + ((a * B + b) * C + c) * D;
          for (int64_t d = 0; d < D; ++d) dst[d] += src[d];
        }
  });
}

// --------------------------------------------------- nonlinearities / norm

Var softmax(const Var& x) {
  const Array& xv = x.value();
  if (xv.rank() < 1 || xv.dim(-1) < 1) throw ShapeError("softmax over empty axis " + xv.shape_str());
  int64_t C = xv.dim(-1), rows = xv.numel() / C;
  Array out(xv.shape);
  for (int64_t r = 0; r < rows; ++r) {
    const double* in = xv.data.data() + r * C;
    double* o = out.data.data() + r * C;
    double mx = in[0];
    for (int64_t j = 1; j < C; ++j) mx = std::max(mx, in[j]);
    if (!std::isfinite(mx)) {
      if (std::isnan(mx)) throw NumericError("softmax: NaN input");
      mx = 0.0;  // all -inf row would yield NaN below; masked rows never fully -inf here
    }
    double z = 0.0;
    for (int64_t j = 0; j < C; ++j) {
      o[j] = std::exp(in[j] - mx);
      z += o[j];
    }
    for (int64_t j = 0; j < C; ++j) o[j] /= z;
  }
  return make_op(std::move(out), {x.node()}, [C, rows](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (int64_t r = 0; r < rows; ++r) {
      const double* y = self.value.data.data() + r * C;
      const double* gy = self.grad.data.data() + r * C;
      double dot = 0.0;
      for (int64_t j = 0; j < C; ++j) dot += y[j] * gy[j];
      double* gx = g.data.data() + r * C;
      for (int64_t j = 0; j < C; ++j) gx[j] += y[j] * (gy[j] - dot);
    }
  });
}

Var silu(const Var& x) {
  Array out = x.value();
  for (double& v : out.data) v = v / (1.0 + std::exp(-v));
  return make_op(std::move(out), {x.node()}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    const auto& xv = self.parents[0]->value.data;
    for (size_t i = 0; i < g.data.size(); ++i) {
      double s = 1.0 / (1.0 + std::exp(-xv[i]));
      g.data[i] += self.grad.data[i] * (s + xv[i] * s * (1.0 - s));
    }
  });
}

Var glu(const Var& x) {
  const Array& xv = x.value();
  int64_t C = xv.dim(-1);
  if (C % 2 != 0) throw ShapeError("glu: last axis must be even, got " + xv.shape_str());
  int64_t H = C / 2, rows = xv.numel() / C;
  std::vector<int64_t> shape = xv.shape;
  shape.back() = H;
  Array out(shape);
  for (int64_t r = 0; r < rows; ++r) {
    const double* in = xv.data.data() + r * C;
    double* o = out.data.data() + r * H;
    for (int64_t j = 0; j < H; ++j) o[j] = in[j] / (1.0 + std::exp(-in[H + j]));
  }
  return make_op(std::move(out), {x.node()}, [C, H, rows](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    const auto& xv = self.parents[0]->value.data;
    for (int64_t r = 0; r < rows; ++r) {
      const double* in = xv.data() + r * C;
      const double* gy = self.grad.data.data() + r * H;
      double* gx = g.data.data() + r * C;
      for (int64_t j = 0; j < H; ++j) {
        double s = 1.0 / (1.0 + std::exp(-in[H + j]));
        gx[j] += gy[j] * s;
        gx[H + j] += gy[j] * in[j] * s * (1.0 - s);
      }
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Array& xv = x.value();
  int64_t D = xv.dim(-1);
  if (gamma.value().numel() != D || beta.value().numel() != D) {
    throw ShapeError("layer_norm: gamma " + gamma.value().shape_str() + " beta " +
                     beta.value().shape_str() + " vs x " + xv.shape_str());
  }
  int64_t rows = xv.numel() / D;
  Array out(xv.shape);
  Array xhat(xv.shape);       // saved for backward
  Array inv_std({rows});
  const double* gmv = gamma.value().data.data();
  const double* btv = beta.value().data.data();
  for (int64_t r = 0; r < rows; ++r) {
    const double* in = xv.data.data() + r * D;
    double mean = 0.0;
    for (int64_t j = 0; j < D; ++j) mean += in[j];
    mean /= static_cast<double>(D);
    double var = 0.0;
    for (int64_t j = 0; j < D; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= static_cast<double>(D);
    double is = 1.0 / std::sqrt(var + eps);
    inv_std.data[static_cast<size_t>(r)] = is;
    double* xh = xhat.data.data() + r * D;
    double* o = out.data.data() + r * D;
    for (int64_t j = 0; j < D; ++j) {
      xh[j] = (in[j] - mean) * is;
      o[j] = xh[j] * gmv[j] + btv[j];
    }
  }
  return make_op(std::move(out), {x.node(), gamma.node(), beta.node()},
                 [D, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                   const double* gmv = self.parents[1]->value.data.data();
                   for (int64_t r = 0; r < rows; ++r) {
                     const double* gy = self.grad.data.data() + r * D;
                     const double* xh = xhat.data.data() + r * D;
                     if (self.parents[1]->requires_grad) {
                       auto& gg = self.parents[1]->ensure_grad();
                       for (int64_t j = 0; j < D; ++j) gg.data[static_cast<size_t>(j)] += gy[j] * xh[j];
                     }
                     if (self.parents[2]->requires_grad) {
                       auto& gb = self.parents[2]->ensure_grad();
                       for (int64_t j = 0; j < D; ++j) gb.data[static_cast<size_t>(j)] += gy[j];
                     }
                     if (self.parents[0]->requires_grad) {
                       double* gx = self.parents[0]->ensure_grad().data.data() + r * D;
                       double is = inv_std.data[static_cast<size_t>(r)];
                       double sum_g = 0.0, sum_gx = 0.0;
                       for (int64_t j = 0; j < D; ++j) {
                         double h = gy[j] * gmv[j];
                         sum_g += h;
                         sum_gx += h * xh[j];
                       }
                       double inv_d = 1.0 / static_cast<double>(D);
                       for (int64_t j = 0; j < D; ++j) {
                         double h = gy[j] * gmv[j];
                         gx[j] += is * (h - inv_d * sum_g - xh[j] * inv_d * sum_gx);
                       }
                     }
                   }
                 });
}

// ---------------------------------------------------------------- convolution

Var depthwise_conv1d(const Var& x, const Var& kernel) {
  const Array& xv = x.value();
  const Array& kv = kernel.value();
  if (xv.rank() != 3 || kv.rank() != 2 || xv.dim(2) != kv.dim(1)) {
    throw ShapeError("depthwise_conv1d: x " + xv.shape_str() + " kernel " + kv.shape_str());
  }
  int64_t K = kv.dim(0);
  if (K % 2 == 0) throw ConfigError("depthwise_conv1d: kernel size must be odd, got " + std::to_string(K));
  int64_t B = xv.dim(0), U = xv.dim(1), D = xv.dim(2), half = K / 2;
  Array out({B, U, D});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t t = 0; t < U; ++t) {
      double* o = out.data.data() + (b * U + t) * D;
      for (int64_t k = 0; k < K; ++k) {
        int64_t src = t + k - half;
        if (src < 0 || src >= U) continue;
        const double* in = xv.data.data() + (b * U + src) * D;
        const double* w = kv.data.data() + k * D;
        for (int64_t d = 0; d < D; ++d) o[d] += in[d] * w[d];
      }
    }
  return make_op(std::move(out), {x.node(), kernel.node()}, [B, U, D, K, half](Node& self) {
    const Array& xv = self.parents[0]->value;
    const Array& kv = self.parents[1]->value;
    for (int64_t b = 0; b < B; ++b)
      for (int64_t t = 0; t < U; ++t) {
        const double* gy = self.grad.data.data() + (b * U + t) * D;
        for (int64_t k = 0; k < K; ++k) {
          int64_t src = t + k - half;
          if (src < 0 || src >= U) continue;
          if (self.parents[0]->requires_grad) {
            double* gx = self.parents[0]->ensure_grad().data.data() + (b * U + src) * D;
            const double* w = kv.data.data() + k * D;
            for (int64_t d = 0; d < D; ++d) gx[d] += gy[d] * w[d];
          }
          if (self.parents[1]->requires_grad) {
            double* gk = self.parents[1]->ensure_grad().data.data() + k * D;
            const double* in = xv.data.data() + (b * U + src) * D;
            for (int64_t d = 0; d < D; ++d) gk[d] += gy[d] * in[d];
          }
        }
      }
  });
}

Var conv1d_strided(const Var& x, const Var& w, const Var& b, int stride) {
  const Array& xv = x.value();
  const Array& wv = w.value();
  if (xv.rank() != 3 || wv.rank() != 3 || xv.dim(2) != wv.dim(1)) {
    throw ShapeError("conv1d_strided: x " + xv.shape_str() + " w " + wv.shape_str());
  }
  if (stride < 1) throw ConfigError("conv1d_strided: stride must be >= 1");
  int64_t B = xv.dim(0), U = xv.dim(1), Cin = xv.dim(2);
  int64_t K = wv.dim(0), Cout = wv.dim(2);
  if (b.value().numel() != Cout) {
    throw ShapeError("conv1d_strided: bias " + b.value().shape_str() + " vs w " + wv.shape_str());
  }
  int64_t pad = (K - 1) / 2;
  int64_t Uo = (U + stride - 1) / stride;
  Array out({B, Uo, Cout});
  const double* bias = b.value().data.data();
  for (int64_t bi = 0; bi < B; ++bi)
    for (int64_t t = 0; t < Uo; ++t) {
      double* o = out.data.data() + (bi * Uo + t) * Cout;
      for (int64_t c = 0; c < Cout; ++c) o[c] = bias[c];
      for (int64_t k = 0; k < K; ++k) {
        int64_t src = t * stride + k - pad;
        if (src < 0 || src >= U) continue;
        const double* in = xv.data.data() + (bi * U + src) * Cin;
        const double* wk = wv.data.data() + k * Cin * Cout;
        for (int64_t ci = 0; ci < Cin; ++ci) {
          double iv = in[ci];
          if (iv == 0.0) continue;
          const double* wr = wk + ci * Cout;
          for (int64_t c = 0; c < Cout; ++c) o[c] += iv * wr[c];
        }
      }
    }
  return make_op(std::move(out), {x.node(), w.node(), b.node()},
                 [B, U, Cin, K, Cout, pad, stride, Uo](Node& self) {
                   const Array& xv = self.parents[0]->value;
                   const Array& wv = self.parents[1]->value;
                   for (int64_t bi = 0; bi < B; ++bi)
                     for (int64_t t = 0; t < Uo; ++t) {
                       const double* gy = self.grad.data.data() + (bi * Uo + t) * Cout;
                       if (self.parents[2]->requires_grad) {
                         double* gb = self.parents[2]->ensure_grad().data.data();
                         for (int64_t c = 0; c < Cout; ++c) gb[c] += gy[c];
                       }
                       for (int64_t k = 0; k < K; ++k) {
                         int64_t src = t * stride + k - pad;
                         if (src < 0 || src >= U) continue;
                         const double* in = xv.data.data() + (bi * U + src) * Cin;
                         if (self.parents[0]->requires_grad) {
                           double* gx = self.parents[0]->ensure_grad().data.data() + (bi * U + src) * Cin;
                           const double* wk = wv.data.data() + k * Cin * Cout;
                           for (int64_t ci = 0; ci < Cin; ++ci) {
                             const double* wr = wk + ci * Cout;
                             double s = 0.0;
                             for (int64_t c = 0; c < Cout; ++c) s += gy[c] * wr[c];
                             gx[ci] += s;
                           }
                         }
                         if (self.parents[1]->requires_grad) {
                           double* gw = self.parents[1]->ensure_grad().data.data() + k * Cin * Cout;
                           for (int64_t ci = 0; ci < Cin; ++ci) {
                             double iv = in[ci];
                             if (iv == 0.0) continue;
                             double* gr = gw + ci * Cout;
                             for (int64_t c = 0; c < Cout; ++c) gr[c] += iv * gy[c];
                           }
                         }
                       }
                     }
                 });
}

// ------------------------------------------------------- indexing / masking

Var embedding(const Var& table, const std::vector<int>& ids, int64_t batch, int64_t len) {
  const Array& tv = table.value();
  if (tv.rank() != 2) throw ShapeError("embedding: table must be rank 2, got " + tv.shape_str());
  if (static_cast<int64_t>(ids.size()) != batch * len) {
    throw ShapeError("embedding: " + std::to_string(ids.size()) + " ids for [" +
                     std::to_string(batch) + "," + std::to_string(len) + "]");
  }
  int64_t V = tv.dim(0), D = tv.dim(1);
  Array out({batch, len, D});
  for (size_t i = 0; i < ids.size(); ++i) {
    int id = ids[i];
    if (id < 0 || id >= V) throw UsageError("embedding: id " + std::to_string(id) + " out of range");
    std::memcpy(out.data.data() + static_cast<int64_t>(i) * D, tv.data.data() + id * D,
                static_cast<size_t>(D) * sizeof(double));
  }
  return make_op(std::move(out), {table.node()}, [ids, D](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (size_t i = 0; i < ids.size(); ++i) {
      const double* gy = self.grad.data.data() + static_cast<int64_t>(i) * D;
      double* gt = g.data.data() + static_cast<int64_t>(ids[i]) * D;
      for (int64_t d = 0; d < D; ++d) gt[d] += gy[d];
    }
  });
}

Var zero_padded_rows(const Var& x, const std::vector<int>& lengths) {
  const Array& xv = x.value();
  if (xv.rank() != 3 || static_cast<int64_t>(lengths.size()) != xv.dim(0)) {
    throw ShapeError("zero_padded_rows: x " + xv.shape_str() + " with " +
                     std::to_string(lengths.size()) + " lengths");
  }
  int64_t B = xv.dim(0), U = xv.dim(1), D = xv.dim(2);
  Array out = xv;
  for (int64_t b = 0; b < B; ++b)
    for (int64_t t = lengths[static_cast<size_t>(b)]; t < U; ++t)
      std::memset(out.data.data() + (b * U + t) * D, 0, static_cast<size_t>(D) * sizeof(double));
  return make_op(std::move(out), {x.node()}, [lengths, B, U, D](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (int64_t b = 0; b < B; ++b)
      for (int64_t t = 0; t < lengths[static_cast<size_t>(b)]; ++t) {
        const double* gy = self.grad.data.data() + (b * U + t) * D;
        double* gx = g.data.data() + (b * U + t) * D;
        for (int64_t d = 0; d < D; ++d) gx[d] += gy[d];
      }
  });
}

Var masked_mean_rows(const Var& x, const std::vector<int>& lengths) {
  const Array& xv = x.value();
  if (xv.rank() != 3 || static_cast<int64_t>(lengths.size()) != xv.dim(0)) {
    throw ShapeError("masked_mean_rows: x " + xv.shape_str() + " with " +
                     std::to_string(lengths.size()) + " lengths");
  }
  int64_t B = xv.dim(0), U = xv.dim(1), D = xv.dim(2);
  Array out({B, D});
  for (int64_t b = 0; b < B; ++b) {
    int len = lengths[static_cast<size_t>(b)];
    if (len < 1 || len > U) throw UsageError("masked_mean_rows: length " + std::to_string(len));
    double inv = 1.0 / len;
    double* o = out.data.data() + b * D;
    for (int64_t t = 0; t < len; ++t) {
      const double* in = xv.data.data() + (b * U + t) * D;
      for (int64_t d = 0; d < D; ++d) o[d] += in[d] * inv;
    }
  }
  return make_op(std::move(out), {x.node()}, [lengths, B, U, D](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (int64_t b = 0; b < B; ++b) {
      double inv = 1.0 / lengths[static_cast<size_t>(b)];
      const double* gy = self.grad.data.data() + b * D;
      for (int64_t t = 0; t < lengths[static_cast<size_t>(b)]; ++t) {
        double* gx = g.data.data() + (b * U + t) * D;
        for (int64_t d = 0; d < D; ++d) gx[d] += gy[d] * inv;
      }
    }
  });
}

Var attn_mask_add(const Var& scores, const Array& mask, int heads) {
  const Array& sv = scores.value();
  if (sv.rank() != 3 || mask.rank() != 3) {
    throw ShapeError("attn_mask_add: scores " + sv.shape_str() + " mask " + mask.shape_str());
  }
  int64_t BH = sv.dim(0), Q = sv.dim(1), K = sv.dim(2);
  int64_t Bm = mask.dim(0), Qm = mask.dim(1);
  if (BH % heads != 0 || BH / heads != Bm || (Qm != 1 && Qm != Q) || mask.dim(2) != K) {
    throw ShapeError("attn_mask_add: scores " + sv.shape_str() + " mask " + mask.shape_str() +
                     " heads " + std::to_string(heads));
  }
  Array out = sv;
  for (int64_t bh = 0; bh < BH; ++bh) {
    int64_t b = bh / heads;
    for (int64_t q = 0; q < Q; ++q) {
      const double* m = mask.data.data() + (b * Qm + (Qm == 1 ? 0 : q)) * K;
      double* o = out.data.data() + (bh * Q + q) * K;
      for (int64_t k = 0; k < K; ++k) o[k] += m[k];
    }
  }
  return make_op(std::move(out), {scores.node()}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i];
  });
}

Var relative_bias_add(const Var& scores, const Var& bias, int heads) {
  const Array& sv = scores.value();
  const Array& bv = bias.value();
  if (sv.rank() != 3 || bv.rank() != 2 || bv.dim(0) != heads || bv.dim(1) % 2 != 1) {
    throw ShapeError("relative_bias_add: scores " + sv.shape_str() + " bias " + bv.shape_str());
  }
  int64_t BH = sv.dim(0), Q = sv.dim(1), K = sv.dim(2);
  int64_t R = bv.dim(1) / 2;
  Array out = sv;
  for (int64_t bh = 0; bh < BH; ++bh) {
    int64_t h = bh % heads;
    const double* brow = bv.data.data() + h * (2 * R + 1);
    for (int64_t q = 0; q < Q; ++q) {
      double* o = out.data.data() + (bh * Q + q) * K;
      for (int64_t k = 0; k < K; ++k) {
        int64_t d = std::clamp(k - q + R, int64_t{0}, 2 * R);
        o[k] += brow[d];
      }
    }
  }
  return make_op(std::move(out), {scores.node(), bias.node()}, [BH, Q, K, R, heads](Node& self) {
    if (self.parents[0]->requires_grad) {
      auto& g = self.parents[0]->ensure_grad();
      for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& gb = self.parents[1]->ensure_grad();
      for (int64_t bh = 0; bh < BH; ++bh) {
        int64_t h = bh % heads;
        double* brow = gb.data.data() + h * (2 * R + 1);
        for (int64_t q = 0; q < Q; ++q) {
          const double* gy = self.grad.data.data() + (bh * Q + q) * K;
          for (int64_t k = 0; k < K; ++k) {
            int64_t d = std::clamp(k - q + R, int64_t{0}, 2 * R);
            brow[d] += gy[k];
          }
        }
      }
    }
  });
}

// ------------------------------------------------- regularization / reduction

Var dropout(const Var& x, double rate, SplitMix64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0,1)");
  if (rate == 0.0) return x;
  double keep = 1.0 - rate;
  Array mask(x.value().shape);
  for (double& m : mask.data) m = (rng.uniform() < keep) ? 1.0 / keep : 0.0;
  Array out = x.value();
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= mask.data[i];
  return make_op(std::move(out), {x.node()}, [mask = std::move(mask)](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i] * mask.data[i];
  });
}

Var sum_all(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data) s += v;
  return make_op(Array::scalar(s), {x.node()}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    double gy = self.grad.data[0];
    for (double& v : g.data) v += gy;
  });
}

Var mean_all(const Var& x) {
  int64_t n = x.value().numel();
  if (n == 0) throw UsageError("mean_all of empty array");
  return scale(sum_all(x), 1.0 / static_cast<double>(n));
}

Var smoothed_ce(const Var& logits, const std::vector<int>& targets,
                const std::vector<double>& weights, double label_smoothing) {
  const Array& lv = logits.value();
  if (lv.rank() < 2) throw ShapeError("smoothed_ce: logits " + lv.shape_str());
  int64_t V = lv.dim(-1), rows = lv.numel() / V;
  if (static_cast<int64_t>(targets.size()) != rows || targets.size() != weights.size()) {
    throw ShapeError("smoothed_ce: " + std::to_string(targets.size()) + " targets / " +
                     std::to_string(weights.size()) + " weights for " + std::to_string(rows) + " rows");
  }
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
    throw ConfigError("label_smoothing must be in [0,1)");
  }
  double eps = label_smoothing;
  double loss = 0.0;
  // Per-row log-softmax; smoothed target is (1-eps)*onehot + eps/V.
  std::vector<double> logp(static_cast<size_t>(rows) * static_cast<size_t>(V));
  for (int64_t r = 0; r < rows; ++r) {
    if (weights[static_cast<size_t>(r)] == 0.0) continue;
    const double* in = lv.data.data() + r * V;
    double mx = in[0];
    for (int64_t j = 1; j < V; ++j) mx = std::max(mx, in[j]);
    if (std::isnan(mx)) throw NumericError("smoothed_ce: NaN logits");
    double z = 0.0;
    for (int64_t j = 0; j < V; ++j) z += std::exp(in[j] - mx);
    double logz = std::log(z) + mx;
    double* lp = logp.data() + r * V;
    double row_sum = 0.0;
    for (int64_t j = 0; j < V; ++j) {
      lp[j] = in[j] - logz;
      row_sum += lp[j];
    }
    int y = targets[static_cast<size_t>(r)];
    if (y < 0 || y >= V) throw UsageError("smoothed_ce: target " + std::to_string(y) + " out of range");
    double nll = -(1.0 - eps) * lp[y] - eps / static_cast<double>(V) * row_sum;
    loss += weights[static_cast<size_t>(r)] * nll;
  }
  return make_op(Array::scalar(loss), {logits.node()},
                 [targets, weights, eps, V, rows, logp = std::move(logp)](Node& self) {
                   auto& g = self.parents[0]->ensure_grad();
                   double gy = self.grad.data[0];
                   for (int64_t r = 0; r < rows; ++r) {
                     double w = weights[static_cast<size_t>(r)];
                     if (w == 0.0) continue;
                     const double* lp = logp.data() + r * V;
                     double* gx = g.data.data() + r * V;
                     int y = targets[static_cast<size_t>(r)];
                     for (int64_t j = 0; j < V; ++j) {
                       double q = eps / static_cast<double>(V) + ((j == y) ? (1.0 - eps) : 0.0);
                       gx[j] += gy * w * (std::exp(lp[j]) - q);
                     }
                   }
                 });
}

double grad_check(const std::function<Var()>& f, const std::vector<Var>& params, double eps,
                  int max_coords, uint64_t seed) {
  Var loss = f();
  if (!std::isfinite(loss.value().data[0])) throw NumericError("grad_check: non-finite loss");
  for (const Var& p : params) const_cast<Var&>(p).zero_grad();
  loss.backward();
  std::vector<Array> analytic;
  analytic.reserve(params.size());
  for (const Var& p : params) analytic.push_back(p.grad());

  SplitMix64 rng(seed ^ 0x5ca1ab1eULL);
  double max_rel = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Var p = params[pi];
    int64_t n = p.value().numel();
    std::vector<int64_t> coords;
    if (max_coords > 0 && n > max_coords) {
      for (int c = 0; c < max_coords; ++c) coords.push_back(rng.range(0, n - 1));
    } else {
      coords.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
    }
    for (int64_t c : coords) {
      double orig = p.value().data[static_cast<size_t>(c)];
      NoGradGuard ng;
      p.mutable_value().data[static_cast<size_t>(c)] = orig + eps;
      double up = f().value().data[0];
      p.mutable_value().data[static_cast<size_t>(c)] = orig - eps;
      double dn = f().value().data[0];
      p.mutable_value().data[static_cast<size_t>(c)] = orig;
      if (!std::isfinite(up) || !std::isfinite(dn)) throw NumericError("grad_check: non-finite loss");
      double numeric = (up - dn) / (2.0 * eps);
      double a = analytic[pi].data[static_cast<size_t>(c)];
      double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace orthros

#include "privshield/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace privshield::ad {

namespace {

std::atomic<long> next_id{0};

using MatRM = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

Var make_node(Tensor value, std::vector<Var> parents,
              std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  n->backward_fn = std::move(backward_fn);
  n->id = next_id.fetch_add(1, std::memory_order_relaxed);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  check(a->value.same_shape(b->value),
        std::string(op) + ": shape mismatch " + a->value.shape_str() + " vs " +
            b->value.shape_str());
}

// Elementwise helper: value[i] = f(a[i]), da[i] += g[i] * dfd(a[i], value[i]).
template <typename F, typename DF>
Var unary_op(const Var& a, F f, DF dfda) {
  Tensor out(a->value.dims());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a->value[i]);
  return make_node(std::move(out), {a}, [dfda](Node& n) {
    Var& a = n.parents[0];
    if (!a->requires_grad) return;
    Tensor& ga = a->ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i)
      ga[i] += n.grad[i] * dfda(a->value[i], n.value[i]);
  });
}

}  // namespace

Var leaf(Tensor value) {
  auto n = make_node(std::move(value), {}, nullptr);
  n->requires_grad = true;
  return n;
}

Var constant(Tensor value) { return make_node(std::move(value), {}, nullptr); }

Var detach(const Var& v) { return constant(v->value); }

void backward(const Var& root) {
  check(root->value.size() == 1, "backward() root must be scalar");
  // Collect reachable nodes, then run in reverse creation order. Creation
  // order is a topological order because ops only consume existing nodes.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents)
      if (seen.insert(p.get()).second) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(),
            [](const Node* a, const Node* b) { return a->id > b->id; });
  for (Node* n : order) n->grad = Tensor();
  root->ensure_grad()[0] = real(1);
  for (Node* n : order) {
    // Empty grad means no gradient reached this node (detached path).
    if (n->requires_grad && n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out(a->value.dims());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& n) {
    for (int k = 0; k < 2; ++k) {
      Var& p = n.parents[k];
      if (!p->requires_grad) continue;
      Tensor& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out(a->value.dims());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] - b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) {
      Tensor& g = n.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (n.parents[1]->requires_grad) {
      Tensor& g = n.parents[1]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a->value.dims());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& n) {
    Var& a = n.parents[0];
    Var& b = n.parents[1];
    if (a->requires_grad) {
      Tensor& g = a->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * b->value[i];
    }
    if (b->requires_grad) {
      Tensor& g = b->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * a->value[i];
    }
  });
}

Var scale(const Var& a, real c) {
  return unary_op(
      a, [c](real x) { return c * x; }, [c](real, real) { return c; });
}

Var add_scalar(const Var& a, real c) {
  return unary_op(
      a, [c](real x) { return x + c; }, [](real, real) { return real(1); });
}

Var rsub_scalar(real c, const Var& a) {
  return unary_op(
      a, [c](real x) { return c - x; }, [](real, real) { return real(-1); });
}

Var square(const Var& a) {
  return unary_op(
      a, [](real x) { return x * x; }, [](real x, real) { return 2 * x; });
}

Var vlog(const Var& a) {
  return unary_op(
      a, [](real x) { return std::log(x); }, [](real x, real) { return 1 / x; });
}

Var clamp(const Var& a, real lo, real hi) {
  return unary_op(
      a, [lo, hi](real x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](real x, real) { return (x > lo && x < hi) ? real(1) : real(0); });
}

Var relu(const Var& a) {
  return unary_op(
      a, [](real x) { return x > 0 ? x : real(0); },
      [](real x, real) { return x > 0 ? real(1) : real(0); });
}

Var leaky_relu(const Var& a, real slope) {
  return unary_op(
      a, [slope](real x) { return x > 0 ? x : slope * x; },
      [slope](real x, real) { return x > 0 ? real(1) : slope; });
}

Var sigmoid(const Var& a) {
  return unary_op(
      a,
      [](real x) {
        // Stable in both tails.
        return x >= 0 ? 1 / (1 + std::exp(-x)) : std::exp(x) / (1 + std::exp(x));
      },
      [](real, real y) { return y * (1 - y); });
}

Var vtanh(const Var& a) {
  return unary_op(
      a, [](real x) { return std::tanh(x); },
      [](real, real y) { return 1 - y * y; });
}

Var reshape(const Var& a, std::vector<int> dims) {
  Tensor out = a->value.reshaped(std::move(dims));
  return make_node(std::move(out), {a}, [](Node& n) {
    Var& a = n.parents[0];
    if (!a->requires_grad) return;
    Tensor& g = a->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

Var flatten(const Var& a) {
  check(a->value.rank() >= 1, "flatten: rank must be >= 1");
  int n = a->value.dim(0);
  int rest = static_cast<int>(a->value.size()) / n;
  return reshape(a, {n, rest});
}

Var sum(const Var& a) {
  real s = 0;
  for (std::size_t i = 0; i < a->value.size(); ++i) s += a->value[i];
  return make_node(Tensor::scalar(s), {a}, [](Node& n) {
    Var& a = n.parents[0];
    if (!a->requires_grad) return;
    Tensor& g = a->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0];
  });
}

Var mean(const Var& a) {
  return scale(sum(a), real(1) / static_cast<real>(a->value.size()));
}

Var matmul(const Var& a, const Var& b) {
  check(a->value.rank() == 2 && b->value.rank() == 2 &&
            a->value.dim(1) == b->value.dim(0),
        "matmul: incompatible shapes " + a->value.shape_str() + " x " +
            b->value.shape_str());
  int m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
  Tensor out({m, n});
  MapM(out.data(), m, n).noalias() =
      MapC(a->value.data(), m, k) * MapC(b->value.data(), k, n);
  return make_node(std::move(out), {a, b}, [m, k, n](Node& node) {
    Var& a = node.parents[0];
    Var& b = node.parents[1];
    MapC g(node.grad.data(), m, n);
    if (a->requires_grad) {
      MapM(a->ensure_grad().data(), m, k).noalias() +=
          g * MapC(b->value.data(), k, n).transpose();
    }
    if (b->requires_grad) {
      MapM(b->ensure_grad().data(), k, n).noalias() +=
          MapC(a->value.data(), m, k).transpose() * g;
    }
  });
}

Var add_rowvec(const Var& a, const Var& b) {
  check(a->value.rank() == 2 && b->value.rank() == 1 &&
            a->value.dim(1) == b->value.dim(0),
        "add_rowvec: incompatible shapes " + a->value.shape_str() + " + " +
            b->value.shape_str());
  int m = a->value.dim(0), n = a->value.dim(1);
  Tensor out(a->value.dims());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[i * n + j] = a->value[i * n + j] + b->value[j];
  return make_node(std::move(out), {a, b}, [m, n](Node& node) {
    if (node.parents[0]->requires_grad) {
      Tensor& g = node.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i];
    }
    if (node.parents[1]->requires_grad) {
      Tensor& g = node.parents[1]->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) g[j] += node.grad[i * n + j];
    }
  });
}

namespace {

struct ConvDims {
  int n, c, h, w, f, k, stride, pad, oh, ow;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
  check(x.rank() == 4, "conv2d: input must be NCHW, got " + x.shape_str());
  check(w.rank() == 4, "conv2d: weights must be FCKK, got " + w.shape_str());
  ConvDims d;
  d.n = x.dim(0);
  d.c = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.f = w.dim(0);
  d.k = w.dim(2);
  d.stride = stride;
  d.pad = pad;
  check(w.dim(1) == d.c, "conv2d: channel mismatch, input " + x.shape_str() +
                             " vs weights " + w.shape_str());
  check(w.dim(2) == w.dim(3), "conv2d: kernel must be square");
  check(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
  d.oh = (d.h + 2 * pad - d.k) / stride + 1;
  d.ow = (d.w + 2 * pad - d.k) / stride + 1;
  check(d.oh > 0 && d.ow > 0, "conv2d: output would be empty for input " +
                                  x.shape_str());
  return d;
}

// Rows: one per (n, oy, ox); columns: (c, ky, kx) patch entries.
Tensor im2col(const Tensor& x, const ConvDims& d) {
  Tensor col({d.n * d.oh * d.ow, d.c * d.k * d.k});
  const real* xp = x.data();
  real* cp = col.data();
  const int ckk = d.c * d.k * d.k;
  for (int n = 0; n < d.n; ++n) {
    for (int oy = 0; oy < d.oh; ++oy) {
      for (int ox = 0; ox < d.ow; ++ox) {
        real* row = cp + (static_cast<std::size_t>(n) * d.oh * d.ow +
                          static_cast<std::size_t>(oy) * d.ow + ox) * ckk;
        for (int c = 0; c < d.c; ++c) {
          for (int ky = 0; ky < d.k; ++ky) {
            int iy = oy * d.stride + ky - d.pad;
            for (int kx = 0; kx < d.k; ++kx) {
              int ix = ox * d.stride + kx - d.pad;
              real v = 0;
              if (iy >= 0 && iy < d.h && ix >= 0 && ix < d.w)
                v = xp[((static_cast<std::size_t>(n) * d.c + c) * d.h + iy) * d.w + ix];
              row[(c * d.k + ky) * d.k + kx] = v;
            }
          }
        }
      }
    }
  }
  return col;
}

void col2im_accumulate(const real* cp, const ConvDims& d, Tensor& gx) {
  real* xp = gx.data();
  const int ckk = d.c * d.k * d.k;
  for (int n = 0; n < d.n; ++n) {
    for (int oy = 0; oy < d.oh; ++oy) {
      for (int ox = 0; ox < d.ow; ++ox) {
        const real* row = cp + (static_cast<std::size_t>(n) * d.oh * d.ow +
                                static_cast<std::size_t>(oy) * d.ow + ox) * ckk;
        for (int c = 0; c < d.c; ++c) {
          for (int ky = 0; ky < d.k; ++ky) {
            int iy = oy * d.stride + ky - d.pad;
            if (iy < 0 || iy >= d.h) continue;
            for (int kx = 0; kx < d.k; ++kx) {
              int ix = ox * d.stride + kx - d.pad;
              if (ix < 0 || ix >= d.w) continue;
              xp[((static_cast<std::size_t>(n) * d.c + c) * d.h + iy) * d.w + ix] +=
                  row[(c * d.k + ky) * d.k + kx];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  ConvDims d = conv_dims(x->value, w->value, stride, pad);
  check(b->value.rank() == 1 && b->value.dim(0) == d.f,
        "conv2d: bias must have one entry per filter");
  Tensor col = im2col(x->value, d);
  const int rows = d.n * d.oh * d.ow;
  const int ckk = d.c * d.k * d.k;
  // out_mat[row, f] = col[row, :] . w[f, :]
  MatRM out_mat = MapC(col.data(), rows, ckk) *
                  MapC(w->value.data(), d.f, ckk).transpose();
  Tensor out({d.n, d.f, d.oh, d.ow});
  real* op = out.data();
  const real* bp = b->value.data();
  for (int n = 0; n < d.n; ++n)
    for (int f = 0; f < d.f; ++f)
      for (int p = 0; p < d.oh * d.ow; ++p)
        op[(static_cast<std::size_t>(n) * d.f + f) * d.oh * d.ow + p] =
            out_mat(n * d.oh * d.ow + p, f) + bp[f];

  // The col matrix is cached in the closure; it dominates graph memory but
  // desk-scale batches keep it in the tens of megabytes.
  auto col_cache = std::make_shared<Tensor>(std::move(col));
  return make_node(std::move(out), {x, w, b}, [d, col_cache](Node& node) {
    Var& x = node.parents[0];
    Var& w = node.parents[1];
    Var& b = node.parents[2];
    const int rows = d.n * d.oh * d.ow;
    const int ckk = d.c * d.k * d.k;
    // Regroup grad from [N,F,OH,OW] to [rows, F].
    MatRM g(rows, d.f);
    const real* gp = node.grad.data();
    for (int n = 0; n < d.n; ++n)
      for (int f = 0; f < d.f; ++f)
        for (int p = 0; p < d.oh * d.ow; ++p)
          g(n * d.oh * d.ow + p, f) =
              gp[(static_cast<std::size_t>(n) * d.f + f) * d.oh * d.ow + p];
    if (w->requires_grad) {
      MapM(w->ensure_grad().data(), d.f, ckk).noalias() +=
          g.transpose() * MapC(col_cache->data(), rows, ckk);
    }
    if (b->requires_grad) {
      Tensor& gb = b->ensure_grad();
      for (int f = 0; f < d.f; ++f) gb[f] += g.col(f).sum();
    }
    if (x->requires_grad) {
      MatRM gcol = g * MapC(w->value.data(), d.f, ckk);
      col2im_accumulate(gcol.data(), d, x->ensure_grad());
    }
  });
}

Var upsample2(const Var& x) {
  check(x->value.rank() == 4, "upsample2: input must be NCHW");
  const int n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2),
            w = x->value.dim(3);
  Tensor out({n, c, 2 * h, 2 * w});
  const real* xp = x->value.data();
  real* op = out.data();
  for (int i = 0; i < n * c; ++i) {
    const real* src = xp + static_cast<std::size_t>(i) * h * w;
    real* dst = op + static_cast<std::size_t>(i) * 4 * h * w;
    for (int y = 0; y < h; ++y)
      for (int xj = 0; xj < w; ++xj) {
        real v = src[y * w + xj];
        real* d0 = dst + (2 * y) * 2 * w + 2 * xj;
        d0[0] = v;
        d0[1] = v;
        d0[2 * w] = v;
        d0[2 * w + 1] = v;
      }
  }
  return make_node(std::move(out), {x}, [n, c, h, w](Node& node) {
    Var& x = node.parents[0];
    if (!x->requires_grad) return;
    Tensor& gx = x->ensure_grad();
    const real* gp = node.grad.data();
    for (int i = 0; i < n * c; ++i) {
      const real* gsrc = gp + static_cast<std::size_t>(i) * 4 * h * w;
      real* gdst = gx.data() + static_cast<std::size_t>(i) * h * w;
      for (int y = 0; y < h; ++y)
        for (int xj = 0; xj < w; ++xj) {
          const real* g0 = gsrc + (2 * y) * 2 * w + 2 * xj;
          gdst[y * w + xj] += g0[0] + g0[1] + g0[2 * w] + g0[2 * w + 1];
        }
    }
  });
}

Var bce_with_logits_mean(const Var& logits, const Tensor& targets01) {
  check(logits->value.same_shape(targets01),
        "bce: logits " + logits->value.shape_str() + " vs targets " +
            targets01.shape_str());
  const std::size_t n = logits->value.size();
  real total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    real z = logits->value[i];
    real y = targets01[i];
    // max(z,0) - z*y + log(1 + exp(-|z|))
    total += std::max(z, real(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  auto targets = std::make_shared<Tensor>(targets01);
  return make_node(Tensor::scalar(total / static_cast<real>(n)), {logits},
                   [targets, n](Node& node) {
                     Var& logits = node.parents[0];
                     if (!logits->requires_grad) return;
                     Tensor& g = logits->ensure_grad();
                     real s = node.grad[0] / static_cast<real>(n);
                     for (std::size_t i = 0; i < n; ++i) {
                       real z = logits->value[i];
                       real p = z >= 0 ? 1 / (1 + std::exp(-z))
                                       : std::exp(z) / (1 + std::exp(z));
                       g[i] += s * (p - (*targets)[i]);
                     }
                   });
}

Var softmax_ce_mean(const Var& logits, const std::vector<int>& labels) {
  check(logits->value.rank() == 2, "softmax_ce: logits must be [N,K]");
  const int n = logits->value.dim(0), k = logits->value.dim(1);
  check(static_cast<int>(labels.size()) == n, "softmax_ce: label count mismatch");
  real total = 0;
  for (int i = 0; i < n; ++i) {
    check(labels[i] >= 0 && labels[i] < k, "softmax_ce: label out of range");
    const real* row = logits->value.data() + static_cast<std::size_t>(i) * k;
    real mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    real lse = 0;
    for (int j = 0; j < k; ++j) lse += std::exp(row[j] - mx);
    lse = mx + std::log(lse);
    total += lse - row[labels[i]];
  }
  auto lab = std::make_shared<std::vector<int>>(labels);
  return make_node(Tensor::scalar(total / n), {logits}, [lab, n, k](Node& node) {
    Var& logits = node.parents[0];
    if (!logits->requires_grad) return;
    Tensor& g = logits->ensure_grad();
    real s = node.grad[0] / n;
    for (int i = 0; i < n; ++i) {
      const real* row = logits->value.data() + static_cast<std::size_t>(i) * k;
      real mx = row[0];
      for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
      real z = 0;
      for (int j = 0; j < k; ++j) z += std::exp(row[j] - mx);
      for (int j = 0; j < k; ++j) {
        real p = std::exp(row[j] - mx) / z;
        g[static_cast<std::size_t>(i) * k + j] +=
            s * (p - ((*lab)[i] == j ? 1 : 0));
      }
    }
  });
}

}  // namespace privshield::ad

#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "facegen/errors.hpp"

// Reverse-mode automatic differentiation on dense Eigen matrices.
//
// Every backward rule is itself expressed through graph ops, so gradients
// are ordinary graph nodes and can be differentiated again. That is what
// makes the gradient-penalty term trainable: the penalty is a function of
// d(logit)/d(input), and its parameter gradient is obtained by running
// backward() a second time over the graph the first backward() built.

namespace facegen::autodiff {

template <class S>
using DenseMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

using IndexMap = std::shared_ptr<const std::vector<std::int64_t>>;

template <class S>
struct Node;

template <class S>
using Var = std::shared_ptr<Node<S>>;

template <class S>
struct Node : std::enable_shared_from_this<Node<S>> {
  DenseMat<S> value;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<Var<S>> parents;
  // Pushes the gradient arriving at this node to each parent that wants one.
  // Receives the node itself so saved outputs stay reachable without the
  // closure holding a self-reference (which would leak the whole graph).
  std::function<void(const Var<S>& self, const Var<S>& grad, std::vector<Var<S>>& parent_grads)> vjp;
};

template <class S>
Var<S> make_node(DenseMat<S> value, const char* op, std::vector<Var<S>> parents) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  n->op = op;
  for (const auto& p : parents)
    if (p && p->requires_grad) n->requires_grad = true;
  n->parents = std::move(parents);
  return n;
}

template <class S>
Var<S> constant(DenseMat<S> value) {
  return make_node<S>(std::move(value), "const", {});
}

template <class S>
Var<S> constant_scalar(S v) {
  DenseMat<S> m(1, 1);
  m(0, 0) = v;
  return constant<S>(std::move(m));
}

template <class S>
Var<S> leaf(DenseMat<S> value) {
  auto n = make_node<S>(std::move(value), "leaf", {});
  n->requires_grad = true;
  return n;
}

namespace detail {

template <class S>
void check_same_shape(const Var<S>& a, const Var<S>& b, const char* op) {
  if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols())
    throw ValidationError(std::string(op) + ": shape mismatch");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Arithmetic
// ---------------------------------------------------------------------------

template <class S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  detail::check_same_shape(a, b, "add");
  auto n = make_node<S>(a->value + b->value, "add", {a, b});
  n->vjp = [](const Var<S>&, const Var<S>& g, std::vector<Var<S>>& pg) {
    pg[0] = g;
    pg[1] = g;
  };
  return n;
}

template <class S>
Var<S> sub(const Var<S>& a, const Var<S>& b);

template <class S>
Var<S> neg(const Var<S>& a) {
  auto n = make_node<S>((-a->value).eval(), "neg", {a});
  n->vjp = [](const Var<S>&, const Var<S>& g, std::vector<Var<S>>& pg) { pg[0] = neg(g); };
  return n;
}

template <class S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  detail::check_same_shape(a, b, "sub");
  auto n = make_node<S>(a->value - b->value, "sub", {a, b});
  n->vjp = [](const Var<S>&, const Var<S>& g, std::vector<Var<S>>& pg) {
    pg[0] = g;
    pg[1] = neg(g);
  };
  return n;
}

template <class S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  detail::check_same_shape(a, b, "mul");
  auto n = make_node<S>(a->value.cwiseProduct(b->value), "mul", {a, b});
  n->vjp = [](const Var<S>& self, const Var<S>& g, std::vector<Var<S>>& pg) {
    pg[0] = mul(g, self->parents[1]);
    pg[1] = mul(g, self->parents[0]);
  };
  return n;
}

template <class S>
Var<S> div(const Var<S>& a, const Var<S>& b) {
  detail::check_same_shape(a, b, "div");
  auto n = make_node<S>(a->value.cwiseQuotient(b->value), "div", {a, b});
  n->vjp = [](const Var<S>& self, const Var<S>& g, std::vector<Var<S>>& pg) {
    // d(a/b)/da = 1/b, d(a/b)/db = -a/b^2 = -(a/b)/b
    pg[0] = div(g, self->parents[1]);
    pg[1] = neg(div(mul(g, self), self->parents[1]));
  };
  return n;
}

template <class S>
Var<S> scalar_mul(const Var<S>& a, S k) {
  auto n = make_node<S>((a->value * k).eval(), "scalar_mul", {a});
  n->vjp = [k](const Var<S>&, const Var<S>& g, std::vector<Var<S>>& pg) { pg[0] = scalar_mul(g, k); };
  return n;
}

template <class S>
Var<S> scalar_add(const Var<S>& a, S k) {
  auto n = make_node<S>((a->value.array() + k).matrix(), "scalar_add", {a});
  n->vjp = [](const Var<S>&, const Var<S>& g, std::vector<Var<S>>& pg) { pg[0] = g; };
  return n;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <class S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  if (a->value.cols() != b->value.rows()) throw ValidationError("matmul: inner dimension mismatch");
  auto n = make_node<S>(a->value * b->value, "matmul", {a, b});
  n->vjp = [](const Var<S>& self, const Var<S>& g, std::vector<Var<S>>& pg) {
    pg[0] = matmul(g, transpose(self->parents[1]));
    pg[1] = matmul(transpose(self->parents[0]), g);
  };
  return n;
}

template <class S>
Var<S> transpose(const Var<S>& a) {
  auto n = make_node<S>(a->value.transpose().eval(), "transpose", {a});
  n->vjp = [](const Var<S>&, const Var<S>& g, std::vector<Var<S>>& pg) { pg[0] = transpose(g); };
  return n;
}

// ---------------------------------------------------------------------------
// Broadcasts and reductions. Each broadcast/reduction pair is mutually
// adjoint, which keeps repeated differentiation exact.
// ---------------------------------------------------------------------------

template <class S>
Var<S> rowwise_sum(const Var<S>& a);

// x: R x 1 column, replicated across C columns.
template <class S>
Var<S> replicate_cols(const Var<S>& x, Eigen::Index cols) {
  if (x->value.cols() != 1) throw ValidationError("replicate_cols: expected a column vector");
  auto n = make_node<S>(x->value.replicate(1, cols).eval(), "replicate_cols", {x});
  n->vjp = [](const Var<S>&, const Var<S>& g, std::vector<Var<S>>& pg) { pg[0] = rowwise_sum(g); };
  return n;
}

template <class S>
Var<S> rowwise_sum(const Var<S>& a) {
  auto n = make_node<S>(a->value.rowwise().sum().eval(), "rowwise_sum", {a});
  const Eigen::Index cols = a->value.cols();
  n->vjp = [cols](const Var<S>&, const Var<S>& g, std::vector<Var<S>>& pg) {
    pg[0] = replicate_cols(g, cols);
  };
  return n;
}

template <class S>
Var<S> colwise_sum(const Var<S>& a);

// x: 1 x C row, replicated across R rows.
template <class S>
Var<S> replicate_rows(const Var<S>& x, Eigen::Index rows) {
  if (x->value.rows() != 1) throw ValidationError("replicate_rows: expected a row vector");
  auto n = make_node<S>(x->value.replicate(rows, 1).eval(), "replicate_rows", {x});
  n->vjp = [](const Var<S>&, const Var<S>& g, std::vector<Var<S>>& pg) { pg[0] = colwise_sum(g); };
  return n;
}

template <class S>
Var<S> colwise_sum(const Var<S>& a) {
  auto n = make_node<S>(a->value.colwise().sum().eval(), "colwise_sum", {a});
  const Eigen::Index rows = a->value.rows();
  n->vjp = [rows](const Var<S>&, const Var<S>& g, std::vector<Var<S>>& pg) {
    pg[0] = replicate_rows(g, rows);
  };
  return n;
}

template <class S>
Var<S> broadcast_scalar(const Var<S>& s, Eigen::Index rows, Eigen::Index cols);

template <class S>
Var<S> sum_all(const Var<S>& a) {
  DenseMat<S> v(1, 1);
  v(0, 0) = a->value.sum();
  auto n = make_node<S>(std::move(v), "sum_all", {a});
  const Eigen::Index rows = a->value.rows(), cols = a->value.cols();
  n->vjp = [rows, cols](const Var<S>&, const Var<S>& g, std::vector<Var<S>>& pg) {
    pg[0] = broadcast_scalar(g, rows, cols);
  };
  return n;
}

template <class S>
Var<S> broadcast_scalar(const Var<S>& s, Eigen::Index rows, Eigen::Index cols) {
  if (s->value.size() != 1) throw ValidationError("broadcast_scalar: expected a 1x1 node");
  auto n = make_node<S>(DenseMat<S>::Constant(rows, cols, s->value(0, 0)), "broadcast_scalar", {s});
  n->vjp = [](const Var<S>&, const Var<S>& g, std::vector<Var<S>>& pg) { pg[0] = sum_all(g); };
  return n;
}

template <class S>
Var<S> mean_all(const Var<S>& a) {
  return scalar_mul(sum_all(a), S(1) / S(a->value.size()));
}

// X: R x C plus per-row bias b: R x 1.
template <class S>
Var<S> add_colvec(const Var<S>& x, const Var<S>& b) {
  if (b->value.cols() != 1 || b->value.rows() != x->value.rows())
    throw ValidationError("add_colvec: bias must be Rx1");
  auto n = make_node<S>((x->value.colwise() + b->value.col(0)).eval(), "add_colvec", {x, b});
  n->vjp = [](const Var<S>&, const Var<S>& g, std::vector<Var<S>>& pg) {
    pg[0] = g;
    pg[1] = rowwise_sum(g);
  };
  return n;
}

// ---------------------------------------------------------------------------
// Nonlinearities. Saved outputs are graph nodes, so derivatives like
// 1 - tanh^2 remain differentiable expressions.
// ---------------------------------------------------------------------------

template <class S>
Var<S> relu(const Var<S>& a) {
  auto n = make_node<S>(a->value.cwiseMax(S(0)), "relu", {a});
  DenseMat<S> mask = (a->value.array() > S(0)).template cast<S>().matrix();
  auto mask_node = constant<S>(std::move(mask));
  n->vjp = [mask_node](const Var<S>&, const Var<S>& g, std::vector<Var<S>>& pg) {
    pg[0] = mul(g, mask_node);
  };
  return n;
}

template <class S>
Var<S> leaky_relu(const Var<S>& a, S slope) {
  DenseMat<S> out = a->value.array().max(a->value.array() * slope).matrix();
  auto n = make_node<S>(std::move(out), "leaky_relu", {a});
  DenseMat<S> mask = (a->value.array() > S(0)).select(DenseMat<S>::Constant(a->value.rows(), a->value.cols(), S(1)),
                                                      DenseMat<S>::Constant(a->value.rows(), a->value.cols(), slope));
  auto mask_node = constant<S>(std::move(mask));
  n->vjp = [mask_node](const Var<S>&, const Var<S>& g, std::vector<Var<S>>& pg) {
    pg[0] = mul(g, mask_node);
  };
  return n;
}

template <class S>
Var<S> tanh_(const Var<S>& a) {
  auto n = make_node<S>(a->value.array().tanh().matrix(), "tanh", {a});
  n->vjp = [](const Var<S>& self, const Var<S>& g, std::vector<Var<S>>& pg) {
    auto one = constant<S>(DenseMat<S>::Constant(self->value.rows(), self->value.cols(), S(1)));
    pg[0] = mul(g, sub(one, mul(self, self)));
  };
  return n;
}

template <class S>
Var<S> sigmoid(const Var<S>& a) {
  DenseMat<S> out = (S(1) / (S(1) + (-a->value.array()).exp())).matrix();
  auto n = make_node<S>(std::move(out), "sigmoid", {a});
  n->vjp = [](const Var<S>& self, const Var<S>& g, std::vector<Var<S>>& pg) {
    auto one = constant<S>(DenseMat<S>::Constant(self->value.rows(), self->value.cols(), S(1)));
    pg[0] = mul(g, mul(self, sub(one, self)));
  };
  return n;
}

template <class S>
Var<S> log_(const Var<S>& a) {
  auto n = make_node<S>(a->value.array().log().matrix(), "log", {a});
  n->vjp = [](const Var<S>& self, const Var<S>& g, std::vector<Var<S>>& pg) {
    pg[0] = div(g, self->parents[0]);
  };
  return n;
}

template <class S>
Var<S> sqrt_(const Var<S>& a) {
  auto n = make_node<S>(a->value.array().sqrt().matrix(), "sqrt", {a});
  n->vjp = [](const Var<S>& self, const Var<S>& g, std::vector<Var<S>>& pg) {
    pg[0] = div(g, scalar_mul(self, S(2)));
  };
  return n;
}

template <class S>
Var<S> square(const Var<S>& a) {
  auto n = make_node<S>(a->value.array().square().matrix(), "square", {a});
  n->vjp = [](const Var<S>& self, const Var<S>& g, std::vector<Var<S>>& pg) {
    pg[0] = mul(g, scalar_mul(self->parents[0], S(2)));
  };
  return n;
}

// Clamp with pass-through gradient inside the interval, zero outside.
template <class S>
Var<S> clamp(const Var<S>& a, S lo, S hi) {
  auto n = make_node<S>(a->value.array().max(lo).min(hi).matrix(), "clamp", {a});
  DenseMat<S> mask = ((a->value.array() >= lo) && (a->value.array() <= hi)).template cast<S>().matrix();
  auto mask_node = constant<S>(std::move(mask));
  n->vjp = [mask_node](const Var<S>&, const Var<S>& g, std::vector<Var<S>>& pg) {
    pg[0] = mul(g, mask_node);
  };
  return n;
}

// ---------------------------------------------------------------------------
// Structural ops
// ---------------------------------------------------------------------------

template <class S>
Var<S> slice_rows(const Var<S>& a, Eigen::Index r0, Eigen::Index nrows);

// Zero-pad rows so that the block starting at r0 equals x.
template <class S>
Var<S> pad_rows(const Var<S>& x, Eigen::Index r0, Eigen::Index total_rows) {
  DenseMat<S> out = DenseMat<S>::Zero(total_rows, x->value.cols());
  out.middleRows(r0, x->value.rows()) = x->value;
  auto n = make_node<S>(std::move(out), "pad_rows", {x});
  const Eigen::Index nrows = x->value.rows();
  n->vjp = [r0, nrows](const Var<S>&, const Var<S>& g, std::vector<Var<S>>& pg) {
    pg[0] = slice_rows(g, r0, nrows);
  };
  return n;
}

template <class S>
Var<S> slice_rows(const Var<S>& a, Eigen::Index r0, Eigen::Index nrows) {
  auto n = make_node<S>(a->value.middleRows(r0, nrows).eval(), "slice_rows", {a});
  const Eigen::Index total = a->value.rows();
  n->vjp = [r0, total](const Var<S>&, const Var<S>& g, std::vector<Var<S>>& pg) {
    pg[0] = pad_rows(g, r0, total);
  };
  return n;
}

template <class S>
Var<S> vstack(const Var<S>& a, const Var<S>& b) {
  if (a->value.cols() != b->value.cols()) throw ValidationError("vstack: column count mismatch");
  DenseMat<S> out(a->value.rows() + b->value.rows(), a->value.cols());
  out.topRows(a->value.rows()) = a->value;
  out.bottomRows(b->value.rows()) = b->value;
  auto n = make_node<S>(std::move(out), "vstack", {a, b});
  const Eigen::Index ra = a->value.rows(), rb = b->value.rows();
  n->vjp = [ra, rb](const Var<S>&, const Var<S>& g, std::vector<Var<S>>& pg) {
    pg[0] = slice_rows(g, 0, ra);
    pg[1] = slice_rows(g, ra, rb);
  };
  return n;
}

template <class S>
Var<S> scatter_add(const Var<S>& x, const IndexMap& idx, Eigen::Index rows, Eigen::Index cols);

// out[i] = idx[i] >= 0 ? flat(x)[idx[i]] : 0, flat in Eigen's column-major
// storage order. Adjoint of scatter_add with the same index map; every
// gather-style tensor rearrangement (im2col, pixel shuffle, flatten,
// zero upsampling) is this one primitive with a precomputed map.
template <class S>
Var<S> gather(const Var<S>& x, const IndexMap& idx, Eigen::Index rows, Eigen::Index cols) {
  if (static_cast<Eigen::Index>(idx->size()) != rows * cols)
    throw ValidationError("gather: index map size does not match output shape");
  DenseMat<S> out(rows, cols);
  const S* src = x->value.data();
  const Eigen::Index n_src = x->value.size();
  S* dst = out.data();
  const auto& map = *idx;
  for (std::size_t i = 0; i < map.size(); ++i) {
    const std::int64_t j = map[i];
    if (j < 0) {
      dst[i] = S(0);
    } else {
      if (j >= n_src) throw ValidationError("gather: index out of range");
      dst[i] = src[j];
    }
  }
  auto n = make_node<S>(std::move(out), "gather", {x});
  const Eigen::Index src_rows = x->value.rows(), src_cols = x->value.cols();
  n->vjp = [idx, src_rows, src_cols](const Var<S>&, const Var<S>& g, std::vector<Var<S>>& pg) {
    pg[0] = scatter_add(g, idx, src_rows, src_cols);
  };
  return n;
}

// flat(out)[idx[i]] += flat(x)[i]; entries with idx[i] < 0 are dropped.
template <class S>
Var<S> scatter_add(const Var<S>& x, const IndexMap& idx, Eigen::Index rows, Eigen::Index cols) {
  if (static_cast<Eigen::Index>(idx->size()) != x->value.size())
    throw ValidationError("scatter_add: index map size does not match input shape");
  DenseMat<S> out = DenseMat<S>::Zero(rows, cols);
  const S* src = x->value.data();
  S* dst = out.data();
  const Eigen::Index n_dst = out.size();
  const auto& map = *idx;
  for (std::size_t i = 0; i < map.size(); ++i) {
    const std::int64_t j = map[i];
    if (j < 0) continue;
    if (j >= n_dst) throw ValidationError("scatter_add: index out of range");
    dst[j] += src[i];
  }
  auto n = make_node<S>(std::move(out), "scatter_add", {x});
  const Eigen::Index out_rows = x->value.rows(), out_cols = x->value.cols();
  n->vjp = [idx, out_rows, out_cols](const Var<S>&, const Var<S>& g, std::vector<Var<S>>& pg) {
    pg[0] = gather(g, idx, out_rows, out_cols);
  };
  return n;
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

template <class S>
using GradMap = std::unordered_map<const Node<S>*, Var<S>>;

// Reverse-topological accumulation of gradients from `root`. The seed is a
// matrix of ones, i.e. gradients of sum(root); use a 1x1 root for scalar
// objectives. Returned gradients are graph nodes: differentiating them again
// (for the gradient penalty) is just another backward() call.
template <class S>
GradMap<S> backward(const Var<S>& root) {
  if (!root->requires_grad)
    throw ValidationError("backward: root does not depend on any differentiable leaf");

  // Post-order DFS over parent edges, iterative to survive deep graphs.
  std::vector<Node<S>*> order;
  std::unordered_set<const Node<S>*> seen;
  std::vector<std::pair<Node<S>*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<S>* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  GradMap<S> grads;
  grads[root.get()] = constant<S>(DenseMat<S>::Constant(root->value.rows(), root->value.cols(), S(1)));

  // Reverse post-order: every node is handled after all its consumers.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<S>* node = *it;
    auto git = grads.find(node);
    if (git == grads.end() || !node->vjp) continue;
    const Var<S>& g = git->second;
    Var<S> self = node->shared_from_this();
    std::vector<Var<S>> parent_grads(node->parents.size());
    node->vjp(self, g, parent_grads);
    for (std::size_t i = 0; i < node->parents.size(); ++i) {
      const Var<S>& p = node->parents[i];
      if (!p->requires_grad || !parent_grads[i]) continue;
      auto pit = grads.find(p.get());
      if (pit == grads.end())
        grads[p.get()] = parent_grads[i];
      else
        pit->second = add(pit->second, parent_grads[i]);
    }
  }
  return grads;
}

template <class S>
Var<S> grad_of(const GradMap<S>& grads, const Var<S>& node) {
  auto it = grads.find(node.get());
  if (it == grads.end()) return nullptr;
  return it->second;
}

}  // namespace facegen::autodiff

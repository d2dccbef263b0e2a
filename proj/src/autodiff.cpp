// Copyright 2026 The PLSP Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "plsp/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "plsp/errors.hpp"
#include "plsp/kernels.hpp"

namespace plsp::ad {

namespace {

std::string shape_str(const Tensor& t) { return std::to_string(t.rows()) + "x" + std::to_string(t.cols()); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) throw ShapeError(std::string(op) + ": " + shape_str(a) + " vs " + shape_str(b));
}

Graph& graph_of(Var a, Var b) {
  if (a.graph() == nullptr || a.graph() != b.graph()) throw Error("operands belong to different graphs");
  return *a.graph();
}

Graph& graph_of(Var a) {
  if (a.graph() == nullptr) throw Error("operand is not attached to a graph");
  return *a.graph();
}

void accumulate(Tensor& dst, const Tensor& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

const Tensor& Var::value() const {
  if (graph_ == nullptr) throw Error("detached Var");
  return graph_->nodes_.at(id_).value;
}

bool Var::requires_grad() const { return graph_ != nullptr && graph_->nodes_.at(id_).requires_grad; }

const Tensor& Gradients::of(Var v) const {
  auto it = grads_.find(v.id());
  if (it == grads_.end()) throw NoGradient("node " + std::to_string(v.id()) + " does not require a gradient");
  return it->second;
}

Tensor Gradients::take(Var v) {
  auto it = grads_.find(v.id());
  if (it == grads_.end()) throw NoGradient("node " + std::to_string(v.id()) + " does not require a gradient");
  Tensor t = std::move(it->second);
  grads_.erase(it);
  return t;
}

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), false, true, {}, {}});
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), true, true, {}, {}});
  return Var(this, nodes_.size() - 1);
}

void Graph::check_owned(Var v) const {
  if (v.graph() != this || v.id() >= nodes_.size()) throw Error("Var does not belong to this graph");
}

Var Graph::emit(Tensor value, std::vector<Var> parents, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  for (Var p : parents) {
    check_owned(p);
    node.parents.push_back(p.id());
    node.requires_grad = node.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Gradients Graph::backward(Var root) {
  check_owned(root);
  if (consumed_) throw Error("graph already consumed by a backward pass");
  if (root.value().size() != 1) throw ShapeError("backward root must be a scalar, got " + shape_str(root.value()));
  consumed_ = true;

  std::vector<std::optional<Tensor>> grads(nodes_.size());
  grads[root.id()] = Tensor(1, 1, 1.0);
  std::vector<Tensor*> parent_ptrs;
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!grads[id] || !node.backward) continue;
    parent_ptrs.clear();
    for (std::size_t p : node.parents) {
      if (!nodes_[p].requires_grad) {
        parent_ptrs.push_back(nullptr);
        continue;
      }
      if (!grads[p]) grads[p] = Tensor(nodes_[p].value.rows(), nodes_[p].value.cols());
      parent_ptrs.push_back(&*grads[p]);
    }
    node.backward(node.value, *grads[id], parent_ptrs);
    // Interior gradients are not needed once propagated.
    if (!node.is_leaf) grads[id].reset();
  }

  Gradients out;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const Node& node = nodes_[id];
    if (!node.requires_grad || !node.is_leaf) continue;
    out.grads_.emplace(id, grads[id] ? std::move(*grads[id]) : Tensor(node.value.rows(), node.value.cols()));
  }
  return out;
}

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.rows()) throw ShapeError("matmul: " + shape_str(A) + " · " + shape_str(B));
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor C(m, n);
  kernels::gemm_nn(A.data(), B.data(), C.data(), m, k, n);
  return g.emit(std::move(C), {a, b}, [&A, &B, m, k, n](const Tensor&, const Tensor& G, std::span<Tensor* const> pg) {
    if (pg[0]) kernels::gemm_nt(G.data(), B.data(), pg[0]->data(), m, n, k, true);
    if (pg[1]) kernels::gemm_tn(A.data(), G.data(), pg[1]->data(), k, m, n, true);
  });
}

Var matmul_nt(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.cols()) throw ShapeError("matmul_nt: " + shape_str(A) + " · " + shape_str(B) + "ᵀ");
  const std::size_t m = A.rows(), k = A.cols(), n = B.rows();
  Tensor C(m, n);
  kernels::gemm_nt(A.data(), B.data(), C.data(), m, k, n);
  return g.emit(std::move(C), {a, b}, [&A, &B, m, k, n](const Tensor&, const Tensor& G, std::span<Tensor* const> pg) {
    if (pg[0]) kernels::gemm_nn(G.data(), B.data(), pg[0]->data(), m, n, k, true);
    if (pg[1]) kernels::gemm_tn(G.data(), A.data(), pg[1]->data(), n, m, k, true);
  });
}

Var transpose(Var a) {
  Graph& g = graph_of(a);
  return g.emit(a.value().transposed(), {a}, [](const Tensor&, const Tensor& G, std::span<Tensor* const> pg) {
    if (pg[0]) accumulate(*pg[0], G.transposed());
  });
}

Var add(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return g.emit(std::move(out), {a, b}, [](const Tensor&, const Tensor& G, std::span<Tensor* const> pg) {
    if (pg[0]) accumulate(*pg[0], G);
    if (pg[1]) accumulate(*pg[1], G);
  });
}

Var sub(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return g.emit(std::move(out), {a, b}, [](const Tensor&, const Tensor& G, std::span<Tensor* const> pg) {
    if (pg[0]) accumulate(*pg[0], G);
    if (pg[1]) {
      auto d = pg[1]->data();
      auto s = G.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= s[i];
    }
  });
}

Var mul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_same_shape(A, B, "mul");
  Tensor out = A;
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= B.data()[i];
  return g.emit(std::move(out), {a, b}, [&A, &B](const Tensor&, const Tensor& G, std::span<Tensor* const> pg) {
    const auto gv = G.data();
    if (pg[0]) {
      auto d = pg[0]->data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv[i] * B.data()[i];
    }
    if (pg[1]) {
      auto d = pg[1]->data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv[i] * A.data()[i];
    }
  });
}

Var add_row_broadcast(Var x, Var row) {
  Graph& g = graph_of(x, row);
  const Tensor& X = x.value();
  const Tensor& R = row.value();
  if (R.rows() != 1 || R.cols() != X.cols()) throw ShapeError("add_row_broadcast: " + shape_str(X) + " + " + shape_str(R));
  Tensor out = X;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += R(0, j);
  }
  return g.emit(std::move(out), {x, row}, [](const Tensor&, const Tensor& G, std::span<Tensor* const> pg) {
    if (pg[0]) accumulate(*pg[0], G);
    if (pg[1]) {
      for (std::size_t i = 0; i < G.rows(); ++i) {
        for (std::size_t j = 0; j < G.cols(); ++j) (*pg[1])(0, j) += G(i, j);
      }
    }
  });
}

namespace {

Var col_broadcast(Var x, Var col, double sign) {
  Graph& g = graph_of(x, col);
  const Tensor& X = x.value();
  const Tensor& C = col.value();
  if (C.cols() != 1 || C.rows() != X.rows()) throw ShapeError("col_broadcast: " + shape_str(X) + " ± " + shape_str(C));
  Tensor out = X;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (double& v : out.row(i)) v += sign * C(i, 0);
  }
  return g.emit(std::move(out), {x, col}, [sign](const Tensor&, const Tensor& G, std::span<Tensor* const> pg) {
    if (pg[0]) accumulate(*pg[0], G);
    if (pg[1]) {
      for (std::size_t i = 0; i < G.rows(); ++i) {
        double s = 0.0;
        for (double v : G.row(i)) s += v;
        (*pg[1])(i, 0) += sign * s;
      }
    }
  });
}

template <typename Fwd, typename Deriv>
Var unary(Var x, Fwd fwd, Deriv deriv) {
  Graph& g = graph_of(x);
  const Tensor& X = x.value();
  Tensor out(X.rows(), X.cols());
  for (std::size_t i = 0; i < X.size(); ++i) out.data()[i] = fwd(X.data()[i]);
  return g.emit(std::move(out), {x}, [&X, deriv](const Tensor& Y, const Tensor& G, std::span<Tensor* const> pg) {
    if (!pg[0]) return;
    auto d = pg[0]->data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += G.data()[i] * deriv(X.data()[i], Y.data()[i]);
  });
}

}  // namespace

Var add_col_broadcast(Var x, Var col) { return col_broadcast(x, col, 1.0); }
Var sub_col_broadcast(Var x, Var col) { return col_broadcast(x, col, -1.0); }

Var scale(Var x, double c) {
  return unary(x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Var add_scalar(Var x, double c) {
  return unary(x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Var relu(Var x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var exp(Var x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x, double floor) {
  return unary(
      x, [floor](double v) { return std::log(std::max(v, floor)); },
      [floor](double v, double) { return v > floor ? 1.0 / v : 0.0; });
}

Var maximum(Var x, double c) {
  return unary(x, [c](double v) { return std::max(v, c); }, [c](double v, double) { return v > c ? 1.0 : 0.0; });
}

Var sum(Var x) {
  Graph& g = graph_of(x);
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return g.emit(Tensor::scalar(s), {x}, [](const Tensor&, const Tensor& G, std::span<Tensor* const> pg) {
    if (!pg[0]) return;
    const double gs = G.item();
    for (double& d : pg[0]->data()) d += gs;
  });
}

Var mean(Var x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var row_logsumexp(Var x) {
  Graph& g = graph_of(x);
  const Tensor& X = x.value();
  Tensor out(X.rows(), 1);
  kernels::row_logsumexp(X.data(), out.data(), X.rows(), X.cols());
  return g.emit(std::move(out), {x}, [&X](const Tensor& Y, const Tensor& G, std::span<Tensor* const> pg) {
    if (!pg[0]) return;
    for (std::size_t i = 0; i < X.rows(); ++i) {
      const double gi = G(i, 0);
      if (gi == 0.0) continue;
      auto d = pg[0]->row(i);
      auto xr = X.row(i);
      for (std::size_t j = 0; j < xr.size(); ++j) d[j] += gi * std::exp(xr[j] - Y(i, 0));
    }
  });
}

Var log_softmax(Var x) { return sub_col_broadcast(x, row_logsumexp(x)); }

Var gather_rows(Var x, std::span<const std::size_t> rows) {
  Graph& g = graph_of(x);
  const Tensor& X = x.value();
  Tensor out(rows.size(), X.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= X.rows()) throw ShapeError("gather_rows: index out of range");
    std::copy_n(X.row(rows[r]).begin(), X.cols(), out.row(r).begin());
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return g.emit(std::move(out), {x}, [idx = std::move(idx)](const Tensor&, const Tensor& G, std::span<Tensor* const> pg) {
    if (!pg[0]) return;
    for (std::size_t r = 0; r < idx.size(); ++r) {
      auto d = pg[0]->row(idx[r]);
      auto s = G.row(r);
      for (std::size_t j = 0; j < d.size(); ++j) d[j] += s[j];
    }
  });
}

Var reshape(Var x, std::size_t rows, std::size_t cols) {
  Graph& g = graph_of(x);
  const Tensor& X = x.value();
  if (rows * cols != X.size()) throw ShapeError("reshape: " + shape_str(X) + " -> " + std::to_string(rows) + "x" + std::to_string(cols));
  Tensor out(rows, cols, std::vector<double>(X.data().begin(), X.data().end()));
  return g.emit(std::move(out), {x}, [](const Tensor&, const Tensor& G, std::span<Tensor* const> pg) {
    if (!pg[0]) return;
    auto d = pg[0]->data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += G.data()[i];
  });
}

Var vstack(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("vstack of nothing");
  Graph& g = graph_of(parts[0]);
  const std::size_t cols = parts[0].value().cols();
  std::size_t rows = 0;
  for (Var p : parts) {
    if (p.graph() != &g) throw Error("operands belong to different graphs");
    if (p.value().cols() != cols) throw ShapeError("vstack: column mismatch");
    rows += p.value().rows();
  }
  Tensor out(rows, cols);
  std::vector<std::size_t> offsets;
  std::size_t r = 0;
  for (Var p : parts) {
    offsets.push_back(r);
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(r * cols));
    r += p.value().rows();
  }
  return g.emit(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                [offsets, cols](const Tensor&, const Tensor& G, std::span<Tensor* const> pg) {
                  for (std::size_t k = 0; k < pg.size(); ++k) {
                    if (!pg[k]) continue;
                    auto d = pg[k]->data();
                    const auto* s = G.data().data() + offsets[k] * cols;
                    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
                  }
                });
}

Var pairwise_quadratic(Var w, const Tensor& sigma) {
  Graph& g = graph_of(w);
  const Tensor& W = w.value();
  const std::size_t l = W.rows(), d = W.cols();
  if (sigma.rows() != d || sigma.cols() != d) throw ShapeError("pairwise_quadratic: Σ must be " + std::to_string(d) + "x" + std::to_string(d));
  // S = W Σ (rows are Σ w_j since Σ is symmetric), M = S Wᵀ.
  Tensor S(l, d), M(l, l);
  kernels::gemm_nn(W.data(), sigma.data(), S.data(), l, d, d);
  kernels::gemm_nt(S.data(), W.data(), M.data(), l, d, l);
  Tensor D(l, l);
  for (std::size_t j = 0; j < l; ++j) {
    for (std::size_t jp = 0; jp < l; ++jp) D(j, jp) = jp == j ? 0.0 : M(j, j) + M(jp, jp) - 2.0 * M(j, jp);
  }
  return g.emit(std::move(D), {w}, [S = std::move(S), l, d](const Tensor&, const Tensor& G, std::span<Tensor* const> pg) {
    if (!pg[0]) return;
    Tensor& dW = *pg[0];
    for (std::size_t j = 0; j < l; ++j) {
      for (std::size_t jp = 0; jp < l; ++jp) {
        const double gj = G(j, jp);
        if (jp == j || gj == 0.0) continue;
        // ∂/∂w_{j'} = 2Σu, ∂/∂w_j = −2Σu with u = w_{j'} − w_j.
        for (std::size_t k = 0; k < d; ++k) {
          const double su = 2.0 * gj * (S(jp, k) - S(j, k));
          dW(jp, k) += su;
          dW(j, k) -= su;
        }
      }
    }
  });
}

}  // namespace plsp::ad

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

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "plsp/tensor.hpp"

namespace plsp::ad {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its Graph lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  bool requires_grad() const;
  std::size_t id() const { return id_; }
  Graph* graph() const { return graph_; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradients of a scalar root with respect to every node that required one.
class Gradients {
 public:
  /// Throws NoGradient for nodes that never required a gradient.
  const Tensor& of(Var v) const;
  Tensor take(Var v);

 private:
  friend class Graph;
  std::unordered_map<std::size_t, Tensor> grads_;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so reverse id order
/// is a valid topological order for the backward sweep.
class Graph {
 public:
  /// `out` is the node's forward value and `grad_out` its incoming gradient;
  /// parent_grads[i] is null when parent i does not require a gradient.
  using BackwardFn =
      std::function<void(const Tensor& out, const Tensor& grad_out, std::span<Tensor* const> parent_grads)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  /// Records an op result. The backward function is dropped when no parent needs a gradient.
  Var emit(Tensor value, std::vector<Var> parents, BackwardFn backward);

  /// Backpropagates from a 1×1 root. The tape is consumed; a second call throws.
  Gradients backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var;
  struct Node {
    Tensor value;
    bool requires_grad = false;
    bool is_leaf = false;
    std::vector<std::size_t> parents;
    BackwardFn backward;
  };

  void check_owned(Var v) const;

  std::deque<Node> nodes_;
  bool consumed_ = false;
};

// Supported op set. All operands are rank-2; shape mismatches throw ShapeError.

Var matmul(Var a, Var b);     // a·b
Var matmul_nt(Var a, Var b);  // a·bᵀ
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);                  // elementwise
Var add_row_broadcast(Var x, Var row);  // x[n×m] + row[1×m] on every row
Var add_col_broadcast(Var x, Var col);  // x[n×m] + col[n×1] on every column
Var sub_col_broadcast(Var x, Var col);
Var scale(Var x, double c);
Var add_scalar(Var x, double c);
Var relu(Var x);
Var exp(Var x);
/// log(max(x, floor)); the gradient is zero where the floor is active.
Var log(Var x, double floor = 1e-12);
Var maximum(Var x, double c);
Var sum(Var x);
Var mean(Var x);
Var row_logsumexp(Var x);  // [n×m] -> [n×1]
Var log_softmax(Var x);    // row-wise
Var gather_rows(Var x, std::span<const std::size_t> rows);
Var reshape(Var x, std::size_t rows, std::size_t cols);
Var vstack(std::span<const Var> parts);
/// d[j][j'] = (w_{j'} − w_j)ᵀ Σ (w_{j'} − w_j) for the rows w_j of `w`; Σ is a constant
/// symmetric matrix.
Var pairwise_quadratic(Var w, const Tensor& sigma);

}  // namespace plsp::ad

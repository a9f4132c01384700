// Copyright 2026 The msaasr Authors.
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

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "msaasr/numerics/tensor.hpp"

namespace msaasr::ad {

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while its Graph lives.
class Var {
 public:
  Var() = default;

  Graph* graph() const { return graph_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Graph;
  Var(Graph* graph, std::uint32_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

// Define-by-run reverse-mode tape. Nodes are appended in evaluation order,
// so the append order is a topological order and backward() walks it once
// in reverse. Inputs are never mutated.
class Graph {
 public:
  // Receives the node's output and its gradient and pushes contributions to
  // the parents through accumulate() or grad_buffer().
  using BackwardFn =
      std::function<void(Graph&, const Tensor& out_value, const Tensor& out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);

  // Records an operation result. requires_grad is inherited from parents.
  Var record(Tensor value, std::span<const Var> parents, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_[v.id_].value; }
  bool requires_grad(Var v) const { return nodes_[v.id_].requires_grad; }

  // Gradient after backward(); an empty tensor when nothing flowed into v.
  const Tensor& grad(Var v) const { return nodes_[v.id_].grad; }

  // Adds g into v's gradient buffer. No-op when v does not require grad.
  void accumulate(Var v, std::span<const double> g);
  // Mutable gradient buffer for v, zero-initialised on first use.
  Tensor& grad_buffer(Var v);

  // Seeds d(loss)/d(loss) = 1 and propagates. loss must hold one element.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return graph_->value(*this); }

// Elementwise.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var gelu(Var x);

// x[m x n] + bias[n] broadcast over rows.
Var add_bias(Var x, Var bias);

// a[m x k] * b[k x n].
Var matmul(Var a, Var b);
// a[m x k] * b[n x k]^T.
Var matmul_nt(Var a, Var b);

// Row-wise softmax. With causal=true, entries (i, j > i) are excluded.
Var softmax_rows(Var x, bool causal = false);

// Scaled dot-product attention over `heads` equal column blocks of q[n x d],
// k[m x d] and v[m x d]; softmax(q_h k_h^T / sqrt(d / heads)) v_h per head,
// heads concatenated. Same result as the composition of the ops above, with
// one stored probability matrix per head.
Var attention(Var q, Var k, Var v, std::size_t heads, bool causal = false);

// Row-wise normalisation to zero mean, unit variance, then gain/bias.
// Requires at least two columns.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

Var columns(Var x, std::size_t start, std::size_t width);
Var concat_columns(std::span<const Var> parts);

// out[i] = table[ids[i]].
Var gather_rows(Var table, std::span<const std::int32_t> ids);

Var sum(Var x);

// Rows with norm below floor are rescaled to norm floor; rows with zero
// norm become floor * e_0.
Var row_norm_floor(Var x, double floor);

}  // namespace msaasr::ad

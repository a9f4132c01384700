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

#include "msaasr/numerics/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "msaasr/error.hpp"

namespace msaasr::ad {
namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const MatR>;
using MMap = Eigen::Map<MatR>;

CMap cmap(const Tensor& t) {
  return CMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
              static_cast<Eigen::Index>(t.cols()));
}
MMap mmap(Tensor& t) {
  return MMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
              static_cast<Eigen::Index>(t.cols()));
}

void require_matrix(const Tensor& t, const char* op) {
  require(t.rank() == 2, ErrorKind::kDimension,
          std::string(op) + ": expected a matrix, got shape " + shape_string(t.shape()));
}

void require_same_graph(Var a, Var b) {
  require(a.valid() && b.valid() && a.graph() == b.graph(), ErrorKind::kInvalidArgument,
          "operands belong to different graphs");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), ErrorKind::kDimension,
          std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
              shape_string(b.shape()));
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Var Graph::push(Node node) {
  require(nodes_.size() < std::numeric_limits<std::uint32_t>::max(), ErrorKind::kNumeric,
          "graph too large");
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::constant(Tensor value) {
  require(value.all_finite(), ErrorKind::kNumeric, "non-finite value entering graph");
  value.set_requires_grad(false);
  return push(Node{std::move(value), {}, nullptr, false});
}

Var Graph::variable(Tensor value) {
  require(value.all_finite(), ErrorKind::kNumeric, "non-finite value entering graph");
  value.set_requires_grad(true);
  return push(Node{std::move(value), {}, nullptr, true});
}

Var Graph::record(Tensor value, std::span<const Var> parents, BackwardFn backward) {
  bool needs = false;
  for (Var p : parents) {
    require(p.graph() == this, ErrorKind::kInvalidArgument, "parent from a different graph");
    needs = needs || nodes_[p.id_].requires_grad;
  }
  value.set_requires_grad(needs);
  return push(Node{std::move(value), {}, needs ? std::move(backward) : nullptr, needs});
}

Tensor& Graph::grad_buffer(Var v) {
  Node& n = nodes_[v.id_];
  if (n.grad.size() != n.value.size() || n.grad.shape() != n.value.shape()) {
    n.grad = Tensor(n.value.shape());
  }
  return n.grad;
}

void Graph::accumulate(Var v, std::span<const double> g) {
  if (!nodes_[v.id_].requires_grad) return;
  Tensor& buf = grad_buffer(v);
  require(buf.size() == g.size(), ErrorKind::kDimension, "gradient size mismatch");
  auto d = buf.data();
  for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
}

void Graph::backward(Var loss) {
  require(loss.graph() == this, ErrorKind::kInvalidArgument, "loss from a different graph");
  const Tensor& lv = nodes_[loss.id_].value;
  require(lv.size() == 1, ErrorKind::kDimension, "backward: loss must be a scalar");
  require(lv.all_finite(), ErrorKind::kNumeric, "backward: non-finite loss");
  if (!nodes_[loss.id_].requires_grad) return;
  grad_buffer(loss)[0] += 1.0;
  for (std::int64_t i = loss.id_; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this, n.value, n.grad);
  }
}

Var add(Var a, Var b) {
  require_same_graph(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  const Var parents[] = {a, b};
  return a.graph()->record(std::move(out), parents, [a, b](Graph& g, const Tensor&, const Tensor& go) {
    g.accumulate(a, go.data());
    g.accumulate(b, go.data());
  });
}

Var sub(Var a, Var b) {
  require_same_graph(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  const Var parents[] = {a, b};
  return a.graph()->record(std::move(out), parents, [a, b](Graph& g, const Tensor&, const Tensor& go) {
    g.accumulate(a, go.data());
    if (g.requires_grad(b)) {
      Tensor& gb = g.grad_buffer(b);
      auto d = gb.data();
      auto s = go.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= s[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_graph(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  const Var parents[] = {a, b};
  return a.graph()->record(std::move(out), parents, [a, b](Graph& g, const Tensor&, const Tensor& go) {
    auto s = go.data();
    if (g.requires_grad(a)) {
      auto d = g.grad_buffer(a).data();
      auto bv = g.value(b).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i] * bv[i];
    }
    if (g.requires_grad(b)) {
      auto d = g.grad_buffer(b).data();
      auto av = g.value(a).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i] * av[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  const Var parents[] = {a};
  return a.graph()->record(std::move(out), parents, [a, factor](Graph& g, const Tensor&, const Tensor& go) {
    auto d = g.grad_buffer(a).data();
    auto s = go.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * s[i];
  });
}

Var gelu(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) {
    const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
    v = 0.5 * v * (1.0 + t);
  }
  const Var parents[] = {x};
  return x.graph()->record(std::move(out), parents, [x](Graph& g, const Tensor&, const Tensor& go) {
    auto d = g.grad_buffer(x).data();
    auto xv = g.value(x).data();
    auto s = go.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double v = xv[i];
      const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
      const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
      d[i] += s[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
    }
  });
}

Var add_bias(Var x, Var bias) {
  require_same_graph(x, bias);
  const Tensor& xv = x.value();
  require_matrix(xv, "add_bias");
  require(bias.value().size() == xv.cols(), ErrorKind::kDimension,
          "add_bias: bias length does not match columns");
  Tensor out = xv;
  const std::size_t n = xv.cols();
  auto b = bias.value().data();
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < n; ++c) row[c] += b[c];
  }
  const Var parents[] = {x, bias};
  return x.graph()->record(std::move(out), parents, [x, bias](Graph& g, const Tensor&, const Tensor& go) {
    g.accumulate(x, go.data());
    if (g.requires_grad(bias)) {
      auto d = g.grad_buffer(bias).data();
      for (std::size_t r = 0; r < go.rows(); ++r) {
        auto row = go.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) d[c] += row[c];
      }
    }
  });
}

Var matmul(Var a, Var b) {
  require_same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  require(av.cols() == bv.rows(), ErrorKind::kDimension,
          "matmul: inner dimensions differ " + shape_string(av.shape()) + " * " +
              shape_string(bv.shape()));
  Tensor out = Tensor::zeros(av.rows(), bv.cols());
  mmap(out).noalias() = cmap(av) * cmap(bv);
  const Var parents[] = {a, b};
  return a.graph()->record(std::move(out), parents, [a, b](Graph& g, const Tensor&, const Tensor& go) {
    if (g.requires_grad(a)) mmap(g.grad_buffer(a)).noalias() += cmap(go) * cmap(g.value(b)).transpose();
    if (g.requires_grad(b)) mmap(g.grad_buffer(b)).noalias() += cmap(g.value(a)).transpose() * cmap(go);
  });
}

Var matmul_nt(Var a, Var b) {
  require_same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul_nt");
  require_matrix(bv, "matmul_nt");
  require(av.cols() == bv.cols(), ErrorKind::kDimension,
          "matmul_nt: inner dimensions differ " + shape_string(av.shape()) + " * " +
              shape_string(bv.shape()) + "^T");
  Tensor out = Tensor::zeros(av.rows(), bv.rows());
  mmap(out).noalias() = cmap(av) * cmap(bv).transpose();
  const Var parents[] = {a, b};
  return a.graph()->record(std::move(out), parents, [a, b](Graph& g, const Tensor&, const Tensor& go) {
    if (g.requires_grad(a)) mmap(g.grad_buffer(a)).noalias() += cmap(go) * cmap(g.value(b));
    if (g.requires_grad(b)) mmap(g.grad_buffer(b)).noalias() += cmap(go).transpose() * cmap(g.value(a));
  });
}

Var softmax_rows(Var x, bool causal) {
  const Tensor& xv = x.value();
  require_matrix(xv, "softmax_rows");
  require(xv.cols() > 0, ErrorKind::kDegenerate, "softmax_rows: empty row");
  Tensor out = Tensor::zeros(xv.rows(), xv.cols());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto in = xv.row(r);
    auto o = out.row(r);
    const std::size_t live = causal ? std::min(r + 1, in.size()) : in.size();
    double mx = in[0];
    for (std::size_t c = 1; c < live; ++c) mx = std::max(mx, in[c]);
    double total = 0.0;
    for (std::size_t c = 0; c < live; ++c) {
      o[c] = std::exp(in[c] - mx);
      total += o[c];
    }
    for (std::size_t c = 0; c < live; ++c) o[c] /= total;
  }
  const Var parents[] = {x};
  return x.graph()->record(std::move(out), parents,
                           [x](Graph& g, const Tensor& y, const Tensor& go) {
                             auto& d = g.grad_buffer(x);
                             for (std::size_t r = 0; r < y.rows(); ++r) {
                               auto yr = y.row(r);
                               auto gr = go.row(r);
                               auto dr = d.row(r);
                               double s = 0.0;
                               for (std::size_t c = 0; c < yr.size(); ++c) s += gr[c] * yr[c];
                               for (std::size_t c = 0; c < yr.size(); ++c)
                                 dr[c] += yr[c] * (gr[c] - s);
                             }
                           });
}

Var attention(Var q, Var k, Var v, std::size_t heads, bool causal) {
  require_same_graph(q, k);
  require_same_graph(q, v);
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  require_matrix(qv, "attention");
  require_matrix(kv, "attention");
  require_matrix(vv, "attention");
  require(heads >= 1 && qv.cols() % heads == 0, ErrorKind::kDimension,
          "attention: width not divisible by head count");
  require(kv.cols() == qv.cols() && vv.cols() == qv.cols() && kv.rows() == vv.rows(),
          ErrorKind::kDimension,
          "attention: q " + shape_string(qv.shape()) + ", k " + shape_string(kv.shape()) +
              ", v " + shape_string(vv.shape()));
  require(kv.rows() > 0, ErrorKind::kDegenerate, "attention: no keys");
  const auto n = static_cast<Eigen::Index>(qv.rows());
  const auto m = static_cast<Eigen::Index>(kv.rows());
  const auto dh = static_cast<Eigen::Index>(qv.cols() / heads);
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));

  auto probs = std::make_shared<std::vector<MatR>>(heads);
  Tensor out = Tensor::zeros(qv.rows(), qv.cols());
  MMap o = mmap(out);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto c0 = static_cast<Eigen::Index>(h) * dh;
    MatR& p = (*probs)[h];
    p.noalias() = sc * (cmap(qv).middleCols(c0, dh) * cmap(kv).middleCols(c0, dh).transpose());
    for (Eigen::Index r = 0; r < n; ++r) {
      const Eigen::Index live = causal ? std::min<Eigen::Index>(r + 1, m) : m;
      auto seg = p.row(r).head(live).array();
      const double mx = seg.maxCoeff();
      seg = (seg - mx).exp();
      seg /= seg.sum();
      if (live < m) p.row(r).tail(m - live).setZero();
    }
    o.middleCols(c0, dh).noalias() = p * cmap(vv).middleCols(c0, dh);
  }
  const Var parents[] = {q, k, v};
  return q.graph()->record(
      std::move(out), parents, [q, k, v, probs, dh, sc](Graph& g, const Tensor&, const Tensor& go) {
        const bool gq = g.requires_grad(q), gk = g.requires_grad(k), gv = g.requires_grad(v);
        const CMap gom = cmap(go);
        const CMap qm = cmap(g.value(q));
        const CMap km = cmap(g.value(k));
        const CMap vm = cmap(g.value(v));
        MatR dp;
        for (std::size_t h = 0; h < probs->size(); ++h) {
          const auto c0 = static_cast<Eigen::Index>(h) * dh;
          const MatR& p = (*probs)[h];
          if (gv) mmap(g.grad_buffer(v)).middleCols(c0, dh).noalias() += p.transpose() * gom.middleCols(c0, dh);
          if (!gq && !gk) continue;
          dp.noalias() = gom.middleCols(c0, dh) * vm.middleCols(c0, dh).transpose();
          const Eigen::VectorXd rs = (dp.array() * p.array()).rowwise().sum();
          dp = (p.array() * (dp.array().colwise() - rs.array())).matrix() * sc;
          if (gq) mmap(g.grad_buffer(q)).middleCols(c0, dh).noalias() += dp * km.middleCols(c0, dh);
          if (gk) mmap(g.grad_buffer(k)).middleCols(c0, dh).noalias() += dp.transpose() * qm.middleCols(c0, dh);
        }
      });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  require_same_graph(x, gain);
  require_same_graph(x, bias);
  const Tensor& xv = x.value();
  require_matrix(xv, "layer_norm");
  const std::size_t m = xv.rows();
  const std::size_t d = xv.cols();
  require(d >= 2, ErrorKind::kDimension, "layer_norm: needs at least two features");
  require(gain.value().size() == d && bias.value().size() == d, ErrorKind::kDimension,
          "layer_norm: gain/bias length mismatch");
  Tensor xhat = Tensor::zeros(m, d);
  std::vector<double> inv_std(m);
  Tensor out = Tensor::zeros(m, d);
  auto gv = gain.value().data();
  auto bv = bias.value().data();
  for (std::size_t r = 0; r < m; ++r) {
    auto in = xv.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    auto h = xhat.row(r);
    auto o = out.row(r);
    for (std::size_t c = 0; c < d; ++c) {
      h[c] = (in[c] - mean) * inv_std[r];
      o[c] = h[c] * gv[c] + bv[c];
    }
  }
  const Var parents[] = {x, gain, bias};
  return x.graph()->record(
      std::move(out), parents,
      [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Graph& g, const Tensor&, const Tensor& go) {
        const std::size_t m = xhat.rows();
        const std::size_t d = xhat.cols();
        if (g.requires_grad(gain) || g.requires_grad(bias)) {
          std::vector<double> dg(d, 0.0), db(d, 0.0);
          for (std::size_t r = 0; r < m; ++r) {
            auto gr = go.row(r);
            auto h = xhat.row(r);
            for (std::size_t c = 0; c < d; ++c) {
              dg[c] += gr[c] * h[c];
              db[c] += gr[c];
            }
          }
          g.accumulate(gain, dg);
          g.accumulate(bias, db);
        }
        if (!g.requires_grad(x)) return;
        auto gv = g.value(gain).data();
        auto& dx = g.grad_buffer(x);
        std::vector<double> dh(d);
        for (std::size_t r = 0; r < m; ++r) {
          auto gr = go.row(r);
          auto h = xhat.row(r);
          double mean_dh = 0.0, mean_dh_h = 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            dh[c] = gr[c] * gv[c];
            mean_dh += dh[c];
            mean_dh_h += dh[c] * h[c];
          }
          mean_dh /= static_cast<double>(d);
          mean_dh_h /= static_cast<double>(d);
          auto out_row = dx.row(r);
          for (std::size_t c = 0; c < d; ++c) {
            out_row[c] += inv_std[r] * (dh[c] - mean_dh - h[c] * mean_dh_h);
          }
        }
      });
}

Var columns(Var x, std::size_t start, std::size_t width) {
  const Tensor& xv = x.value();
  require_matrix(xv, "columns");
  require(start + width <= xv.cols(), ErrorKind::kDimension, "columns: range out of bounds");
  Tensor out = Tensor::zeros(xv.rows(), width);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto in = xv.row(r).subspan(start, width);
    std::copy(in.begin(), in.end(), out.row(r).begin());
  }
  const Var parents[] = {x};
  return x.graph()->record(std::move(out), parents,
                           [x, start, width](Graph& g, const Tensor&, const Tensor& go) {
                             auto& d = g.grad_buffer(x);
                             for (std::size_t r = 0; r < go.rows(); ++r) {
                               auto dst = d.row(r).subspan(start, width);
                               auto src = go.row(r);
                               for (std::size_t c = 0; c < width; ++c) dst[c] += src[c];
                             }
                           });
}

Var concat_columns(std::span<const Var> parts) {
  require(!parts.empty(), ErrorKind::kDegenerate, "concat_columns: no inputs");
  const std::size_t rows = parts.front().value().rows();
  std::size_t total = 0;
  for (Var p : parts) {
    require_same_graph(parts.front(), p);
    require_matrix(p.value(), "concat_columns");
    require(p.value().rows() == rows, ErrorKind::kDimension, "concat_columns: row mismatch");
    total += p.value().cols();
  }
  Tensor out = Tensor::zeros(rows, total);
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r) {
      auto src = pv.row(r);
      std::copy(src.begin(), src.end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(offset));
    }
    offset += pv.cols();
  }
  std::vector<Var> owned(parts.begin(), parts.end());
  return parts.front().graph()->record(
      std::move(out), parts, [owned](Graph& g, const Tensor&, const Tensor& go) {
        std::size_t offset = 0;
        for (Var p : owned) {
          const std::size_t w = g.value(p).cols();
          if (g.requires_grad(p)) {
            auto& d = g.grad_buffer(p);
            for (std::size_t r = 0; r < go.rows(); ++r) {
              auto src = go.row(r).subspan(offset, w);
              auto dst = d.row(r);
              for (std::size_t c = 0; c < w; ++c) dst[c] += src[c];
            }
          }
          offset += w;
        }
      });
}

Var gather_rows(Var table, std::span<const std::int32_t> ids) {
  const Tensor& tv = table.value();
  require_matrix(tv, "gather_rows");
  std::vector<std::int32_t> idx(ids.begin(), ids.end());
  Tensor out = Tensor::zeros(idx.size(), tv.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] >= 0 && static_cast<std::size_t>(idx[i]) < tv.rows(),
            ErrorKind::kInvalidArgument,
            "gather_rows: index " + std::to_string(idx[i]) + " out of range");
    auto src = tv.row(static_cast<std::size_t>(idx[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  const Var parents[] = {table};
  return table.graph()->record(std::move(out), parents,
                               [table, idx = std::move(idx)](Graph& g, const Tensor&,
                                                             const Tensor& go) {
                                 auto& d = g.grad_buffer(table);
                                 for (std::size_t i = 0; i < idx.size(); ++i) {
                                   auto dst = d.row(static_cast<std::size_t>(idx[i]));
                                   auto src = go.row(i);
                                   for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
                                 }
                               });
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  const Var parents[] = {x};
  return x.graph()->record(Tensor::scalar(total), parents,
                           [x](Graph& g, const Tensor&, const Tensor& go) {
                             const double s = go[0];
                             for (double& v : g.grad_buffer(x).data()) v += s;
                           });
}

Var row_norm_floor(Var x, double floor) {
  const Tensor& xv = x.value();
  require_matrix(xv, "row_norm_floor");
  Tensor out = xv;
  std::vector<double> norms(xv.rows());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto row = out.row(r);
    norms[r] = norm(row);
    if (norms[r] >= floor) continue;
    if (norms[r] > 0.0) {
      for (double& v : row) v *= floor / norms[r];
    } else if (!row.empty()) {
      row[0] = floor;
    }
  }
  const Var parents[] = {x};
  return x.graph()->record(
      std::move(out), parents,
      [x, floor, norms = std::move(norms)](Graph& g, const Tensor& y, const Tensor& go) {
        auto& d = g.grad_buffer(x);
        for (std::size_t r = 0; r < go.rows(); ++r) {
          auto gr = go.row(r);
          auto dr = d.row(r);
          if (norms[r] >= floor) {
            for (std::size_t c = 0; c < gr.size(); ++c) dr[c] += gr[c];
          } else if (norms[r] > 0.0) {
            // y = floor * x / |x|; Jacobian (floor/|x|)(I - u u^T), u = y / floor.
            auto yr = y.row(r);
            double proj = 0.0;
            for (std::size_t c = 0; c < gr.size(); ++c) proj += gr[c] * yr[c] / floor;
            for (std::size_t c = 0; c < gr.size(); ++c)
              dr[c] += (floor / norms[r]) * (gr[c] - proj * yr[c] / floor);
          }
        }
      });
}

}  // namespace msaasr::ad

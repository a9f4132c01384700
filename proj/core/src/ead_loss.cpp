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

#include "msaasr/ead_loss.hpp"

#include <algorithm>
#include <cmath>

#include "msaasr/error.hpp"

namespace msaasr {
namespace {

// Unit-normalised copy of the rows plus their original norms. Zero rows stay zero.
struct UnitRows {
  Tensor unit;
  std::vector<double> norms;
};

UnitRows unit_rows(const Tensor& rows) {
  UnitRows out{rows, std::vector<double>(rows.rows(), 0.0)};
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    auto r = out.unit.row(i);
    const double n = norm(r);
    out.norms[i] = n;
    if (n > 0.0) {
      for (double& v : r) v /= n;
    }
  }
  return out;
}

void check_pair(const EmbeddingSequence& e, const EmbeddingSequence& t) {
  e.validate();
  t.validate();
  require(e.length() == t.length() && e.dim() == t.dim(), ErrorKind::kDimension,
          "embedding sequences differ in shape: " + shape_string(e.rows.shape()) + " vs " +
              shape_string(t.rows.shape()));
  require(e.mask == t.mask, ErrorKind::kDimension, "embedding sequences differ in mask");
}

std::vector<std::size_t> active_indices(const std::vector<bool>& mask) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) idx.push_back(i);
  }
  return idx;
}

struct EadWork {
  LossBreakdown terms;
  // d(total)/d(e_unit) for each row; filled only when requested.
  Tensor grad_unit;
};

// Shared forward (and optionally the gradient w.r.t. the unit rows of E).
EadWork compute(const UnitRows& eu, const UnitRows& tu, const std::vector<bool>& mask,
                const LossWeights& w, bool want_grad, double l3_sign) {
  EadWork work;
  const std::size_t n = eu.unit.rows();
  const std::size_t d = eu.unit.cols();
  const auto active = active_indices(mask);
  if (want_grad) work.grad_unit = Tensor::zeros(n, d);
  if (active.empty()) return work;

  const double m = static_cast<double>(active.size());
  const double inv_m2 = 1.0 / (m * m);

  double l1 = 0.0;
  for (std::size_t i : active) {
    l1 += 1.0 - dot(tu.unit.row(i), eu.unit.row(i));
    if (want_grad) {
      auto g = work.grad_unit.row(i);
      auto tr = tu.unit.row(i);
      for (std::size_t c = 0; c < d; ++c) g[c] -= w.alpha * tr[c];
    }
  }

  double l2 = 0.0, l3 = 0.0;
  for (std::size_t i : active) {
    auto ei = eu.unit.row(i);
    auto ti = tu.unit.row(i);
    for (std::size_t j : active) {
      auto ej = eu.unit.row(j);
      auto tj = tu.unit.row(j);
      const double ctt = dot(ti, tj);
      const double dee = dot(ei, ej) - ctt;
      const double det = dot(ei, tj) - ctt;
      l2 += dee * dee;
      l3 += det * det;
      if (want_grad) {
        auto g = work.grad_unit.row(i);
        // (i, j) and (j, i) both depend on e_i through C_ee, hence 4 = 2 * 2.
        const double cee = w.beta * 4.0 * inv_m2 * dee;
        const double cet = l3_sign * w.gamma * 2.0 * inv_m2 * det;
        for (std::size_t c = 0; c < d; ++c) g[c] += cee * ej[c] + cet * tj[c];
      }
    }
  }
  work.terms.l1 = l1;
  work.terms.l2 = l2 * inv_m2;
  work.terms.l3 = l3 * inv_m2;
  work.terms.total = w.alpha * work.terms.l1 + w.beta * work.terms.l2 + w.gamma * work.terms.l3;
  return work;
}

}  // namespace

EmbeddingSequence EmbeddingSequence::all_in(Tensor rows) {
  const std::size_t n = rows.rows();
  return EmbeddingSequence{std::move(rows), std::vector<bool>(n, true)};
}

std::size_t EmbeddingSequence::active() const {
  std::size_t k = 0;
  for (bool b : mask) k += b ? 1 : 0;
  return k;
}

void EmbeddingSequence::validate() const {
  require(rows.rank() == 2, ErrorKind::kDimension, "embedding sequence must be N x d");
  require(rows.rows() >= 1, ErrorKind::kDegenerate, "embedding sequence is empty");
  require(mask.size() == rows.rows(), ErrorKind::kDimension,
          "mask length " + std::to_string(mask.size()) + " != sequence length " +
              std::to_string(rows.rows()));
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    if (mask[i]) {
      require(norm(rows.row(i)) > 0.0, ErrorKind::kDegenerate,
              "zero-norm embedding at masked-in position " + std::to_string(i));
    }
  }
}

void LossWeights::validate() const {
  require(alpha >= 0.0 && beta >= 0.0 && gamma >= 0.0, ErrorKind::kInvalidArgument,
          "loss weights must be nonnegative");
}

SimilarityMatrix pairwise_cosine(const EmbeddingSequence& a, const EmbeddingSequence& b,
                                 SimilarityKind kind) {
  a.validate();
  b.validate();
  require(a.length() == b.length() && a.dim() == b.dim(), ErrorKind::kDimension,
          "pairwise_cosine: shape mismatch");
  const UnitRows au = unit_rows(a.rows);
  const UnitRows bu = unit_rows(b.rows);
  const std::size_t n = a.length();
  SimilarityMatrix out{Tensor::zeros(n, n), kind};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out.values.at(i, j) = std::clamp(dot(au.unit.row(i), bu.unit.row(j)), -1.0, 1.0);
    }
  }
  return out;
}

double l1_alignment(const EmbeddingSequence& e, const EmbeddingSequence& t) {
  return ead_total(e, t, {1.0, 0.0, 0.0}).l1;
}

double l2_discrimination(const EmbeddingSequence& e, const EmbeddingSequence& t) {
  return ead_total(e, t, {0.0, 1.0, 0.0}).l2;
}

double l3_cross(const EmbeddingSequence& e, const EmbeddingSequence& t) {
  return ead_total(e, t, {0.0, 0.0, 1.0}).l3;
}

LossBreakdown ead_total(const EmbeddingSequence& e, const EmbeddingSequence& t,
                        const LossWeights& w) {
  w.validate();
  check_pair(e, t);
  return compute(unit_rows(e.rows), unit_rows(t.rows), e.mask, w, false, 1.0).terms;
}

ad::Var ead_loss(ad::Var e, const EmbeddingSequence& targets, const LossWeights& w,
                 LossBreakdown* breakdown, EadGradientFault fault) {
  w.validate();
  EmbeddingSequence current{e.value(), targets.mask};
  check_pair(current, targets);

  UnitRows eu = unit_rows(e.value());
  const UnitRows tu = unit_rows(targets.rows);
  const double l3_sign = fault.flip_l3_sign ? -1.0 : 1.0;
  EadWork work = compute(eu, tu, targets.mask, w, e.graph()->requires_grad(e), l3_sign);
  if (breakdown) *breakdown = work.terms;

  const ad::Var parents[] = {e};
  return e.graph()->record(
      Tensor::scalar(work.terms.total), parents,
      [e, eu = std::move(eu), grad_unit = std::move(work.grad_unit)](
          ad::Graph& g, const Tensor&, const Tensor& go) {
        // Back through u = e / |e|: de = (g - (g.u) u) / |e|.
        auto& de = g.grad_buffer(e);
        const double s = go[0];
        for (std::size_t i = 0; i < eu.unit.rows(); ++i) {
          if (eu.norms[i] == 0.0) continue;
          auto gu = grad_unit.row(i);
          auto u = eu.unit.row(i);
          const double proj = dot(gu, u);
          auto dst = de.row(i);
          for (std::size_t c = 0; c < u.size(); ++c) {
            dst[c] += s * (gu[c] - proj * u[c]) / eu.norms[i];
          }
        }
      });
}

}  // namespace msaasr

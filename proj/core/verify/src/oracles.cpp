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

#include "msaasr/verify/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace msaasr::oracle {

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tensor out = Tensor::zeros(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(k, j);
      out.at(i, j) = s;
    }
  return out;
}

double cosine_naive(std::span<const double> u, std::span<const double> v) {
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    uv += u[k] * v[k];
    uu += u[k] * u[k];
    vv += v[k] * v[k];
  }
  return uv / (std::sqrt(uu) * std::sqrt(vv));
}

LossBreakdown ead(const EmbeddingSequence& e, const EmbeddingSequence& t, const LossWeights& w) {
  const std::size_t n = e.length();
  double active = 0.0;
  for (std::size_t i = 0; i < n; ++i) active += e.mask[i] ? 1.0 : 0.0;
  LossBreakdown out;
  if (active == 0.0) return out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!e.mask[i]) continue;
    out.l1 += 1.0 - cosine_naive(t.rows.row(i), e.rows.row(i));
    for (std::size_t j = 0; j < n; ++j) {
      if (!e.mask[j]) continue;
      const double cee = cosine_naive(e.rows.row(i), e.rows.row(j));
      const double cet = cosine_naive(e.rows.row(i), t.rows.row(j));
      const double ctt = cosine_naive(t.rows.row(i), t.rows.row(j));
      out.l2 += (cee - ctt) * (cee - ctt);
      out.l3 += (cet - ctt) * (cet - ctt);
    }
  }
  out.l2 /= active * active;
  out.l3 /= active * active;
  out.total = w.alpha * out.l1 + w.beta * out.l2 + w.gamma * out.l3;
  return out;
}

namespace {

std::size_t edits_from(const std::vector<std::string>& ref, const std::vector<std::string>& hyp,
                       std::size_t i, std::size_t j) {
  if (i == ref.size()) return hyp.size() - j;
  if (j == hyp.size()) return ref.size() - i;
  const std::size_t match = (ref[i] == hyp[j] ? 0 : 1) + edits_from(ref, hyp, i + 1, j + 1);
  const std::size_t del = 1 + edits_from(ref, hyp, i + 1, j);
  const std::size_t ins = 1 + edits_from(ref, hyp, i, j + 1);
  return std::min({match, del, ins});
}

std::size_t dp_edits(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  std::vector<std::size_t> prev(hyp.size() + 1), cur(hyp.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= hyp.size(); ++j) {
      cur[j] = std::min({prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1), prev[j] + 1,
                         cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[hyp.size()];
}

}  // namespace

std::size_t edit_distance_exhaustive(const std::vector<std::string>& ref,
                                     const std::vector<std::string>& hyp) {
  return edits_from(ref, hyp, 0, 0);
}

std::size_t cpwer_errors_exhaustive(const std::vector<std::vector<std::string>>& ref,
                                    const std::vector<std::vector<std::string>>& hyp) {
  const std::size_t n = std::max(ref.size(), hyp.size());
  auto r = ref;
  auto h = hyp;
  r.resize(n);
  h.resize(n);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::size_t best = std::numeric_limits<std::size_t>::max();
  do {
    std::size_t total = 0;
    for (std::size_t i = 0; i < n; ++i) total += dp_edits(r[i], h[perm[i]]);
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

double pairwise_agreement(const std::vector<int>& a, const std::vector<int>& b) {
  const std::size_t n = a.size();
  if (n < 2) return 1.0;
  std::size_t agree = 0, total = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      agree += ((a[i] == a[j]) == (b[i] == b[j])) ? 1 : 0;
      ++total;
    }
  return static_cast<double>(agree) / static_cast<double>(total);
}

double best_permutation_accuracy(const std::vector<int>& truth, const std::vector<int>& pred) {
  if (truth.empty()) return 1.0;
  const int kt = *std::max_element(truth.begin(), truth.end()) + 1;
  const int kp = *std::max_element(pred.begin(), pred.end()) + 1;
  const int n = std::max(kt, kp);
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < truth.size(); ++i)
      hit += perm[static_cast<std::size_t>(pred[i])] == truth[i] ? 1 : 0;
    best = std::max(best, hit);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(truth.size());
}

}  // namespace msaasr::oracle

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

#include <cmath>
#include <numeric>

#include "doctest.h"
#include "msaasr/ead_loss.hpp"
#include "msaasr/error.hpp"
#include "msaasr/numerics/grad_check.hpp"
#include "msaasr/rng.hpp"
#include "msaasr/verify/oracles.hpp"

using namespace msaasr;

namespace {

Tensor random_rows(Rng& rng, std::size_t n, std::size_t d) {
  Tensor t = Tensor::zeros(n, d);
  for (double& v : t.data()) v = rng.normal();
  return t;
}

EmbeddingSequence seq(Tensor rows) { return EmbeddingSequence::all_in(std::move(rows)); }

}  // namespace

TEST_CASE("pairwise cosine fixtures") {
  const auto ortho = seq(Tensor::matrix({{1, 0}, {0, 1}}));
  CHECK(pairwise_cosine(ortho, ortho, SimilarityKind::kEE).values == Tensor::identity(2));

  const auto same = seq(Tensor::matrix({{2, 1}, {2, 1}, {2, 1}}));
  const Tensor c = pairwise_cosine(same, same, SimilarityKind::kTT).values;
  for (double v : c.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));

  Rng rng(4);
  const auto a = seq(random_rows(rng, 3, 4));
  const auto b = seq(random_rows(rng, 3, 4));
  const Tensor ab = pairwise_cosine(a, b, SimilarityKind::kET).values;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(std::abs(ab.at(i, j) - oracle::cosine_naive(a.rows.row(i), b.rows.row(j))) <= 1e-12);
}

TEST_CASE("pairwise cosine rejects bad input") {
  const auto a = seq(Tensor::matrix({{1, 0}, {0, 0}}));
  CHECK_THROWS_AS(pairwise_cosine(a, a, SimilarityKind::kEE), Error);
  const auto b = seq(Tensor::matrix({{1, 0, 0}}));
  const auto c = seq(Tensor::matrix({{1, 0}}));
  CHECK_THROWS_AS(pairwise_cosine(b, c, SimilarityKind::kET), Error);
}

TEST_CASE("loss term fixtures") {
  Rng rng(9);
  const auto e = seq(random_rows(rng, 4, 5));
  CHECK(l1_alignment(e, e) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(std::abs(l2_discrimination(e, e)) <= 1e-12);
  CHECK(std::abs(l3_cross(e, e)) <= 1e-12);

  const auto anti_e = seq(Tensor::matrix({{1, 0}}));
  const auto anti_t = seq(Tensor::matrix({{-1, 0}}));
  CHECK(l1_alignment(anti_e, anti_t) == 2.0);

  // C_ee = I, C_tt = all ones, C_et = [[1,1],[0,0]].
  const auto e2 = seq(Tensor::matrix({{1, 0}, {0, 1}}));
  const auto t2 = seq(Tensor::matrix({{1, 0}, {1, 0}}));
  CHECK(std::abs(l2_discrimination(e2, t2) - 0.5) <= 1e-12);
  CHECK(std::abs(l3_cross(e2, t2) - 0.5) <= 1e-12);
}

TEST_CASE("ead_total fixtures") {
  Rng rng(2);
  const auto e = seq(random_rows(rng, 3, 4));
  CHECK(std::abs(ead_total(e, e, {0.3, 2.0, 5.0}).total) <= 1e-12);

  const auto b = ead_total(seq(Tensor::matrix({{1, 0}})), seq(Tensor::matrix({{-1, 0}})), {});
  CHECK(std::abs(b.l1 - 2.0) <= 1e-12);
  CHECK(std::abs(b.l2 - 0.0) <= 1e-12);
  CHECK(std::abs(b.l3 - 4.0) <= 1e-12);
  CHECK(std::abs(b.total - 6.0) <= 1e-12);

  const auto h = ead_total(seq(Tensor::matrix({{1, 0}, {0, 1}})),
                           seq(Tensor::matrix({{1, 0}, {1, 0}})), {});
  CHECK(std::abs(h.total - 2.0) <= 1e-12);

  CHECK_THROWS_AS(ead_total(e, e, {-1.0, 1.0, 1.0}), Error);
}

TEST_CASE("ead terms match the scalar loop oracle") {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<std::size_t>(rng.between(1, 8));
    const auto d = static_cast<std::size_t>(rng.between(2, 16));
    const auto e = seq(random_rows(rng, n, d));
    const auto t = seq(random_rows(rng, n, d));
    const LossWeights w{rng.uniform(0, 2), rng.uniform(0, 2), rng.uniform(0, 2)};
    const auto got = ead_total(e, t, w);
    const auto want = oracle::ead(e, t, w);
    CHECK(std::abs(got.l1 - want.l1) <= 1e-12);
    CHECK(std::abs(got.l2 - want.l2) <= 1e-12);
    CHECK(std::abs(got.l3 - want.l3) <= 1e-12);
    CHECK(std::abs(got.total - want.total) <= 1e-12);
    CHECK(std::abs(got.total - (w.alpha * got.l1 + w.beta * got.l2 + w.gamma * got.l3)) <= 1e-12);
    CHECK(got.l1 >= 0.0);
    CHECK(got.l1 <= 2.0 * static_cast<double>(n));
  }
}

TEST_CASE("masked positions are excluded and normalisation uses the masked-in count") {
  Rng rng(31);
  const Tensor e = random_rows(rng, 5, 4);
  const Tensor t = random_rows(rng, 5, 4);
  const std::vector<bool> mask{true, false, true, true, false};
  const EmbeddingSequence em{e, mask}, tm{t, mask};

  // Drop the masked rows explicitly and compare.
  Tensor ek = Tensor::zeros(3, 4), tk = Tensor::zeros(3, 4);
  std::size_t k = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    if (!mask[i]) continue;
    std::copy(e.row(i).begin(), e.row(i).end(), ek.row(k).begin());
    std::copy(t.row(i).begin(), t.row(i).end(), tk.row(k).begin());
    ++k;
  }
  const auto masked = ead_total(em, tm, {});
  const auto compact = ead_total(seq(ek), seq(tk), {});
  CHECK(std::abs(masked.total - compact.total) <= 1e-12);
  CHECK(std::abs(masked.total - oracle::ead(em, tm, {}).total) <= 1e-12);

  // Zero-norm rows are fine when masked out.
  Tensor ez = e;
  for (double& v : ez.row(1)) v = 0.0;
  CHECK_NOTHROW(ead_total(EmbeddingSequence{ez, mask}, tm, {}));
  CHECK_THROWS_AS(ead_total(seq(ez), seq(t), {}), Error);
}

TEST_CASE("ead invariances") {
  Rng rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 6, d = 5;
    const Tensor e = random_rows(rng, n, d);
    const Tensor t = random_rows(rng, n, d);
    const auto base = ead_total(seq(e), seq(t), {});

    // positive per-row scaling
    Tensor es = e, ts = t;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = rng.uniform(0.05, 20.0), b = rng.uniform(0.05, 20.0);
      for (double& v : es.row(i)) v *= a;
      for (double& v : ts.row(i)) v *= b;
    }
    const auto scaled = ead_total(seq(es), seq(ts), {});
    CHECK(std::abs(scaled.l1 - base.l1) <= 1e-9);
    CHECK(std::abs(scaled.l2 - base.l2) <= 1e-9);
    CHECK(std::abs(scaled.l3 - base.l3) <= 1e-9);

    // joint row permutation
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(perm));
    Tensor ep = e, tp = t;
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(e.row(perm[i]).begin(), e.row(perm[i]).end(), ep.row(i).begin());
      std::copy(t.row(perm[i]).begin(), t.row(perm[i]).end(), tp.row(i).begin());
    }
    const auto permuted = ead_total(seq(ep), seq(tp), {});
    CHECK(std::abs(permuted.l1 - base.l1) <= 1e-12);
    CHECK(std::abs(permuted.l2 - base.l2) <= 1e-12);
    CHECK(std::abs(permuted.l3 - base.l3) <= 1e-12);

    // A rotation of E alone keeps C_ee; L2 stays put. L3 compares E with the
    // unrotated T, so rotate T along with E for that term.
    const double th = rng.uniform(0.0, 6.28);
    Tensor er = e, tr = t;
    for (std::size_t i = 0; i < n; ++i) {
      for (Tensor* m : {&er, &tr}) {
        auto r = m->row(i);
        const double x = r[0], y = r[1];
        r[0] = std::cos(th) * x - std::sin(th) * y;
        r[1] = std::sin(th) * x + std::cos(th) * y;
      }
    }
    CHECK(std::abs(ead_total(seq(er), seq(t), {}).l2 - base.l2) <= 1e-9);
    CHECK(std::abs(ead_total(seq(er), seq(tr), {}).l3 - base.l3) <= 1e-9);
  }
}

TEST_CASE("ead_total is zero exactly when aligned") {
  // Same directions, different scales: zero. One row rotated: positive.
  const Tensor t = Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {1, 1, 0}});
  Tensor e = t;
  for (double& v : e.row(2)) v *= 3.0;
  CHECK(std::abs(ead_total(seq(e), seq(t), {}).total) <= 1e-12);
  e.row(0)[2] = 0.5;
  CHECK(ead_total(seq(e), seq(t), {}).total > 1e-3);
}

TEST_CASE("ead gradient passes grad_check") {
  std::uint64_t seed = 100;
  for (std::size_t n : {2u, 3u, 5u}) {
    for (std::size_t d : {3u, 4u, 8u}) {
      Rng rng(++seed);
      const auto t = seq(random_rows(rng, n, d));
      const LossWeights w{rng.uniform(0.2, 2), rng.uniform(0.2, 2), rng.uniform(0.2, 2)};
      auto f = [&](ad::Graph&, std::span<const ad::Var> p) { return ead_loss(p[0], t, w); };
      const auto report = grad_check(f, {{"E", random_rows(rng, n, d)}}, 1e-5, 1e-4);
      INFO("N=" << n << " d=" << d << " err=" << report.max_rel_error);
      CHECK(report.passed);
    }
  }
}

TEST_CASE("ead graph op reports the same breakdown as the value path") {
  Rng rng(5);
  const auto e = seq(random_rows(rng, 4, 6));
  const auto t = seq(random_rows(rng, 4, 6));
  ad::Graph g;
  LossBreakdown b;
  const auto loss = ead_loss(g.variable(e.rows), t, {}, &b);
  const auto v = ead_total(e, t, {});
  CHECK(loss.value()[0] == v.total);
  CHECK(b.l1 == v.l1);
  CHECK(b.l3 == v.l3);
}

TEST_CASE("flipped L3 gradient is caught by grad_check") {
  Rng rng(6);
  const auto t = seq(random_rows(rng, 4, 5));
  auto f = [&](ad::Graph&, std::span<const ad::Var> p) {
    return ead_loss(p[0], t, {}, nullptr, {.flip_l3_sign = true});
  };
  CHECK_FALSE(grad_check(f, {{"E", random_rows(rng, 4, 5)}}, 1e-5, 1e-4).passed);
}

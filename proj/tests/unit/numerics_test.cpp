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
#include <vector>

#include "doctest.h"
#include "msaasr/error.hpp"
#include "msaasr/numerics/adamw.hpp"
#include "msaasr/numerics/autodiff.hpp"
#include "msaasr/numerics/grad_check.hpp"
#include "msaasr/rng.hpp"

using namespace msaasr;

namespace {

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Tensor t = Tensor::zeros(r, c);
  for (double& v : t.data()) v = rng.normal(0.0, scale);
  return t;
}

// Scalar triple loop, kept independent of the Eigen-backed kernel.
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor out = Tensor::zeros(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(k, j);
      out.at(i, j) = s;
    }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("matmul fixtures") {
  ad::Graph g;
  auto i2 = g.constant(Tensor::identity(2));
  CHECK(ad::matmul(i2, i2).value() == Tensor::identity(2));

  auto a = g.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  auto b = g.constant(Tensor::matrix({{1}, {1}}));
  CHECK(ad::matmul(a, b).value() == Tensor::matrix({{3}, {7}}));
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  ad::Graph g;
  auto a = g.constant(Tensor::zeros(2, 3));
  auto b = g.constant(Tensor::zeros(2, 3));
  CHECK_THROWS_AS(ad::matmul(a, b), Error);
  try {
    ad::matmul(a, b);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDimension);
  }
}

TEST_CASE("matmul agrees with the scalar loop oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const auto m = static_cast<std::size_t>(rng.between(1, 16));
    const auto k = static_cast<std::size_t>(rng.between(1, 16));
    const auto n = static_cast<std::size_t>(rng.between(1, 16));
    const Tensor a = random_matrix(rng, m, k);
    const Tensor b = random_matrix(rng, k, n);
    ad::Graph g;
    const Tensor got = ad::matmul(g.constant(a), g.constant(b)).value();
    CHECK(max_abs_diff(got, naive_matmul(a, b)) <= 1e-12);
  }
  Rng fixed(3);
  const Tensor a = random_matrix(fixed, 3, 4);
  const Tensor b = random_matrix(fixed, 4, 2);
  ad::Graph g;
  CHECK(max_abs_diff(ad::matmul(g.constant(a), g.constant(b)).value(), naive_matmul(a, b)) <=
        1e-12);
}

TEST_CASE("softmax rows") {
  ad::Graph g;
  const Tensor half = ad::softmax_rows(g.constant(Tensor::matrix({{0, 0}}))).value();
  CHECK(half.at(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(half.at(0, 1) == doctest::Approx(0.5).epsilon(1e-15));

  const double x = 17.25, c = -3.5;
  const Tensor shifted = ad::softmax_rows(g.constant(Tensor::matrix({{x, x + c}}))).value();
  const Tensor base = ad::softmax_rows(g.constant(Tensor::matrix({{0, c}}))).value();
  CHECK(max_abs_diff(shifted, base) <= 1e-15);

  CHECK_THROWS_AS(ad::softmax_rows(g.constant(Tensor::zeros(2, 0))), Error);

  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor t = Tensor::zeros(4, 7);
    for (double& v : t.data()) v = rng.uniform(-50.0, 50.0);
    const Tensor y = ad::softmax_rows(g.constant(t)).value();
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double s = 0.0;
      for (double v : y.row(r)) {
        CHECK(v >= 0.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("causal softmax ignores future columns") {
  ad::Graph g;
  const Tensor y = ad::softmax_rows(g.constant(Tensor::matrix({{1, 100, 100}, {0, 0, 9}})), true).value();
  CHECK(y.at(0, 0) == 1.0);
  CHECK(y.at(0, 1) == 0.0);
  CHECK(y.at(1, 0) == doctest::Approx(0.5));
  CHECK(y.at(1, 2) == 0.0);
}

TEST_CASE("layer norm") {
  ad::Graph g;
  auto ones = g.constant(Tensor::vector({1.0, 1.0}));
  auto zeros = g.constant(Tensor::vector({0.0, 0.0}));
  const Tensor flat = ad::layer_norm(g.constant(Tensor::matrix({{3, 3}})), ones, zeros).value();
  CHECK(flat.at(0, 0) == 0.0);
  CHECK(flat.at(0, 1) == 0.0);

  // [1, -1] has variance 1; epsilon perturbs it by ~5e-6 relative.
  const Tensor pm = ad::layer_norm(g.constant(Tensor::matrix({{1, -1}})), ones, zeros).value();
  CHECK(pm.at(0, 0) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(pm.at(0, 1) == doctest::Approx(-1.0).epsilon(1e-5));

  CHECK_THROWS_AS(ad::layer_norm(g.constant(Tensor::matrix({{1}})),
                                 g.constant(Tensor::vector({1.0})),
                                 g.constant(Tensor::vector({0.0}))),
                  Error);

  Rng rng(8);
  const std::size_t d = 9;
  auto gain = g.constant(Tensor({d}, std::vector<double>(d, 1.0)));
  auto bias = g.constant(Tensor({d}));
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_matrix(rng, 1, d, 10.0);
    const Tensor y = ad::layer_norm(g.constant(x), gain, bias).value();
    double in_mean = 0.0, in_var = 0.0;
    for (double v : x.data()) in_mean += v;
    in_mean /= d;
    for (double v : x.data()) in_var += (v - in_mean) * (v - in_mean);
    in_var /= d;
    double mean = 0.0, var = 0.0;
    for (double v : y.data()) mean += v;
    mean /= d;
    for (double v : y.data()) var += (v - mean) * (v - mean);
    var /= d;
    CHECK(std::abs(mean) <= 1e-9);
    CHECK(std::abs(var - 1.0) <= 1e-6);
    // epsilon shrinks the variance to var / (var + eps) exactly
    CHECK(std::abs(var - in_var / (in_var + 1e-5)) <= 1e-12);
  }
}

TEST_CASE("cosine fixtures and properties") {
  const std::vector<double> e0{1, 0}, e1{0, 1}, diag{1, 1}, zero{0, 0};
  CHECK(cosine(e0, e0) == 1.0);
  CHECK(cosine(e0, e1) == 0.0);
  CHECK(cosine(diag, e0) == doctest::Approx(0.70710678118654752).epsilon(1e-15));
  CHECK_THROWS_AS(cosine(zero, e0), Error);

  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> u(6), v(6);
    for (auto& x : u) x = rng.normal();
    for (auto& x : v) x = rng.normal();
    const double c = cosine(u, v);
    CHECK(c >= -1.0);
    CHECK(c <= 1.0);
    CHECK(std::abs(c - cosine(v, u)) <= 1e-12);
    const double alpha = rng.uniform(0.01, 100.0);
    std::vector<double> su(u);
    for (auto& x : su) x *= alpha;
    CHECK(std::abs(c - cosine(su, v)) <= 1e-12);
    CHECK(std::abs(cosine(u, u) - 1.0) <= 1e-12);
  }
}

TEST_CASE("grad_check on x^2") {
  auto square = [](ad::Graph&, std::span<const ad::Var> p) { return ad::sum(ad::mul(p[0], p[0])); };
  const auto report = grad_check(square, {{"x", Tensor::vector({3.0})}}, 1e-5, 1e-7);
  CHECK(report.passed);
  CHECK(report.entries[0].analytic == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(std::abs(report.entries[0].numeric - 6.0) <= 1e-7);
}

TEST_CASE("grad_check rejects a non-finite loss") {
  auto bad = [](ad::Graph& g, std::span<const ad::Var> p) {
    return ad::scale(ad::sum(p[0]), std::numeric_limits<double>::infinity());
  };
  CHECK_THROWS_AS(grad_check(bad, {{"x", Tensor::vector({1.0})}}, 1e-5, 1e-4), Error);
}

TEST_CASE("every differentiable op passes grad_check on random seeds") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    const Tensor a = random_matrix(rng, 3, 4);
    const Tensor b = random_matrix(rng, 4, 5);
    const Tensor c = random_matrix(rng, 2, 4);
    const Tensor gain = random_matrix(rng, 1, 4);
    const Tensor bias = random_matrix(rng, 1, 4);
    const Tensor w = random_matrix(rng, 3, 5);  // fixed readout weights

    auto f = [&](ad::Graph& g, std::span<const ad::Var> p) {
      auto wv = g.constant(w);
      auto h = ad::matmul(p[0], p[1]);                       // 3x5
      auto s = ad::softmax_rows(h);                          // 3x5
      auto cs = ad::softmax_rows(ad::columns(h, 0, 3), true);  // 3x3
      auto nt = ad::matmul_nt(p[0], p[2]);                   // 3x2
      auto ln = ad::layer_norm(p[0], ad::columns(p[3], 0, 4), ad::columns(p[4], 0, 4));
      auto gl = ad::gelu(ln);
      auto cat = ad::concat_columns(std::vector<ad::Var>{gl, nt});  // 3x6
      auto gathered = ad::gather_rows(p[2], std::vector<std::int32_t>{1, 0, 1});  // 3x4
      auto biased = ad::add_bias(gathered, ad::columns(p[4], 0, 4));
      auto floored = ad::row_norm_floor(biased, 1e-8);
      auto total = ad::add(ad::sum(ad::mul(s, wv)), ad::sum(ad::mul(cat, cat)));
      total = ad::add(total, ad::sum(ad::mul(cs, cs)));
      total = ad::sub(total, ad::scale(ad::sum(ad::mul(floored, floored)), 0.3));
      return total;
    };
    const auto report = grad_check(
        f, {{"a", a}, {"b", b}, {"c", c}, {"gain", gain}, {"bias", bias}}, 1e-5, 1e-4);
    INFO("seed " << seed << " max rel err " << report.max_rel_error);
    CHECK(report.passed);
  }
}

TEST_CASE("graph rejects non-finite inputs") {
  ad::Graph g;
  CHECK_THROWS_AS(g.constant(Tensor::vector({std::nan("")})), Error);
  CHECK_THROWS_AS(g.variable(Tensor::vector({INFINITY})), Error);
}

TEST_CASE("adamw") {
  SUBCASE("zero gradient without decay leaves params unchanged") {
    Tensor p = Tensor::vector({1.5, -2.0});
    const Tensor before = p;
    Tensor grad = Tensor::vector({0.0, 0.0});
    AdamW opt({.learning_rate = 0.1, .weight_decay = 0.0});
    Tensor* ps[] = {&p};
    const Tensor* gs[] = {&grad};
    for (int i = 0; i < 5; ++i) opt.step(ps, gs, {});
    CHECK(p == before);
  }
  SUBCASE("one step on x^2 descends") {
    Tensor p = Tensor::vector({1.0});
    Tensor grad = Tensor::vector({2.0});
    AdamW opt({.learning_rate = 0.1});
    Tensor* ps[] = {&p};
    const Tensor* gs[] = {&grad};
    opt.step(ps, gs, {});
    CHECK(p[0] < 1.0);
    CHECK(opt.step_count() == 1);
  }
  SUBCASE("200 steps on a 2-d quadratic converge") {
    // f = x^2 + 3 y^2 from (1, -1.5), lr 0.05: the reference Adam run ends near 4e-5.
    Tensor p = Tensor::vector({1.0, -1.5});
    Tensor grad({2});
    AdamW opt({.learning_rate = 0.05, .weight_decay = 0.0});
    Tensor* ps[] = {&p};
    const Tensor* gs[] = {&grad};
    for (int i = 0; i < 200; ++i) {
      grad[0] = 2.0 * p[0];
      grad[1] = 6.0 * p[1];
      opt.step(ps, gs, {});
    }
    CHECK(std::hypot(p[0], p[1]) <= 1e-2);
  }
  SUBCASE("NaN gradient names the parameter") {
    Tensor p = Tensor::vector({1.0});
    Tensor grad = Tensor::vector({std::nan("")});
    AdamW opt;
    Tensor* ps[] = {&p};
    const Tensor* gs[] = {&grad};
    const std::string names[] = {"decoder.w_q"};
    try {
      opt.step(ps, gs, names);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kNumeric);
      CHECK(std::string(e.what()).find("decoder.w_q") != std::string::npos);
    }
  }
}

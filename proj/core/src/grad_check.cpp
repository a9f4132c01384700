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

#include "msaasr/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "msaasr/error.hpp"
#include "msaasr/rng.hpp"

namespace msaasr {
namespace {

double evaluate(const ScalarGraphFn& f, const std::vector<NamedTensor>& params) {
  ad::Graph g;
  std::vector<ad::Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(g.constant(p.value));
  const ad::Var loss = f(g, vars);
  require(loss.value().size() == 1, ErrorKind::kDimension, "grad_check: loss must be scalar");
  const double v = loss.value()[0];
  require(std::isfinite(v), ErrorKind::kNumeric, "grad_check: non-finite loss");
  return v;
}

}  // namespace

GradCheckReport grad_check(const ScalarGraphFn& f, std::vector<NamedTensor> params,
                           double eps, double tol, double abs_floor,
                           std::size_t coords_per_tensor, std::uint64_t coord_seed) {
  require(eps > 0.0 && tol > 0.0, ErrorKind::kInvalidArgument, "grad_check: eps, tol > 0");
  GradCheckReport report;

  std::vector<Tensor> analytic;
  {
    ad::Graph g;
    std::vector<ad::Var> vars;
    for (const auto& p : params) vars.push_back(g.variable(p.value));
    const ad::Var loss = f(g, vars);
    require(loss.value().size() == 1, ErrorKind::kDimension, "grad_check: loss must be scalar");
    report.loss = loss.value()[0];
    require(std::isfinite(report.loss), ErrorKind::kNumeric, "grad_check: non-finite loss");
    g.backward(loss);
    for (std::size_t i = 0; i < vars.size(); ++i) {
      const Tensor& gr = g.grad(vars[i]);
      analytic.push_back(gr.empty() ? Tensor(params[i].value.shape()) : gr);
    }
  }

  for (std::size_t p = 0; p < params.size(); ++p) {
    GradCheckEntry entry;
    entry.name = params[p].name;
    auto data = params[p].value.data();
    std::vector<std::size_t> coords(data.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords_per_tensor > 0 && coords_per_tensor < coords.size()) {
      Rng rng(Rng::derive(coord_seed, p));
      rng.shuffle(std::span<std::size_t>(coords));
      coords.resize(coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    bool first = true;
    for (std::size_t i : coords) {
      const double saved = data[i];
      data[i] = saved + eps;
      const double up = evaluate(f, params);
      data[i] = saved - eps;
      const double down = evaluate(f, params);
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[p][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      if (first || rel > entry.max_rel_error) {
        first = false;
        entry.max_rel_error = rel;
        entry.worst_index = i;
        entry.analytic = a;
        entry.numeric = numeric;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace msaasr

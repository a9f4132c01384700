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
#include <string>
#include <vector>

#include "msaasr/numerics/autodiff.hpp"

namespace msaasr {

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  double loss = 0.0;
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  bool passed = false;
};

// Builds a scalar loss from the graph variables bound to `params` (same order).
using ScalarGraphFn = std::function<ad::Var(ad::Graph&, std::span<const ad::Var>)>;

// Compares backward() gradients with central differences of step eps.
// Relative error per element is |a - n| / max(|a|, |n|, abs_floor); the
// floor keeps vanishing gradients from dominating the report.
// With coords_per_tensor > 0 only that many coordinates of each tensor are
// perturbed, chosen by coord_seed; every tensor is still visited.
GradCheckReport grad_check(const ScalarGraphFn& f, std::vector<NamedTensor> params,
                           double eps, double tol, double abs_floor = 1e-6,
                           std::size_t coords_per_tensor = 0, std::uint64_t coord_seed = 0);

}  // namespace msaasr

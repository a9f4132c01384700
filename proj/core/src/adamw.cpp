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

#include "msaasr/numerics/adamw.hpp"

#include <cmath>

#include "msaasr/error.hpp"

namespace msaasr {

void AdamW::step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
                 std::span<const std::string> names) {
  require(params.size() == grads.size(), ErrorKind::kDimension,
          "adamw: parameter and gradient counts differ");
  auto name_of = [&](std::size_t i) {
    return i < names.size() ? names[i] : "#" + std::to_string(i);
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i]->shape() == grads[i]->shape(), ErrorKind::kDimension,
            "adamw: gradient shape mismatch for " + name_of(i));
    require(grads[i]->all_finite(), ErrorKind::kNumeric,
            "adamw: non-finite gradient for " + name_of(i));
  }
  if (m_.empty()) {
    for (Tensor* p : params) {
      m_.emplace_back(p->shape());
      v_.emplace_back(p->shape());
    }
  }
  require(m_.size() == params.size(), ErrorKind::kDimension,
          "adamw: parameter count changed between steps");

  ++step_;
  const auto& o = options_;
  const double t = static_cast<double>(step_);
  const double bc1 = 1.0 - std::pow(o.beta1, t);
  const double bc2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto g = grads[i]->data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      p[k] *= 1.0 - o.learning_rate * o.weight_decay;
      m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * g[k];
      v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p[k] -= o.learning_rate * mhat / (std::sqrt(vhat) + o.epsilon);
    }
  }
}

void AdamW::restore(std::int64_t step, std::vector<Tensor> m, std::vector<Tensor> v) {
  require(m.size() == v.size(), ErrorKind::kDimension, "adamw: moment count mismatch");
  require(step >= 0, ErrorKind::kInvalidArgument, "adamw: negative step");
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace msaasr

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

#include <cstddef>
#include <vector>

#include "msaasr/numerics/autodiff.hpp"
#include "msaasr/numerics/tensor.hpp"

namespace msaasr {

// N x f^d speaker embeddings, one row per token. Masked-out rows (special
// tokens, padding) are carried along but never contribute to a loss.
struct EmbeddingSequence {
  Tensor rows;
  std::vector<bool> mask;

  static EmbeddingSequence all_in(Tensor rows);

  std::size_t length() const { return rows.rows(); }
  std::size_t dim() const { return rows.cols(); }
  std::size_t active() const;

  // Throws on a missing/ragged mask or a zero-norm masked-in row.
  void validate() const;
};

enum class SimilarityKind { kEE, kET, kTT };

struct SimilarityMatrix {
  Tensor values;  // N x N
  SimilarityKind kind = SimilarityKind::kEE;
};

struct LossWeights {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;

  void validate() const;
};

struct LossBreakdown {
  double l1 = 0.0;
  double l2 = 0.0;
  double l3 = 0.0;
  double total = 0.0;
};

// out[i][j] = cos(a_i, b_j). Entries that touch a masked-out zero-norm row
// are 0.
SimilarityMatrix pairwise_cosine(const EmbeddingSequence& a, const EmbeddingSequence& b,
                                 SimilarityKind kind);

// Sum over masked-in tokens of 1 - cos(t_i, e_i).
double l1_alignment(const EmbeddingSequence& e, const EmbeddingSequence& t);
// Mean squared difference of the E-E and T-T cosine matrices over the
// masked-in block (normalised by the masked-in count squared).
double l2_discrimination(const EmbeddingSequence& e, const EmbeddingSequence& t);
// Same with the E-T cosine matrix in place of E-E.
double l3_cross(const EmbeddingSequence& e, const EmbeddingSequence& t);

LossBreakdown ead_total(const EmbeddingSequence& e, const EmbeddingSequence& t,
                        const LossWeights& w);

// Test hook for mutation probes: a wrong-sign L3 contribution in backward.
struct EadGradientFault {
  bool flip_l3_sign = false;
};

// Differentiable EAD loss with respect to `e` (an N x f^d graph node).
// Targets and mask are constants. Writes the per-term values to breakdown
// when given.
ad::Var ead_loss(ad::Var e, const EmbeddingSequence& targets, const LossWeights& w,
                 LossBreakdown* breakdown = nullptr, EadGradientFault fault = {});

}  // namespace msaasr

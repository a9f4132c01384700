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

// Reference implementations used only to check the production code paths.
// Everything here is deliberately naive: scalar loops, exhaustive search.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "msaasr/ead_loss.hpp"
#include "msaasr/numerics/tensor.hpp"

namespace msaasr::oracle {

Tensor matmul(const Tensor& a, const Tensor& b);

// Per-element cosine straight from the definition.
double cosine_naive(std::span<const double> u, std::span<const double> v);

// EAD terms by double loops over the masked-in positions.
LossBreakdown ead(const EmbeddingSequence& e, const EmbeddingSequence& t, const LossWeights& w);

// Minimum total edits over every monotone alignment, by plain recursion.
// Exponential; keep inputs to a handful of words.
std::size_t edit_distance_exhaustive(const std::vector<std::string>& ref,
                                     const std::vector<std::string>& hyp);

// cpWER error count minimised over all permutations of the padded stream
// lists. Streams are compared with the DP edit distance.
std::size_t cpwer_errors_exhaustive(const std::vector<std::vector<std::string>>& ref,
                                    const std::vector<std::vector<std::string>>& hyp);

// Fraction of unordered pairs on which two labelings agree about
// same-cluster membership (Rand index).
double pairwise_agreement(const std::vector<int>& a, const std::vector<int>& b);

// Accuracy under the best label permutation, by trying every permutation.
double best_permutation_accuracy(const std::vector<int>& truth, const std::vector<int>& pred);

}  // namespace msaasr::oracle

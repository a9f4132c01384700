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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msaasr/asr_provider.hpp"
#include "msaasr/numerics/tensor.hpp"
#include "msaasr/speaker_module.hpp"

namespace msaasr {

// Pairwise cosines between token embeddings (M x M, unit diagonal).
struct AffinityMatrix {
  Tensor values;

  std::size_t size() const { return values.rows(); }
  void validate() const;
};

AffinityMatrix build_affinity(const Tensor& embeddings);

// How cosines become non-negative graph weights.
enum class AffinityWeight {
  kClampedCosine,  // max(cos, 0)
  kShiftedCosine,  // (1 + cos) / 2
};

struct ClusterOptions {
  std::size_t max_clusters = 10;
  std::size_t kmeans_restarts = 10;
  std::size_t kmeans_iterations = 100;
  std::uint64_t seed = 17;
  AffinityWeight weight = AffinityWeight::kClampedCosine;
  // Weights are raised to this power; larger values sharpen the kernel.
  double affinity_power = 1.0;
};

struct ClusterAssignment {
  std::vector<std::size_t> labels;  // relabelled by first appearance
  std::size_t k = 1;
  std::vector<double> eigenvalues;  // ascending Laplacian spectrum
};

// Eigenvalues (ascending) and eigenvectors of the symmetric normalised Laplacian.
struct LaplacianSpectrum {
  std::vector<double> values;
  Tensor vectors;  // M x M, column j pairs with values[j]
};
LaplacianSpectrum normalized_laplacian_spectrum(const AffinityMatrix& affinity, AffinityWeight weight,
                                                double power = 1.0);

// Index of the largest gap between consecutive eigenvalues, over k in
// [1, min(max_k, M - 1)]; ties go to the smaller k.
std::size_t eigengap_k(std::span<const double> ascending, std::size_t max_k);

// k-means++ seeding, Lloyd iterations, best inertia over restarts. Ties in
// distance go to the lowest-index centroid.
std::vector<std::size_t> kmeans(const Tensor& points, std::size_t k, std::size_t restarts,
                                std::size_t iterations, std::uint64_t seed,
                                double* inertia = nullptr);

ClusterAssignment spectral_cluster(const AffinityMatrix& affinity,
                                   std::optional<std::size_t> k_hint = {},
                                   const ClusterOptions& options = {});

// Contiguous chunks of at most max_chunk_s; boundaries are multiples of
// quantum frames.
std::vector<AcousticFeatures> chunk_stream(const AcousticFeatures& feats, double max_chunk_s,
                                           std::size_t quantum = 1);

struct SpeakerStream {
  std::size_t id = 0;
  std::vector<std::int32_t> tokens;
  std::vector<std::size_t> positions;  // index among the recording's spoken tokens
  std::vector<std::size_t> chunks;
};

struct AttributedTranscript {
  std::vector<SpeakerStream> speakers;
  std::size_t k = 0;
  std::string config_hash;

  // Label per spoken token, in recording order.
  std::vector<std::size_t> token_labels() const;
  std::string to_json() const;
};

struct AttributionOptions {
  double max_chunk_s = 30.0;
  ClusterOptions cluster;
  std::string config_hash;
  // Order in which chunk results are pooled; identity when empty.
  std::vector<std::size_t> chunk_order;
};

AttributedTranscript attribute_recording(const SpeakerModuleParams& params,
                                         const SyntheticWorld& world,
                                         const AcousticFeatures& feats,
                                         std::optional<std::span<const std::int32_t>> gold_tokens = {},
                                         std::optional<std::size_t> k_hint = {},
                                         const AttributionOptions& options = {});

}  // namespace msaasr

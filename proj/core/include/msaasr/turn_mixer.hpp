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
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "msaasr/asr_provider.hpp"
#include "msaasr/ead_loss.hpp"
#include "msaasr/numerics/tensor.hpp"

namespace msaasr {

// Stand-in for a pre-trained speaker embedding model: a frozen random
// (semi-)orthogonal linear map applied to the speaker part of the mean frame,
// then normalised.
class SurrogateEmbedder {
 public:
  SurrogateEmbedder(const SyntheticWorld& world, std::size_t embedding_dim, std::uint64_t seed);

  std::size_t dim() const { return map_.cols(); }
  const Tensor& map() const { return map_; }
  std::vector<double> embed(const AcousticFeatures& feats) const;

 private:
  std::size_t speaker_dims_ = 0;
  std::size_t feature_dim_ = 0;
  Tensor map_;  // speaker_dims x f^d
};

std::vector<double> embed_turn(const SurrogateEmbedder& oracle, const AcousticFeatures& feats);

struct Turn {
  std::string id;
  std::vector<std::int32_t> tokens;
  double duration_s = 0.0;
  std::vector<double> embedding;  // weak label, unit norm
  AcousticFeatures features;

  void validate() const;

 private:
  std::int32_t speaker_ = -1;
  friend Turn make_turn(std::string id, SynthesizedTurn synth, std::vector<double> embedding);
  friend Turn restore_turn(std::string id, std::vector<std::int32_t> tokens, double duration_s,
                           std::vector<double> embedding, AcousticFeatures features,
                           std::int32_t speaker);
  friend std::int32_t eval_speaker_of(const Turn& turn);
};

Turn make_turn(std::string id, SynthesizedTurn synth, std::vector<double> embedding);
Turn restore_turn(std::string id, std::vector<std::int32_t> tokens, double duration_s,
                  std::vector<double> embedding, AcousticFeatures features, std::int32_t speaker);
// Evaluation only: the true speaker behind a turn. Training code never calls this.
std::int32_t eval_speaker_of(const Turn& turn);

struct TurnGroup {
  std::vector<std::size_t> members;  // indices into the turn list, seed first
  std::vector<double> representative;

  std::size_t seed() const { return members.front(); }
};

// Greedy seeded grouping: turns are visited in an order shuffled by
// order_seed; a turn joins the first group whose seed it matches at
// cosine >= theta, otherwise it seeds a new group.
std::vector<TurnGroup> group_similar(std::span<const Turn> turns, double theta,
                                     std::uint64_t order_seed = 0);

struct MixerConfig {
  double theta = 0.7;
  std::size_t max_groups = 5;
  double max_duration_s = 30.0;
  double noise_level = 0.0;
  std::uint64_t seed = 11;
  std::size_t min_turns_per_group = 2;
  std::size_t max_turns_per_group = 3;
  // Probability of drawing 1, 2, ... groups per sample.
  std::vector<double> group_count_weights{0.35, 0.27, 0.18, 0.12, 0.08};

  void validate() const;
};

struct MixedSample;
struct SampleLabels {
  std::vector<std::int32_t> token_speakers;
  std::vector<std::int32_t> turn_speakers;
};

struct MixedSample {
  AcousticFeatures features;
  std::vector<std::int32_t> tokens;           // content tokens W
  std::vector<std::size_t> turn_offsets;      // first token of each turn, plus a final N
  std::vector<std::string> turn_ids;
  std::vector<std::size_t> turn_groups;       // group index per turn (local to the sample)
  EmbeddingSequence targets;                  // T, one weak embedding per token

  std::size_t group_count() const;
  std::size_t turn_count() const { return turn_ids.size(); }
  double duration_s() const { return features.duration_s(); }

 private:
  SampleLabels labels_;
  friend MixedSample assemble_sample(std::span<const Turn>, std::span<const TurnGroup>,
                                     const MixerConfig&, std::uint64_t);
  friend MixedSample compose_sample(std::span<const Turn>, std::span<const std::size_t>,
                                    std::span<const std::size_t>);
  friend MixedSample restore_sample(MixedSample, SampleLabels);
  friend const SampleLabels& eval_labels(const MixedSample&);
};

MixedSample assemble_sample(std::span<const Turn> turns, std::span<const TurnGroup> groups,
                            const MixerConfig& config, std::uint64_t seed);
// Concatenates turns[order[k]] in the given order; groups[k] is the local
// group index of the k-th turn.
MixedSample compose_sample(std::span<const Turn> turns, std::span<const std::size_t> order,
                           std::span<const std::size_t> groups);
MixedSample restore_sample(MixedSample sample, SampleLabels labels);
// Evaluation only: hidden per-token speaker ids.
const SampleLabels& eval_labels(const MixedSample& sample);

MixedSample augment_noise(const MixedSample& sample, double level, std::uint64_t seed);

// Empty when the sample honours every mixing invariant; otherwise one message per violation.
std::vector<std::string> validate_sample(const MixedSample& sample, std::span<const Turn> turns,
                                         const MixerConfig& config);

struct CorpusConfig {
  std::size_t num_turns = 4000;
  std::size_t first_speaker = 0;
  std::size_t speaker_count = 192;
  std::size_t min_tokens = 4;
  std::size_t max_tokens = 14;
  std::uint64_t seed = 21;
};

std::vector<Turn> generate_turns(const SyntheticWorld& world, const SurrogateEmbedder& oracle,
                                 const CorpusConfig& config);

void write_turn_manifest(const std::filesystem::path& path, std::span<const Turn> turns);

}  // namespace msaasr

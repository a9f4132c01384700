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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "msaasr/asr_provider.hpp"
#include "msaasr/ead_loss.hpp"
#include "msaasr/numerics/autodiff.hpp"
#include "msaasr/numerics/grad_check.hpp"

namespace msaasr {

// Shape of the trainable speaker encoder/decoder. decoder_layers is D;
// asr_keyed_layers is J, the number of leading decoder layers whose
// cross-attention keys come from H^asr instead of H^spk.
struct SpeakerModuleConfig {
  std::size_t feature_dim = 32;    // f^a
  std::size_t model_dim = 32;      // f^e
  std::size_t embedding_dim = 16;  // f^d
  std::size_t vocab_size = 64;
  std::size_t max_positions = 128;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t asr_keyed_layers = 1;
  std::size_t heads = 2;
  std::size_t ffn_dim = 64;
  std::uint64_t init_seed = 7;

  void validate() const;
  std::string canonical() const;
};

class SpeakerModuleParams {
 public:
  SpeakerModuleParams() = default;

  // Scaled-uniform projections (bound 1/sqrt(fan_in)), zero biases, unit
  // layer-norm gains; deterministic in config.init_seed.
  static SpeakerModuleParams initialize(const SpeakerModuleConfig& config);
  // Adopts tensors read from a checkpoint; names and shapes must match.
  static SpeakerModuleParams from_tensors(const SpeakerModuleConfig& config,
                                          std::vector<NamedTensor> tensors);

  const SpeakerModuleConfig& config() const { return config_; }
  const std::vector<NamedTensor>& tensors() const { return tensors_; }
  std::vector<NamedTensor>& tensors() { return tensors_; }

  std::size_t index_of(std::string_view name) const;
  const Tensor& get(std::string_view name) const { return tensors_[index_of(name)].value; }

  std::size_t scalar_count() const;
  std::uint64_t hash() const;

 private:
  SpeakerModuleConfig config_;
  std::vector<NamedTensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Parameters placed on a graph, either as trainable variables or constants.
class BoundParams {
 public:
  BoundParams(ad::Graph& graph, const SpeakerModuleParams& params, bool trainable);
  // Adopts variables created elsewhere, in params.tensors() order.
  BoundParams(const SpeakerModuleParams& params, std::vector<ad::Var> vars);

  ad::Var operator[](std::string_view name) const { return vars_[params_->index_of(name)]; }
  const std::vector<ad::Var>& vars() const { return vars_; }
  const SpeakerModuleConfig& config() const { return params_->config(); }

 private:
  const SpeakerModuleParams* params_;
  std::vector<ad::Var> vars_;
};

// H^spk (L x f^e) from the acoustic frames.
ad::Var speaker_encode(ad::Graph& g, const BoundParams& p, const Tensor& frames);

// One embedding per decoder token, computed in a single parallel pass.
// Rows are floored to norm 1e-8.
ad::Var speaker_decode(ad::Graph& g, const BoundParams& p, std::span<const std::int32_t> tokens,
                       const SharedTokenEmbedding& embedding, ad::Var h_asr, ad::Var h_spk);

Tensor speaker_encode(const SpeakerModuleParams& params, const AcousticFeatures& feats);

// Mask marks spoken tokens; special tokens get embeddings but are masked out.
EmbeddingSequence speaker_decode(const SpeakerModuleParams& params,
                                 std::span<const std::int32_t> tokens,
                                 const SharedTokenEmbedding& embedding, const Tensor& h_asr,
                                 const Tensor& h_spk);

struct TokenAttribution {
  AsrOutput asr;
  EmbeddingSequence embeddings;  // one row per asr.tokens entry
};

// Frozen ASR (or the supplied gold tokens), then the speaker encoder and decoder.
TokenAttribution attribute_tokens(const SpeakerModuleParams& params, const SyntheticWorld& world,
                                  const AcousticFeatures& feats,
                                  std::optional<std::span<const std::int32_t>> gold_tokens = {});

// Checkpoint container: "MSAS", u32 version, u32 record count, then records
// of (u32 name length, name, u8 dtype, u32 rank, u64 dims..., payload), all
// little-endian. dtype 0 is float64, 1 is UTF-8 text.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  SpeakerModuleParams params;
  std::uint64_t world_seed = 0;
  std::string world_config_hash;
  std::string experiment_config_hash;
  // Optional optimizer state for resuming.
  std::int64_t optimizer_step = 0;
  std::vector<Tensor> adam_m;
  std::vector<Tensor> adam_v;
  // Free-form provenance text (JSON).
  std::string notes;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace msaasr

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
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "msaasr/numerics/tensor.hpp"

namespace msaasr {

// Reserved vocabulary entries. Everything from kFirstContentToken up is a
// spoken token.
inline constexpr std::int32_t kStartToken = 0;
inline constexpr std::int32_t kEndToken = 1;
inline constexpr std::int32_t kPadToken = 2;
inline constexpr std::int32_t kFirstContentToken = 3;

inline bool is_special_token(std::int32_t id) { return id < kFirstContentToken; }

struct AcousticFeatures {
  Tensor frames;  // L x f^a
  double frame_duration_s = 0.08;

  std::size_t length() const { return frames.rows(); }
  std::size_t dim() const { return frames.cols(); }
  double duration_s() const { return static_cast<double>(length()) * frame_duration_s; }

  void validate() const;
};

// Half-open frame range [begin, end).
struct FrameSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  friend bool operator==(const FrameSpan&, const FrameSpan&) = default;
};

// Decoder sequence <sot> w_1 .. w_N <eot> with encoder features. Special
// tokens carry empty spans.
struct AsrOutput {
  std::vector<std::int32_t> tokens;
  Tensor encoder_features;  // H^asr, L x f^e
  std::vector<FrameSpan> spans;

  // Spoken tokens only, in order.
  std::vector<std::int32_t> content_tokens() const;
  // true where tokens[i] is a spoken token.
  std::vector<bool> content_mask() const;
};

// Word and position tables shared by the ASR-side token adapter and the
// speaker decoder. Copies of the handle alias the same storage.
class SharedTokenEmbedding {
 public:
  SharedTokenEmbedding() = default;
  SharedTokenEmbedding(Tensor word, Tensor position);

  const Tensor& word() const { return *word_; }
  const Tensor& position() const { return *position_; }
  Tensor& mutable_word() { return *word_; }
  Tensor& mutable_position() { return *position_; }

  bool same_storage(const SharedTokenEmbedding& other) const {
    return word_ == other.word_ && position_ == other.position_;
  }

  // word[token] + position[index] for every token of the sequence.
  Tensor embed(std::span<const std::int32_t> tokens) const;

 private:
  std::shared_ptr<Tensor> word_;
  std::shared_ptr<Tensor> position_;
};

struct WorldConfig {
  std::uint64_t seed = 1234;
  std::size_t vocab_size = 64;
  std::size_t num_speakers = 256;
  std::size_t feature_dim = 32;   // f^a
  std::size_t speaker_dims = 16;  // leading feature dims that carry the speaker signature
  std::size_t encoder_dim = 32;   // f^e
  std::size_t frames_per_token = 4;
  double frame_duration_s = 0.08;
  double noise_sigma = 0.05;
  std::size_t max_positions = 128;

  void validate() const;
  std::string canonical() const;
};

// Fixed sinusoid of a (fractional) frame time, dim entries of norm 1.
// Frequencies are spaced geometrically between periods of 8 and 1024 frames.
void sinusoidal_position(double frame_time, std::span<double> out);

// Stand-in for a frozen multilingual recogniser. Frames are the speaker
// signature (leading speaker_dims) plus the token content vector (the
// remaining dims) plus noise. Decoding picks the content vector that best
// matches each token window; H^asr is a fixed projection plus sinusoidal
// frame positions. Nothing here is trainable.
class SyntheticWorld {
 public:
  explicit SyntheticWorld(WorldConfig config);

  const WorldConfig& config() const { return config_; }
  const Tensor& speaker_signatures() const { return signatures_; }
  const Tensor& content_vectors() const { return content_; }
  const Tensor& asr_projection() const { return projection_; }
  const SharedTokenEmbedding& token_embedding() const { return embedding_; }
  SharedTokenEmbedding& token_embedding() { return embedding_; }

  std::size_t content_vocab() const {
    return config_.vocab_size - static_cast<std::size_t>(kFirstContentToken);
  }

  // Hash over every frozen parameter (FNV-1a of the raw doubles).
  std::uint64_t parameter_hash() const;
  // Hash of the canonical config; used to tie checkpoints to a world.
  std::uint64_t config_hash() const;

  // Position row used for decoder index `index` of <sot> w_1 .. w_N <eot>:
  // index 0 is <sot>, index n >= 1 sits at the centre of token n-1's frames.
  double position_frame_time(std::size_t index) const;

 private:
  WorldConfig config_;
  Tensor signatures_;
  Tensor content_;
  Tensor projection_;
  SharedTokenEmbedding embedding_;
};

struct SynthesizedTurn {
  AcousticFeatures features;
  std::vector<std::int32_t> tokens;
  std::int32_t speaker = 0;
  double duration_s = 0.0;
};

// frames = signature + content + N(0, sigma^2), rounded to float32 so the
// binary feature files reproduce them exactly.
SynthesizedTurn synth_turn(const SyntheticWorld& world, std::int32_t speaker,
                           std::span<const std::int32_t> tokens, std::uint64_t noise_seed,
                           double sigma);
inline SynthesizedTurn synth_turn(const SyntheticWorld& world, std::int32_t speaker,
                                  std::span<const std::int32_t> tokens,
                                  std::uint64_t noise_seed) {
  return synth_turn(world, speaker, tokens, noise_seed, world.config().noise_sigma);
}

// H^asr = frames * projection + position(frame index).
Tensor asr_encode(const SyntheticWorld& world, const AcousticFeatures& feats);

AsrOutput asr_transcribe(const SyntheticWorld& world, const AcousticFeatures& feats);

// Decoding bypassed: tokens are supplied, one per full frames_per_token
// window. Encoder features are computed exactly as in asr_transcribe.
AsrOutput gold_transcript_output(const SyntheticWorld& world, const AcousticFeatures& feats,
                                 std::span<const std::int32_t> content_tokens);

// Little-endian float32 payload at `<base>.f32` with a JSON sidecar at
// `<base>.json` holding shape, frame duration and seed.
void write_features(const std::filesystem::path& base, const AcousticFeatures& feats,
                    std::uint64_t seed);
AcousticFeatures read_features(const std::filesystem::path& base);

}  // namespace msaasr

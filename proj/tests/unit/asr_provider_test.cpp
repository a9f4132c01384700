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
#include <filesystem>

#include "doctest.h"
#include "msaasr/asr_provider.hpp"
#include "msaasr/error.hpp"
#include "msaasr/rng.hpp"

using namespace msaasr;

namespace {

std::vector<std::int32_t> random_tokens(Rng& rng, const SyntheticWorld& w, std::size_t n) {
  std::vector<std::int32_t> t(n);
  for (auto& v : t)
    v = static_cast<std::int32_t>(rng.between(kFirstContentToken, static_cast<std::int64_t>(w.config().vocab_size) - 1));
  return t;
}

}  // namespace

TEST_CASE("world dictionaries are unit norm and seeded") {
  const SyntheticWorld w({});
  for (std::size_t s = 0; s < w.config().num_speakers; ++s)
    CHECK(std::abs(norm(w.speaker_signatures().row(s)) - 1.0) <= 1e-12);
  for (std::size_t v = 0; v < w.config().vocab_size; ++v)
    CHECK(std::abs(norm(w.content_vectors().row(v)) - 1.0) <= 1e-12);
  const SyntheticWorld again({});
  CHECK(w.parameter_hash() == again.parameter_hash());
  WorldConfig other;
  other.seed = 99;
  CHECK(SyntheticWorld(other).parameter_hash() != w.parameter_hash());
}

TEST_CASE("noiseless turn is signature plus content") {
  const SyntheticWorld w({});
  const std::int32_t tok = 17;
  const auto turn = synth_turn(w, 5, std::span(&tok, 1), 1, 0.0);
  CHECK(turn.features.length() == w.config().frames_per_token);
  CHECK(turn.duration_s == doctest::Approx(4 * 0.08));
  for (std::size_t f = 0; f < turn.features.length(); ++f)
    for (std::size_t k = 0; k < w.config().feature_dim; ++k) {
      const double want = w.speaker_signatures().at(5, k) + w.content_vectors().at(17, k);
      CHECK(turn.features.frames.at(f, k) == static_cast<double>(static_cast<float>(want)));
    }
}

TEST_CASE("synth_turn is deterministic per seed") {
  const SyntheticWorld w({});
  const std::vector<std::int32_t> toks{3, 9, 40};
  const auto a = synth_turn(w, 2, toks, 77);
  const auto b = synth_turn(w, 2, toks, 77);
  const auto c = synth_turn(w, 2, toks, 78);
  CHECK(a.features.frames == b.features.frames);
  CHECK_FALSE(a.features.frames == c.features.frames);
}

TEST_CASE("noisy frames average to signature plus content") {
  const SyntheticWorld w({});
  const double sigma = 0.1;
  const std::vector<std::int32_t> toks(25, 30);  // 100 frames of one token
  const auto turn = synth_turn(w, 8, toks, 2024, sigma);
  const std::size_t L = turn.features.length();
  REQUIRE(L == 100);
  const double bound = 3.0 * sigma / std::sqrt(static_cast<double>(L));
  for (std::size_t k = 0; k < w.config().feature_dim; ++k) {
    double mean = 0.0;
    for (std::size_t f = 0; f < L; ++f) mean += turn.features.frames.at(f, k);
    mean /= static_cast<double>(L);
    const double want = w.speaker_signatures().at(8, k) + w.content_vectors().at(30, k);
    CHECK(std::abs(mean - want) <= bound);
  }
}

TEST_CASE("synth_turn rejects unknown ids") {
  const SyntheticWorld w({});
  const std::vector<std::int32_t> ok{5}, special{kStartToken}, big{1000};
  CHECK_THROWS_AS(synth_turn(w, -1, ok, 1), Error);
  CHECK_THROWS_AS(synth_turn(w, 100000, ok, 1), Error);
  CHECK_THROWS_AS(synth_turn(w, 0, special, 1), Error);
  CHECK_THROWS_AS(synth_turn(w, 0, big, 1), Error);
  CHECK_THROWS_AS(synth_turn(w, 0, std::vector<std::int32_t>{}, 1), Error);
}

TEST_CASE("noiseless streams decode exactly") {
  const SyntheticWorld w({});
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto toks = random_tokens(rng, w, 30);
    const auto turn = synth_turn(w, static_cast<std::int32_t>(rng.below(256)), toks, 3, 0.0);
    const auto out = asr_transcribe(w, turn.features);
    CHECK(out.content_tokens() == toks);
    CHECK(out.tokens.front() == kStartToken);
    CHECK(out.tokens.back() == kEndToken);
    CHECK(out.spans.size() == out.tokens.size());
  }
}

TEST_CASE("decoding at sigma 0.05 is at least 99% accurate") {
  const SyntheticWorld w({});
  Rng rng(2);
  std::size_t correct = 0, total = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto toks = random_tokens(rng, w, 50);
    const auto turn = synth_turn(w, static_cast<std::int32_t>(rng.below(256)), toks, 100 + trial, 0.05);
    const auto dec = asr_transcribe(w, turn.features).content_tokens();
    for (std::size_t i = 0; i < toks.size(); ++i) correct += dec[i] == toks[i] ? 1 : 0;
    total += toks.size();
  }
  CHECK(total == 1000);
  CHECK(static_cast<double>(correct) / static_cast<double>(total) >= 0.99);
}

TEST_CASE("alignment spans partition the decoded region") {
  const SyntheticWorld w({});
  Rng rng(3);
  const auto toks = random_tokens(rng, w, 12);
  auto turn = synth_turn(w, 1, toks, 1);
  // a trailing partial window is ignored
  Tensor padded = Tensor::zeros(turn.features.length() + 3, w.config().feature_dim);
  std::copy(turn.features.frames.data().begin(), turn.features.frames.data().end(), padded.data().begin());
  const AcousticFeatures feats{padded, 0.08};
  const auto out = asr_transcribe(w, feats);
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < out.tokens.size(); ++i) {
    const auto s = out.spans[i];
    CHECK(s.begin == cursor);
    CHECK(s.end <= feats.length());
    if (is_special_token(out.tokens[i])) CHECK(s.begin == s.end);
    else CHECK(s.end - s.begin == w.config().frames_per_token);
    cursor = s.end;
  }
  CHECK(cursor == 12 * w.config().frames_per_token);
}

TEST_CASE("encoder features have shape L x f^e") {
  const SyntheticWorld w({});
  Rng rng(4);
  for (std::size_t n : {1u, 7u, 40u}) {
    const auto turn = synth_turn(w, 0, random_tokens(rng, w, n), 5);
    const auto out = asr_transcribe(w, turn.features);
    CHECK(out.encoder_features.shape() == Shape{n * 4, w.config().encoder_dim});
  }
  CHECK_THROWS_AS(asr_transcribe(w, AcousticFeatures{Tensor::zeros(2, 32), 0.08}), Error);
  CHECK_THROWS_AS(asr_transcribe(w, AcousticFeatures{Tensor::zeros(0, 32), 0.08}), Error);
}

TEST_CASE("gold transcript mode") {
  const SyntheticWorld w({});
  Rng rng(5);
  const auto toks = random_tokens(rng, w, 20);
  const auto clean = synth_turn(w, 4, toks, 1, 0.0);
  const auto decoded = asr_transcribe(w, clean.features);
  const auto gold = gold_transcript_output(w, clean.features, toks);
  CHECK(gold.tokens == decoded.tokens);
  CHECK(gold.spans == decoded.spans);
  CHECK(gold.encoder_features == decoded.encoder_features);

  const auto noisy = synth_turn(w, 4, toks, 1, 3.0);
  CHECK(gold_transcript_output(w, noisy.features, toks).content_tokens() == toks);
  CHECK(gold_transcript_output(w, noisy.features, toks).encoder_features ==
        asr_transcribe(w, noisy.features).encoder_features);

  const std::vector<std::int32_t> short_toks(toks.begin(), toks.end() - 1);
  CHECK_THROWS_AS(gold_transcript_output(w, clean.features, short_toks), Error);
}

TEST_CASE("shared token embedding aliases storage") {
  SyntheticWorld w({});
  SharedTokenEmbedding handle = w.token_embedding();
  CHECK(handle.same_storage(w.token_embedding()));
  const std::vector<std::int32_t> toks{kStartToken, 10, kEndToken};
  const Tensor before = w.token_embedding().embed(toks);
  handle.mutable_word().at(10, 0) += 1.0;
  const Tensor after = w.token_embedding().embed(toks);
  CHECK(after.at(1, 0) == doctest::Approx(before.at(1, 0) + 1.0));
}

TEST_CASE("feature files round-trip") {
  const SyntheticWorld w({});
  Rng rng(6);
  const auto turn = synth_turn(w, 3, random_tokens(rng, w, 9), 8);
  const auto dir = std::filesystem::temp_directory_path() / "msaasr_asr_test";
  std::filesystem::create_directories(dir);
  write_features(dir / "turn", turn.features, 8);
  const auto back = read_features(dir / "turn");
  CHECK(back.frames == turn.features.frames);
  CHECK(back.frame_duration_s == turn.features.frame_duration_s);
  CHECK_THROWS_AS(read_features(dir / "missing"), Error);
  std::filesystem::remove_all(dir);
}

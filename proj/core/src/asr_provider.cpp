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

#include "msaasr/asr_provider.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "msaasr/error.hpp"
#include "msaasr/hash.hpp"
#include "msaasr/rng.hpp"

namespace msaasr {
namespace {

// Unit vector supported on dims [begin, end) of a dim-length row.
void random_unit(Rng& rng, std::span<double> row, std::size_t begin, std::size_t end) {
  double n2 = 0.0;
  do {
    n2 = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      row[i] = rng.normal();
      n2 += row[i] * row[i];
    }
  } while (n2 < 1e-12);
  const double inv = 1.0 / std::sqrt(n2);
  for (std::size_t i = begin; i < end; ++i) row[i] *= inv;
}

double round_to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void AcousticFeatures::validate() const {
  require(frames.rank() == 2 && frames.rows() >= 1, ErrorKind::kDegenerate,
          "acoustic features are empty");
  require(frame_duration_s > 0.0, ErrorKind::kInvalidArgument, "frame duration must be > 0");
  require(frames.all_finite(), ErrorKind::kNumeric, "acoustic features contain NaN/Inf");
}

std::vector<std::int32_t> AsrOutput::content_tokens() const {
  std::vector<std::int32_t> out;
  for (auto t : tokens) {
    if (!is_special_token(t)) out.push_back(t);
  }
  return out;
}

std::vector<bool> AsrOutput::content_mask() const {
  std::vector<bool> out(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) out[i] = !is_special_token(tokens[i]);
  return out;
}

SharedTokenEmbedding::SharedTokenEmbedding(Tensor word, Tensor position)
    : word_(std::make_shared<Tensor>(std::move(word))),
      position_(std::make_shared<Tensor>(std::move(position))) {
  require(word_->cols() == position_->cols(), ErrorKind::kDimension,
          "word and position tables differ in width");
}

Tensor SharedTokenEmbedding::embed(std::span<const std::int32_t> tokens) const {
  const std::size_t d = word_->cols();
  require(tokens.size() <= position_->rows(), ErrorKind::kInvalidArgument,
          "sequence of " + std::to_string(tokens.size()) + " tokens exceeds " +
              std::to_string(position_->rows()) + " positions");
  Tensor out = Tensor::zeros(tokens.size(), d);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    require(tokens[i] >= 0 && static_cast<std::size_t>(tokens[i]) < word_->rows(),
            ErrorKind::kInvalidArgument, "token id " + std::to_string(tokens[i]) + " out of vocabulary");
    auto w = word_->row(static_cast<std::size_t>(tokens[i]));
    auto p = position_->row(i);
    auto o = out.row(i);
    for (std::size_t c = 0; c < d; ++c) o[c] = w[c] + p[c];
  }
  return out;
}

void WorldConfig::validate() const {
  require(vocab_size > static_cast<std::size_t>(kFirstContentToken) + 1, ErrorKind::kConfig,
          "world.vocab_size too small");
  require(num_speakers >= 1, ErrorKind::kConfig, "world.num_speakers must be >= 1");
  require(speaker_dims >= 2 && speaker_dims + 2 <= feature_dim, ErrorKind::kConfig,
          "world.speaker_dims must leave at least two content dims");
  require(encoder_dim >= 2, ErrorKind::kConfig, "world.encoder_dim must be >= 2");
  require(frames_per_token >= 1, ErrorKind::kConfig, "world.frames_per_token must be >= 1");
  require(frame_duration_s > 0.0, ErrorKind::kConfig, "world.frame_duration_s must be > 0");
  require(noise_sigma >= 0.0, ErrorKind::kConfig, "world.noise_sigma must be >= 0");
  require(max_positions >= 3, ErrorKind::kConfig, "world.max_positions must be >= 3");
}

std::string WorldConfig::canonical() const {
  std::ostringstream os;
  os.precision(17);
  os << "seed=" << seed << ";vocab=" << vocab_size << ";speakers=" << num_speakers
     << ";fa=" << feature_dim << ";spk_dims=" << speaker_dims << ";fe=" << encoder_dim
     << ";fpt=" << frames_per_token << ";frame_s=" << frame_duration_s
     << ";sigma=" << noise_sigma << ";maxpos=" << max_positions;
  return os.str();
}

void sinusoidal_position(double frame_time, std::span<double> out) {
  const std::size_t pairs = out.size() / 2;
  const double amp = std::sqrt(2.0 / static_cast<double>(out.size()));
  for (std::size_t i = 0; i < pairs; ++i) {
    const double frac = pairs > 1 ? static_cast<double>(i) / static_cast<double>(pairs - 1) : 0.0;
    const double period = 8.0 * std::pow(1024.0 / 8.0, frac);
    const double w = 2.0 * M_PI / period;
    out[2 * i] = amp * std::sin(w * frame_time);
    out[2 * i + 1] = amp * std::cos(w * frame_time);
  }
  if (out.size() % 2) out.back() = 0.0;
}

SyntheticWorld::SyntheticWorld(WorldConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& c = config_;
  Rng rng(c.seed);

  signatures_ = Tensor::zeros(c.num_speakers, c.feature_dim);
  for (std::size_t s = 0; s < c.num_speakers; ++s) random_unit(rng, signatures_.row(s), 0, c.speaker_dims);

  content_ = Tensor::zeros(c.vocab_size, c.feature_dim);
  for (std::size_t v = 0; v < c.vocab_size; ++v)
    random_unit(rng, content_.row(v), c.speaker_dims, c.feature_dim);

  projection_ = Tensor::zeros(c.feature_dim, c.encoder_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(c.feature_dim));
  for (double& v : projection_.data()) v = rng.normal(0.0, scale);

  Tensor word = Tensor::zeros(c.vocab_size, c.encoder_dim);
  for (std::size_t v = 0; v < c.vocab_size; ++v) {
    auto out = word.row(v);
    for (std::size_t k = 0; k < c.feature_dim; ++k) {
      const double x = content_.at(v, k);
      if (x == 0.0) continue;
      for (std::size_t e = 0; e < c.encoder_dim; ++e) out[e] += x * projection_.at(k, e);
    }
  }
  Tensor position = Tensor::zeros(c.max_positions, c.encoder_dim);
  for (std::size_t p = 0; p < c.max_positions; ++p)
    sinusoidal_position(position_frame_time(p), position.row(p));
  embedding_ = SharedTokenEmbedding(std::move(word), std::move(position));
}

double SyntheticWorld::position_frame_time(std::size_t index) const {
  const double fpt = static_cast<double>(config_.frames_per_token);
  return (static_cast<double>(index) - 1.0) * fpt + (fpt - 1.0) / 2.0;
}

std::uint64_t SyntheticWorld::parameter_hash() const {
  Fnv1a h;
  h.doubles(signatures_.data());
  h.doubles(content_.data());
  h.doubles(projection_.data());
  h.doubles(embedding_.word().data());
  h.doubles(embedding_.position().data());
  return h.digest();
}

std::uint64_t SyntheticWorld::config_hash() const {
  Fnv1a h;
  h.text(config_.canonical());
  return h.digest();
}

SynthesizedTurn synth_turn(const SyntheticWorld& world, std::int32_t speaker,
                           std::span<const std::int32_t> tokens, std::uint64_t noise_seed,
                           double sigma) {
  const auto& c = world.config();
  require(speaker >= 0 && static_cast<std::size_t>(speaker) < c.num_speakers,
          ErrorKind::kInvalidArgument, "unknown speaker id " + std::to_string(speaker));
  require(!tokens.empty(), ErrorKind::kDegenerate, "a turn needs at least one token");
  require(sigma >= 0.0, ErrorKind::kInvalidArgument, "noise sigma must be >= 0");
  for (auto t : tokens) {
    require(t >= kFirstContentToken && static_cast<std::size_t>(t) < c.vocab_size,
            ErrorKind::kInvalidArgument, "invalid content token id " + std::to_string(t));
  }
  Rng rng(noise_seed);
  const std::size_t fpt = c.frames_per_token;
  SynthesizedTurn turn;
  turn.features.frame_duration_s = c.frame_duration_s;
  turn.features.frames = Tensor::zeros(tokens.size() * fpt, c.feature_dim);
  auto sig = world.speaker_signatures().row(static_cast<std::size_t>(speaker));
  for (std::size_t n = 0; n < tokens.size(); ++n) {
    auto content = world.content_vectors().row(static_cast<std::size_t>(tokens[n]));
    for (std::size_t f = 0; f < fpt; ++f) {
      auto row = turn.features.frames.row(n * fpt + f);
      for (std::size_t k = 0; k < c.feature_dim; ++k) {
        const double noise = sigma > 0.0 ? sigma * rng.normal() : 0.0;
        row[k] = round_to_float(sig[k] + content[k] + noise);
      }
    }
  }
  turn.tokens.assign(tokens.begin(), tokens.end());
  turn.speaker = speaker;
  turn.duration_s = static_cast<double>(tokens.size() * fpt) * c.frame_duration_s;
  return turn;
}

Tensor asr_encode(const SyntheticWorld& world, const AcousticFeatures& feats) {
  feats.validate();
  const auto& c = world.config();
  require(feats.dim() == c.feature_dim, ErrorKind::kDimension,
          "feature dim " + std::to_string(feats.dim()) + " != world feature dim " +
              std::to_string(c.feature_dim));
  const Tensor& p = world.asr_projection();
  Tensor h = Tensor::zeros(feats.length(), c.encoder_dim);
  for (std::size_t l = 0; l < feats.length(); ++l) {
    auto out = h.row(l);
    sinusoidal_position(static_cast<double>(l), out);
    auto x = feats.frames.row(l);
    for (std::size_t k = 0; k < c.feature_dim; ++k) {
      const double xv = x[k];
      auto pr = p.row(k);
      for (std::size_t e = 0; e < c.encoder_dim; ++e) out[e] += xv * pr[e];
    }
  }
  return h;
}

namespace {

AsrOutput wrap(const SyntheticWorld& world, const AcousticFeatures& feats,
               std::span<const std::int32_t> content) {
  const std::size_t fpt = world.config().frames_per_token;
  AsrOutput out;
  out.encoder_features = asr_encode(world, feats);
  out.tokens.reserve(content.size() + 2);
  out.tokens.push_back(kStartToken);
  out.spans.push_back({0, 0});
  for (std::size_t n = 0; n < content.size(); ++n) {
    out.tokens.push_back(content[n]);
    out.spans.push_back({n * fpt, (n + 1) * fpt});
  }
  out.tokens.push_back(kEndToken);
  out.spans.push_back({content.size() * fpt, content.size() * fpt});
  return out;
}

}  // namespace

AsrOutput asr_transcribe(const SyntheticWorld& world, const AcousticFeatures& feats) {
  feats.validate();
  const auto& c = world.config();
  const std::size_t fpt = c.frames_per_token;
  require(feats.length() >= fpt, ErrorKind::kDegenerate,
          "stream shorter than one token window");
  require(feats.dim() == c.feature_dim, ErrorKind::kDimension, "feature dim mismatch");
  const std::size_t windows = feats.length() / fpt;
  std::vector<std::int32_t> decoded(windows);
  std::vector<double> mean(c.feature_dim);
  for (std::size_t n = 0; n < windows; ++n) {
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t f = 0; f < fpt; ++f) {
      auto row = feats.frames.row(n * fpt + f);
      for (std::size_t k = 0; k < c.feature_dim; ++k) mean[k] += row[k];
    }
    for (double& v : mean) v /= static_cast<double>(fpt);
    double best = -std::numeric_limits<double>::infinity();
    std::int32_t best_id = kFirstContentToken;
    for (std::size_t v = static_cast<std::size_t>(kFirstContentToken); v < c.vocab_size; ++v) {
      const double score = dot(mean, world.content_vectors().row(v));
      if (score > best) {
        best = score;
        best_id = static_cast<std::int32_t>(v);
      }
    }
    decoded[n] = best_id;
  }
  return wrap(world, feats, decoded);
}

AsrOutput gold_transcript_output(const SyntheticWorld& world, const AcousticFeatures& feats,
                                 std::span<const std::int32_t> content_tokens) {
  feats.validate();
  const auto& c = world.config();
  const std::size_t windows = feats.length() / c.frames_per_token;
  require(content_tokens.size() == windows, ErrorKind::kDimension,
          "gold transcript has " + std::to_string(content_tokens.size()) + " tokens but the stream holds " +
              std::to_string(windows) + " token windows");
  for (auto t : content_tokens) {
    require(t >= kFirstContentToken && static_cast<std::size_t>(t) < c.vocab_size,
            ErrorKind::kInvalidArgument, "invalid gold token id " + std::to_string(t));
  }
  return wrap(world, feats, content_tokens);
}

void write_features(const std::filesystem::path& base, const AcousticFeatures& feats,
                    std::uint64_t seed) {
  feats.validate();
  auto bin = base;
  bin += ".f32";
  auto side = base;
  side += ".json";
  std::ofstream out(bin, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + bin.string());
  std::vector<unsigned char> bytes(feats.frames.size() * 4);
  for (std::size_t i = 0; i < feats.frames.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(feats.frames[i]));
    for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<unsigned char>(u >> (8 * b));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::kIo, "short write to " + bin.string());

  nlohmann::ordered_json j;
  j["dtype"] = "float32-le";
  j["shape"] = {feats.length(), feats.dim()};
  j["frame_duration_s"] = feats.frame_duration_s;
  j["seed"] = seed;
  std::ofstream sj(side);
  require(static_cast<bool>(sj), ErrorKind::kIo, "cannot write " + side.string());
  sj << j.dump() << '\n';
}

AcousticFeatures read_features(const std::filesystem::path& base) {
  auto bin = base;
  bin += ".f32";
  auto side = base;
  side += ".json";
  std::ifstream sj(side);
  require(static_cast<bool>(sj), ErrorKind::kIo, "cannot read " + side.string());
  nlohmann::json j;
  try {
    sj >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kData, side.string() + ": " + e.what());
  }
  require(j.value("dtype", "") == "float32-le", ErrorKind::kData,
          side.string() + ": unsupported dtype");
  const auto rows = j.at("shape").at(0).get<std::size_t>();
  const auto cols = j.at("shape").at(1).get<std::size_t>();
  AcousticFeatures feats;
  feats.frame_duration_s = j.at("frame_duration_s").get<double>();
  std::ifstream in(bin, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot read " + bin.string());
  std::vector<unsigned char> bytes(rows * cols * 4);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(in.gcount() == static_cast<std::streamsize>(bytes.size()), ErrorKind::kData,
          bin.string() + ": payload shorter than declared shape");
  std::vector<double> data(rows * cols);
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
    data[i] = static_cast<double>(std::bit_cast<float>(u));
  }
  feats.frames = Tensor({rows, cols}, std::move(data));
  feats.validate();
  return feats;
}

}  // namespace msaasr

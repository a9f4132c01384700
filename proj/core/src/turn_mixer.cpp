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

#include "msaasr/turn_mixer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>

#include <Eigen/QR>

#include "json.hpp"
#include "msaasr/error.hpp"
#include "msaasr/rng.hpp"

namespace msaasr {
namespace {

double round_to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

std::string speaker_ref(std::int32_t speaker) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "spk-%03d", speaker);
  return buf;
}

}  // namespace

SurrogateEmbedder::SurrogateEmbedder(const SyntheticWorld& world, std::size_t embedding_dim,
                                     std::uint64_t seed)
    : speaker_dims_(world.config().speaker_dims), feature_dim_(world.config().feature_dim) {
  require(embedding_dim >= 2, ErrorKind::kConfig, "embedding dim must be >= 2");
  // Random orthonormal rows (or columns, when f^d is the smaller side).
  Rng rng(seed);
  const auto s = static_cast<Eigen::Index>(speaker_dims_);
  const auto d = static_cast<Eigen::Index>(embedding_dim);
  const Eigen::Index tall = std::max(s, d), thin = std::min(s, d);
  Eigen::MatrixXd g(tall, thin);
  for (Eigen::Index c = 0; c < thin; ++c)
    for (Eigen::Index r = 0; r < tall; ++r) g(r, c) = rng.normal();
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(tall, thin);
  // Fix column signs so the map does not depend on the QR sign convention.
  for (Eigen::Index c = 0; c < thin; ++c) {
    if (qr.matrixQR()(c, c) < 0.0) q.col(c) *= -1.0;
  }
  map_ = Tensor::zeros(speaker_dims_, embedding_dim);
  for (Eigen::Index r = 0; r < s; ++r)
    for (Eigen::Index c = 0; c < d; ++c)
      map_.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = s >= d ? q(r, c) : q(c, r);
}

std::vector<double> SurrogateEmbedder::embed(const AcousticFeatures& feats) const {
  feats.validate();
  require(feats.dim() == feature_dim_, ErrorKind::kDimension,
          "embed_turn: feature dim " + std::to_string(feats.dim()) + " != " +
              std::to_string(feature_dim_));
  std::vector<double> mean(speaker_dims_, 0.0);
  for (std::size_t l = 0; l < feats.length(); ++l) {
    auto row = feats.frames.row(l);
    for (std::size_t k = 0; k < speaker_dims_; ++k) mean[k] += row[k];
  }
  std::vector<double> out(dim(), 0.0);
  for (std::size_t k = 0; k < speaker_dims_; ++k) {
    for (std::size_t j = 0; j < dim(); ++j) out[j] += mean[k] * map_.at(k, j);
  }
  const double n = norm(out);
  require(n > 1e-12 && std::isfinite(n), ErrorKind::kDegenerate,
          "embed_turn: zero-norm embedding before normalisation");
  for (double& v : out) v /= n;
  return out;
}

std::vector<double> embed_turn(const SurrogateEmbedder& oracle, const AcousticFeatures& feats) {
  return oracle.embed(feats);
}

void Turn::validate() const {
  require(duration_s > 0.0, ErrorKind::kData, "turn " + id + ": duration must be positive");
  require(!tokens.empty(), ErrorKind::kData, "turn " + id + ": no tokens");
  require(std::abs(norm(embedding) - 1.0) <= 1e-6, ErrorKind::kData,
          "turn " + id + ": embedding is not unit norm");
}

Turn make_turn(std::string id, SynthesizedTurn synth, std::vector<double> embedding) {
  Turn t;
  t.id = std::move(id);
  t.tokens = std::move(synth.tokens);
  t.duration_s = synth.duration_s;
  t.embedding = std::move(embedding);
  t.features = std::move(synth.features);
  t.speaker_ = synth.speaker;
  t.validate();
  return t;
}

Turn restore_turn(std::string id, std::vector<std::int32_t> tokens, double duration_s,
                  std::vector<double> embedding, AcousticFeatures features, std::int32_t speaker) {
  Turn t;
  t.id = std::move(id);
  t.tokens = std::move(tokens);
  t.duration_s = duration_s;
  t.embedding = std::move(embedding);
  t.features = std::move(features);
  t.speaker_ = speaker;
  t.validate();
  return t;
}

std::int32_t eval_speaker_of(const Turn& turn) { return turn.speaker_; }

std::vector<TurnGroup> group_similar(std::span<const Turn> turns, double theta,
                                     std::uint64_t order_seed) {
  require(!turns.empty(), ErrorKind::kInvalidArgument, "group_similar: no turns");
  std::vector<std::size_t> order(turns.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(order_seed);
  rng.shuffle(std::span<std::size_t>(order));

  std::vector<TurnGroup> groups;
  for (std::size_t idx : order) {
    bool placed = false;
    for (auto& g : groups) {
      if (cosine(turns[idx].embedding, g.representative) >= theta) {
        g.members.push_back(idx);
        placed = true;
        break;
      }
    }
    if (!placed) groups.push_back({{idx}, turns[idx].embedding});
  }
  return groups;
}

void MixerConfig::validate() const {
  require(theta > 0.0 && theta < 1.0, ErrorKind::kConfig, "mixer.theta must lie in (0, 1)");
  require(max_groups >= 1, ErrorKind::kConfig, "mixer.max_groups must be >= 1");
  require(max_duration_s > 0.0, ErrorKind::kConfig, "mixer.max_duration_s must be positive");
  require(noise_level >= 0.0, ErrorKind::kConfig, "mixer.noise_level must be >= 0");
  require(min_turns_per_group >= 2 && max_turns_per_group >= min_turns_per_group,
          ErrorKind::kConfig, "mixer turns per group must satisfy 2 <= min <= max");
  require(!group_count_weights.empty(), ErrorKind::kConfig, "mixer.group_count_weights is empty");
  double total = 0.0;
  for (double w : group_count_weights) {
    require(w >= 0.0, ErrorKind::kConfig, "mixer.group_count_weights must be non-negative");
    total += w;
  }
  require(total > 0.0, ErrorKind::kConfig, "mixer.group_count_weights sum to zero");
}

std::size_t MixedSample::group_count() const {
  return std::set<std::size_t>(turn_groups.begin(), turn_groups.end()).size();
}

MixedSample assemble_sample(std::span<const Turn> turns, std::span<const TurnGroup> groups,
                            const MixerConfig& config, std::uint64_t seed) {
  config.validate();
  std::vector<std::size_t> eligible;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].members.size() >= config.min_turns_per_group) eligible.push_back(g);
  }
  require(!eligible.empty(), ErrorKind::kDegenerate,
          "assemble_sample: no turn group has a similar counterpart");

  Rng rng(seed);
  const std::size_t cap = std::min({config.max_groups, config.group_count_weights.size(), eligible.size()});
  double total_w = 0.0;
  for (std::size_t k = 0; k < cap; ++k) total_w += config.group_count_weights[k];
  std::size_t wanted = 1;
  if (total_w > 0.0) {
    double u = rng.uniform() * total_w;
    for (std::size_t k = 0; k < cap; ++k) {
      wanted = k + 1;
      u -= config.group_count_weights[k];
      if (u < 0.0) break;
    }
  }
  rng.shuffle(std::span<std::size_t>(eligible));

  struct Pick {
    std::size_t group;
    std::vector<std::size_t> spare;   // unused members, shuffled
    std::vector<std::size_t> chosen;  // turn indices
  };
  std::vector<Pick> picks;
  double used = 0.0;
  for (std::size_t g : eligible) {
    if (picks.size() == wanted) break;
    bool distinct = true;
    for (const auto& p : picks) {
      if (cosine(groups[g].representative, groups[p.group].representative) >= config.theta) {
        distinct = false;
        break;
      }
    }
    if (!distinct) continue;
    Pick p{g, groups[g].members, {}};
    rng.shuffle(std::span<std::size_t>(p.spare));
    double need = 0.0;
    for (std::size_t i = 0; i < config.min_turns_per_group; ++i) need += turns[p.spare[i]].duration_s;
    if (used + need > config.max_duration_s) continue;
    used += need;
    p.chosen.assign(p.spare.begin(), p.spare.begin() + static_cast<std::ptrdiff_t>(config.min_turns_per_group));
    p.spare.erase(p.spare.begin(), p.spare.begin() + static_cast<std::ptrdiff_t>(config.min_turns_per_group));
    picks.push_back(std::move(p));
  }
  require(!picks.empty(), ErrorKind::kDegenerate,
          "assemble_sample: no pair of similar turns fits the duration budget");

  for (auto& p : picks) {
    const auto extra = static_cast<std::size_t>(rng.between(
        0, static_cast<std::int64_t>(config.max_turns_per_group - config.min_turns_per_group)));
    for (std::size_t i = 0; i < extra && !p.spare.empty(); ++i) {
      const std::size_t t = p.spare.front();
      if (used + turns[t].duration_s > config.max_duration_s) break;
      used += turns[t].duration_s;
      p.chosen.push_back(t);
      p.spare.erase(p.spare.begin());
    }
  }

  std::vector<std::pair<std::size_t, std::size_t>> order;  // (turn, local group)
  for (std::size_t k = 0; k < picks.size(); ++k) {
    for (std::size_t t : picks[k].chosen) order.emplace_back(t, k);
  }
  rng.shuffle(std::span<std::pair<std::size_t, std::size_t>>(order));

  std::vector<std::size_t> turn_order, group_order;
  for (const auto& [t, g] : order) {
    turn_order.push_back(t);
    group_order.push_back(g);
  }
  return compose_sample(turns, turn_order, group_order);
}

MixedSample compose_sample(std::span<const Turn> turns, std::span<const std::size_t> order,
                           std::span<const std::size_t> groups) {
  require(!order.empty() && order.size() == groups.size(), ErrorKind::kDimension,
          "compose_sample: need one group index per turn");
  for (std::size_t t : order)
    require(t < turns.size(), ErrorKind::kInvalidArgument, "compose_sample: turn index out of range");
  MixedSample s;
  std::size_t frames = 0, n_tokens = 0;
  for (std::size_t t : order) {
    frames += turns[t].features.length();
    n_tokens += turns[t].tokens.size();
  }
  const Turn& first = turns[order.front()];
  s.features.frame_duration_s = first.features.frame_duration_s;
  s.features.frames = Tensor::zeros(frames, first.features.dim());
  s.targets.rows = Tensor::zeros(n_tokens, first.embedding.size());
  s.targets.mask.assign(n_tokens, true);
  std::size_t frame_at = 0, token_at = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Turn& turn = turns[order[k]];
    require(turn.features.dim() == first.features.dim() &&
                turn.embedding.size() == first.embedding.size(),
            ErrorKind::kData, "compose_sample: inconsistent turn dimensions");
    std::copy(turn.features.frames.data().begin(), turn.features.frames.data().end(),
              s.features.frames.data().begin() + static_cast<std::ptrdiff_t>(frame_at * first.features.dim()));
    frame_at += turn.features.length();
    s.turn_offsets.push_back(token_at);
    s.turn_ids.push_back(turn.id);
    s.turn_groups.push_back(groups[k]);
    s.labels_.turn_speakers.push_back(eval_speaker_of(turn));
    for (std::int32_t tok : turn.tokens) {
      s.tokens.push_back(tok);
      std::copy(turn.embedding.begin(), turn.embedding.end(), s.targets.rows.row(token_at).begin());
      s.labels_.token_speakers.push_back(eval_speaker_of(turn));
      ++token_at;
    }
  }
  s.turn_offsets.push_back(token_at);
  return s;
}

MixedSample restore_sample(MixedSample sample, SampleLabels labels) {
  require(labels.token_speakers.size() == sample.tokens.size(), ErrorKind::kData,
          "restore_sample: label count does not match token count");
  sample.labels_ = std::move(labels);
  return sample;
}

const SampleLabels& eval_labels(const MixedSample& sample) { return sample.labels_; }

MixedSample augment_noise(const MixedSample& sample, double level, std::uint64_t seed) {
  require(level >= 0.0 && std::isfinite(level), ErrorKind::kInvalidArgument,
          "augment_noise: level must be >= 0");
  MixedSample out = sample;
  if (level == 0.0) return out;
  Rng rng(seed);
  for (double& v : out.features.frames.data()) v = round_to_float(v + level * rng.normal());
  return out;
}

std::vector<std::string> validate_sample(const MixedSample& sample, std::span<const Turn> turns,
                                         const MixerConfig& config) {
  std::vector<std::string> bad;
  if (sample.group_count() > config.max_groups) {
    bad.push_back("too many groups: " + std::to_string(sample.group_count()));
  }
  if (sample.duration_s() > config.max_duration_s + 1e-9) {
    bad.push_back("duration " + std::to_string(sample.duration_s()) + " s exceeds the budget");
  }
  std::unordered_map<std::size_t, std::size_t> per_group;
  for (std::size_t g : sample.turn_groups) ++per_group[g];
  for (const auto& [g, n] : per_group) {
    if (n < 2) bad.push_back("group " + std::to_string(g) + " has no counterpart turn");
  }
  if (sample.turn_offsets.size() != sample.turn_ids.size() + 1 ||
      sample.turn_offsets.back() != sample.tokens.size() ||
      sample.targets.length() != sample.tokens.size()) {
    bad.push_back("turn boundaries do not cover the token sequence");
    return bad;
  }
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < turns.size(); ++i) by_id.emplace(turns[i].id, i);
  for (std::size_t k = 0; k < sample.turn_ids.size(); ++k) {
    auto it = by_id.find(sample.turn_ids[k]);
    if (it == by_id.end()) {
      bad.push_back("unknown turn " + sample.turn_ids[k]);
      continue;
    }
    const Turn& turn = turns[it->second];
    const std::size_t begin = sample.turn_offsets[k], end = sample.turn_offsets[k + 1];
    if (end - begin != turn.tokens.size() ||
        !std::equal(turn.tokens.begin(), turn.tokens.end(), sample.tokens.begin() + static_cast<std::ptrdiff_t>(begin))) {
      bad.push_back("tokens of turn " + turn.id + " are not reproduced");
      continue;
    }
    for (std::size_t n = begin; n < end; ++n) {
      auto row = sample.targets.rows.row(n);
      if (!std::equal(row.begin(), row.end(), turn.embedding.begin(), turn.embedding.end())) {
        bad.push_back("target row " + std::to_string(n) + " differs from the weak label of " + turn.id);
        break;
      }
    }
  }
  return bad;
}

std::vector<Turn> generate_turns(const SyntheticWorld& world, const SurrogateEmbedder& oracle,
                                 const CorpusConfig& config) {
  const auto& wc = world.config();
  require(config.speaker_count >= 1 && config.first_speaker + config.speaker_count <= wc.num_speakers,
          ErrorKind::kConfig, "corpus speaker range exceeds the world's speakers");
  require(config.min_tokens >= 1 && config.max_tokens >= config.min_tokens, ErrorKind::kConfig,
          "corpus token range is empty");
  std::vector<Turn> turns;
  turns.reserve(config.num_turns);
  for (std::size_t i = 0; i < config.num_turns; ++i) {
    Rng rng(Rng::derive(config.seed, i));
    const auto speaker = static_cast<std::int32_t>(config.first_speaker + rng.below(config.speaker_count));
    const auto len = static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(config.min_tokens),
                                                          static_cast<std::int64_t>(config.max_tokens)));
    std::vector<std::int32_t> tokens(len);
    for (auto& t : tokens) {
      t = static_cast<std::int32_t>(rng.between(kFirstContentToken, static_cast<std::int64_t>(wc.vocab_size) - 1));
    }
    SynthesizedTurn synth = synth_turn(world, speaker, tokens, rng.next_u64());
    std::vector<double> emb = oracle.embed(synth.features);
    char id[32];
    std::snprintf(id, sizeof id, "turn-%06zu", i);
    turns.push_back(make_turn(id, std::move(synth), std::move(emb)));
  }
  return turns;
}

void write_turn_manifest(const std::filesystem::path& path, std::span<const Turn> turns) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path.string());
  for (const Turn& t : turns) {
    nlohmann::ordered_json j;
    j["id"] = t.id;
    j["tokens"] = t.tokens;
    j["duration_s"] = t.duration_s;
    j["embedding"] = t.embedding;
    j["speaker_ref"] = speaker_ref(eval_speaker_of(t));
    out << j.dump() << '\n';
  }
  require(static_cast<bool>(out), ErrorKind::kIo, "short write to " + path.string());
}

}  // namespace msaasr

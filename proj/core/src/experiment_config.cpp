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


#include "msaasr/experiment_config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <utility>
#include <variant>

#include "msaasr/error.hpp"
#include "msaasr/hash.hpp"
#include "msaasr/rng.hpp"

namespace msaasr {
namespace {

struct AffinityField {
  AffinityWeight* target;
};

static_assert(std::is_same_v<std::size_t, std::uint64_t>);

using Field = std::variant<std::size_t*, double*, std::string*,
                           std::vector<double>*, AffinityField>;

std::vector<std::pair<std::string, Field>> fields(ExperimentConfig& c) {
  return {
      {"seed", &c.seed},
      {"world.seed", &c.world.seed},
      {"world.vocab_size", &c.world.vocab_size},
      {"world.num_speakers", &c.world.num_speakers},
      {"world.feature_dim", &c.world.feature_dim},
      {"world.speaker_dims", &c.world.speaker_dims},
      {"world.encoder_dim", &c.world.encoder_dim},
      {"world.frames_per_token", &c.world.frames_per_token},
      {"world.frame_duration_s", &c.world.frame_duration_s},
      {"world.noise_sigma", &c.world.noise_sigma},
      {"world.max_positions", &c.world.max_positions},
      {"model.embedding_dim", &c.model.embedding_dim},
      {"model.encoder_layers", &c.model.encoder_layers},
      {"model.decoder_layers", &c.model.decoder_layers},
      {"model.asr_keyed_layers", &c.model.asr_keyed_layers},
      {"model.heads", &c.model.heads},
      {"model.ffn_dim", &c.model.ffn_dim},
      {"model.init_seed", &c.model.init_seed},
      {"surrogate.seed", &c.surrogate_seed},
      {"grouping.seed", &c.grouping_seed},
      {"corpus.num_turns", &c.corpus.num_turns},
      {"corpus.first_speaker", &c.corpus.first_speaker},
      {"corpus.speaker_count", &c.corpus.speaker_count},
      {"corpus.min_tokens", &c.corpus.min_tokens},
      {"corpus.max_tokens", &c.corpus.max_tokens},
      {"corpus.seed", &c.corpus.seed},
      {"mixer.theta", &c.mixer.theta},
      {"mixer.max_groups", &c.mixer.max_groups},
      {"mixer.max_duration_s", &c.mixer.max_duration_s},
      {"mixer.noise_level", &c.mixer.noise_level},
      {"mixer.min_turns_per_group", &c.mixer.min_turns_per_group},
      {"mixer.max_turns_per_group", &c.mixer.max_turns_per_group},
      {"mixer.group_count_weights", &c.mixer.group_count_weights},
      {"mixer.seed", &c.mixer.seed},
      {"loss.alpha", &c.loss.alpha},
      {"loss.beta", &c.loss.beta},
      {"loss.gamma", &c.loss.gamma},
      {"train.samples", &c.train.samples},
      {"train.steps", &c.train.steps},
      {"train.batch_size", &c.train.batch_size},
      {"train.learning_rate", &c.train.learning_rate},
      {"train.warmup_steps", &c.train.warmup_steps},
      {"train.weight_decay", &c.train.weight_decay},
      {"train.beta1", &c.train.beta1},
      {"train.beta2", &c.train.beta2},
      {"train.epsilon", &c.train.epsilon},
      {"train.log_every", &c.train.log_every},
      {"train.eval_every", &c.train.eval_every},
      {"train.dev_recordings", &c.train.dev_recordings},
      {"train.checkpoint_every", &c.train.checkpoint_every},
      {"train.resume_from", &c.train.resume_from},
      {"train.seed", &c.train.seed},
      {"eval.recordings", &c.eval.recordings},
      {"eval.first_speaker", &c.eval.first_speaker},
      {"eval.speaker_count", &c.eval.speaker_count},
      {"eval.min_speakers", &c.eval.min_speakers},
      {"eval.max_speakers", &c.eval.max_speakers},
      {"eval.min_turns_per_speaker", &c.eval.min_turns_per_speaker},
      {"eval.max_turns_per_speaker", &c.eval.max_turns_per_speaker},
      {"eval.min_tokens", &c.eval.min_tokens},
      {"eval.max_tokens", &c.eval.max_tokens},
      {"eval.seed", &c.eval.seed},
      {"cluster.max_clusters", &c.cluster.max_clusters},
      {"cluster.kmeans_restarts", &c.cluster.kmeans_restarts},
      {"cluster.kmeans_iterations", &c.cluster.kmeans_iterations},
      {"cluster.seed", &c.cluster.seed},
      {"cluster.affinity", AffinityField{&c.cluster.weight}},
      {"cluster.affinity_power", &c.cluster.affinity_power},
      {"attribution.max_chunk_s", &c.max_chunk_s},
      {"paths.out_dir", static_cast<std::string*>(nullptr)},
  };
}

// Seeds that follow the experiment seed unless pinned.
const std::vector<std::pair<std::string, std::uint64_t>>& derived_seed_slots() {
  static const std::vector<std::pair<std::string, std::uint64_t>> slots{
      {"surrogate.seed", 1}, {"grouping.seed", 2}, {"corpus.seed", 3}, {"mixer.seed", 4},
      {"train.seed", 5},     {"eval.seed", 6},     {"cluster.seed", 7}};
  return slots;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T parse_integer(const std::string& v, const std::string& where) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  require(ec == std::errc() && p == end, ErrorKind::kConfig,
          where + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& v, const std::string& where) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == v.size() && !v.empty(), ErrorKind::kConfig,
          where + ": expected a number, got '" + v + "'");
  return out;
}

std::string affinity_name(AffinityWeight w) {
  return w == AffinityWeight::kClampedCosine ? "clamped" : "shifted";
}

}  // namespace

void ExperimentConfig::derive_seeds() {
  for (const auto& [key, slot] : derived_seed_slots()) {
    if (explicit_keys.count(key) != 0) continue;
    const std::uint64_t s = Rng::derive(seed, slot);
    for (auto& [name, field] : fields(*this))
      if (name == key) *std::get<std::uint64_t*>(field) = s;
  }
}

void ExperimentConfig::set_seed(std::uint64_t s) {
  seed = s;
  explicit_keys.insert("seed");
  derive_seeds();
}

void ExperimentConfig::validate() const {
  world.validate();
  model.validate();
  mixer.validate();
  loss.validate();
  auto check = [](bool ok, const std::string& what) { require(ok, ErrorKind::kConfig, what); };
  check(model.feature_dim == world.feature_dim && model.model_dim == world.encoder_dim &&
            model.vocab_size == world.vocab_size && model.max_positions == world.max_positions,
        "model dimensions must follow the world configuration");
  check(corpus.num_turns > 0, "corpus.num_turns must be positive");
  check(corpus.speaker_count > 0 &&
            corpus.first_speaker + corpus.speaker_count <= world.num_speakers,
        "corpus speakers must lie inside world.num_speakers");
  check(corpus.min_tokens >= 1 && corpus.min_tokens <= corpus.max_tokens,
        "corpus token range is empty");
  check(eval.first_speaker + eval.speaker_count <= world.num_speakers,
        "eval speakers must lie inside world.num_speakers");
  check(eval.first_speaker >= corpus.first_speaker + corpus.speaker_count ||
            eval.first_speaker + eval.speaker_count <= corpus.first_speaker,
        "eval speakers must be disjoint from the training speakers");
  check(eval.min_speakers >= 1 && eval.min_speakers <= eval.max_speakers &&
            eval.max_speakers <= eval.speaker_count,
        "eval speaker count range is invalid");
  check(eval.min_turns_per_speaker >= 1 &&
            eval.min_turns_per_speaker <= eval.max_turns_per_speaker,
        "eval turns-per-speaker range is invalid");
  check(eval.min_tokens >= 1 && eval.min_tokens <= eval.max_tokens,
        "eval token range is empty");
  check(train.batch_size > 0, "train.batch_size must be positive");
  check(train.learning_rate > 0.0, "train.learning_rate must be positive");
  check(train.steps == 0 || train.samples > 0, "train.samples must be positive when training");
  check(max_chunk_s > 0.0, "attribution.max_chunk_s must be positive");
  const double token_s = static_cast<double>(world.frames_per_token) * world.frame_duration_s;
  const auto chunk_tokens = static_cast<std::size_t>(max_chunk_s / token_s);
  check(chunk_tokens >= 1, "attribution.max_chunk_s is shorter than one token");
  check(chunk_tokens + 2 <= world.max_positions,
        "attribution.max_chunk_s yields chunks longer than world.max_positions");
  const auto longest_mix = static_cast<std::size_t>(mixer.max_duration_s / token_s);
  check(longest_mix + 2 <= world.max_positions,
        "mixer.max_duration_s yields samples longer than world.max_positions");
  check(cluster.max_clusters >= 1 && cluster.kmeans_restarts >= 1 &&
            cluster.kmeans_iterations >= 1,
        "cluster options must be positive");
  check(cluster.affinity_power > 0.0 && std::isfinite(cluster.affinity_power),
        "cluster.affinity_power must be positive");
}

std::string ExperimentConfig::canonical() const {
  auto& self = const_cast<ExperimentConfig&>(*this);
  std::vector<std::string> lines;
  for (auto& [key, field] : fields(self)) {
    if (key == "paths.out_dir" || key == "train.resume_from") continue;
    std::string value = std::visit(
        [](auto p) -> std::string {
          using P = decltype(p);
          if constexpr (std::is_same_v<P, std::size_t*>) {
            return std::to_string(*p);
          } else if constexpr (std::is_same_v<P, double*>) {
            return fmt_double(*p);
          } else if constexpr (std::is_same_v<P, std::string*>) {
            return *p;
          } else if constexpr (std::is_same_v<P, std::vector<double>*>) {
            std::string s;
            for (std::size_t i = 0; i < p->size(); ++i) s += (i ? "," : "") + fmt_double((*p)[i]);
            return s;
          } else {
            return affinity_name(*p.target);
          }
        },
        field);
    lines.push_back(key + "=" + value);
  }
  std::sort(lines.begin(), lines.end());
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

std::string ExperimentConfig::hash() const {
  Fnv1a h;
  h.text(canonical());
  return hex64(h.digest());
}

AttributionOptions ExperimentConfig::attribution_options() const {
  AttributionOptions o;
  o.max_chunk_s = max_chunk_s;
  o.cluster = cluster;
  o.config_hash = hash();
  return o;
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  ExperimentConfig cfg;
  auto table = fields(cfg);
  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash_pos = raw.find('#');
    const std::string line = trim(hash_pos == std::string::npos ? raw : raw.substr(0, hash_pos));
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::kConfig, where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    require(!cfg.explicit_keys.count(key), ErrorKind::kConfig,
            where + ": duplicate key '" + key + "'");
    if (key == "paths.out_dir") {
      require(!value.empty(), ErrorKind::kConfig, where + ": empty path");
      cfg.out_dir = value;
      cfg.explicit_keys.insert(key);
      continue;
    }
    auto it = std::find_if(table.begin(), table.end(),
                           [&](const auto& kv) { return kv.first == key; });
    require(it != table.end(), ErrorKind::kConfig, where + ": unknown key '" + key + "'");
    std::visit(
        [&](auto p) {
          using P = decltype(p);
          if constexpr (std::is_same_v<P, std::size_t*>) {
            *p = parse_integer<std::size_t>(value, where);
          } else if constexpr (std::is_same_v<P, double*>) {
            *p = parse_double(value, where);
          } else if constexpr (std::is_same_v<P, std::string*>) {
            *p = value;
          } else if constexpr (std::is_same_v<P, std::vector<double>*>) {
            p->clear();
            std::istringstream parts(value);
            std::string part;
            while (std::getline(parts, part, ',')) p->push_back(parse_double(trim(part), where));
          } else {
            if (value == "clamped") {
              *p.target = AffinityWeight::kClampedCosine;
            } else if (value == "shifted") {
              *p.target = AffinityWeight::kShiftedCosine;
            } else {
              fail(ErrorKind::kConfig, where + ": cluster.affinity must be clamped or shifted");
            }
          }
        },
        it->second);
    cfg.explicit_keys.insert(key);
  }
  cfg.model.feature_dim = cfg.world.feature_dim;
  cfg.model.model_dim = cfg.world.encoder_dim;
  cfg.model.vocab_size = cfg.world.vocab_size;
  cfg.model.max_positions = cfg.world.max_positions;
  cfg.derive_seeds();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kConfig, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

}  // namespace msaasr

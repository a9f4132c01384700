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


#include "msaasr/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "msaasr/error.hpp"
#include "msaasr/hash.hpp"
#include "msaasr/numerics/adamw.hpp"
#include "msaasr/rng.hpp"

namespace msaasr {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string speaker_label(std::int32_t speaker) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "spk-%03d", speaker);
  return buf;
}

std::int32_t parse_speaker_label(const std::string& s, const std::string& where) {
  int v = -1;
  char tail = 0;
  require(std::sscanf(s.c_str(), "spk-%d%c", &v, &tail) == 1 && v >= 0, ErrorKind::kData,
          where + ": malformed speaker reference '" + s + "'");
  return v;
}

std::string numbered(const char* prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%0*zu", prefix, width, i);
  return buf;
}

std::vector<std::string> token_words(std::span<const std::int32_t> tokens) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (auto t : tokens) out.push_back(std::to_string(t));
  return out;
}

std::string read_text(const fs::path& p, ErrorKind kind) {
  std::ifstream in(p, std::ios::binary);
  require(static_cast<bool>(in), kind, "cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  auto tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + tmp.string());
    out << text;
    require(static_cast<bool>(out), ErrorKind::kIo, "short write to " + tmp.string());
  }
  fs::rename(tmp, p);
}

json parse_json_line(const std::string& line, const std::string& where) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    fail(ErrorKind::kData, where + ": " + e.what());
  }
}

template <typename Fn>
void for_each_jsonl(const fs::path& path, Fn&& fn) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kData, "cannot read " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    json j = parse_json_line(line, where);
    try {
      fn(j, where);
    } catch (const json::exception& e) {
      fail(ErrorKind::kData, where + ": " + e.what());
    }
  }
}

std::string hash_tree(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  Fnv1a h;
  for (const auto& f : files) {
    h.text(fs::relative(f, root).generic_string());
    h.text(read_text(f, ErrorKind::kIo));
  }
  return hex64(h.digest());
}

bool finite_all(const Tensor& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](double v) { return std::isfinite(v); });
}

json summary_json(const EvalSummary& s) {
  json j;
  j["recordings"] = s.recordings;
  j["accuracy"] = s.accuracy;
  j["cpwer"] = s.cpwer;
  j["mean_cpwer"] = s.mean_cpwer;
  j["k_exact"] = s.k_exact;
  j["errors"] = s.errors;
  j["reference_words"] = s.reference_words;
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------
// Data

SpeakerTranscriptSet EvalRecording::reference() const {
  SpeakerTranscriptSet ref;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    ref[speaker_label(token_speakers[i])].push_back(std::to_string(tokens[i]));
  return ref;
}

std::vector<EvalRecording> make_eval_recordings(const SyntheticWorld& world,
                                                const EvalSetConfig& config, std::size_t count,
                                                std::uint64_t seed) {
  const auto& wc = world.config();
  require(config.first_speaker + config.speaker_count <= wc.num_speakers, ErrorKind::kConfig,
          "eval speakers exceed the world's speakers");
  require(config.max_speakers <= config.speaker_count, ErrorKind::kConfig,
          "eval.max_speakers exceeds eval.speaker_count");
  std::vector<EvalRecording> out;
  out.reserve(count);
  for (std::size_t r = 0; r < count; ++r) {
    Rng rng(Rng::derive(seed, r));
    const auto k = static_cast<std::size_t>(rng.between(
        static_cast<std::int64_t>(config.min_speakers), static_cast<std::int64_t>(config.max_speakers)));
    std::vector<std::int32_t> speakers;
    while (speakers.size() < k) {
      const auto s = static_cast<std::int32_t>(config.first_speaker + rng.below(config.speaker_count));
      if (std::find(speakers.begin(), speakers.end(), s) == speakers.end()) speakers.push_back(s);
    }
    std::vector<std::int32_t> order;
    for (auto s : speakers) {
      const auto n = rng.between(static_cast<std::int64_t>(config.min_turns_per_speaker),
                                 static_cast<std::int64_t>(config.max_turns_per_speaker));
      for (std::int64_t i = 0; i < n; ++i) order.push_back(s);
    }
    rng.shuffle(std::span<std::int32_t>(order));

    EvalRecording rec;
    rec.id = numbered("rec", r, 4);
    rec.num_speakers = k;
    std::vector<double> frames;
    for (auto s : order) {
      const auto len = rng.between(static_cast<std::int64_t>(config.min_tokens),
                                   static_cast<std::int64_t>(config.max_tokens));
      std::vector<std::int32_t> tokens(static_cast<std::size_t>(len));
      for (auto& t : tokens)
        t = static_cast<std::int32_t>(kFirstContentToken + rng.below(world.content_vocab()));
      SynthesizedTurn st = synth_turn(world, s, tokens, rng.next_u64());
      frames.insert(frames.end(), st.features.frames.data().begin(), st.features.frames.data().end());
      for (auto t : tokens) {
        rec.tokens.push_back(t);
        rec.token_speakers.push_back(s);
      }
    }
    rec.features.frame_duration_s = wc.frame_duration_s;
    const std::size_t rows = frames.size() / wc.feature_dim;
    rec.features.frames = Tensor({rows, wc.feature_dim}, std::move(frames));
    out.push_back(std::move(rec));
  }
  return out;
}

namespace {

std::uint64_t sample_seed(const ExperimentConfig& cfg, std::size_t i) {
  return Rng::derive(cfg.mixer.seed, i);
}
std::uint64_t noise_seed(const ExperimentConfig& cfg, std::size_t i) {
  return Rng::derive(sample_seed(cfg, i), 1);
}

}  // namespace

TrainingData build_training_data(const ExperimentConfig& cfg, const SyntheticWorld& world) {
  SurrogateEmbedder oracle(world, cfg.model.embedding_dim, cfg.surrogate_seed);
  TrainingData data;
  data.turns = generate_turns(world, oracle, cfg.corpus);
  const auto groups = group_similar(data.turns, cfg.mixer.theta, cfg.grouping_seed);
  data.samples.reserve(cfg.train.samples);
  for (std::size_t i = 0; i < cfg.train.samples; ++i) {
    data.samples.push_back(augment_noise(
        assemble_sample(data.turns, groups, cfg.mixer, sample_seed(cfg, i)),
        cfg.mixer.noise_level, noise_seed(cfg, i)));
  }
  return data;
}

std::string SynthSummary::to_json(const std::string& config_hash) const {
  json j;
  j["config_hash"] = config_hash;
  j["turns"] = turns;
  j["samples"] = samples;
  j["recordings"] = recordings;
  j["mean_speakers"] = mean_speakers;
  j["mean_duration_s"] = mean_duration_s;
  j["invalid_samples"] = invalid_samples;
  j["corpus_hash"] = corpus_hash;
  return j.dump(2);
}

SynthSummary write_dataset(const ExperimentConfig& cfg, const fs::path& data_dir) {
  cfg.validate();
  SyntheticWorld world(cfg.world);
  const TrainingData data = build_training_data(cfg, world);
  const auto recordings =
      make_eval_recordings(world, cfg.eval, cfg.eval.recordings, cfg.eval.seed);

  fs::remove_all(data_dir);
  fs::create_directories(data_dir / "turns");
  fs::create_directories(data_dir / "eval");

  write_turn_manifest(data_dir / "turns.jsonl", data.turns);
  for (const Turn& t : data.turns) write_features(data_dir / "turns" / t.id, t.features, cfg.corpus.seed);

  SynthSummary summary;
  {
    std::ofstream out(data_dir / "samples.jsonl", std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::kIo, "cannot write samples.jsonl");
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
      const MixedSample& s = data.samples[i];
      json j;
      j["id"] = numbered("sample", i, 6);
      j["turns"] = s.turn_ids;
      j["turn_groups"] = s.turn_groups;
      j["noise_level"] = cfg.mixer.noise_level;
      j["noise_seed"] = noise_seed(cfg, i);
      out << j.dump() << '\n';
      summary.mean_speakers += static_cast<double>(s.group_count());
      summary.mean_duration_s += s.duration_s();
      if (!validate_sample(s, data.turns, cfg.mixer).empty()) ++summary.invalid_samples;
    }
    require(static_cast<bool>(out), ErrorKind::kIo, "short write to samples.jsonl");
  }
  {
    std::ofstream out(data_dir / "eval" / "recordings.jsonl", std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::kIo, "cannot write recordings.jsonl");
    for (const EvalRecording& rec : recordings) {
      write_features(data_dir / "eval" / rec.id, rec.features, cfg.eval.seed);
      write_text(data_dir / "eval" / (rec.id + ".ref.json"),
                 transcript_set_to_json(rec.reference()) + "\n");
      json j;
      j["id"] = rec.id;
      j["num_speakers"] = rec.num_speakers;
      j["tokens"] = rec.tokens;
      std::vector<std::string> refs;
      for (auto s : rec.token_speakers) refs.push_back(speaker_label(s));
      j["speaker_refs"] = refs;
      out << j.dump() << '\n';
    }
    require(static_cast<bool>(out), ErrorKind::kIo, "short write to recordings.jsonl");
  }

  summary.turns = data.turns.size();
  summary.samples = data.samples.size();
  summary.recordings = recordings.size();
  if (!data.samples.empty()) {
    summary.mean_speakers /= static_cast<double>(data.samples.size());
    summary.mean_duration_s /= static_cast<double>(data.samples.size());
  }
  summary.corpus_hash = hash_tree(data_dir);
  write_text(data_dir / "synth.json", summary.to_json(cfg.hash()) + "\n");
  return summary;
}

TrainingData load_training_data(const ExperimentConfig& cfg, const fs::path& data_dir) {
  require(fs::exists(data_dir / "turns.jsonl"), ErrorKind::kData,
          "no dataset under " + data_dir.string() + " (run synth first)");
  TrainingData data;
  std::unordered_map<std::string, std::size_t> by_id;
  for_each_jsonl(data_dir / "turns.jsonl", [&](const json& j, const std::string& where) {
    const auto id = j.at("id").get<std::string>();
    require(id.find('/') == std::string::npos && !id.empty(), ErrorKind::kData,
            where + ": bad turn id");
    AcousticFeatures feats = read_features(data_dir / "turns" / id);
    require(feats.dim() == cfg.world.feature_dim, ErrorKind::kData,
            where + ": feature dimension does not match the world configuration");
    auto emb = j.at("embedding").get<std::vector<double>>();
    require(emb.size() == cfg.model.embedding_dim, ErrorKind::kData,
            where + ": embedding dimension does not match model.embedding_dim");
    require(by_id.emplace(id, data.turns.size()).second, ErrorKind::kData,
            where + ": duplicate turn id " + id);
    data.turns.push_back(restore_turn(id, j.at("tokens").get<std::vector<std::int32_t>>(),
                                      j.at("duration_s").get<double>(), std::move(emb),
                                      std::move(feats),
                                      parse_speaker_label(j.at("speaker_ref").get<std::string>(), where)));
  });
  for_each_jsonl(data_dir / "samples.jsonl", [&](const json& j, const std::string& where) {
    std::vector<std::size_t> order;
    for (const auto& id : j.at("turns")) {
      auto it = by_id.find(id.get<std::string>());
      require(it != by_id.end(), ErrorKind::kData,
              where + ": unknown turn " + id.get<std::string>());
      order.push_back(it->second);
    }
    const auto groups = j.at("turn_groups").get<std::vector<std::size_t>>();
    require(groups.size() == order.size() && !order.empty(), ErrorKind::kData,
            where + ": turn_groups does not match turns");
    data.samples.push_back(augment_noise(compose_sample(data.turns, order, groups),
                                         j.at("noise_level").get<double>(),
                                         j.at("noise_seed").get<std::uint64_t>()));
  });
  return data;
}

std::vector<EvalRecording> load_eval_recordings(const fs::path& data_dir) {
  std::vector<EvalRecording> out;
  for_each_jsonl(data_dir / "eval" / "recordings.jsonl", [&](const json& j, const std::string& where) {
    EvalRecording rec;
    rec.id = j.at("id").get<std::string>();
    rec.num_speakers = j.at("num_speakers").get<std::size_t>();
    rec.tokens = j.at("tokens").get<std::vector<std::int32_t>>();
    for (const auto& s : j.at("speaker_refs"))
      rec.token_speakers.push_back(parse_speaker_label(s.get<std::string>(), where));
    require(rec.tokens.size() == rec.token_speakers.size() && !rec.tokens.empty(),
            ErrorKind::kData, where + ": tokens and speaker_refs differ in length");
    rec.features = read_features(data_dir / "eval" / rec.id);
    out.push_back(std::move(rec));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Training

EmbeddingSequence decoder_targets(const MixedSample& sample) {
  const std::size_t w = sample.tokens.size();
  require(w >= 1 && sample.targets.length() == w, ErrorKind::kDimension,
          "decoder_targets: one target per content token required");
  const std::size_t n = w + 2;
  EmbeddingSequence t{Tensor::zeros(n, sample.targets.dim()), std::vector<bool>(n, false)};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t src = i == 0 ? 0 : (i == n - 1 ? w - 1 : i - 1);
    auto from = sample.targets.rows.row(src);
    std::copy(from.begin(), from.end(), t.rows.row(i).begin());
    t.mask[i] = i > 0 && i < n - 1 && sample.targets.mask[i - 1];
  }
  return t;
}

double learning_rate_at(const TrainConfig& cfg, std::size_t step) {
  double lr = cfg.learning_rate;
  if (cfg.warmup_steps > 0)
    lr *= std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(cfg.warmup_steps));
  const double half = static_cast<double>(cfg.steps) / 2.0;
  const auto s = static_cast<double>(step);
  if (s > half) lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * (s - half) / half));
  return lr;
}

std::vector<std::size_t> batch_indices(const TrainConfig& cfg, std::size_t step,
                                       std::size_t sample_count) {
  require(sample_count > 0, ErrorKind::kData, "no training samples");
  Rng rng(Rng::derive(cfg.seed, step));
  std::vector<std::size_t> idx(cfg.batch_size);
  for (auto& i : idx) i = static_cast<std::size_t>(rng.below(sample_count));
  return idx;
}

LossBreakdown sample_loss(const SpeakerModuleParams& params, const SyntheticWorld& world,
                          const MixedSample& sample, const LossWeights& weights,
                          std::vector<Tensor>* grads) {
  ad::Graph g;
  BoundParams bp(g, params, grads != nullptr);
  const AsrOutput asr = gold_transcript_output(world, sample.features, sample.tokens);
  const EmbeddingSequence targets = decoder_targets(sample);
  ad::Var hs = speaker_encode(g, bp, sample.features.frames);
  ad::Var e = speaker_decode(g, bp, asr.tokens, world.token_embedding(),
                             g.constant(asr.encoder_features), hs);
  LossBreakdown br;
  ad::Var loss = ead_loss(e, targets, weights, &br);
  if (grads != nullptr && std::isfinite(br.total)) {
    g.backward(loss);
    for (std::size_t k = 0; k < grads->size(); ++k) {
      const Tensor& gr = g.grad(bp.vars()[k]);
      if (gr.empty()) continue;
      auto acc = (*grads)[k].data();
      for (std::size_t i = 0; i < gr.size(); ++i) acc[i] += gr[i];
    }
  }
  return br;
}

void check_checkpoint_compatible(const Checkpoint& ckpt, const ExperimentConfig& cfg,
                                 const SyntheticWorld& world, bool require_experiment_hash) {
  require(ckpt.world_config_hash == hex64(world.config_hash()), ErrorKind::kConfig,
          "checkpoint was trained against a different ASR world (world config hash " +
              ckpt.world_config_hash + ", current " + hex64(world.config_hash()) + ")");
  require(ckpt.params.config().canonical() == cfg.model.canonical(), ErrorKind::kConfig,
          "checkpoint model configuration differs from the current config");
  if (require_experiment_hash) {
    require(ckpt.experiment_config_hash == cfg.hash(), ErrorKind::kConfig,
            "config hash mismatch: checkpoint " + ckpt.experiment_config_hash + ", current " +
                cfg.hash());
  }
}

TrainResult train_model(const ExperimentConfig& cfg, const SyntheticWorld& world,
                        const TrainingData& data, const TrainOptions& options) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  cfg.validate();
  require(world.config().canonical() == cfg.world.canonical(), ErrorKind::kConfig,
          "train_model: world does not match the config");
  require(!data.samples.empty(), ErrorKind::kData, "train_model: no training samples");

  TrainResult result;
  result.world_hash_before = world.parameter_hash();

  AdamWOptions ao;
  ao.learning_rate = cfg.train.learning_rate;
  ao.beta1 = cfg.train.beta1;
  ao.beta2 = cfg.train.beta2;
  ao.epsilon = cfg.train.epsilon;
  ao.weight_decay = cfg.train.weight_decay;
  AdamW opt(ao);

  SpeakerModuleParams params;
  if (options.resume) {
    check_checkpoint_compatible(*options.resume, cfg, world, true);
    params = options.resume->params;
    opt.restore(options.resume->optimizer_step, options.resume->adam_m, options.resume->adam_v);
  } else {
    params = SpeakerModuleParams::initialize(cfg.model);
  }

  std::vector<std::string> names;
  for (const auto& t : params.tensors()) names.push_back(t.name);

  const auto dev = cfg.train.eval_every > 0 && cfg.train.dev_recordings > 0
                       ? make_eval_recordings(world, cfg.eval, cfg.train.dev_recordings,
                                              Rng::derive(cfg.eval.seed, 0xdef))
                       : std::vector<EvalRecording>{};
  const AttributionOptions attr = cfg.attribution_options();

  auto make_checkpoint = [&]() {
    Checkpoint c;
    c.params = params;
    c.world_seed = cfg.world.seed;
    c.world_config_hash = hex64(world.config_hash());
    c.experiment_config_hash = cfg.hash();
    c.optimizer_step = opt.step_count();
    c.adam_m = opt.first_moments();
    c.adam_v = opt.second_moments();
    c.notes = "steps=" + std::to_string(opt.step_count()) + "/" + std::to_string(cfg.train.steps);
    return c;
  };

  const std::size_t start = static_cast<std::size_t>(opt.step_count());
  const std::size_t end = std::min(cfg.train.steps, options.stop_after.value_or(cfg.train.steps));
  for (std::size_t step = start; step < end; ++step) {
    const double lr = learning_rate_at(cfg.train, step);
    opt.set_learning_rate(lr);
    std::vector<Tensor> grads;
    for (const auto& t : params.tensors()) grads.push_back(Tensor(t.value.shape()));

    TrainStepLog entry;
    entry.step = step;
    entry.learning_rate = lr;
    const auto batch = batch_indices(cfg.train, step, data.samples.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      LossBreakdown br;
      try {
        br = sample_loss(params, world, data.samples[batch[b]], cfg.loss, &grads);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kNumeric) throw;
        fail(ErrorKind::kNumeric, "step " + std::to_string(step) + ", sample " +
                                      std::to_string(batch[b]) + ": " + e.what());
      }
      require(std::isfinite(br.total), ErrorKind::kNumeric,
              "non-finite loss at step " + std::to_string(step) + " on sample " +
                  std::to_string(batch[b]) + " (l1=" + std::to_string(br.l1) +
                  " l2=" + std::to_string(br.l2) + " l3=" + std::to_string(br.l3) + ")");
      entry.loss.l1 += br.l1;
      entry.loss.l2 += br.l2;
      entry.loss.l3 += br.l3;
      entry.loss.total += br.total;
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    entry.loss.l1 *= inv;
    entry.loss.l2 *= inv;
    entry.loss.l3 *= inv;
    entry.loss.total *= inv;
    for (std::size_t k = 0; k < grads.size(); ++k) {
      for (double& v : grads[k].data()) v *= inv;
      require(finite_all(grads[k]), ErrorKind::kNumeric,
              "non-finite gradient for " + names[k] + " at step " + std::to_string(step));
    }

    std::vector<Tensor*> ps;
    std::vector<const Tensor*> gs;
    for (std::size_t k = 0; k < grads.size(); ++k) {
      ps.push_back(&params.tensors()[k].value);
      gs.push_back(&grads[k]);
    }
    opt.step(ps, gs, names);
    for (const auto& t : params.tensors())
      require(finite_all(t.value), ErrorKind::kNumeric,
              "parameter " + t.name + " diverged at step " + std::to_string(step));

    result.log.steps.push_back(entry);
    if (options.on_step) options.on_step(entry);

    const std::size_t done = step + 1;
    if (!dev.empty() && (done % cfg.train.eval_every == 0 || done == cfg.train.steps)) {
      const EvalSummary s = evaluate_recordings(params, world, dev, true, attr);
      DevEvalLog ev{done, s.accuracy, s.cpwer};
      result.log.evals.push_back(ev);
      if (options.on_eval) options.on_eval(ev);
    }
    if (options.checkpoint_dir && cfg.train.checkpoint_every > 0 &&
        done % cfg.train.checkpoint_every == 0) {
      save_checkpoint(*options.checkpoint_dir / (numbered("step", done, 6) + ".msas"),
                      make_checkpoint());
    }
  }

  result.world_hash_after = world.parameter_hash();
  require(result.world_hash_before == result.world_hash_after, ErrorKind::kData,
          "frozen ASR parameters changed during training");
  result.checkpoint = make_checkpoint();
  result.seconds = std::chrono::duration<double>(clock::now() - t0).count();
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

double permutation_accuracy(const std::vector<std::int32_t>& truth,
                            const std::vector<std::size_t>& predicted) {
  require(truth.size() == predicted.size() && !truth.empty(), ErrorKind::kDimension,
          "permutation_accuracy: label vectors must be non-empty and equally long");
  std::map<std::int32_t, std::size_t> tix;
  std::map<std::size_t, std::size_t> pix;
  for (auto t : truth) tix.emplace(t, tix.size());
  for (auto p : predicted) pix.emplace(p, pix.size());
  const std::size_t n = std::max(tix.size(), pix.size());
  std::vector<std::vector<std::int64_t>> cost(n, std::vector<std::int64_t>(n, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) --cost[tix[truth[i]]][pix[predicted[i]]];
  const auto perm = optimal_assignment(cost);
  std::int64_t correct = 0;
  for (std::size_t r = 0; r < n; ++r) correct -= cost[r][perm[r]];
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

SpeakerTranscriptSet hypothesis_set(const AttributedTranscript& transcript) {
  SpeakerTranscriptSet hyp;
  for (const auto& s : transcript.speakers) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "hyp-%02zu", s.id);
    hyp[buf] = token_words(s.tokens);
  }
  return hyp;
}

EvalSummary evaluate_recordings(const SpeakerModuleParams& params, const SyntheticWorld& world,
                                const std::vector<EvalRecording>& recordings, bool gold_tokens,
                                const AttributionOptions& options, bool oracle_k) {
  EvalSummary s;
  std::size_t scored_tokens = 0, correct_tokens = 0, k_hits = 0;
  double cpwer_sum = 0.0;
  for (const EvalRecording& rec : recordings) {
    std::optional<std::span<const std::int32_t>> gold;
    if (gold_tokens) gold = std::span<const std::int32_t>(rec.tokens);
    std::optional<std::size_t> k_hint;
    if (oracle_k) k_hint = rec.num_speakers;
    const AttributedTranscript tr =
        attribute_recording(params, world, rec.features, gold, k_hint, options);
    RecordingResult rr;
    rr.id = rec.id;
    rr.true_k = rec.num_speakers;
    rr.k = tr.k;
    const auto labels = tr.token_labels();
    rr.tokens = labels.size();
    if (labels.size() == rec.token_speakers.size()) {
      rr.accuracy = permutation_accuracy(rec.token_speakers, labels);
      scored_tokens += labels.size();
      correct_tokens += static_cast<std::size_t>(std::llround(rr.accuracy * static_cast<double>(labels.size())));
    } else {
      rr.accuracy = std::nan("");
    }
    rr.report = cpwer(rec.reference(), hypothesis_set(tr));
    s.errors += rr.report.errors();
    s.reference_words += rr.report.reference_words;
    cpwer_sum += rr.report.cpwer;
    k_hits += rr.k == rr.true_k;
    s.per_recording.push_back(std::move(rr));
  }
  s.recordings = recordings.size();
  if (!recordings.empty()) {
    const auto n = static_cast<double>(recordings.size());
    s.accuracy = scored_tokens ? static_cast<double>(correct_tokens) / static_cast<double>(scored_tokens) : 0.0;
    s.cpwer = static_cast<double>(s.errors) / static_cast<double>(s.reference_words);
    s.mean_cpwer = cpwer_sum / n;
    s.k_exact = static_cast<double>(k_hits) / n;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Commands

std::string cmd_synth(const ExperimentConfig& cfg, const RunPaths& paths) {
  return write_dataset(cfg, paths.data_dir()).to_json(cfg.hash());
}

std::string cmd_train(const ExperimentConfig& cfg, const RunPaths& paths,
                      const std::function<void(const std::string&)>& progress) {
  SyntheticWorld world(cfg.world);
  const TrainingData data = load_training_data(cfg, paths.data_dir());
  require(data.samples.size() == cfg.train.samples, ErrorKind::kData,
          "dataset has " + std::to_string(data.samples.size()) + " samples, config expects " +
              std::to_string(cfg.train.samples) + " (re-run synth)");

  TrainOptions opts;
  if (!cfg.train.resume_from.empty()) opts.resume = load_checkpoint(cfg.train.resume_from);
  if (cfg.train.checkpoint_every > 0) {
    opts.checkpoint_dir = paths.out_dir / "checkpoints";
    fs::create_directories(*opts.checkpoint_dir);
  }

  fs::create_directories(paths.out_dir);
  std::ofstream log(paths.train_log(), opts.resume ? std::ios::app : std::ios::trunc);
  require(static_cast<bool>(log), ErrorKind::kIo, "cannot write " + paths.train_log().string());
  const std::size_t log_every = std::max<std::size_t>(cfg.train.log_every, 1);
  opts.on_step = [&](const TrainStepLog& e) {
    json j;
    j["step"] = e.step;
    j["lr"] = e.learning_rate;
    j["l1"] = e.loss.l1;
    j["l2"] = e.loss.l2;
    j["l3"] = e.loss.l3;
    j["total"] = e.loss.total;
    log << j.dump() << '\n';
    if (progress && (e.step % log_every == 0 || e.step + 1 == cfg.train.steps)) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "step %zu lr %.3g loss %.4f (l1 %.4f l2 %.4f l3 %.4f)",
                    e.step, e.learning_rate, e.loss.total, e.loss.l1, e.loss.l2, e.loss.l3);
      progress(buf);
    }
  };
  opts.on_eval = [&](const DevEvalLog& e) {
    json j;
    j["step"] = e.step;
    j["dev_accuracy"] = e.accuracy;
    j["dev_cpwer"] = e.cpwer;
    log << j.dump() << '\n';
    if (progress) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "  dev after %zu steps: accuracy %.4f cpWER %.4f", e.step,
                    e.accuracy, e.cpwer);
      progress(buf);
    }
  };

  const TrainResult r = train_model(cfg, world, data, opts);
  log.flush();
  save_checkpoint(paths.checkpoint(), r.checkpoint);

  json j;
  j["config_hash"] = cfg.hash();
  j["world_hash_before"] = hex64(r.world_hash_before);
  j["world_hash_after"] = hex64(r.world_hash_after);
  j["model_hash"] = hex64(r.checkpoint.params.hash());
  j["parameters"] = r.checkpoint.params.scalar_count();
  j["steps"] = r.checkpoint.optimizer_step;
  if (!r.log.steps.empty()) {
    const auto& last = r.log.steps.back().loss;
    j["final_loss"] = {{"l1", last.l1}, {"l2", last.l2}, {"l3", last.l3}, {"total", last.total}};
  }
  if (!r.log.evals.empty()) {
    j["dev_accuracy"] = r.log.evals.back().accuracy;
    j["dev_cpwer"] = r.log.evals.back().cpwer;
  }
  j["seconds"] = r.seconds;
  const std::string text = j.dump(2);
  write_text(paths.train_summary(), text + "\n");
  return text;
}

std::string cmd_infer(const ExperimentConfig& cfg, const RunPaths& paths, const InferRequest& req) {
  SyntheticWorld world(cfg.world);
  const fs::path ckpt_path = req.checkpoint.empty() ? paths.checkpoint() : req.checkpoint;
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  check_checkpoint_compatible(ckpt, cfg, world, true);

  AcousticFeatures feats;
  std::vector<std::int32_t> gold;
  bool have_gold = false;
  const fs::path manifest = paths.data_dir() / "eval" / "recordings.jsonl";
  bool found = false;
  if (fs::exists(manifest) && req.recording.find('/') == std::string::npos) {
    for (EvalRecording& rec : load_eval_recordings(paths.data_dir())) {
      if (rec.id != req.recording) continue;
      feats = std::move(rec.features);
      gold = std::move(rec.tokens);
      have_gold = true;
      found = true;
      break;
    }
  }
  if (!found) {
    fs::path base = req.recording;
    if (base.extension() == ".f32" || base.extension() == ".json") base.replace_extension();
    require(fs::exists(fs::path(base).concat(".f32")), ErrorKind::kData,
            "unknown recording '" + req.recording + "' (not an eval id or feature file)");
    feats = read_features(base);
    have_gold = false;
  }
  require(feats.dim() == cfg.world.feature_dim, ErrorKind::kData,
          "recording feature dimension does not match the world configuration");
  if (req.gold_tokens_file) {
    const json j = parse_json_line(read_text(*req.gold_tokens_file, ErrorKind::kData),
                                   req.gold_tokens_file->string());
    require(j.is_array(), ErrorKind::kData,
            req.gold_tokens_file->string() + ": expected a JSON array of token ids");
    gold = j.get<std::vector<std::int32_t>>();
    have_gold = true;
  }
  std::optional<std::span<const std::int32_t>> gold_span;
  if (req.gold_tokens || req.gold_tokens_file) {
    require(have_gold, ErrorKind::kData,
            "--gold-tokens needs an eval recording id or a token file");
    gold_span = std::span<const std::int32_t>(gold);
  }
  const AttributedTranscript tr =
      attribute_recording(ckpt.params, world, feats, gold_span, req.num_speakers,
                          cfg.attribution_options());
  return tr.to_json();
}

namespace {

SpeakerTranscriptSet read_any_transcript(const fs::path& path) {
  const std::string text = read_text(path, ErrorKind::kData);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception&) {
    return parse_transcript_set(text, path.string());  // reports the parse error
  }
  if (j.is_object() && j.contains("speakers") && j["speakers"].is_array()) {
    SpeakerTranscriptSet out;
    try {
      for (const auto& s : j["speakers"]) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "hyp-%02zu", s.at("id").get<std::size_t>());
        out[buf] = token_words(s.at("tokens").get<std::vector<std::int32_t>>());
      }
    } catch (const json::exception& e) {
      fail(ErrorKind::kData, path.string() + ": " + e.what());
    }
    return out;
  }
  return parse_transcript_set(text, path.string());
}

}  // namespace

std::string cmd_eval_files(const fs::path& reference, const fs::path& hypothesis) {
  const SpeakerTranscriptSet ref = read_any_transcript(reference);
  const SpeakerTranscriptSet hyp = read_any_transcript(hypothesis);
  return cpwer(ref, hyp).to_json();
}

std::string cmd_eval_run(const ExperimentConfig& cfg, const RunPaths& paths) {
  SyntheticWorld world(cfg.world);
  const Checkpoint ckpt = load_checkpoint(paths.checkpoint());
  check_checkpoint_compatible(ckpt, cfg, world, true);
  const auto recordings = load_eval_recordings(paths.data_dir());
  require(!recordings.empty(), ErrorKind::kData, "no eval recordings");
  const AttributionOptions opts = cfg.attribution_options();

  const EvalSummary gold = evaluate_recordings(ckpt.params, world, recordings, true, opts);
  const EvalSummary decoded = evaluate_recordings(ckpt.params, world, recordings, false, opts);
  const EvalSummary oracle = evaluate_recordings(ckpt.params, world, recordings, true, opts, true);

  json j;
  j["config_hash"] = cfg.hash();
  j["world_hash"] = hex64(world.parameter_hash());
  j["model_hash"] = hex64(ckpt.params.hash());
  j["gold"] = summary_json(gold);
  j["decoded"] = summary_json(decoded);
  j["gold_oracle_k"] = summary_json(oracle);
  const std::string text = j.dump(2);
  write_text(paths.metrics(), text + "\n");

  std::string details;
  for (std::size_t i = 0; i < recordings.size(); ++i) {
    json d;
    d["id"] = recordings[i].id;
    d["true_k"] = gold.per_recording[i].true_k;
    d["k"] = gold.per_recording[i].k;
    d["accuracy"] = gold.per_recording[i].accuracy;
    d["cpwer_gold"] = gold.per_recording[i].report.cpwer;
    d["cpwer_decoded"] = decoded.per_recording[i].report.cpwer;
    details += d.dump() + "\n";
  }
  write_text(paths.out_dir / "eval_details.jsonl", details);
  return text;
}

}  // namespace msaasr

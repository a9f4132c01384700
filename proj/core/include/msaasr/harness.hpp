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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "msaasr/attribution.hpp"
#include "msaasr/cpwer_eval.hpp"
#include "msaasr/experiment_config.hpp"
#include "msaasr/speaker_module.hpp"
#include "msaasr/turn_mixer.hpp"

namespace msaasr {

// ---------------------------------------------------------------------------
// Data

struct EvalRecording {
  std::string id;
  AcousticFeatures features;
  std::vector<std::int32_t> tokens;          // spoken content tokens in order
  std::vector<std::int32_t> token_speakers;  // world speaker id per token
  std::size_t num_speakers = 0;

  SpeakerTranscriptSet reference() const;
};

std::vector<EvalRecording> make_eval_recordings(const SyntheticWorld& world,
                                                const EvalSetConfig& config, std::size_t count,
                                                std::uint64_t seed);

struct TrainingData {
  std::vector<Turn> turns;
  std::vector<MixedSample> samples;
};

// Builds the training corpus in memory; used by synth and by tests.
TrainingData build_training_data(const ExperimentConfig& cfg, const SyntheticWorld& world);

struct SynthSummary {
  std::size_t turns = 0;
  std::size_t samples = 0;
  std::size_t recordings = 0;
  double mean_speakers = 0.0;
  double mean_duration_s = 0.0;
  std::size_t invalid_samples = 0;
  std::string corpus_hash;  // over every byte written

  std::string to_json(const std::string& config_hash) const;
};

// Layout under `data_dir`:
//   turns.jsonl, turns/<id>.{f32,json}
//   samples.jsonl  (samples reference turns; features are rebuilt on load)
//   eval/recordings.jsonl, eval/<id>.{f32,json}
SynthSummary write_dataset(const ExperimentConfig& cfg, const std::filesystem::path& data_dir);
TrainingData load_training_data(const ExperimentConfig& cfg, const std::filesystem::path& data_dir);
std::vector<EvalRecording> load_eval_recordings(const std::filesystem::path& data_dir);

// ---------------------------------------------------------------------------
// Training

// sot/eot rows borrow a neighbouring target and are masked out of the loss.
EmbeddingSequence decoder_targets(const MixedSample& sample);

double learning_rate_at(const TrainConfig& cfg, std::size_t step);
std::vector<std::size_t> batch_indices(const TrainConfig& cfg, std::size_t step,
                                       std::size_t sample_count);

struct TrainStepLog {
  std::size_t step = 0;
  double learning_rate = 0.0;
  LossBreakdown loss;
};

struct DevEvalLog {
  std::size_t step = 0;
  double accuracy = 0.0;
  double cpwer = 0.0;
};

struct TrainLog {
  std::vector<TrainStepLog> steps;
  std::vector<DevEvalLog> evals;
};

struct TrainOptions {
  std::optional<Checkpoint> resume;
  std::optional<std::size_t> stop_after;  // global step count at which to stop early
  std::optional<std::filesystem::path> checkpoint_dir;
  std::function<void(const TrainStepLog&)> on_step;
  std::function<void(const DevEvalLog&)> on_eval;
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainLog log;
  std::uint64_t world_hash_before = 0;
  std::uint64_t world_hash_after = 0;
  double seconds = 0.0;
};

LossBreakdown sample_loss(const SpeakerModuleParams& params, const SyntheticWorld& world,
                          const MixedSample& sample, const LossWeights& weights,
                          std::vector<Tensor>* grads);

TrainResult train_model(const ExperimentConfig& cfg, const SyntheticWorld& world,
                        const TrainingData& data, const TrainOptions& options = {});

// ---------------------------------------------------------------------------
// Evaluation

// Token accuracy under the best one-to-one label mapping (Hungarian on the
// confusion matrix). Tokens in unmatched clusters count as wrong.
double permutation_accuracy(const std::vector<std::int32_t>& truth,
                            const std::vector<std::size_t>& predicted);

SpeakerTranscriptSet hypothesis_set(const AttributedTranscript& transcript);

struct RecordingResult {
  std::string id;
  std::size_t true_k = 0;
  std::size_t k = 0;
  std::size_t tokens = 0;
  double accuracy = 0.0;  // meaningful when token counts line up (gold mode)
  CpwerReport report;
};

struct EvalSummary {
  std::size_t recordings = 0;
  double accuracy = 0.0;   // token-weighted
  double cpwer = 0.0;      // total errors / total reference words
  double mean_cpwer = 0.0; // per-recording average
  double k_exact = 0.0;
  std::size_t errors = 0;
  std::size_t reference_words = 0;
  std::vector<RecordingResult> per_recording;
};

EvalSummary evaluate_recordings(const SpeakerModuleParams& params, const SyntheticWorld& world,
                                const std::vector<EvalRecording>& recordings, bool gold_tokens,
                                const AttributionOptions& options,
                                bool oracle_k = false);

// ---------------------------------------------------------------------------
// Commands. Each returns the JSON it reports.

struct RunPaths {
  std::filesystem::path out_dir;
  std::filesystem::path data_dir() const { return out_dir / "data"; }
  std::filesystem::path checkpoint() const { return out_dir / "model.msas"; }
  std::filesystem::path train_log() const { return out_dir / "train_log.jsonl"; }
  std::filesystem::path train_summary() const { return out_dir / "train_summary.json"; }
  std::filesystem::path metrics() const { return out_dir / "metrics.json"; }
};

std::string cmd_synth(const ExperimentConfig& cfg, const RunPaths& paths);
std::string cmd_train(const ExperimentConfig& cfg, const RunPaths& paths,
                      const std::function<void(const std::string&)>& progress = {});

struct InferRequest {
  std::filesystem::path checkpoint;
  std::string recording;  // eval recording id, or a feature path base
  bool gold_tokens = false;
  std::optional<std::filesystem::path> gold_tokens_file;
  std::optional<std::size_t> num_speakers;
};
std::string cmd_infer(const ExperimentConfig& cfg, const RunPaths& paths, const InferRequest& req);

// Scores a hypothesis transcript (or attributed transcript JSON) against a
// reference transcript set.
std::string cmd_eval_files(const std::filesystem::path& reference,
                           const std::filesystem::path& hypothesis);
// Full held-out evaluation of the trained checkpoint; writes metrics.json.
std::string cmd_eval_run(const ExperimentConfig& cfg, const RunPaths& paths);

// Throws unless the checkpoint was produced under the same world and config.
void check_checkpoint_compatible(const Checkpoint& ckpt, const ExperimentConfig& cfg,
                                 const SyntheticWorld& world, bool require_experiment_hash);

}  // namespace msaasr

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
#include <set>
#include <string>
#include <vector>

#include "msaasr/asr_provider.hpp"
#include "msaasr/attribution.hpp"
#include "msaasr/ead_loss.hpp"
#include "msaasr/speaker_module.hpp"
#include "msaasr/turn_mixer.hpp"

namespace msaasr {

struct TrainConfig {
  std::size_t samples = 2000;
  std::size_t steps = 2000;
  std::size_t batch_size = 16;
  double learning_rate = 3e-3;
  std::size_t warmup_steps = 100;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t log_every = 50;
  std::size_t eval_every = 500;
  std::size_t dev_recordings = 20;
  std::size_t checkpoint_every = 0;  // 0: only the final checkpoint
  std::string resume_from;
  std::uint64_t seed = 0;
};

struct EvalSetConfig {
  std::size_t recordings = 200;
  std::size_t first_speaker = 192;
  std::size_t speaker_count = 64;
  std::size_t min_speakers = 2;
  std::size_t max_speakers = 5;
  std::size_t min_turns_per_speaker = 2;
  std::size_t max_turns_per_speaker = 3;
  std::size_t min_tokens = 6;
  std::size_t max_tokens = 20;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  WorldConfig world;
  SpeakerModuleConfig model;
  std::uint64_t surrogate_seed = 0;
  std::uint64_t grouping_seed = 0;
  CorpusConfig corpus;
  MixerConfig mixer;
  LossWeights loss;
  TrainConfig train;
  EvalSetConfig eval;
  ClusterOptions cluster;
  double max_chunk_s = 30.0;
  std::filesystem::path out_dir = "runs/default";

  // Keys given explicitly; derived seeds are only filled in for the rest.
  std::set<std::string> explicit_keys;

  void validate() const;
  // Sorted key=value listing of everything that affects results. Paths and
  // resume points are left out so that relocated runs hash the same.
  std::string canonical() const;
  std::string hash() const;
  // Re-derives every seed that was not set explicitly from `seed`.
  void derive_seeds();
  void set_seed(std::uint64_t s);
  AttributionOptions attribution_options() const;
};

ExperimentConfig parse_config(const std::string& text, const std::string& source);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace msaasr

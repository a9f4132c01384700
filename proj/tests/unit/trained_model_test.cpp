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


// Checks that need a trained checkpoint. The acceptance run leaves one in
// the directory named by MSAASR_TRAINED_RUN (with its config in
// MSAASR_TRAINED_CONFIG).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "msaasr/error.hpp"
#include "msaasr/harness.hpp"
#include "msaasr/rng.hpp"

using namespace msaasr;
namespace fs = std::filesystem;

namespace {

struct Trained {
  ExperimentConfig cfg;
  SyntheticWorld world{WorldConfig{}};
  Checkpoint ckpt;
  RunPaths paths;
};

const Trained& trained() {
  static const Trained t = [] {
    const char* run = std::getenv("MSAASR_TRAINED_RUN");
    const char* conf = std::getenv("MSAASR_TRAINED_CONFIG");
    REQUIRE_MESSAGE(run != nullptr, "MSAASR_TRAINED_RUN is not set");
    REQUIRE_MESSAGE(conf != nullptr, "MSAASR_TRAINED_CONFIG is not set");
    Trained out;
    out.cfg = load_config(conf);
    out.cfg.out_dir = run;
    out.world = SyntheticWorld(out.cfg.world);
    out.paths = RunPaths{run};
    out.ckpt = load_checkpoint(out.paths.checkpoint());
    return out;
  }();
  return t;
}

// Recordings of the given held-out speakers, alternating turns.
EvalRecording recording(const SyntheticWorld& world, const std::vector<std::int32_t>& speakers,
                        std::size_t turns, std::uint64_t seed, double sigma) {
  Rng rng(seed);
  EvalRecording rec;
  rec.id = "probe";
  rec.num_speakers = speakers.size();
  std::vector<double> frames;
  for (std::size_t t = 0; t < turns; ++t) {
    const std::int32_t s = speakers[t % speakers.size()];
    std::vector<std::int32_t> tokens(static_cast<std::size_t>(rng.between(6, 20)));
    for (auto& v : tokens) v = static_cast<std::int32_t>(rng.between(kFirstContentToken, 63));
    const auto st = synth_turn(world, s, tokens, rng.next_u64(), sigma);
    frames.insert(frames.end(), st.features.frames.data().begin(), st.features.frames.data().end());
    for (auto v : tokens) {
      rec.tokens.push_back(v);
      rec.token_speakers.push_back(s);
    }
  }
  const std::size_t dim = world.config().feature_dim;
  const std::size_t rows = frames.size() / dim;
  rec.features.frames = Tensor({rows, dim}, std::move(frames));
  rec.features.frame_duration_s = world.config().frame_duration_s;
  return rec;
}

std::vector<std::int32_t> pick_speakers(Rng& rng, std::size_t k) {
  std::vector<std::int32_t> s;
  while (s.size() < k) {
    const auto v = static_cast<std::int32_t>(192 + rng.below(64));
    if (std::find(s.begin(), s.end(), v) == s.end()) s.push_back(v);
  }
  return s;
}

}  // namespace

TEST_CASE("single-speaker recordings form one stream") {
  const auto& t = trained();
  Rng rng(11);
  int single = 0;
  for (std::uint64_t i = 0; i < 20; ++i) {
    const auto rec = recording(t.world, pick_speakers(rng, 1), 3, 100 + i, t.cfg.world.noise_sigma);
    const auto tr = attribute_recording(t.ckpt.params, t.world, rec.features, std::span<const std::int32_t>(rec.tokens),
                                        {}, t.cfg.attribution_options());
    single += tr.k == 1 ? 1 : 0;
    if (tr.k == 1) CHECK(tr.speakers.front().tokens == rec.tokens);
  }
  MESSAGE("K=1 on " << single << "/20 single-speaker recordings");
  CHECK(single >= 19);
}

TEST_CASE("two held-out speakers are separated") {
  const auto& t = trained();
  Rng rng(12);
  std::vector<EvalRecording> recs;
  for (std::uint64_t i = 0; i < 20; ++i)
    recs.push_back(recording(t.world, pick_speakers(rng, 2), 4, 200 + i, t.cfg.world.noise_sigma));
  const auto s = evaluate_recordings(t.ckpt.params, t.world, recs, true, t.cfg.attribution_options());
  MESSAGE("two-speaker accuracy " << s.accuracy << ", K exact " << s.k_exact);
  CHECK(s.accuracy >= 0.90);
}

TEST_CASE("chunk processing order does not change the partition") {
  const auto& t = trained();
  Rng rng(13);
  int checked = 0;
  for (std::uint64_t i = 0; i < 5; ++i) {
    const auto rec = recording(t.world, pick_speakers(rng, 3), 9, 300 + i, t.cfg.world.noise_sigma);
    auto opts = t.cfg.attribution_options();
    const auto chunks = chunk_stream(rec.features, opts.max_chunk_s, t.cfg.world.frames_per_token).size();
    REQUIRE(chunks >= 2);
    const std::span<const std::int32_t> gold(rec.tokens);
    const auto base = attribute_recording(t.ckpt.params, t.world, rec.features, gold, {}, opts);
    opts.chunk_order.resize(chunks);
    for (std::size_t c = 0; c < chunks; ++c) opts.chunk_order[c] = chunks - 1 - c;
    const auto flipped = attribute_recording(t.ckpt.params, t.world, rec.features, gold, {}, opts);
    CHECK(flipped.k == base.k);
    const auto a = base.token_labels(), b = flipped.token_labels();
    REQUIRE(a.size() == b.size());
    std::map<std::size_t, std::size_t> map;
    bool consistent = true;
    for (std::size_t j = 0; j < a.size(); ++j) {
      auto [it, fresh] = map.emplace(a[j], b[j]);
      consistent = consistent && it->second == b[j];
    }
    std::set<std::size_t> image;
    for (const auto& [x, y] : map) image.insert(y);
    CHECK(consistent);
    CHECK(image.size() == map.size());
    ++checked;
  }
  CHECK(checked == 5);
}

TEST_CASE("gold tokens do no worse than decoded tokens on noisy streams") {
  const auto& t = trained();
  Rng rng(14);
  std::vector<EvalRecording> recs;
  for (std::uint64_t i = 0; i < 20; ++i)
    recs.push_back(recording(t.world, pick_speakers(rng, 2 + i % 3), 5, 400 + i, 0.6));
  const auto opts = t.cfg.attribution_options();
  const auto gold = evaluate_recordings(t.ckpt.params, t.world, recs, true, opts);
  const auto decoded = evaluate_recordings(t.ckpt.params, t.world, recs, false, opts);
  MESSAGE("noisy streams: gold cpWER " << gold.cpwer << ", decoded cpWER " << decoded.cpwer);
  CHECK(decoded.cpwer > 0.0);
  CHECK(gold.cpwer <= decoded.cpwer);
}

TEST_CASE("infer honours --num-speakers and is deterministic") {
  const auto& t = trained();
  InferRequest req;
  req.recording = "rec-0007";
  req.gold_tokens = true;
  const std::string a = cmd_infer(t.cfg, t.paths, req);
  CHECK(cmd_infer(t.cfg, t.paths, req) == a);
  req.num_speakers = 1;
  const auto one = nlohmann::json::parse(cmd_infer(t.cfg, t.paths, req));
  REQUIRE(one["speakers"].size() == 1);
  const auto recs = load_eval_recordings(t.paths.data_dir());
  CHECK(one["speakers"][0]["tokens"].get<std::vector<std::int32_t>>() == recs[7].tokens);
}

TEST_CASE("training loss fell by at least half") {
  const auto& t = trained();
  std::vector<double> totals;
  std::ifstream log(t.paths.train_log());
  for (std::string line; std::getline(log, line);) {
    const auto j = nlohmann::json::parse(line);
    if (j.contains("total")) totals.push_back(j["total"].get<double>());
  }
  REQUIRE(totals.size() >= 200);
  double head = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < 50; ++i) head += totals[i] / 50.0;
  for (std::size_t i = totals.size() - 100; i < totals.size(); ++i) tail += totals[i] / 100.0;
  MESSAGE("moving-average loss " << head << " -> " << tail);
  CHECK(tail <= 0.5 * head);
}

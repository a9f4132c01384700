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


#include "msaasr/verify/battery.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <unistd.h>

#include "msaasr/attribution.hpp"
#include "msaasr/cpwer_eval.hpp"
#include "msaasr/ead_loss.hpp"
#include "msaasr/error.hpp"
#include "msaasr/harness.hpp"
#include "msaasr/hash.hpp"
#include "msaasr/numerics/grad_check.hpp"
#include "msaasr/rng.hpp"
#include "msaasr/speaker_module.hpp"
#include "msaasr/turn_mixer.hpp"
#include "msaasr/verify/oracles.hpp"

namespace msaasr::verify {
namespace {

using clock = std::chrono::steady_clock;

class Tally {
 public:
  void check(bool ok, const std::string& what) {
    ++checks_;
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    if (!ok) ++failed_;
  }
  void note(const std::string& s) { notes_.push_back(s); }
  bool ok() const { return failed_ == 0; }

  std::string detail() const {
    std::ostringstream out;
    out << (checks_ - failed_) << "/" << checks_ << " checks";
    for (const auto& n : notes_) out << "; " << n;
    for (const auto& f : failures_) out << "; FAILED " << f;
    return out.str();
  }

 private:
  std::size_t checks_ = 0, failed_ = 0;
  std::vector<std::string> failures_, notes_;
};

SuiteResult run_suite(const std::string& name, double budget, const std::function<void(Tally&)>& body) {
  SuiteResult r;
  r.name = name;
  r.budget_s = budget;
  const auto t0 = clock::now();
  Tally tally;
  try {
    body(tally);
    r.passed = tally.ok();
    r.detail = tally.detail();
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = tally.detail() + "; exception: " + e.what();
  }
  r.seconds = std::chrono::duration<double>(clock::now() - t0).count();
  return r;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

Tensor gaussian(Rng& rng, std::size_t r, std::size_t c) {
  Tensor t = Tensor::zeros(r, c);
  for (double& v : t.data()) v = rng.normal();
  return t;
}

EmbeddingSequence seq(Tensor rows) { return EmbeddingSequence::all_in(std::move(rows)); }

std::vector<std::int32_t> random_tokens(Rng& rng, std::size_t n, std::size_t vocab) {
  std::vector<std::int32_t> t(n);
  for (auto& v : t)
    v = static_cast<std::int32_t>(rng.between(kFirstContentToken, static_cast<std::int64_t>(vocab) - 1));
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------

SuiteResult suite_loss_oracle() {
  return run_suite("loss_oracle", 5.0, [](Tally& t) {
    Rng rng(77);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const auto n = static_cast<std::size_t>(rng.between(1, 8));
      const auto d = static_cast<std::size_t>(rng.between(2, 16));
      const auto e = seq(gaussian(rng, n, d));
      const auto tg = seq(gaussian(rng, n, d));
      const LossWeights w{rng.uniform(0, 2), rng.uniform(0, 2), rng.uniform(0, 2)};
      const auto got = ead_total(e, tg, w);
      const auto want = oracle::ead(e, tg, w);
      const double err = std::max({std::abs(got.l1 - want.l1), std::abs(got.l2 - want.l2),
                                   std::abs(got.l3 - want.l3), std::abs(got.total - want.total)});
      worst = std::max(worst, err);
      t.check(err <= 1e-12, "random case " + std::to_string(trial) + " differs by " + fmt(err));
      ad::Graph g;
      LossBreakdown br;
      const double graph_total = ead_loss(g.constant(e.rows), tg, w, &br).value()[0];
      t.check(std::abs(graph_total - want.total) <= 1e-12,
              "graph loss differs from the oracle on case " + std::to_string(trial));
    }
    t.note("max deviation " + fmt(worst));

    const auto e = seq(gaussian(rng, 5, 6));
    t.check(std::abs(ead_total(e, e, {}).total) <= 1e-12, "E = T does not give 0");
    const auto anti = ead_total(seq(Tensor::matrix({{1, 0}})), seq(Tensor::matrix({{-1, 0}})), {});
    t.check(std::abs(anti.total - 6.0) <= 1e-12, "antipodal N=1 gives " + fmt(anti.total));
    const auto hand = ead_total(seq(Tensor::matrix({{1, 0}, {0, 1}})),
                                seq(Tensor::matrix({{1, 0}, {1, 0}})), {});
    t.check(std::abs(hand.total - 2.0) <= 1e-12, "N=2 hand case gives " + fmt(hand.total));
  });
}

namespace {

void gradient_checks(Tally& t, const VerifyOptions& options, std::size_t model_seeds) {
  const EadGradientFault fault{options.inject_l3_sign_flip};
  double worst_ead = 0.0, worst_model = 0.0;

  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng rng(300 + s);
    const auto n = static_cast<std::size_t>(rng.between(2, 8));
    const auto d = static_cast<std::size_t>(rng.between(3, 16));
    std::vector<bool> mask(n, true);
    if (n > 3) mask[static_cast<std::size_t>(rng.below(n))] = false;
    const EmbeddingSequence target{gaussian(rng, n, d), mask};
    const LossWeights w{rng.uniform(0.5, 2), rng.uniform(0.5, 2), rng.uniform(0.5, 2)};
    auto f = [&](ad::Graph&, std::span<const ad::Var> v) {
      return ead_loss(v[0], target, w, nullptr, fault);
    };
    const auto report = grad_check(f, {{"E", gaussian(rng, n, d)}}, 1e-6, 1e-4);
    worst_ead = std::max(worst_ead, report.max_rel_error);
    t.check(report.passed, "EAD seed " + std::to_string(s) + " rel error " + fmt(report.max_rel_error));
  }

  SyntheticWorld world{WorldConfig{}};
  const std::size_t frames = 24, words = 6;
  for (std::uint64_t s = 0; s < model_seeds; ++s) {
    SpeakerModuleConfig cfg;
    cfg.init_seed = 40 + s;
    const auto params = SpeakerModuleParams::initialize(cfg);
    Rng rng(700 + s);
    const Tensor x = gaussian(rng, frames, cfg.feature_dim);
    const Tensor h_asr = gaussian(rng, frames, cfg.model_dim);
    auto toks = random_tokens(rng, words + 2, cfg.vocab_size);
    toks.front() = kStartToken;
    toks.back() = kEndToken;
    std::vector<bool> mask(words + 2, true);
    mask.front() = mask.back() = false;
    const EmbeddingSequence target{gaussian(rng, words + 2, cfg.embedding_dim), mask};
    auto f = [&](ad::Graph& g, std::span<const ad::Var> vars) {
      const BoundParams p(params, std::vector<ad::Var>(vars.begin(), vars.end()));
      const ad::Var h_spk = speaker_encode(g, p, x);
      const ad::Var e = speaker_decode(g, p, toks, world.token_embedding(), g.constant(h_asr), h_spk);
      return ead_loss(e, target, {}, nullptr, fault);
    };
    const auto report = grad_check(f, params.tensors(), 1e-4, 1e-4, 1e-6, 24, 900 + s);
    worst_model = std::max(worst_model, report.max_rel_error);
    t.check(report.passed, "model seed " + std::to_string(s) + " rel error " + fmt(report.max_rel_error));
  }
  t.note("EAD worst " + fmt(worst_ead) + ", full model worst " + fmt(worst_model) + " over " +
         std::to_string(model_seeds) + " seeds");
}

}  // namespace

SuiteResult suite_gradients(const VerifyOptions& options) {
  return run_suite("gradients", 60.0, [&](Tally& t) { gradient_checks(t, options, 10); });
}

SuiteResult suite_mutation_probe() {
  return run_suite("mutation_probe", 0.0, [](Tally& t) {
    Tally inner;
    gradient_checks(inner, VerifyOptions{true}, 2);
    t.check(!inner.ok(), "sign-flipped L3 gradient was not detected");
  });
}

SuiteResult suite_architecture() {
  return run_suite("architecture", 0.0, [](Tally& t) {
    SyntheticWorld world{WorldConfig{}};
    SpeakerModuleConfig base;
    const std::size_t frames = 24;

    for (std::uint64_t s = 0; s < 20; ++s) {
      SpeakerModuleConfig c = base;
      c.asr_keyed_layers = 0;
      c.init_seed = s;
      const auto params = SpeakerModuleParams::initialize(c);
      Rng rng(100 + s);
      const Tensor h_spk = gaussian(rng, frames, c.model_dim);
      const auto toks = random_tokens(rng, 8, c.vocab_size);
      const auto a = speaker_decode(params, toks, world.token_embedding(), gaussian(rng, frames, c.model_dim), h_spk);
      const auto b = speaker_decode(params, toks, world.token_embedding(), gaussian(rng, frames, c.model_dim), h_spk);
      t.check(a.rows == b.rows, "J=0 output changed with H^asr (probe " + std::to_string(s) + ")");
    }

    int changed = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
      SpeakerModuleConfig c = base;
      c.asr_keyed_layers = 1;
      c.init_seed = 1000 + s;
      const auto params = SpeakerModuleParams::initialize(c);
      Rng rng(500 + s);
      const Tensor h_spk = gaussian(rng, frames, c.model_dim);
      const auto toks = random_tokens(rng, 8, c.vocab_size);
      const auto a = speaker_decode(params, toks, world.token_embedding(), gaussian(rng, frames, c.model_dim), h_spk);
      const auto b = speaker_decode(params, toks, world.token_embedding(), gaussian(rng, frames, c.model_dim), h_spk);
      changed += a.rows == b.rows ? 0 : 1;
    }
    t.check(changed >= 95, "J=1 changed on only " + std::to_string(changed) + "/100 probes");
    t.note("J=1 sensitive on " + std::to_string(changed) + "/100 probes");

    const auto params = SpeakerModuleParams::initialize(base);
    Rng rng(3);
    const Tensor h = gaussian(rng, frames, base.model_dim);
    const std::vector<std::int32_t> toks{kStartToken, 10, 11, kEndToken};
    const auto before = speaker_decode(params, toks, world.token_embedding(), h, h);
    SharedTokenEmbedding handle = world.token_embedding();
    t.check(handle.same_storage(world.token_embedding()), "embedding handle does not share storage");
    t.check(&handle.word() == &world.token_embedding().word() &&
                &handle.position() == &world.token_embedding().position(),
            "word/position tables are copies");
    handle.mutable_word().at(10, 3) += 0.5;
    t.check(!(speaker_decode(params, toks, world.token_embedding(), h, h).rows == before.rows),
            "decoder ignores an edit to the shared word table");
    handle.mutable_word().at(10, 3) -= 0.5;
    handle.mutable_position().at(2, 1) += 0.5;
    t.check(!(speaker_decode(params, toks, world.token_embedding(), h, h).rows == before.rows),
            "decoder ignores an edit to the shared position table");
    handle.mutable_position().at(2, 1) -= 0.5;
  });
}

namespace {

std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::vector<std::vector<std::string>> streams_of(const SpeakerTranscriptSet& s) {
  std::vector<std::vector<std::string>> out;
  for (const auto& [k, w] : s) out.push_back(w);
  return out;
}

SpeakerTranscriptSet random_set(Rng& rng, std::size_t streams, const std::string& prefix) {
  static const char* vocab[] = {"a", "b", "c", "d"};
  SpeakerTranscriptSet s;
  for (std::size_t i = 0; i < streams; ++i) {
    auto& w = s[prefix + std::to_string(i)];
    const auto n = rng.between(0, 12);
    for (std::int64_t j = 0; j < n; ++j) w.push_back(vocab[rng.below(4)]);
  }
  return s;
}

}  // namespace

SuiteResult suite_cpwer_oracle() {
  return run_suite("cpwer_oracle", 10.0, [](Tally& t) {
    Rng rng(7);
    int cases = 0;
    while (cases < 200) {
      const auto ref = random_set(rng, static_cast<std::size_t>(rng.between(1, 5)), "r");
      const auto hyp = random_set(rng, static_cast<std::size_t>(rng.between(1, 5)), "h");
      std::size_t ref_words = 0;
      for (const auto& [k, w] : ref) ref_words += w.size();
      if (ref_words == 0) continue;
      ++cases;
      const auto brute = oracle::cpwer_errors_exhaustive(streams_of(ref), streams_of(hyp));
      const auto fast = cpwer(ref, hyp, AssignmentSearch::kHungarian);
      const auto full = cpwer(ref, hyp);
      t.check(fast.errors() == brute && full.errors() == brute,
              "case " + std::to_string(cases) + ": " + std::to_string(fast.errors()) + " vs oracle " +
                  std::to_string(brute));
      t.check(fast.cpwer == static_cast<double>(brute) / static_cast<double>(ref_words),
              "cpwer ratio differs on case " + std::to_string(cases));
    }
    const SpeakerTranscriptSet ref{{"s1", words("a b c")}, {"s2", words("d e")}};
    const SpeakerTranscriptSet hyp{{"x", words("a b")}, {"y", words("d e f")}};
    const auto r = cpwer(ref, hyp);
    t.check(r.cpwer == 0.4, "fixture gives " + fmt(r.cpwer) + ", expected 0.4");
  });
}

namespace {

AffinityMatrix block_ones(const std::vector<std::size_t>& sizes) {
  std::size_t m = 0;
  for (auto s : sizes) m += s;
  AffinityMatrix a{Tensor::zeros(m, m)};
  std::size_t at = 0;
  for (std::size_t s : sizes) {
    for (std::size_t i = at; i < at + s; ++i)
      for (std::size_t j = at; j < at + s; ++j) a.values.at(i, j) = 1.0;
    at += s;
  }
  return a;
}

AffinityMatrix planted(Rng& rng, const std::vector<int>& labels, double within, double cross,
                       double spread) {
  const std::size_t m = labels.size();
  AffinityMatrix a{Tensor::zeros(m, m)};
  for (std::size_t i = 0; i < m; ++i) {
    a.values.at(i, i) = 1.0;
    for (std::size_t j = i + 1; j < m; ++j) {
      const double centre = labels[i] == labels[j] ? within : cross;
      const double v = rng.uniform(centre - spread, centre + spread);
      a.values.at(i, j) = v;
      a.values.at(j, i) = v;
    }
  }
  return a;
}

std::vector<int> as_int(const std::vector<std::size_t>& v) { return {v.begin(), v.end()}; }

}  // namespace

SuiteResult suite_clustering() {
  return run_suite("clustering", 30.0, [](Tally& t) {
    Rng rng(3);
    for (std::size_t k = 1; k <= 6; ++k) {
      std::vector<std::size_t> sizes(k);
      for (auto& s : sizes) s = static_cast<std::size_t>(rng.between(2, 7));
      const auto res = spectral_cluster(block_ones(sizes));
      std::vector<std::size_t> expect;
      for (std::size_t b = 0; b < k; ++b) expect.insert(expect.end(), sizes[b], b);
      t.check(res.k == k, "block case picked K=" + std::to_string(res.k) + ", planted " + std::to_string(k));
      t.check(res.labels == expect, "block case K=" + std::to_string(k) + " partition differs");
    }

    std::size_t eigengap_hits = 0;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      Rng r(2000 + seed);
      const auto k = static_cast<std::size_t>(r.between(2, 5));
      std::vector<int> truth(30);
      for (auto& v : truth) v = static_cast<int>(r.below(k));
      for (std::size_t c = 0; c < k; ++c) truth[c] = static_cast<int>(c);
      const auto aff = planted(r, truth, 0.8, 0.15, 0.1);
      const auto hinted = spectral_cluster(aff, k);
      t.check(oracle::pairwise_agreement(truth, as_int(hinted.labels)) == 1.0,
              "separable case " + std::to_string(seed) + " not recovered with the true K");
      const auto free = spectral_cluster(aff);
      eigengap_hits += free.k == k ? 1 : 0;
    }
    t.note("unhinted eigengap K exact on " + std::to_string(eigengap_hits) + "/30 of these");

    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      Rng r(1000 + seed);
      std::vector<int> truth(40);
      for (std::size_t i = 0; i < 40; ++i) truth[i] = i < 20 ? 0 : 1;
      r.shuffle(std::span<int>(truth));
      total += oracle::pairwise_agreement(truth, as_int(spectral_cluster(planted(r, truth, 0.9, 0.1, 0.05)).labels));
    }
    t.check(total / 50.0 >= 0.95, "noisy two-cluster agreement " + fmt(total / 50.0));
    t.note("noisy two-cluster agreement " + fmt(total / 50.0));
  });
}

namespace {

ExperimentConfig pipeline_config(std::size_t samples) {
  ExperimentConfig cfg = parse_config("", "<defaults>");
  cfg.train.samples = samples;
  return cfg;
}

std::uint64_t sample_hash(const std::vector<MixedSample>& samples) {
  Fnv1a h;
  for (const auto& s : samples) {
    h.doubles(s.features.frames.data());
    h.doubles(s.targets.rows.data());
    for (auto tok : s.tokens) h.u64(static_cast<std::uint64_t>(tok));
    for (const auto& id : s.turn_ids) h.text(id);
    for (auto g : s.turn_groups) h.u64(g);
  }
  return h.digest();
}

}  // namespace

std::string data_pipeline_fingerprint(std::size_t samples) {
  const ExperimentConfig cfg = pipeline_config(samples);
  SyntheticWorld world(cfg.world);
  return hex64(sample_hash(build_training_data(cfg, world).samples));
}

SuiteResult suite_data_pipeline() {
  return run_suite("data_pipeline", 0.0, [](Tally& t) {
    const ExperimentConfig cfg = pipeline_config(1000);
    SyntheticWorld world(cfg.world);
    const TrainingData data = build_training_data(cfg, world);
    std::size_t violations = 0, over_groups = 0, over_time = 0;
    double speakers = 0.0;
    for (const MixedSample& s : data.samples) {
      const auto bad = validate_sample(s, data.turns, cfg.mixer);
      violations += bad.empty() ? 0 : 1;
      over_groups += s.group_count() > 5 ? 1 : 0;
      over_time += s.duration_s() > 30.0 ? 1 : 0;
      const auto& labels = eval_labels(s).token_speakers;
      speakers += static_cast<double>(std::set<std::int32_t>(labels.begin(), labels.end()).size());
    }
    t.check(data.samples.size() == 1000, "expected 1000 samples");
    t.check(violations == 0, std::to_string(violations) + " samples violate the mixing invariants");
    t.check(over_groups == 0 && over_time == 0, "group or duration cap exceeded");
    t.note("mean speakers/sample " + fmt(speakers / 1000.0));

    const TrainingData again = build_training_data(cfg, world);
    t.check(sample_hash(data.samples) == sample_hash(again.samples), "samples differ between runs");

    ExperimentConfig small = cfg;
    small.corpus.num_turns = 120;
    small.train.samples = 40;
    small.eval.recordings = 4;
    const auto base = std::filesystem::temp_directory_path() /
                      ("msaasr_verify_" + std::to_string(::getpid()));
    const auto a = write_dataset(small, base / "a");
    const auto b = write_dataset(small, base / "b");
    t.check(a.corpus_hash == b.corpus_hash, "dataset files differ between runs");
    const TrainingData loaded = load_training_data(small, base / "a");
    const TrainingData direct = build_training_data(small, world);
    t.check(sample_hash(loaded.samples) == sample_hash(direct.samples),
            "samples rebuilt from disk differ from the in-memory corpus");
    std::filesystem::remove_all(base);
  });
}

// ---------------------------------------------------------------------------

std::vector<std::string> suite_names() {
  return {"loss_oracle", "gradients", "mutation_probe", "architecture",
          "cpwer_oracle", "clustering", "data_pipeline"};
}

std::vector<SuiteResult> run_verify(const VerifyOptions& options,
                                    const std::vector<std::string>& only) {
  std::vector<SuiteResult> out;
  for (const auto& name : suite_names()) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    if (name == "loss_oracle") out.push_back(suite_loss_oracle());
    if (name == "gradients") out.push_back(suite_gradients(options));
    if (name == "mutation_probe") out.push_back(suite_mutation_probe());
    if (name == "architecture") out.push_back(suite_architecture());
    if (name == "cpwer_oracle") out.push_back(suite_cpwer_oracle());
    if (name == "clustering") out.push_back(suite_clustering());
    if (name == "data_pipeline") out.push_back(suite_data_pipeline());
  }
  for (const auto& name : only)
    require(std::find(suite_names().begin(), suite_names().end(), name) != suite_names().end(),
            ErrorKind::kConfig, "unknown verify suite '" + name + "'");
  return out;
}

std::string verify_report_json(const std::vector<SuiteResult>& results) {
  nlohmann::ordered_json j;
  bool all = true;
  double total = 0.0;
  j["suites"] = nlohmann::ordered_json::array();
  for (const auto& r : results) {
    all = all && r.passed;
    total += r.seconds;
    j["suites"].push_back({{"name", r.name},
                           {"passed", r.passed},
                           {"seconds", r.seconds},
                           {"budget_s", r.budget_s},
                           {"detail", r.detail}});
  }
  j["passed"] = all;
  j["seconds"] = total;
  return j.dump(2);
}

}  // namespace msaasr::verify

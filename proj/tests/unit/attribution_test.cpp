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

#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "json.hpp"
#include "msaasr/attribution.hpp"
#include "msaasr/error.hpp"
#include "msaasr/rng.hpp"
#include "msaasr/verify/oracles.hpp"

using namespace msaasr;

namespace {

AffinityMatrix block_ones(const std::vector<std::size_t>& sizes) {
  const std::size_t m = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  AffinityMatrix a{Tensor::zeros(m, m)};
  std::size_t at = 0;
  for (std::size_t s : sizes) {
    for (std::size_t i = at; i < at + s; ++i)
      for (std::size_t j = at; j < at + s; ++j) a.values.at(i, j) = 1.0;
    at += s;
  }
  return a;
}

// Planted partition with within/cross cosines drawn uniformly around the given centres.
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

TEST_CASE("chunk_stream partitions the stream") {
  Rng rng(1);
  AcousticFeatures short_stream{Tensor::zeros(100, 4), 0.08};
  for (double& v : short_stream.frames.data()) v = rng.normal();
  const auto one = chunk_stream(short_stream, 30.0, 4);
  REQUIRE(one.size() == 1);
  CHECK(one[0].frames == short_stream.frames);

  AcousticFeatures long_stream{Tensor::zeros(938, 4), 0.08};  // 75.04 s
  for (double& v : long_stream.frames.data()) v = rng.normal();
  for (std::size_t quantum : {1u, 4u}) {
    const auto chunks = chunk_stream(long_stream, 30.0, quantum);
    CHECK(chunks.size() == 3);
    std::vector<double> joined;
    for (std::size_t c = 0; c < chunks.size(); ++c) {
      CHECK(chunks[c].duration_s() <= 30.0 + 1e-9);
      if (c + 1 < chunks.size()) CHECK(chunks[c].length() % quantum == 0);
      joined.insert(joined.end(), chunks[c].frames.data().begin(), chunks[c].frames.data().end());
    }
    CHECK(joined == long_stream.frames.storage());
  }
  CHECK(chunk_stream(long_stream, 30.0, 4)[0].length() == 372);

  CHECK_THROWS_AS(chunk_stream(long_stream, 0.0), Error);
  CHECK_THROWS_AS(chunk_stream(AcousticFeatures{Tensor::zeros(0, 4), 0.08}, 30.0), Error);
  CHECK_THROWS_AS(chunk_stream(long_stream, 0.1, 4), Error);
}

TEST_CASE("affinity is symmetric, unit-diagonal and scale invariant") {
  Rng rng(2);
  Tensor e = Tensor::zeros(7, 5);
  for (double& v : e.data()) v = rng.normal();
  const auto a = build_affinity(e);
  CHECK_NOTHROW(a.validate());
  for (std::size_t i = 0; i < 7; ++i) CHECK(a.values.at(i, i) == 1.0);
  Tensor scaled = e;
  for (std::size_t i = 0; i < 7; ++i) {
    const double f = rng.uniform(0.1, 10.0);
    for (double& v : scaled.row(i)) v *= f;
  }
  const auto b = build_affinity(scaled);
  for (std::size_t k = 0; k < a.values.size(); ++k) CHECK(std::abs(a.values[k] - b.values[k]) <= 1e-12);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 7; ++j)
      CHECK(std::abs(a.values.at(i, j) - oracle::cosine_naive(e.row(i), e.row(j))) <= 1e-12);
}

TEST_CASE("block affinity: eigengap finds the blocks") {
  const auto a = block_ones({2, 3});
  const auto c = spectral_cluster(a);
  CHECK(c.k == 2);
  CHECK(c.labels == std::vector<std::size_t>{0, 0, 1, 1, 1});
  CHECK(std::abs(c.eigenvalues[0]) <= 1e-12);
  CHECK(std::abs(c.eigenvalues[1]) <= 1e-12);

  Rng rng(3);
  for (std::size_t k = 1; k <= 6; ++k) {
    std::vector<std::size_t> sizes(k);
    for (auto& s : sizes) s = static_cast<std::size_t>(rng.between(2, 7));
    const auto res = spectral_cluster(block_ones(sizes));
    CHECK(res.k == k);
    std::vector<std::size_t> expect;
    for (std::size_t b = 0; b < k; ++b) expect.insert(expect.end(), sizes[b], b);
    CHECK(res.labels == expect);
  }
}

TEST_CASE("single token is one cluster") {
  const auto c = spectral_cluster(AffinityMatrix{Tensor::matrix({{1.0}})});
  CHECK(c.k == 1);
  CHECK(c.labels == std::vector<std::size_t>{0});
}

TEST_CASE("noisy two-cluster affinity is recovered") {
  double total = 0.0;
  std::size_t right_k = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(1000 + seed);
    std::vector<int> truth(40);
    for (std::size_t i = 0; i < 40; ++i) truth[i] = i < 20 ? 0 : 1;
    rng.shuffle(std::span<int>(truth));
    const auto res = spectral_cluster(planted(rng, truth, 0.9, 0.1, 0.05));
    right_k += res.k == 2 ? 1 : 0;
    total += oracle::pairwise_agreement(truth, as_int(res.labels));
  }
  MESSAGE("mean pairwise agreement " << total / 50.0 << ", K=2 on " << right_k << "/50");
  CHECK(total / 50.0 >= 0.95);
}

TEST_CASE("shifted-cosine weights collapse the noisy two-cluster case") {
  // Documents why the clamped weighting is the default.
  Rng rng(7);
  std::vector<int> truth(40);
  for (std::size_t i = 0; i < 40; ++i) truth[i] = i < 20 ? 0 : 1;
  ClusterOptions shifted;
  shifted.weight = AffinityWeight::kShiftedCosine;
  CHECK(spectral_cluster(planted(rng, truth, 0.9, 0.1, 0.05), {}, shifted).k == 1);
}

TEST_CASE("affinity power matches pre-powered weights") {
  Rng rng(11);
  std::vector<int> truth{0, 0, 1, 1, 1, 2, 2, 0, 1};
  const auto a = planted(rng, truth, 0.85, 0.2, 0.1);
  AffinityMatrix cubed = a;
  for (double& v : cubed.values.data()) v = std::pow(std::max(v, 0.0), 3.0);
  const auto direct = normalized_laplacian_spectrum(a, AffinityWeight::kClampedCosine, 3.0);
  const auto manual = normalized_laplacian_spectrum(cubed, AffinityWeight::kClampedCosine);
  for (std::size_t i = 0; i < truth.size(); ++i) CHECK(std::abs(direct.values[i] - manual.values[i]) <= 1e-12);
  CHECK_THROWS_AS(normalized_laplacian_spectrum(a, AffinityWeight::kClampedCosine, 0.0), Error);
  CHECK_THROWS_AS(normalized_laplacian_spectrum(a, AffinityWeight::kClampedCosine, NAN), Error);
}

TEST_CASE("a sharper kernel separates many moderately similar clusters") {
  ClusterOptions sharp;
  sharp.affinity_power = 4.0;
  std::size_t plain_right = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(3000 + seed);
    const std::size_t k = 5;
    std::vector<int> truth(40);
    for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = static_cast<int>(i % k);
    rng.shuffle(std::span<int>(truth));
    const auto a = planted(rng, truth, 0.9, 0.4, 0.05);
    plain_right += spectral_cluster(a).k == k ? 1 : 0;
    const auto res = spectral_cluster(a, {}, sharp);
    CHECK(res.k == k);
    CHECK(oracle::pairwise_agreement(truth, as_int(res.labels)) == 1.0);
  }
  MESSAGE("power 1 found K on " << plain_right << "/30");
  CHECK(plain_right < 30);
}

TEST_CASE("separable affinities with the true K are recovered exactly") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(2000 + seed);
    const auto k = static_cast<std::size_t>(rng.between(2, 5));
    std::vector<int> truth(30);
    for (auto& t : truth) t = static_cast<int>(rng.below(k));
    for (std::size_t c = 0; c < k; ++c) truth[c] = static_cast<int>(c);
    const auto res = spectral_cluster(planted(rng, truth, 0.8, 0.15, 0.1), k);
    CHECK(res.k == k);
    CHECK(oracle::pairwise_agreement(truth, as_int(res.labels)) == 1.0);
  }
}

TEST_CASE("clustering is invariant to token reordering") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(3000 + seed);
    std::vector<int> truth(24);
    for (auto& t : truth) t = static_cast<int>(rng.below(3));
    const auto a = planted(rng, truth, 0.85, 0.1, 0.1);
    std::vector<std::size_t> perm(24);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(perm));
    AffinityMatrix b{Tensor::zeros(24, 24)};
    for (std::size_t i = 0; i < 24; ++i)
      for (std::size_t j = 0; j < 24; ++j) b.values.at(i, j) = a.values.at(perm[i], perm[j]);
    const auto ra = spectral_cluster(a);
    const auto rb = spectral_cluster(b);
    CHECK(ra.k == rb.k);
    std::vector<int> back(24);
    for (std::size_t i = 0; i < 24; ++i) back[perm[i]] = static_cast<int>(rb.labels[i]);
    CHECK(oracle::pairwise_agreement(as_int(ra.labels), back) == 1.0);
  }
}

TEST_CASE("spectral_cluster errors") {
  AffinityMatrix asym{Tensor::matrix({{1, 0.5}, {0.4, 1}})};
  CHECK_THROWS_AS(spectral_cluster(asym), Error);
  CHECK_THROWS_AS(spectral_cluster(block_ones({2}), 3), Error);
  CHECK_THROWS_AS(spectral_cluster(block_ones({2}), 0), Error);
}

TEST_CASE("eigengap and kmeans helpers") {
  const std::vector<double> spectrum{0.0, 0.01, 0.05, 0.9, 0.95};
  CHECK(eigengap_k(spectrum, 10) == 3);
  CHECK(eigengap_k(spectrum, 2) == 2);
  CHECK(eigengap_k(std::vector<double>{0.0}, 10) == 1);

  Tensor pts = Tensor::matrix({{0, 0}, {0.1, 0}, {5, 5}, {5.1, 5}, {0, 0.1}});
  double inertia = 0.0;
  const auto labels = kmeans(pts, 2, 10, 100, 1, &inertia);
  CHECK(labels[0] == labels[1]);
  CHECK(labels[0] == labels[4]);
  CHECK(labels[2] == labels[3]);
  CHECK(labels[0] != labels[2]);
  CHECK(inertia < 0.05);
  CHECK(kmeans(pts, 2, 10, 100, 1) == labels);
  CHECK_THROWS_AS(kmeans(pts, 6, 1, 10, 1), Error);
}

TEST_CASE("attribute_recording output contract") {
  SyntheticWorld world(WorldConfig{});
  const auto params = SpeakerModuleParams::initialize({});
  Rng rng(4);
  std::vector<std::int32_t> gold;
  std::vector<double> frames;
  for (int turn = 0; turn < 12; ++turn) {
    std::vector<std::int32_t> toks(10);
    for (auto& t : toks) t = static_cast<std::int32_t>(rng.between(3, 63));
    const auto st = synth_turn(world, turn % 2 == 0 ? 5 : 9, toks, rng.next_u64());
    frames.insert(frames.end(), st.features.frames.data().begin(), st.features.frames.data().end());
    gold.insert(gold.end(), toks.begin(), toks.end());
  }
  AcousticFeatures feats{Tensor({frames.size() / 32, 32}, frames), 0.08};
  REQUIRE(feats.duration_s() > 30.0);

  AttributionOptions opts;
  opts.config_hash = "cafe";
  const auto t = attribute_recording(params, world, feats, std::span<const std::int32_t>(gold), {}, opts);
  std::vector<std::size_t> all;
  for (const auto& s : t.speakers) {
    CHECK(std::is_sorted(s.positions.begin(), s.positions.end()));
    for (std::size_t i = 0; i < s.positions.size(); ++i) CHECK(s.tokens[i] == gold[s.positions[i]]);
    all.insert(all.end(), s.positions.begin(), s.positions.end());
  }
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(gold.size());
  std::iota(expect.begin(), expect.end(), std::size_t{0});
  CHECK(all == expect);
  CHECK(t.token_labels().size() == gold.size());

  const auto j = nlohmann::json::parse(t.to_json());
  CHECK(j["k"] == t.k);
  CHECK(j["config_hash"] == "cafe");
  CHECK(j["speakers"].size() == t.speakers.size());

  const auto single = attribute_recording(params, world, feats, {}, 1, opts);
  REQUIRE(single.speakers.size() == 1);
  CHECK(single.speakers[0].tokens == gold);

  std::vector<std::int32_t> short_gold(gold.begin(), gold.end() - 1);
  CHECK_THROWS_AS(attribute_recording(params, world, feats, std::span<const std::int32_t>(short_gold)),
                  Error);
  CHECK_THROWS_AS(attribute_recording(params, world, feats, {}, gold.size() + 1), Error);
}

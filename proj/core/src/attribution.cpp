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

#include "msaasr/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "json.hpp"
#include "msaasr/error.hpp"
#include "msaasr/rng.hpp"

namespace msaasr {
namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::vector<std::size_t> relabel_by_first_appearance(std::span<const std::size_t> labels) {
  constexpr std::size_t kUnset = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> map;
  std::vector<std::size_t> out(labels.size());
  std::size_t next = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= map.size()) map.resize(labels[i] + 1, kUnset);
    if (map[labels[i]] == kUnset) map[labels[i]] = next++;
    out[i] = map[labels[i]];
  }
  return out;
}

struct KmeansRun {
  std::vector<std::size_t> labels;
  double inertia = 0.0;
};

KmeansRun kmeans_once(const Tensor& pts, std::size_t k, std::size_t iterations, Rng& rng) {
  const std::size_t n = pts.rows();
  const std::size_t d = pts.cols();
  Tensor centroids = Tensor::zeros(k, d);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());

  std::size_t pick = static_cast<std::size_t>(rng.below(n));
  for (std::size_t c = 0; c < k; ++c) {
    if (c > 0) {
      double total = 0.0;
      for (double v : nearest) total += v;
      if (total > 0.0) {
        double u = rng.uniform() * total;
        pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
          u -= nearest[i];
          if (u < 0.0) {
            pick = i;
            break;
          }
        }
      } else {
        pick = static_cast<std::size_t>(rng.below(n));
      }
    }
    std::copy(pts.row(pick).begin(), pts.row(pick).end(), centroids.row(c).begin());
    for (std::size_t i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], squared_distance(pts.row(i), centroids.row(c)));
  }

  KmeansRun run;
  run.labels.assign(n, 0);
  for (std::size_t it = 0; it < iterations; ++it) {
    bool changed = it == 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = squared_distance(pts.row(i), centroids.row(0));
      for (std::size_t c = 1; c < k; ++c) {
        const double dist = squared_distance(pts.row(i), centroids.row(c));
        if (dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      if (run.labels[i] != best) changed = true;
      run.labels[i] = best;
    }
    if (!changed) break;
    Tensor sums = Tensor::zeros(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto dst = sums.row(run.labels[i]);
      auto src = pts.row(i);
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
      ++counts[run.labels[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      auto dst = centroids.row(c);
      auto src = sums.row(c);
      for (std::size_t j = 0; j < d; ++j) dst[j] = src[j] / static_cast<double>(counts[c]);
    }
  }
  run.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) run.inertia += squared_distance(pts.row(i), centroids.row(run.labels[i]));
  return run;
}

}  // namespace

void AffinityMatrix::validate() const {
  require(values.rank() == 2 && values.rows() == values.cols(), ErrorKind::kDimension,
          "affinity must be square, got " + shape_string(values.shape()));
  require(values.rows() >= 1, ErrorKind::kDegenerate, "affinity over zero tokens");
  require(values.all_finite(), ErrorKind::kNumeric, "affinity has non-finite entries");
  const std::size_t m = values.rows();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      require(std::abs(values.at(i, j) - values.at(j, i)) <= 1e-9, ErrorKind::kInvalidArgument,
              "affinity is not symmetric at (" + std::to_string(i) + ", " + std::to_string(j) + ")");
    }
  }
}

AffinityMatrix build_affinity(const Tensor& embeddings) {
  require(embeddings.rank() == 2 && embeddings.rows() >= 1, ErrorKind::kDegenerate,
          "build_affinity: no embeddings");
  const std::size_t m = embeddings.rows();
  AffinityMatrix a{Tensor::zeros(m, m)};
  for (std::size_t i = 0; i < m; ++i) {
    a.values.at(i, i) = 1.0;
    for (std::size_t j = i + 1; j < m; ++j) {
      const double c = cosine(embeddings.row(i), embeddings.row(j));
      a.values.at(i, j) = c;
      a.values.at(j, i) = c;
    }
  }
  return a;
}

LaplacianSpectrum normalized_laplacian_spectrum(const AffinityMatrix& affinity, AffinityWeight weight,
                                                double power) {
  affinity.validate();
  require(power > 0.0 && std::isfinite(power), ErrorKind::kInvalidArgument,
          "affinity power must be positive and finite");
  const auto m = static_cast<Eigen::Index>(affinity.size());
  Eigen::MatrixXd w(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const double c = affinity.values.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      const double base = weight == AffinityWeight::kClampedCosine ? std::max(c, 0.0) : 0.5 * (1.0 + c);
      w(i, j) = power == 1.0 ? base : std::pow(base, power);
    }
  }
  Eigen::VectorXd inv_sqrt_deg(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double deg = w.row(i).sum();
    inv_sqrt_deg(i) = deg > 0.0 ? 1.0 / std::sqrt(deg) : 0.0;
  }
  Eigen::MatrixXd lap = -(inv_sqrt_deg.asDiagonal() * w * inv_sqrt_deg.asDiagonal());
  lap.diagonal().array() += 1.0;
  lap = 0.5 * (lap + lap.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(lap);
  require(solver.info() == Eigen::Success, ErrorKind::kNumeric, "Laplacian eigensolver did not converge");
  LaplacianSpectrum s;
  s.values.assign(solver.eigenvalues().data(), solver.eigenvalues().data() + m);
  s.vectors = Tensor::zeros(static_cast<std::size_t>(m), static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      s.vectors.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = solver.eigenvectors()(i, j);
    }
  }
  return s;
}

std::size_t eigengap_k(std::span<const double> ascending, std::size_t max_k) {
  if (ascending.size() <= 1) return 1;
  const std::size_t limit = std::min(max_k, ascending.size() - 1);
  std::size_t best = 1;
  double best_gap = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k <= limit; ++k) {
    const double gap = ascending[k] - ascending[k - 1];
    if (gap > best_gap) {
      best_gap = gap;
      best = k;
    }
  }
  return best;
}

std::vector<std::size_t> kmeans(const Tensor& points, std::size_t k, std::size_t restarts,
                                std::size_t iterations, std::uint64_t seed, double* inertia) {
  require(points.rank() == 2 && points.rows() >= 1, ErrorKind::kDegenerate, "kmeans: no points");
  require(k >= 1 && k <= points.rows(), ErrorKind::kInvalidArgument,
          "kmeans: k=" + std::to_string(k) + " with " + std::to_string(points.rows()) + " points");
  Rng rng(seed);
  KmeansRun best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < std::max<std::size_t>(restarts, 1); ++r) {
    KmeansRun run = kmeans_once(points, k, std::max<std::size_t>(iterations, 1), rng);
    if (run.inertia < best.inertia) best = std::move(run);
  }
  if (inertia) *inertia = best.inertia;
  return best.labels;
}

ClusterAssignment spectral_cluster(const AffinityMatrix& affinity, std::optional<std::size_t> k_hint,
                                   const ClusterOptions& options) {
  affinity.validate();
  const std::size_t m = affinity.size();
  if (k_hint) {
    require(*k_hint >= 1, ErrorKind::kInvalidArgument, "spectral_cluster: k_hint must be >= 1");
    require(*k_hint <= m, ErrorKind::kInvalidArgument,
            "spectral_cluster: k_hint " + std::to_string(*k_hint) + " exceeds " + std::to_string(m) +
                " tokens");
  }
  ClusterAssignment out;
  if (m == 1) {
    out.labels = {0};
    out.k = 1;
    out.eigenvalues = {0.0};
    return out;
  }
  const LaplacianSpectrum spec = normalized_laplacian_spectrum(affinity, options.weight, options.affinity_power);
  out.eigenvalues = spec.values;
  out.k = k_hint ? *k_hint : eigengap_k(spec.values, options.max_clusters);
  if (out.k == 1) {
    out.labels.assign(m, 0);
    return out;
  }
  Tensor rows = Tensor::zeros(m, out.k);
  for (std::size_t i = 0; i < m; ++i) {
    auto r = rows.row(i);
    for (std::size_t j = 0; j < out.k; ++j) r[j] = spec.vectors.at(i, j);
    const double n = norm(r);
    if (n > 0.0) {
      for (double& v : r) v /= n;
    }
  }
  const auto raw = kmeans(rows, out.k, options.kmeans_restarts, options.kmeans_iterations, options.seed);
  out.labels = relabel_by_first_appearance(raw);
  return out;
}

std::vector<AcousticFeatures> chunk_stream(const AcousticFeatures& feats, double max_chunk_s,
                                           std::size_t quantum) {
  require(max_chunk_s > 0.0 && std::isfinite(max_chunk_s), ErrorKind::kInvalidArgument,
          "chunk_stream: max_chunk_s must be positive");
  require(quantum >= 1, ErrorKind::kInvalidArgument, "chunk_stream: quantum must be >= 1");
  require(feats.length() > 0, ErrorKind::kDegenerate, "chunk_stream: empty stream");
  feats.validate();
  const auto fit = static_cast<std::size_t>(std::floor(max_chunk_s / feats.frame_duration_s + 1e-9));
  const std::size_t per_chunk = fit / quantum * quantum;
  require(per_chunk >= 1, ErrorKind::kInvalidArgument,
          "chunk_stream: max_chunk_s is shorter than one chunk quantum");
  std::vector<AcousticFeatures> out;
  const std::size_t d = feats.dim();
  for (std::size_t begin = 0; begin < feats.length(); begin += per_chunk) {
    const std::size_t len = std::min(per_chunk, feats.length() - begin);
    AcousticFeatures c;
    c.frame_duration_s = feats.frame_duration_s;
    c.frames = Tensor::zeros(len, d);
    const auto src = feats.frames.data().subspan(begin * d, len * d);
    std::copy(src.begin(), src.end(), c.frames.data().begin());
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<std::size_t> AttributedTranscript::token_labels() const {
  std::size_t total = 0;
  for (const auto& s : speakers) total += s.positions.size();
  std::vector<std::size_t> labels(total, 0);
  for (const auto& s : speakers) {
    for (std::size_t p : s.positions) {
      require(p < total, ErrorKind::kData, "transcript positions are not a partition");
      labels[p] = s.id;
    }
  }
  return labels;
}

std::string AttributedTranscript::to_json() const {
  nlohmann::ordered_json j;
  j["speakers"] = nlohmann::ordered_json::array();
  for (const auto& s : speakers) {
    j["speakers"].push_back({{"id", s.id}, {"tokens", s.tokens}, {"positions", s.positions}});
  }
  j["k"] = k;
  j["config_hash"] = config_hash;
  return j.dump();
}

AttributedTranscript attribute_recording(const SpeakerModuleParams& params,
                                         const SyntheticWorld& world,
                                         const AcousticFeatures& feats,
                                         std::optional<std::span<const std::int32_t>> gold_tokens,
                                         std::optional<std::size_t> k_hint,
                                         const AttributionOptions& options) {
  const std::size_t fpt = world.config().frames_per_token;
  const auto chunks = chunk_stream(feats, options.max_chunk_s, fpt);
  if (gold_tokens) {
    require(gold_tokens->size() * fpt == feats.length(), ErrorKind::kData,
            "gold transcript has " + std::to_string(gold_tokens->size()) + " tokens for " +
                std::to_string(feats.length()) + " frames");
  }

  std::vector<std::size_t> order = options.chunk_order;
  if (order.empty()) {
    order.resize(chunks.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
  }
  std::vector<std::size_t> check = order;
  std::sort(check.begin(), check.end());
  for (std::size_t i = 0; i < check.size(); ++i) {
    require(check[i] == i && check.size() == chunks.size(), ErrorKind::kInvalidArgument,
            "attribute_recording: chunk_order is not a permutation of the chunks");
  }

  // Spoken tokens per chunk, so positions can be assigned in recording order.
  std::vector<TokenAttribution> results(chunks.size());
  std::size_t token_at = 0;
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    std::optional<std::span<const std::int32_t>> gold;
    if (gold_tokens) {
      const std::size_t n = chunks[c].length() / fpt;
      gold = gold_tokens->subspan(token_at, n);
      token_at += n;
    }
    results[c] = attribute_tokens(params, world, chunks[c], gold);
  }
  std::vector<std::size_t> first_position(chunks.size(), 0);
  std::size_t total = 0;
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    first_position[c] = total;
    total += results[c].embeddings.active();
  }
  require(total >= 1, ErrorKind::kDegenerate, "attribute_recording: no spoken tokens");
  if (k_hint) {
    require(*k_hint >= 1 && *k_hint <= total, ErrorKind::kInvalidArgument,
            "--num-speakers " + std::to_string(*k_hint) + " is outside [1, " + std::to_string(total) + "]");
  }

  struct Pooled {
    std::int32_t token;
    std::size_t position;
    std::size_t chunk;
  };
  std::vector<Pooled> pooled;
  const std::size_t dim = params.config().embedding_dim;
  Tensor rows = Tensor::zeros(total, dim);
  for (std::size_t c : order) {
    const auto& r = results[c];
    std::size_t pos = first_position[c];
    for (std::size_t i = 0; i < r.asr.tokens.size(); ++i) {
      if (!r.embeddings.mask[i]) continue;
      auto src = r.embeddings.rows.row(i);
      std::copy(src.begin(), src.end(), rows.row(pooled.size()).begin());
      pooled.push_back({r.asr.tokens[i], pos++, c});
    }
  }

  const ClusterAssignment assignment = spectral_cluster(build_affinity(rows), k_hint, options.cluster);

  // Streams are numbered by the first token each one speaks.
  std::vector<std::size_t> index(pooled.size());
  std::iota(index.begin(), index.end(), std::size_t{0});
  std::sort(index.begin(), index.end(),
            [&](std::size_t a, std::size_t b) { return pooled[a].position < pooled[b].position; });
  std::vector<std::size_t> stream_of(assignment.k, std::numeric_limits<std::size_t>::max());
  AttributedTranscript out;
  out.k = assignment.k;
  out.config_hash = options.config_hash;
  for (std::size_t i : index) {
    const std::size_t label = assignment.labels[i];
    if (stream_of[label] == std::numeric_limits<std::size_t>::max()) {
      stream_of[label] = out.speakers.size();
      out.speakers.push_back({out.speakers.size(), {}, {}, {}});
    }
    auto& s = out.speakers[stream_of[label]];
    s.tokens.push_back(pooled[i].token);
    s.positions.push_back(pooled[i].position);
    s.chunks.push_back(pooled[i].chunk);
  }
  return out;
}

}  // namespace msaasr

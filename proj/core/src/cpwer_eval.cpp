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

#include "msaasr/cpwer_eval.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "msaasr/error.hpp"

namespace msaasr {
namespace {

constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;

std::int64_t assignment_cost(const std::vector<std::vector<std::int64_t>>& cost,
                             std::span<const std::size_t> perm) {
  std::int64_t c = 0;
  for (std::size_t i = 0; i < perm.size(); ++i) c += cost[i][perm[i]];
  return c;
}

// Hungarian algorithm with potentials; returns the optimal cost and fills
// match[row] = column.
std::int64_t hungarian(const std::vector<std::vector<std::int64_t>>& a, std::vector<std::size_t>& match) {
  const std::size_t n = a.size();
  std::vector<std::int64_t> u(n + 1, 0), v(n + 1, 0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<std::int64_t> minv(n + 1, kInf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      std::int64_t delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const std::int64_t cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  match.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) {
    if (p[j] != 0) match[p[j] - 1] = j - 1;
  }
  return assignment_cost(a, match);
}

void require_square(const std::vector<std::vector<std::int64_t>>& cost) {
  for (const auto& row : cost) {
    require(row.size() == cost.size(), ErrorKind::kDimension, "assignment cost matrix must be square");
  }
}

}  // namespace

EditCounts word_edit_distance(std::span<const std::string> ref, std::span<const std::string> hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({sub, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  EditCounts e;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (same ? 0 : 1)) {
        if (!same) ++e.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++e.deletions;
      --i;
    } else {
      ++e.insertions;
      --j;
    }
  }
  return e;
}

std::vector<std::size_t> exhaustive_assignment(const std::vector<std::vector<std::int64_t>>& cost) {
  require_square(cost);
  std::vector<std::size_t> perm(cost.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::vector<std::size_t> best = perm;
  std::int64_t best_cost = assignment_cost(cost, perm);
  while (std::next_permutation(perm.begin(), perm.end())) {
    const std::int64_t c = assignment_cost(cost, perm);
    if (c < best_cost) {
      best_cost = c;
      best = perm;
    }
  }
  return best;
}

std::vector<std::size_t> optimal_assignment(const std::vector<std::vector<std::int64_t>>& cost) {
  require_square(cost);
  const std::size_t n = cost.size();
  if (n == 0) return {};
  std::vector<std::size_t> match;
  const std::int64_t optimum = hungarian(cost, match);

  // Fix rows in order, each to the smallest column that still admits an
  // optimal completion.
  std::vector<std::size_t> result(n);
  std::vector<bool> row_fixed(n, false), col_used(n, false);
  std::int64_t fixed_cost = 0;
  for (std::size_t i = 0; i < n; ++i) {
    row_fixed[i] = true;
    for (std::size_t j = 0; j < n; ++j) {
      if (col_used[j]) continue;
      std::vector<std::size_t> rows, cols;
      for (std::size_t r = 0; r < n; ++r) {
        if (!row_fixed[r]) rows.push_back(r);
      }
      for (std::size_t c = 0; c < n; ++c) {
        if (!col_used[c] && c != j) cols.push_back(c);
      }
      std::int64_t rest = 0;
      if (!rows.empty()) {
        std::vector<std::vector<std::int64_t>> sub(rows.size(), std::vector<std::int64_t>(cols.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
          for (std::size_t c = 0; c < cols.size(); ++c) sub[r][c] = cost[rows[r]][cols[c]];
        }
        std::vector<std::size_t> m;
        rest = hungarian(sub, m);
      }
      if (fixed_cost + cost[i][j] + rest == optimum) {
        result[i] = j;
        col_used[j] = true;
        fixed_cost += cost[i][j];
        break;
      }
    }
  }
  return result;
}

CpwerReport cpwer(const SpeakerTranscriptSet& ref, const SpeakerTranscriptSet& hyp,
                  AssignmentSearch search) {
  require(!ref.empty(), ErrorKind::kInvalidArgument, "cpwer: empty reference set");
  CpwerReport report;
  for (const auto& [key, words] : ref) report.reference_words += words.size();
  require(report.reference_words > 0, ErrorKind::kInvalidArgument, "cpwer: reference has no words");

  std::vector<std::optional<std::string>> ref_keys, hyp_keys;
  for (const auto& [key, words] : ref) ref_keys.emplace_back(key);
  for (const auto& [key, words] : hyp) hyp_keys.emplace_back(key);
  const std::size_t n = std::max(ref_keys.size(), hyp_keys.size());
  ref_keys.resize(n);
  hyp_keys.resize(n);

  static const std::vector<std::string> kEmpty;
  auto words_of = [](const SpeakerTranscriptSet& set, const std::optional<std::string>& key)
      -> const std::vector<std::string>& { return key ? set.at(*key) : kEmpty; };

  std::vector<std::vector<EditCounts>> edits(n, std::vector<EditCounts>(n));
  std::vector<std::vector<std::int64_t>> cost(n, std::vector<std::int64_t>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      edits[i][j] = word_edit_distance(words_of(ref, ref_keys[i]), words_of(hyp, hyp_keys[j]));
      cost[i][j] = static_cast<std::int64_t>(edits[i][j].total());
    }
  }
  const bool exhaustive = search == AssignmentSearch::kExhaustive ||
                          (search == AssignmentSearch::kAuto && n <= kExhaustiveStreamLimit);
  const auto perm = exhaustive ? exhaustive_assignment(cost) : optimal_assignment(cost);
  for (std::size_t i = 0; i < n; ++i) {
    const EditCounts& e = edits[i][perm[i]];
    report.assignment.push_back({ref_keys[i], hyp_keys[perm[i]], e});
    report.substitutions += e.substitutions;
    report.insertions += e.insertions;
    report.deletions += e.deletions;
  }
  report.cpwer = static_cast<double>(report.errors()) / static_cast<double>(report.reference_words);
  return report;
}

std::string CpwerReport::to_json() const {
  nlohmann::ordered_json j;
  j["cpwer"] = cpwer;
  j["reference_words"] = reference_words;
  j["errors"] = errors();
  j["substitutions"] = substitutions;
  j["insertions"] = insertions;
  j["deletions"] = deletions;
  j["assignment"] = nlohmann::ordered_json::array();
  for (const auto& p : assignment) {
    nlohmann::ordered_json e;
    e["ref"] = p.ref ? nlohmann::ordered_json(*p.ref) : nlohmann::ordered_json(nullptr);
    e["hyp"] = p.hyp ? nlohmann::ordered_json(*p.hyp) : nlohmann::ordered_json(nullptr);
    e["substitutions"] = p.errors.substitutions;
    e["insertions"] = p.errors.insertions;
    e["deletions"] = p.errors.deletions;
    j["assignment"].push_back(std::move(e));
  }
  return j.dump();
}

SpeakerTranscriptSet parse_transcript_set(const std::string& json_text, const std::string& source) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::kData, source + ": " + e.what());
  }
  require(j.is_object() && j.contains("speakers") && j["speakers"].is_object(), ErrorKind::kData,
          source + ": expected {\"speakers\": {key: [symbols]}}");
  SpeakerTranscriptSet set;
  for (const auto& [key, value] : j["speakers"].items()) {
    require(value.is_array(), ErrorKind::kData, source + ": speaker '" + key + "' is not an array");
    auto& words = set[key];
    for (const auto& sym : value) {
      if (sym.is_string()) {
        words.push_back(sym.get<std::string>());
      } else if (sym.is_number_integer()) {
        words.push_back(std::to_string(sym.get<std::int64_t>()));
      } else {
        fail(ErrorKind::kData, source + ": speaker '" + key + "' has a non-symbol entry " + sym.dump());
      }
    }
  }
  return set;
}

std::string transcript_set_to_json(const SpeakerTranscriptSet& set) {
  nlohmann::ordered_json j;
  j["speakers"] = nlohmann::ordered_json::object();
  for (const auto& [key, words] : set) j["speakers"][key] = words;
  return j.dump();
}

}  // namespace msaasr

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

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace msaasr {

// Speaker key -> symbol sequence. Symbols compare by exact equality.
using SpeakerTranscriptSet = std::map<std::string, std::vector<std::string>>;

struct EditCounts {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;

  std::size_t total() const { return substitutions + insertions + deletions; }
  friend bool operator==(const EditCounts&, const EditCounts&) = default;
};

// Unit-cost Levenshtein alignment. Among minimal alignments the backtrace
// prefers substitution, then deletion, then insertion.
EditCounts word_edit_distance(std::span<const std::string> ref, std::span<const std::string> hyp);

// Minimum-cost perfect matching on a square cost matrix (rows -> columns).
// Among optimal matchings, the lexicographically smallest is returned.
std::vector<std::size_t> optimal_assignment(const std::vector<std::vector<std::int64_t>>& cost);
std::vector<std::size_t> exhaustive_assignment(const std::vector<std::vector<std::int64_t>>& cost);

enum class AssignmentSearch { kAuto, kExhaustive, kHungarian };

struct StreamPair {
  std::optional<std::string> ref;  // nullopt for a padded empty stream
  std::optional<std::string> hyp;
  EditCounts errors;
};

struct CpwerReport {
  double cpwer = 0.0;
  std::size_t reference_words = 0;
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::vector<StreamPair> assignment;

  std::size_t errors() const { return substitutions + insertions + deletions; }
  std::string to_json() const;
};

// Exhaustive search up to this many streams per side; the assignment
// algorithm beyond it.
inline constexpr std::size_t kExhaustiveStreamLimit = 8;

CpwerReport cpwer(const SpeakerTranscriptSet& ref, const SpeakerTranscriptSet& hyp,
                  AssignmentSearch search = AssignmentSearch::kAuto);

// {"speakers": {key: [symbol, ...]}}; integer symbols are converted to text.
SpeakerTranscriptSet parse_transcript_set(const std::string& json_text, const std::string& source);
std::string transcript_set_to_json(const SpeakerTranscriptSet& set);

}  // namespace msaasr

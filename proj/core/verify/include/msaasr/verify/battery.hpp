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

#include <string>
#include <vector>

namespace msaasr::verify {

struct SuiteResult {
  std::string name;
  bool passed = false;
  double seconds = 0.0;
  double budget_s = 0.0;
  std::string detail;

  bool within_budget() const { return budget_s <= 0.0 || seconds <= budget_s; }
};

struct VerifyOptions {
  bool inject_l3_sign_flip = false;
};

SuiteResult suite_loss_oracle();
SuiteResult suite_gradients(const VerifyOptions& options = {});
SuiteResult suite_architecture();
SuiteResult suite_cpwer_oracle();
SuiteResult suite_clustering();
SuiteResult suite_data_pipeline();
// Passes when the gradient check rejects a sign-flipped L3 backward.
SuiteResult suite_mutation_probe();

std::vector<std::string> suite_names();
std::vector<SuiteResult> run_verify(const VerifyOptions& options = {},
                                    const std::vector<std::string>& only = {});
std::string verify_report_json(const std::vector<SuiteResult>& results);

// Content hash of the data-pipeline sweep; equal across runs of one seed.
std::string data_pipeline_fingerprint(std::size_t samples);

}  // namespace msaasr::verify

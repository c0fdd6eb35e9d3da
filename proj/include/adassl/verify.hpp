// Copyright 2026 The adassl Authors.
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

// Self-verification suite: finite-difference gradient checks, independent
// numerical oracles, small training-run properties and a mutation test.
// Nothing here touches the filesystem.

#ifndef ADASSL_VERIFY_HPP_
#define ADASSL_VERIFY_HPP_

#include <functional>
#include <set>
#include <string>
#include <vector>

namespace adassl {

struct CheckResult {
  std::string group;  // gradient | oracle | training | mutation
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct VerifyOptions {
  // Empty runs every group.
  std::set<std::string> groups;
  // Empty runs every check of the selected groups.
  std::set<std::string> names;
  // Called after each check completes.
  std::function<void(const CheckResult&)> on_result;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  double seconds = 0.0;

  bool passed() const;
  const CheckResult* find(const std::string& name) const;
  std::string table() const;
  std::string json() const;
};

std::vector<std::string> verify_groups();
VerifyReport run_verify(const VerifyOptions& options = {});

// Op-level gradient checks by name; used by the mutation test.
std::vector<CheckResult> op_gradient_checks();

}  // namespace adassl

#endif  // ADASSL_VERIFY_HPP_

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

// Counter-based random numbers (Philox2x64-10).
//
// Every draw is a pure function of (key, counter), and keys are derived
// hierarchically, e.g. seed -> trial -> step -> sample. A stream for sample i
// of step t therefore yields the same values no matter how the batch is
// partitioned or in which order samples are generated.

#ifndef ADASSL_RNG_HPP_
#define ADASSL_RNG_HPP_

#include <array>
#include <cstdint>
#include <string_view>

namespace adassl {

using RngKey = std::uint64_t;

std::array<std::uint64_t, 2> philox2x64(std::array<std::uint64_t, 2> counter, RngKey key);

RngKey derive_key(RngKey parent, std::uint64_t tag);
RngKey derive_key(RngKey parent, std::string_view label);

class RngStream {
 public:
  explicit RngStream(RngKey key) : key_(key) {}

  std::uint64_t next_u64();
  // Uniform on the open interval (0, 1) with 53 bits of resolution.
  double uniform();
  double normal();
  // Gamma(shape, rate = 1), Marsaglia-Tsang with the shape < 1 boost.
  double gamma(double shape);
  double chi_squared(double dof) { return 2.0 * gamma(0.5 * dof); }

  RngKey key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  RngKey key_;
  std::uint64_t counter_ = 0;
  std::uint64_t spare_bits_ = 0;
  bool has_spare_bits_ = false;
  double spare_normal_ = 0.0;
  bool has_spare_normal_ = false;
};

}  // namespace adassl

#endif  // ADASSL_RNG_HPP_

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

#include "adassl/rng.hpp"

#include <cmath>
#include <numbers>

namespace adassl {

namespace {

constexpr std::uint64_t kPhiloxM = 0xD2B74407B1CE6E93ULL;
constexpr std::uint64_t kPhiloxW = 0x9E3779B97F4A7C15ULL;

inline std::uint64_t mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t* hi) {
  const unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
  *hi = static_cast<std::uint64_t>(p >> 64);
  return static_cast<std::uint64_t>(p);
}

}  // namespace

std::array<std::uint64_t, 2> philox2x64(std::array<std::uint64_t, 2> ctr, RngKey key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) key += kPhiloxW;
    std::uint64_t hi = 0;
    const std::uint64_t lo = mulhilo(kPhiloxM, ctr[0], &hi);
    ctr = {hi ^ key ^ ctr[1], lo};
  }
  return ctr;
}

RngKey derive_key(RngKey parent, std::uint64_t tag) {
  return philox2x64({tag, 0x5851F42D4C957F2DULL}, parent)[0];
}

RngKey derive_key(RngKey parent, std::string_view label) {
  // FNV-1a of the label, then mixed through the block cipher.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return philox2x64({h, 0x14057B7EF767814FULL}, parent)[0];
}

std::uint64_t RngStream::next_u64() {
  if (has_spare_bits_) {
    has_spare_bits_ = false;
    return spare_bits_;
  }
  const auto block = philox2x64({counter_++, 0}, key_);
  spare_bits_ = block[1];
  has_spare_bits_ = true;
  return block[0];
}

double RngStream::uniform() {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_spare_normal_) {
    has_spare_normal_ = false;
    return spare_normal_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(angle);
  has_spare_normal_ = true;
  return radius * std::cos(angle);
}

double RngStream::gamma(double shape) {
  if (shape < 1.0) {
    const double u = uniform();
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double x = 0.0, v = 0.0;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

}  // namespace adassl

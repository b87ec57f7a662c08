/*
 * Copyright 2026 The factorlab Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <random>

namespace factorlab {

// Independent generator for stream `index` of a seeded family. Streams with
// different (seed, index, salt) triples are decorrelated by seed_seq mixing,
// which is what keeps per-sample generation order-independent.
inline std::mt19937_64 stream_rng(uint64_t seed, uint64_t index,
                                  uint64_t salt = 0) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(index), static_cast<uint32_t>(index >> 32),
                    static_cast<uint32_t>(salt), static_cast<uint32_t>(salt >> 32)};
  return std::mt19937_64(seq);
}

// One 64-bit seed for a child subsystem.
inline uint64_t derive_seed(uint64_t seed, uint64_t index, uint64_t salt) {
  auto rng = stream_rng(seed, index, salt);
  return rng();
}

// Salts separating the random streams used by different subsystems.
namespace salt {
inline constexpr uint64_t kDataset = 0x1;
inline constexpr uint64_t kSynthetic = 0x2;
inline constexpr uint64_t kInit = 0x3;
inline constexpr uint64_t kShuffle = 0x4;
inline constexpr uint64_t kGanBatch = 0x5;
inline constexpr uint64_t kAdversary = 0x6;
inline constexpr uint64_t kConsistency = 0x7;
inline constexpr uint64_t kMixBatch = 0x8;
inline constexpr uint64_t kTraversal = 0x9;
inline constexpr uint64_t kProbe = 0xA;
}  // namespace salt

}  // namespace factorlab

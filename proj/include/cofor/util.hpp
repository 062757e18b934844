/*
 * Copyright 2026 The cofor Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cofor {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

/// FNV-1a over arbitrary bytes. Used for path-keyed RNG streams and
/// checkpoint fingerprints.
uint64_t fnv1a64(const void* data, size_t len);
uint64_t fnv1a64(std::string_view s);
std::string hex64(uint64_t v);

uint64_t splitmix64(uint64_t& state);

/// Deterministic RNG with portable derived distributions. std::mt19937_64 is
/// pinned by the standard, but the <random> distributions are not; every
/// draw here is implemented explicitly so output is identical across
/// standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed);
  uint64_t u64();
  /// Uniform in [0, n). n must be > 0.
  uint64_t index(uint64_t n);
  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform01();
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller.
  double normal();

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t s_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Mixes a base seed with a stream tag so sub-generators are independent.
uint64_t derive_seed(uint64_t base, uint64_t stream);
uint64_t derive_seed(uint64_t base, std::string_view stream);

/// Worker cap for the OpenMP regions in this library. 0 = hardware default.
void set_thread_cap(int threads);
int thread_cap();

std::string read_file_bytes(const std::string& path);
void write_file_atomic(const std::string& path, const void* data, size_t len);

}  // namespace cofor

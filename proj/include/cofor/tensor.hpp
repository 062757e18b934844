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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <type_traits>
#include <numeric>
#include <string>
#include <vector>

#include "cofor/util.hpp"

namespace cofor {

/// Allocator that default-initializes on resize, so buffers a kernel fully
/// overwrites are not zero-filled first.
template <class T>
struct DefaultInitAlloc : std::allocator<T> {
  template <class U>
  struct rebind {
    using other = DefaultInitAlloc<U>;
  };
  template <class U>
  void construct(U* p) noexcept(std::is_nothrow_default_constructible_v<U>) {
    ::new (static_cast<void*>(p)) U;
  }
  template <class U, class... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

/// Dense n-dimensional array, row-major. All NN computation runs on float;
/// the double instantiation exists for high-precision gradient checks.
template <class S>
struct TensorT {
  using Vec = std::vector<S, DefaultInitAlloc<S>>;

  std::vector<int> shape;
  Vec v;

  TensorT() = default;
  explicit TensorT(std::vector<int> sh) : shape(std::move(sh)) {
    v.resize(static_cast<size_t>(count(shape)));
    std::fill(v.begin(), v.end(), S(0));
  }
  TensorT(std::vector<int> sh, const std::vector<S>& values) : shape(std::move(sh)) {
    if (static_cast<int64_t>(values.size()) != count(shape))
      fail("tensor value count does not match shape");
    v.assign(values.begin(), values.end());
  }

  /// Allocates without zero-filling; caller must write every element.
  static TensorT uninit(std::vector<int> sh) {
    TensorT t;
    t.shape = std::move(sh);
    t.v.resize(static_cast<size_t>(count(t.shape)));
    return t;
  }

  static int64_t count(const std::vector<int>& sh) {
    int64_t n = 1;
    for (int e : sh) {
      if (e <= 0) fail("tensor extents must be positive");
      n *= e;
    }
    return n;
  }

  int64_t size() const { return static_cast<int64_t>(v.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  S* data() { return v.data(); }
  const S* data() const { return v.data(); }
  void fill(S value) { std::fill(v.begin(), v.end(), value); }
  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  S& at2(int a, int b) { return v[static_cast<size_t>(a) * shape[1] + b]; }
  S at2(int a, int b) const { return v[static_cast<size_t>(a) * shape[1] + b]; }
  S& at4(int n, int h, int w, int c) {
    return v[((static_cast<size_t>(n) * shape[1] + h) * shape[2] + w) * shape[3] + c];
  }
  S at4(int n, int h, int w, int c) const {
    return v[((static_cast<size_t>(n) * shape[1] + h) * shape[2] + w) * shape[3] + c];
  }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }

  bool all_finite() const {
    for (S x : v)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }
};

using Tensor = TensorT<float>;

template <class S>
void check_finite(const TensorT<S>& t, const char* where) {
#ifndef NDEBUG
  if (!t.all_finite()) fail(std::string("non-finite values at ") + where);
#else
  (void)t;
  (void)where;
#endif
}

}  // namespace cofor

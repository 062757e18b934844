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
#include "cofor/cooccur.hpp"

#include <algorithm>

namespace cofor {

std::pair<int, int> direction_offset(PairDirection dir) {
  switch (dir) {
    case PairDirection::Horizontal: return {0, 1};
    case PairDirection::Vertical: return {1, 0};
    case PairDirection::Diagonal: return {1, 1};
    case PairDirection::AntiDiagonal: return {1, -1};
  }
  fail("bad PairDirection");
}

char direction_char(PairDirection dir) {
  switch (dir) {
    case PairDirection::Horizontal: return 'h';
    case PairDirection::Vertical: return 'v';
    case PairDirection::Diagonal: return 'd';
    case PairDirection::AntiDiagonal: return 'a';
  }
  fail("bad PairDirection");
}

PairSubset PairSubset::parse(std::string_view tag) {
  bool has[4] = {false, false, false, false};
  for (char c : tag) {
    int idx;
    switch (c) {
      case 'h': case 'H': idx = 0; break;
      case 'v': case 'V': idx = 1; break;
      case 'd': case 'D': idx = 2; break;
      case 'a': case 'A': idx = 3; break;
      default: fail(std::string("bad pair direction '") + c + "' (expected from hvda)");
    }
    if (has[idx]) fail("duplicate pair direction in subset: " + std::string(tag));
    has[idx] = true;
  }
  PairSubset s;
  // Canonical order regardless of spelling order.
  for (int i = 0; i < 4; ++i)
    if (has[i]) s.dirs.push_back(static_cast<PairDirection>(i));
  if (s.dirs.empty()) fail("pair subset must be nonempty");
  return s;
}

std::string PairSubset::tag() const {
  std::string t;
  for (auto d : dirs) t += direction_char(d);
  return t;
}

PairSubset subset_h() { return PairSubset::parse("h"); }
PairSubset subset_hv() { return PairSubset::parse("hv"); }
PairSubset subset_hvda() { return PairSubset::parse("hvda"); }

ChannelView channel_view(const PixelImage& img, int channel) {
  if (channel < 0 || channel >= img.channels) fail("channel index out of range");
  ChannelView c;
  c.base = img.data.data() + channel;
  c.width = img.width;
  c.height = img.height;
  c.stride = img.channels;
  c.row_stride = img.width * img.channels;
  return c;
}

std::vector<uint64_t> pair_histogram(const ChannelView& ch, PairDirection dir) {
  std::vector<uint64_t> counts(kCoocSize, 0);
  const auto [dr, dc] = direction_offset(dir);
  const int r_end = ch.height - dr;
  const int c_begin = std::max(0, -dc);
  const int c_end = ch.width - std::max(0, dc);
  for (int r = 0; r < r_end; ++r) {
    const uint8_t* row = ch.base + static_cast<size_t>(r) * ch.row_stride;
    const uint8_t* next = ch.base + static_cast<size_t>(r + dr) * ch.row_stride;
    for (int c = c_begin; c < c_end; ++c) {
      const uint8_t first = row[static_cast<size_t>(c) * ch.stride];
      const uint8_t second = next[static_cast<size_t>(c + dc) * ch.stride];
      ++counts[static_cast<size_t>(first) * kCoocBins + second];
    }
  }
  return counts;
}

std::vector<float> normalize_histogram(const std::vector<uint64_t>& counts) {
  std::vector<float> out(kCoocSize, 0.0f);
  const uint64_t mx = *std::max_element(counts.begin(), counts.end());
  if (mx == 0) return out;
  const double inv = 1.0 / static_cast<double>(mx);
  for (size_t i = 0; i < kCoocSize; ++i) {
    out[i] = static_cast<float>(static_cast<double>(counts[i]) * inv);
  }
  return out;
}

int feature_depth(int channels, const PairSubset& subset) {
  return channels * static_cast<int>(subset.size());
}

void feature_tensor_into(const PixelImage& img, const PairSubset& subset, float* dst) {
  if (img.channels != 1 && img.channels != 3)
    fail("feature_tensor requires 1 or 3 channels, got " + std::to_string(img.channels));
  const int depth = feature_depth(img.channels, subset);
  const int nd = static_cast<int>(subset.size());
  for (int c = 0; c < img.channels; ++c) {
    const ChannelView view = channel_view(img, c);
    for (int d = 0; d < nd; ++d) {
      const int slice = c * nd + d;
      const std::vector<float> m = normalize_histogram(pair_histogram(view, subset.dirs[d]));
      float* out = dst + slice;
      for (size_t i = 0; i < kCoocSize; ++i) out[i * depth] = m[i];
    }
  }
}

CoocTensor feature_tensor(const PixelImage& img, const PairSubset& subset) {
  CoocTensor t;
  t.subset = subset;
  t.src_width = img.width;
  t.src_height = img.height;
  t.values = Tensor({kCoocBins, kCoocBins, feature_depth(img.channels, subset)});
  feature_tensor_into(img, subset, t.values.data());
  return t;
}

}  // namespace cofor

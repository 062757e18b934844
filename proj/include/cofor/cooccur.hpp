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

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cofor/image.hpp"
#include "cofor/tensor.hpp"

namespace cofor {

/// Spatial offset defining the second pixel of an ordered pair. The four
/// mirrored neighbors are redundant (their histograms are transposes).
enum class PairDirection : uint8_t { Horizontal, Vertical, Diagonal, AntiDiagonal };

/// (row offset, col offset) of the pair partner.
std::pair<int, int> direction_offset(PairDirection dir);
char direction_char(PairDirection dir);

/// Ordered, duplicate-free direction set. Order is canonical (H, V, D, A
/// filtered by membership) so the feature tensor channel layout is fixed.
struct PairSubset {
  std::vector<PairDirection> dirs;

  static PairSubset parse(std::string_view tag);  // e.g. "h", "hv", "hvda"
  std::string tag() const;
  size_t size() const { return dirs.size(); }
  bool operator==(const PairSubset& o) const { return dirs == o.dirs; }
};

PairSubset subset_h();
PairSubset subset_hv();
PairSubset subset_hvda();

/// Non-owning view of one channel plane of an interleaved image.
struct ChannelView {
  const uint8_t* base = nullptr;
  int width = 0;
  int height = 0;
  int stride = 1;      // elements between horizontal neighbors
  int row_stride = 0;  // elements between vertical neighbors

  uint8_t at(int row, int col) const {
    return base[static_cast<size_t>(row) * row_stride + static_cast<size_t>(col) * stride];
  }
};

ChannelView channel_view(const PixelImage& img, int channel);

inline constexpr int kCoocBins = 256;
inline constexpr size_t kCoocSize = static_cast<size_t>(kCoocBins) * kCoocBins;

/// counts[i*256+j] = number of ordered pixel pairs (first=i, second=j) under
/// the direction's offset; pairs whose partner falls outside the image are
/// skipped. Degenerate inputs produce an all-zero matrix.
std::vector<uint64_t> pair_histogram(const ChannelView& ch, PairDirection dir);

/// Divides by the maximum count; an all-zero matrix stays all-zero.
std::vector<float> normalize_histogram(const std::vector<uint64_t>& counts);

/// Stacked normalized co-occurrence histograms, 256 x 256 x D.
struct CoocTensor {
  Tensor values;  // shape {256, 256, D}
  int src_width = 0;
  int src_height = 0;
  PairSubset subset;
};

int feature_depth(int channels, const PairSubset& subset);

/// Slice index = channel * |subset| + direction (channel-major). RGB with
/// all four directions gives depth 12.
CoocTensor feature_tensor(const PixelImage& img, const PairSubset& subset);

/// Same computation written straight into caller memory laid out HWC
/// (dst[(i*256 + j)*depth + slice]); the batch-assembly hot path.
void feature_tensor_into(const PixelImage& img, const PairSubset& subset, float* dst);

}  // namespace cofor

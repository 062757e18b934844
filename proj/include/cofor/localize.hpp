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

#include <functional>
#include <string>
#include <vector>

#include "cofor/image.hpp"
#include "cofor/persist.hpp"

namespace cofor {

/// Per-pixel mean GAN score over all sliding-window patches covering the
/// pixel, with the patch count that produced each mean.
struct Heatmap {
  int width = 0;
  int height = 0;
  std::vector<float> scores;     // row-major, in [0,1]
  std::vector<int32_t> coverage;
  PatchSpec patch;

  float at(int row, int col) const { return scores[static_cast<size_t>(row) * width + col]; }
  int32_t coverage_at(int row, int col) const {
    return coverage[static_cast<size_t>(row) * width + col];
  }
};

/// Scores every patch with patch_score (a probability in [0,1]) and
/// averages per pixel. The scorer injection point exists for tests.
Heatmap compute_heatmap(const PixelImage& img, const PatchSpec& patch,
                        const std::function<double(const PixelImage&, int row, int col)>& score);

/// Batched checkpoint scorer; requires a Detection head.
class CheckpointScorer {
 public:
  explicit CheckpointScorer(const ModelCheckpoint& ckpt, int batch_size = 32);

  /// Sigmoid probabilities for a set of patches.
  std::vector<double> score_patches(const std::vector<const PixelImage*>& patches);
  double score(const PixelImage& patch);
  const PairSubset& subset() const { return subset_; }

 private:
  XceptionNet model_;
  PairSubset subset_;
  int batch_size_;
};

Heatmap compute_heatmap(const PixelImage& img, CheckpointScorer& scorer,
                        const PatchSpec& patch = {128, 8});
Heatmap compute_heatmap(const PixelImage& img, const ModelCheckpoint& ckpt,
                        const PatchSpec& patch = {128, 8});

/// Writes the blue(0) -> white(0.5) -> red(1) rendering as PNG plus a raw
/// sidecar (16-byte header: "CFHM", u32 version, u32 height, u32 width;
/// then height*width little-endian float32 scores).
void render_heatmap(const Heatmap& hm, const std::string& png_path,
                    const std::string& sidecar_path);

/// Reads a sidecar back; exact values.
std::vector<float> read_heatmap_sidecar(const std::string& path, int* height, int* width);

}  // namespace cofor

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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cofor {

/// Decoded 8-bit raster, row-major with interleaved channels.
struct PixelImage {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 or 3
  std::vector<uint8_t> data;

  PixelImage() = default;
  PixelImage(int w, int h, int c)
      : width(w), height(h), channels(c),
        data(static_cast<size_t>(w) * h * c, 0) {}

  uint8_t& at(int row, int col, int ch) {
    return data[(static_cast<size_t>(row) * width + col) * channels + ch];
  }
  uint8_t at(int row, int col, int ch) const {
    return data[(static_cast<size_t>(row) * width + col) * channels + ch];
  }
  bool empty() const { return data.empty(); }
};

struct PatchSpec {
  int size = 128;   // >= 2; a pixel pair needs two pixels
  int stride = 8;   // >= 1
};

struct Patch {
  PixelImage image;
  int row = 0;
  int col = 0;
};

/// Decodes a PNG or JPEG file (sniffed by signature). Grayscale stays
/// 1-channel, RGB stays 3-channel, alpha is dropped. 16-bit and other
/// unsupported pixel formats raise an error rather than being truncated.
PixelImage decode_image(const std::string& path);

void encode_png(const PixelImage& img, const std::string& path);
void encode_jpeg(const PixelImage& img, const std::string& path, int quality);

/// One in-memory JPEG encode/decode cycle at the given quality.
/// std::nullopt returns the input unchanged.
PixelImage jpeg_recompress(const PixelImage& img, std::optional<int> quality);

/// Axis-aligned patches at stride offsets. Patches that would overrun the
/// right/bottom edge are shifted inward so the last patch ends flush with
/// the border. If either dimension is smaller than the patch size the whole
/// image is returned as a single patch at (0,0).
std::vector<Patch> extract_patches(const PixelImage& img, const PatchSpec& spec);

/// The origins extract_patches would produce, without copying pixels.
std::vector<std::pair<int, int>> patch_origins(int width, int height, const PatchSpec& spec);

PixelImage crop(const PixelImage& img, int row, int col, int h, int w);

}  // namespace cofor

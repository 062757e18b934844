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
#include "cofor/localize.hpp"

#include <cmath>
#include <cstring>

#include "cofor/cooccur.hpp"
#include "cofor/nn.hpp"

namespace cofor {

Heatmap compute_heatmap(const PixelImage& img, const PatchSpec& patch,
                        const std::function<double(const PixelImage&, int, int)>& score) {
  if (img.empty()) fail("heatmap of empty image");
  const std::vector<Patch> patches = extract_patches(img, patch);

  Heatmap hm;
  hm.width = img.width;
  hm.height = img.height;
  hm.patch = patch;
  std::vector<double> sum(static_cast<size_t>(img.width) * img.height, 0.0);
  hm.coverage.assign(sum.size(), 0);

  for (const auto& p : patches) {
    const double s = score(p.image, p.row, p.col);
    if (!std::isfinite(s)) fail("patch scorer returned a non-finite value");
    for (int r = 0; r < p.image.height; ++r) {
      const size_t base = static_cast<size_t>(p.row + r) * img.width + p.col;
      for (int c = 0; c < p.image.width; ++c) {
        sum[base + c] += s;
        hm.coverage[base + c] += 1;
      }
    }
  }
  hm.scores.resize(sum.size());
  for (size_t i = 0; i < sum.size(); ++i) {
    hm.scores[i] = hm.coverage[i] ? static_cast<float>(sum[i] / hm.coverage[i]) : 0.0f;
  }
  return hm;
}

CheckpointScorer::CheckpointScorer(const ModelCheckpoint& ckpt, int batch_size)
    : model_(model_from_checkpoint(ckpt)), subset_(ckpt.subset), batch_size_(batch_size) {
  if (ckpt.arch.head != Head::Detection)
    fail("localization requires a detection checkpoint; got an attribution head");
}

std::vector<double> CheckpointScorer::score_patches(const std::vector<const PixelImage*>& patches) {
  std::vector<double> out(patches.size(), 0.0);
  const int depth = model_.config().input_depth;
  const size_t per = static_cast<size_t>(kCoocBins) * kCoocBins * depth;
  for (size_t off = 0; off < patches.size(); off += static_cast<size_t>(batch_size_)) {
    const size_t end = std::min(patches.size(), off + static_cast<size_t>(batch_size_));
    const int n = static_cast<int>(end - off);
    Tensor batch = Tensor::uninit({n, kCoocBins, kCoocBins, depth});
    std::string first_error;
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) {
      try {
        const PixelImage& p = *patches[off + static_cast<size_t>(i)];
        if (feature_depth(p.channels, subset_) != depth)
          fail("patch channel count does not match checkpoint depth " + std::to_string(depth));
        feature_tensor_into(p, subset_, batch.data() + static_cast<size_t>(i) * per);
      } catch (const std::exception& e) {
#pragma omp critical
        if (first_error.empty()) first_error = e.what();
      }
    }
    if (!first_error.empty()) fail(first_error);
    Tensor logits = model_.forward(std::move(batch), false);
    for (int i = 0; i < n; ++i)
      out[off + static_cast<size_t>(i)] = nn::sigmoid(logits.v[static_cast<size_t>(i)]);
  }
  return out;
}

double CheckpointScorer::score(const PixelImage& patch) {
  return score_patches({&patch})[0];
}

Heatmap compute_heatmap(const PixelImage& img, CheckpointScorer& scorer, const PatchSpec& patch) {
  if (img.empty()) fail("heatmap of empty image");
  const std::vector<Patch> patches = extract_patches(img, patch);
  std::vector<const PixelImage*> views;
  views.reserve(patches.size());
  for (const auto& p : patches) views.push_back(&p.image);
  const std::vector<double> scores = scorer.score_patches(views);

  Heatmap hm;
  hm.width = img.width;
  hm.height = img.height;
  hm.patch = patch;
  std::vector<double> sum(static_cast<size_t>(img.width) * img.height, 0.0);
  hm.coverage.assign(sum.size(), 0);
  for (size_t pi = 0; pi < patches.size(); ++pi) {
    const auto& p = patches[pi];
    for (int r = 0; r < p.image.height; ++r) {
      const size_t base = static_cast<size_t>(p.row + r) * img.width + p.col;
      for (int c = 0; c < p.image.width; ++c) {
        sum[base + c] += scores[pi];
        hm.coverage[base + c] += 1;
      }
    }
  }
  hm.scores.resize(sum.size());
  for (size_t i = 0; i < sum.size(); ++i)
    hm.scores[i] = hm.coverage[i] ? static_cast<float>(sum[i] / hm.coverage[i]) : 0.0f;
  return hm;
}

Heatmap compute_heatmap(const PixelImage& img, const ModelCheckpoint& ckpt,
                        const PatchSpec& patch) {
  CheckpointScorer scorer(ckpt);
  return compute_heatmap(img, scorer, patch);
}

// Diverging ramp: blue at 0, white at 0.5, red at 1.
static void ramp_color(float s, uint8_t* rgb) {
  const float t = std::clamp(s, 0.0f, 1.0f);
  float r, g, b;
  if (t <= 0.5f) {
    const float u = t * 2.0f;
    r = 255.0f * u;
    g = 255.0f * u;
    b = 255.0f;
  } else {
    const float u = (t - 0.5f) * 2.0f;
    r = 255.0f;
    g = 255.0f * (1.0f - u);
    b = 255.0f * (1.0f - u);
  }
  rgb[0] = static_cast<uint8_t>(std::lround(r));
  rgb[1] = static_cast<uint8_t>(std::lround(g));
  rgb[2] = static_cast<uint8_t>(std::lround(b));
}

void render_heatmap(const Heatmap& hm, const std::string& png_path,
                    const std::string& sidecar_path) {
  PixelImage img(hm.width, hm.height, 3);
  for (int r = 0; r < hm.height; ++r)
    for (int c = 0; c < hm.width; ++c) ramp_color(hm.at(r, c), &img.at(r, c, 0));
  encode_png(img, png_path);

  std::string bytes;
  bytes.reserve(16 + hm.scores.size() * 4);
  bytes.append("CFHM", 4);
  const uint32_t version = 1, h = static_cast<uint32_t>(hm.height),
                 w = static_cast<uint32_t>(hm.width);
  bytes.append(reinterpret_cast<const char*>(&version), 4);
  bytes.append(reinterpret_cast<const char*>(&h), 4);
  bytes.append(reinterpret_cast<const char*>(&w), 4);
  bytes.append(reinterpret_cast<const char*>(hm.scores.data()), hm.scores.size() * 4);
  write_file_atomic(sidecar_path, bytes.data(), bytes.size());
}

std::vector<float> read_heatmap_sidecar(const std::string& path, int* height, int* width) {
  const std::string bytes = read_file_bytes(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "CFHM", 4) != 0)
    fail("not a heatmap sidecar: " + path);
  uint32_t version, h, w;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&h, bytes.data() + 8, 4);
  std::memcpy(&w, bytes.data() + 12, 4);
  if (version != 1) fail("unsupported heatmap sidecar version: " + path);
  const size_t n = static_cast<size_t>(h) * w;
  if (bytes.size() != 16 + n * 4) fail("heatmap sidecar length mismatch: " + path);
  std::vector<float> scores(n);
  std::memcpy(scores.data(), bytes.data() + 16, n * 4);
  if (height) *height = static_cast<int>(h);
  if (width) *width = static_cast<int>(w);
  return scores;
}

}  // namespace cofor

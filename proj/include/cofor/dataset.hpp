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
#include <optional>
#include <string>
#include <vector>

#include "cofor/cooccur.hpp"
#include "cofor/image.hpp"
#include "cofor/util.hpp"

namespace cofor {

enum class Split { Train, Val, Test, Unassigned };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

/// One corpus entry. Records sharing a group_id always land in the same
/// split (an image and its edited derivatives must never straddle splits).
struct ManifestRecord {
  std::string path;
  std::string label;
  std::string group_id;
  Split split = Split::Unassigned;
};

/// JSON-lines manifest: one object per line with path/label/group_id/split.
std::vector<ManifestRecord> load_manifest(const std::string& path);
void save_manifest(const std::vector<ManifestRecord>& records, const std::string& path);

/// Group-aware split assignment. Groups are shuffled by seed and allotted
/// to train/val/test so each split meets its fraction to within one group.
void split_manifest(std::vector<ManifestRecord>& records,
                    std::array<double, 3> fractions = {0.90, 0.05, 0.05}, uint64_t seed = 0);

std::vector<const ManifestRecord*> records_in_split(const std::vector<ManifestRecord>& records,
                                                    Split split);
std::vector<std::string> sorted_labels(const std::vector<ManifestRecord>& records);

/// Emits batches with exactly per_class records of every class, drawn
/// without replacement and reshuffled per class when a class runs out.
class BalancedBatcher {
 public:
  BalancedBatcher(std::vector<const ManifestRecord*> records, int per_class, uint64_t seed);

  std::vector<const ManifestRecord*> next();
  const std::vector<std::string>& classes() const { return classes_; }
  int batch_size() const { return per_class_ * static_cast<int>(classes_.size()); }

 private:
  struct ClassQueue {
    std::vector<const ManifestRecord*> records;
    size_t cursor = 0;
    Rng rng;
  };
  std::vector<std::string> classes_;
  std::vector<ClassQueue> queues_;
  int per_class_;
};

/// On-the-fly preprocessing: JPEG quality drawn per image path (equal
/// probability across the listed qualities), then an optional patch crop.
struct PreprocPolicy {
  std::vector<std::optional<int>> jpeg_qualities;  // empty means no recompression
  std::optional<PatchSpec> patch;                  // nullopt means whole image
  PairSubset subset = subset_hvda();
  uint64_t rng_seed = 0;

  std::optional<int> quality_for(const std::string& path) const;
  std::string fingerprint() const;
};

std::vector<std::optional<int>> parse_jpeg_mode(const std::string& mode);

/// Applies the policy to a decoded image. draw distinguishes repeated visits
/// of one record (training epochs sample different patches; evaluation uses
/// draw 0).
PixelImage apply_policy(const PixelImage& img, const PreprocPolicy& policy,
                        const std::string& path, uint64_t draw);

/// Texture class parameters: seeded white noise smoothed to an
/// autocorrelation length, then quantized. The quantization step sculpts
/// the co-occurrence support so classes are separable by construction.
struct SynthClassParams {
  std::string label;
  double autocorr_len = 1.0;
  double noise_amp = 48.0;
  int quant_step = 1;
};

struct SynthSpec {
  std::vector<SynthClassParams> classes;
  int image_size = 256;
  int channels = 1;
  int images_per_class = 2000;
  uint64_t rng_seed = 0;
};

/// Two classes: "real" (step 1) vs "ganA" (step 3, smoother field).
SynthSpec default_detection_synth();
/// Six classes with steps 1..6 and graded smoothness.
SynthSpec default_attribution_synth();

PixelImage synth_texture(const SynthClassParams& params, int size, int channels, Rng& rng);

/// Writes PNGs under out_dir and returns the manifest (splits unassigned;
/// every image gets a unique group_id). Deterministic in rng_seed.
std::vector<ManifestRecord> synth_generate(const SynthSpec& spec, const std::string& out_dir);

struct LeaveOneOutPlan {
  std::vector<ManifestRecord> train_val;  // re-split 95/5 train/val
  std::vector<ManifestRecord> test;       // held-out class + matching share of real
};

/// Every record of held_out_class goes to test, along with a matching count
/// of "real" records removed from the training pool (capped at half the
/// real records so training always keeps real examples).
LeaveOneOutPlan leave_one_out_plan(const std::vector<ManifestRecord>& records,
                                   const std::string& held_out_class, uint64_t seed = 0);

}  // namespace cofor

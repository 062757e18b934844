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

#include <string>
#include <vector>

#include "cofor/cooccur.hpp"
#include "cofor/model.hpp"
#include "cofor/tensor.hpp"

// Container layout (fixed little-endian):
//   8-byte magic ("COFORCK1" checkpoints, "COFORFT1" feature dumps)
//   u64 header length
//   UTF-8 JSON header (arch, classes, blob names + shapes, metadata)
//   contiguous float32 blobs in header order
// Files are written atomically via temp-file rename, and saving the same
// object twice produces identical bytes.

namespace cofor {

struct CheckpointMeta {
  uint64_t seed = 0;
  int epochs_run = 0;
  double best_val_acc = 0.0;
};

struct ModelCheckpoint {
  int format_version = 1;
  ArchConfig arch;
  std::vector<std::string> classes;  // order is authoritative for attribution indices
  PairSubset subset;
  std::string preproc_fingerprint;
  std::vector<std::pair<std::string, Tensor>> blobs;
  CheckpointMeta meta;
};

ModelCheckpoint checkpoint_from_model(XceptionNet& model, std::vector<std::string> classes,
                                      PairSubset subset, std::string preproc_fingerprint,
                                      CheckpointMeta meta);

/// Copies blobs into a freshly built model; shapes must match exactly.
void load_into_model(const ModelCheckpoint& ckpt, XceptionNet& model);

/// Convenience: build the architecture and load the weights.
XceptionNet model_from_checkpoint(const ModelCheckpoint& ckpt);

void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path);
ModelCheckpoint load_checkpoint(const std::string& path);

/// FNV-1a over the serialized container; the run-log identity of a model.
std::string checkpoint_fingerprint(const ModelCheckpoint& ckpt);

bool checkpoint_equal(const ModelCheckpoint& a, const ModelCheckpoint& b);

/// One co-occurrence tensor with its provenance; the feature-dump record.
struct FeatureRecord {
  std::string path;
  int row = 0;
  int col = 0;
  Tensor tensor;
};

void save_feature_dump(const PairSubset& subset, const std::vector<FeatureRecord>& records,
                       const std::string& path);
std::vector<FeatureRecord> load_feature_dump(const std::string& path, PairSubset* subset);

// ArchConfig <-> JSON strings (used in the container header and run logs).
std::string arch_to_json(const ArchConfig& cfg);
ArchConfig arch_from_json(const std::string& json_text);

}  // namespace cofor

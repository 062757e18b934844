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

#include <optional>
#include <string>
#include <vector>

#include "cofor/dataset.hpp"
#include "cofor/model.hpp"
#include "cofor/persist.hpp"

namespace cofor {

struct TrainConfig {
  int epochs = 50;
  int batches_per_epoch = 100;
  int val_batches = 50;
  int test_batches_cap = 2000;
  int batch_size = 64;  // detection; attribution uses per_class * classes
  int per_class = 10;   // attribution batch composition
  nn::AdamConfig adam;
  uint64_t seed = 0;
  // Desk-scale helper: end training once validation reaches this accuracy.
  // Unset reproduces the fixed-epoch protocol.
  std::optional<double> early_stop_val_acc;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_acc = 0.0;
};

struct TrainResult {
  ModelCheckpoint checkpoint;  // best-validation parameters
  std::vector<EpochStats> history;
  int best_epoch = -1;
  double best_val_acc = 0.0;
};

struct ConfusionMatrix {
  std::vector<std::string> classes;
  std::vector<int64_t> counts;  // C x C row-major; rows = ground truth

  explicit ConfusionMatrix(std::vector<std::string> cls = {})
      : classes(std::move(cls)),
        counts(classes.size() * classes.size(), 0) {}
  int64_t& at(int truth, int pred) {
    return counts[static_cast<size_t>(truth) * classes.size() + static_cast<size_t>(pred)];
  }
  int64_t at(int truth, int pred) const {
    return counts[static_cast<size_t>(truth) * classes.size() + static_cast<size_t>(pred)];
  }
  int64_t row_sum(int truth) const;
  int64_t total() const;
};

/// Mean of the row-normalized diagonal; classes with no test records are
/// excluded from the mean.
double equal_prior_accuracy(const ConfusionMatrix& cm);
/// Same statistic from already-normalized per-class rates.
double equal_prior_from_rates(const std::vector<double>& diagonal_rates);

struct EvalReport {
  double accuracy = 0.0;
  double equal_prior_accuracy = 0.0;
  std::vector<double> per_class_recall;  // -1 marks a class absent from the set
  ConfusionMatrix confusion;
  std::string config_fingerprint;
  int64_t evaluated = 0;
};

/// Builds the feature batch for a record set: decode, JPEG policy, patch
/// policy, co-occurrence tensor. draw tags the visit so training epochs
/// sample fresh patches while evaluation (draw 0) stays fixed.
Tensor assemble_features(const std::vector<const ManifestRecord*>& records,
                         const PreprocPolicy& policy, int expected_depth, uint64_t draw);

/// The class list a trained checkpoint will carry: {"real","gan"} for
/// detection, sorted labels for attribution.
std::vector<std::string> classes_for_head(Head head,
                                          const std::vector<ManifestRecord>& records);

/// Capped-epoch training with best-validation checkpointing. The model is
/// trained in place; the returned checkpoint holds the best-epoch weights.
TrainResult train_model(XceptionNet& model, const std::vector<ManifestRecord>& records,
                        const PreprocPolicy& policy, const TrainConfig& cfg);

struct EvalOptions {
  int batch_size = 64;
  int test_batches_cap = 2000;
};

EvalReport evaluate(const ModelCheckpoint& ckpt, const std::vector<ManifestRecord>& records,
                    const PreprocPolicy& policy, const EvalOptions& opts = {});

enum class SweepKind { Patch, Jpeg };

/// One model per train-axis value, evaluated against every test-axis value.
/// Values are "64"/"128"/... for Patch, "75"/"none"/... for Jpeg.
struct SweepResult {
  SweepKind kind = SweepKind::Patch;
  std::vector<std::string> train_values;
  std::vector<std::string> test_values;
  std::vector<std::vector<EvalReport>> cells;  // [train][test]
};

SweepResult sweep_grid(SweepKind kind, const std::vector<std::string>& train_values,
                       const std::vector<std::string>& test_values, const ArchConfig& arch,
                       const std::vector<ManifestRecord>& records, const PreprocPolicy& base,
                       const TrainConfig& cfg);

/// Derives the per-cell policy a sweep uses; exposed for tests.
PreprocPolicy sweep_policy(SweepKind kind, const std::string& value, const PreprocPolicy& base);

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path);
std::string report_to_json(const EvalReport& report);
std::string sweep_to_json(const SweepResult& sweep);

}  // namespace cofor

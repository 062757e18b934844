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
#include "cofor/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "json.hpp"

namespace cofor {

using nlohmann::json;

int64_t ConfusionMatrix::row_sum(int truth) const {
  int64_t s = 0;
  for (size_t c = 0; c < classes.size(); ++c) s += at(truth, static_cast<int>(c));
  return s;
}

int64_t ConfusionMatrix::total() const {
  int64_t s = 0;
  for (int64_t v : counts) s += v;
  return s;
}

double equal_prior_accuracy(const ConfusionMatrix& cm) {
  double sum = 0;
  int present = 0;
  for (size_t c = 0; c < cm.classes.size(); ++c) {
    const int64_t rs = cm.row_sum(static_cast<int>(c));
    if (rs == 0) continue;
    sum += static_cast<double>(cm.at(static_cast<int>(c), static_cast<int>(c))) /
           static_cast<double>(rs);
    ++present;
  }
  return present ? sum / present : 0.0;
}

double equal_prior_from_rates(const std::vector<double>& diagonal_rates) {
  if (diagonal_rates.empty()) return 0.0;
  double s = 0;
  for (double r : diagonal_rates) s += r;
  return s / static_cast<double>(diagonal_rates.size());
}

Tensor assemble_features(const std::vector<const ManifestRecord*>& records,
                         const PreprocPolicy& policy, int expected_depth, uint64_t draw) {
  const int n = static_cast<int>(records.size());
  if (n == 0) fail("assemble_features on empty record set");
  Tensor batch = Tensor::uninit({n, kCoocBins, kCoocBins, expected_depth});
  const size_t per = static_cast<size_t>(kCoocBins) * kCoocBins * expected_depth;
  std::string first_error;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    try {
      const ManifestRecord& rec = *records[static_cast<size_t>(i)];
      PixelImage img = decode_image(rec.path);
      img = apply_policy(img, policy, rec.path, draw);
      const int depth = feature_depth(img.channels, policy.subset);
      if (depth != expected_depth)
        fail("feature depth mismatch for " + rec.path + ": model expects depth " +
             std::to_string(expected_depth) + ", image yields depth " + std::to_string(depth));
      feature_tensor_into(img, policy.subset, batch.data() + static_cast<size_t>(i) * per);
    } catch (const std::exception& e) {
#pragma omp critical
      if (first_error.empty()) first_error = e.what();
    }
  }
  if (!first_error.empty()) fail(first_error);
  return batch;
}

std::vector<std::string> classes_for_head(Head head,
                                          const std::vector<ManifestRecord>& records) {
  if (head == Head::Detection) return {"real", "gan"};
  return sorted_labels(records);
}

namespace {

int class_index(const std::vector<std::string>& classes, const std::string& label, Head head) {
  if (head == Head::Detection) return label == "real" ? 0 : 1;
  const auto it = std::find(classes.begin(), classes.end(), label);
  if (it == classes.end())
    fail("label '" + label + "' absent from checkpoint's class list");
  return static_cast<int>(it - classes.begin());
}

// Argmax with lowest-index tie break.
int argmax_row(const float* row, int c) {
  int best = 0;
  for (int i = 1; i < c; ++i)
    if (row[i] > row[best]) best = i;
  return best;
}

struct BatchEval {
  int64_t correct = 0;
  int64_t count = 0;
};

BatchEval eval_batch(XceptionNet& model, const std::vector<const ManifestRecord*>& batch,
                     const PreprocPolicy& policy, const std::vector<std::string>& classes,
                     ConfusionMatrix* cm) {
  const Head head = model.config().head;
  Tensor features = assemble_features(batch, policy, model.config().input_depth, /*draw=*/0);
  Tensor logits = model.forward(std::move(features), /*train=*/false);
  BatchEval out;
  for (int i = 0; i < static_cast<int>(batch.size()); ++i) {
    const int truth = class_index(classes, batch[static_cast<size_t>(i)]->label, head);
    int pred;
    if (head == Head::Detection) {
      const float p = nn::sigmoid(logits.v[static_cast<size_t>(i)]);
      pred = p > 0.5f ? 1 : 0;
    } else {
      pred = argmax_row(&logits.v[static_cast<size_t>(i) * static_cast<size_t>(logits.dim(1))],
                        logits.dim(1));
    }
    if (cm) cm->at(truth, pred) += 1;
    out.correct += (pred == truth);
    out.count += 1;
  }
  return out;
}

double validation_accuracy(XceptionNet& model, const std::vector<const ManifestRecord*>& val,
                           const PreprocPolicy& policy, const std::vector<std::string>& classes,
                           int batch_size) {
  if (val.empty()) return 0.0;
  int64_t correct = 0, count = 0;
  for (size_t off = 0; off < val.size(); off += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(val.size(), off + static_cast<size_t>(batch_size));
    std::vector<const ManifestRecord*> batch(val.begin() + static_cast<long>(off),
                                             val.begin() + static_cast<long>(end));
    const BatchEval r = eval_batch(model, batch, policy, classes, nullptr);
    correct += r.correct;
    count += r.count;
  }
  return count ? static_cast<double>(correct) / static_cast<double>(count) : 0.0;
}

}  // namespace

TrainResult train_model(XceptionNet& model, const std::vector<ManifestRecord>& records,
                        const PreprocPolicy& policy, const TrainConfig& cfg) {
  const Head head = model.config().head;
  auto train_records = records_in_split(records, Split::Train);
  if (train_records.empty()) fail("no records assigned to the train split");
  const std::vector<std::string> classes = classes_for_head(head, records);

  // Balanced batches for both heads; detection divides the batch between
  // the two classes, attribution takes per_class from each label.
  int per_class;
  if (head == Head::Detection) {
    if (cfg.batch_size % 2 != 0) fail("detection batch_size must be even");
    per_class = cfg.batch_size / 2;
  } else {
    per_class = cfg.per_class;
  }
  // Detection pools every non-real label into one "gan" stream.
  std::vector<ManifestRecord> pooled;
  std::vector<const ManifestRecord*> batch_source;
  if (head == Head::Detection) {
    pooled.reserve(train_records.size());
    for (const auto* r : train_records) {
      pooled.push_back(*r);
      if (pooled.back().label != "real") pooled.back().label = "gan";
    }
    batch_source.reserve(pooled.size());
    for (const auto& r : pooled) batch_source.push_back(&r);
  } else {
    batch_source = train_records;
  }
  BalancedBatcher batcher(batch_source, per_class, derive_seed(cfg.seed, "batches"));
  const int batch_size = batcher.batch_size();

  // Fixed validation subset: one seeded shuffle, capped at val_batches.
  auto val_records = records_in_split(records, Split::Val);
  {
    Rng vrng(derive_seed(cfg.seed, "val"));
    vrng.shuffle(val_records);
    const size_t cap = static_cast<size_t>(cfg.val_batches) * static_cast<size_t>(batch_size);
    if (val_records.size() > cap) val_records.resize(cap);
  }

  nn::AdamConfig adam = cfg.adam;
  TrainResult result;
  std::vector<Tensor> best_params;
  const auto params = model.params();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0;
    for (int b = 0; b < cfg.batches_per_epoch; ++b) {
      const uint64_t step =
          static_cast<uint64_t>(epoch) * static_cast<uint64_t>(cfg.batches_per_epoch) +
          static_cast<uint64_t>(b);
      const auto batch = batcher.next();
      Tensor features =
          assemble_features(batch, policy, model.config().input_depth, /*draw=*/step + 1);
      Tensor logits = model.forward(std::move(features), /*train=*/true);

      float loss;
      Tensor dlogits;
      if (head == Head::Detection) {
        std::vector<float> labels(batch.size());
        for (size_t i = 0; i < batch.size(); ++i)
          labels[i] = batch[i]->label == "real" ? 0.0f : 1.0f;
        auto r = nn::sigmoid_xent_batch(logits, labels);
        loss = r.first;
        dlogits = std::move(r.second);
      } else {
        std::vector<int> labels(batch.size());
        for (size_t i = 0; i < batch.size(); ++i)
          labels[i] = class_index(classes, batch[i]->label, head);
        auto r = nn::softmax_xent_batch(logits, labels);
        loss = r.first;
        dlogits = std::move(r.second);
      }
      if (!std::isfinite(loss))
        fail("training diverged: non-finite loss at epoch " + std::to_string(epoch) + " batch " +
             std::to_string(b));
      loss_sum += loss;

      model.zero_grads();
      model.backward(std::move(dlogits));
      nn::adam_step(params, adam);
    }

    const double val_acc = validation_accuracy(model, val_records, policy, classes, batch_size);
    result.history.push_back(
        {epoch, cfg.batches_per_epoch ? loss_sum / cfg.batches_per_epoch : 0.0, val_acc});
    if (val_acc > result.best_val_acc || result.best_epoch < 0) {
      result.best_val_acc = val_acc;
      result.best_epoch = epoch;
      best_params.clear();
      for (const auto* p : params) best_params.push_back(p->w);
    }
    if (cfg.early_stop_val_acc && val_acc >= *cfg.early_stop_val_acc) break;
  }

  if (!best_params.empty()) {
    for (size_t i = 0; i < params.size(); ++i) params[i]->w = best_params[i];
  }
  CheckpointMeta meta;
  meta.seed = cfg.seed;
  meta.epochs_run = static_cast<int>(result.history.size());
  meta.best_val_acc = result.best_val_acc;
  result.checkpoint =
      checkpoint_from_model(model, classes, policy.subset, policy.fingerprint(), meta);
  return result;
}

EvalReport evaluate(const ModelCheckpoint& ckpt, const std::vector<ManifestRecord>& records,
                    const PreprocPolicy& policy, const EvalOptions& opts) {
  if (records.empty()) fail("evaluate on empty record set");
  XceptionNet model = model_from_checkpoint(ckpt);
  const Head head = model.config().head;
  const std::vector<std::string>& classes = ckpt.classes;

  // Validate attribution labels up front so the error names the label.
  for (const auto& r : records) class_index(classes, r.label, head);

  const int64_t cap =
      static_cast<int64_t>(opts.test_batches_cap) * static_cast<int64_t>(opts.batch_size);
  const int64_t n = std::min<int64_t>(cap, static_cast<int64_t>(records.size()));

  EvalReport report;
  report.confusion = ConfusionMatrix(classes);
  int64_t correct = 0;
  for (int64_t off = 0; off < n; off += opts.batch_size) {
    const int64_t end = std::min<int64_t>(n, off + opts.batch_size);
    std::vector<const ManifestRecord*> batch;
    batch.reserve(static_cast<size_t>(end - off));
    for (int64_t i = off; i < end; ++i) batch.push_back(&records[static_cast<size_t>(i)]);
    const BatchEval r = eval_batch(model, batch, policy, classes, &report.confusion);
    correct += r.correct;
  }
  report.evaluated = n;
  report.accuracy = n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
  report.equal_prior_accuracy = cofor::equal_prior_accuracy(report.confusion);
  for (size_t c = 0; c < classes.size(); ++c) {
    const int64_t rs = report.confusion.row_sum(static_cast<int>(c));
    report.per_class_recall.push_back(
        rs ? static_cast<double>(report.confusion.at(static_cast<int>(c), static_cast<int>(c))) /
                 static_cast<double>(rs)
           : -1.0);
  }
  report.config_fingerprint =
      hex64(fnv1a64(checkpoint_fingerprint(ckpt) + "|" + policy.fingerprint()));
  return report;
}

PreprocPolicy sweep_policy(SweepKind kind, const std::string& value, const PreprocPolicy& base) {
  PreprocPolicy p = base;
  if (kind == SweepKind::Patch) {
    const int size = std::stoi(value);
    if (size < 2) fail("sweep patch size must be >= 2: " + value);
    const int stride = base.patch ? base.patch->stride : 8;
    p.patch = PatchSpec{size, stride};
  } else {
    p.jpeg_qualities = parse_jpeg_mode(value == "none" ? "none" : value);
  }
  return p;
}

SweepResult sweep_grid(SweepKind kind, const std::vector<std::string>& train_values,
                       const std::vector<std::string>& test_values, const ArchConfig& arch,
                       const std::vector<ManifestRecord>& records, const PreprocPolicy& base,
                       const TrainConfig& cfg) {
  if (train_values.empty() || test_values.empty()) fail("sweep axes must be nonempty");
  SweepResult result;
  result.kind = kind;
  result.train_values = train_values;
  result.test_values = test_values;

  auto test_records = records_in_split(records, Split::Test);
  std::vector<ManifestRecord> test_copy;
  for (const auto* r : test_records) test_copy.push_back(*r);
  if (test_copy.empty()) fail("sweep requires records in the test split");

  for (const auto& tv : train_values) {
    const PreprocPolicy train_policy = sweep_policy(kind, tv, base);
    XceptionNet model(arch, derive_seed(cfg.seed, "sweep-" + tv));
    TrainConfig cell_cfg = cfg;
    cell_cfg.seed = derive_seed(cfg.seed, "sweep-train-" + tv);
    const TrainResult tr = train_model(model, records, train_policy, cell_cfg);

    std::vector<EvalReport> row;
    for (const auto& ev : test_values) {
      const PreprocPolicy test_policy = sweep_policy(kind, ev, train_policy);
      row.push_back(evaluate(tr.checkpoint, test_copy, test_policy,
                             EvalOptions{cfg.batch_size, cfg.test_batches_cap}));
    }
    result.cells.push_back(std::move(row));
  }
  return result;
}

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path) {
  std::string out = "epoch,train_loss,val_acc\n";
  char line[128];
  for (const auto& h : history) {
    std::snprintf(line, sizeof(line), "%d,%.9g,%.9g\n", h.epoch, h.train_loss, h.val_acc);
    out += line;
  }
  write_file_atomic(path, out.data(), out.size());
}

static json report_json(const EvalReport& r) {
  json j;
  j["accuracy"] = r.accuracy;
  j["equal_prior_accuracy"] = r.equal_prior_accuracy;
  j["per_class_recall"] = r.per_class_recall;
  j["classes"] = r.confusion.classes;
  j["confusion"] = r.confusion.counts;
  j["config_fingerprint"] = r.config_fingerprint;
  j["evaluated"] = r.evaluated;
  return j;
}

std::string report_to_json(const EvalReport& report) { return report_json(report).dump(2); }

std::string sweep_to_json(const SweepResult& sweep) {
  json j;
  j["kind"] = sweep.kind == SweepKind::Patch ? "patch" : "jpeg";
  j["train_values"] = sweep.train_values;
  j["test_values"] = sweep.test_values;
  json rows = json::array();
  for (const auto& row : sweep.cells) {
    json cells = json::array();
    for (const auto& cell : row) cells.push_back(report_json(cell));
    rows.push_back(cells);
  }
  j["cells"] = rows;
  return j.dump(2);
}

}  // namespace cofor

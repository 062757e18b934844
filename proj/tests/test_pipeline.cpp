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
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>

#include "cofor/pipeline.hpp"
#include "oracle_helpers.hpp"

using namespace cofor;
namespace fs = std::filesystem;

static std::string tmp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "cofor_pipeline_tests" / name;
  fs::create_directories(dir);
  return dir.string();
}

static ArchConfig tiny_arch(int depth, Head head, int classes = 1) {
  ArchConfig cfg;
  cfg.input_depth = depth;
  cfg.entry_widths = {4, 8};
  cfg.block_widths = {8, 16};
  cfg.middle_blocks = 1;
  cfg.middle_width = 16;
  cfg.exit_widths = {16, 24};
  cfg.head = head;
  cfg.classes = head == Head::Detection ? 1 : classes;
  return cfg;
}

// Small synthetic corpus shared by the training tests in this file.
static std::vector<ManifestRecord> small_corpus(int per_class, int image_size, uint64_t seed,
                                                const std::string& tag) {
  SynthSpec spec = default_detection_synth();
  spec.images_per_class = per_class;
  spec.image_size = image_size;
  spec.rng_seed = seed;
  auto records = synth_generate(spec, tmp_dir(tag));
  split_manifest(records, {0.70, 0.15, 0.15}, seed);
  return records;
}

TEST_CASE("equal-prior accuracy reproduces the published confusion diagonals") {
  // Full-image attribution diagonal.
  const std::vector<double> table7{0.975, 0.976, 0.964, 1.000, 0.975, 0.902};
  const double epa7 = equal_prior_from_rates(table7);
  // The published caption states 0.9654; the printed 3-decimal diagonal
  // reproduces it to within one unit in the caption's last place.
  CHECK(std::abs(epa7 - 0.9654) < 1e-4);

  // Patch-input diagonal: caption 0.8477, exact at 4 decimals.
  const std::vector<double> table8{0.826, 0.933, 0.959, 0.981, 0.728, 0.659};
  CHECK(std::round(equal_prior_from_rates(table8) * 1e4) / 1e4 == doctest::Approx(0.8477));

  // JPEG-preprocessed diagonal: caption 0.8088, exact at 4 decimals.
  const std::vector<double> table9{0.741, 0.927, 0.892, 0.973, 0.765, 0.555};
  CHECK(std::round(equal_prior_from_rates(table9) * 1e4) / 1e4 == doctest::Approx(0.8088));
}

TEST_CASE("equal-prior accuracy: perfect, constant, and absent-class cases") {
  ConfusionMatrix perfect({"a", "b", "c"});
  perfect.at(0, 0) = 10;
  perfect.at(1, 1) = 20;
  perfect.at(2, 2) = 5;
  CHECK(equal_prior_accuracy(perfect) == doctest::Approx(1.0));

  // Constant predictor on a balanced 6-class set: chance floor 1/6.
  ConfusionMatrix constant({"a", "b", "c", "d", "e", "f"});
  for (int t = 0; t < 6; ++t) constant.at(t, 0) = 30;
  CHECK(equal_prior_accuracy(constant) == doctest::Approx(1.0 / 6));

  // A class with no test records is excluded from the mean.
  ConfusionMatrix partial({"a", "b"});
  partial.at(0, 0) = 8;
  partial.at(0, 1) = 2;
  CHECK(equal_prior_accuracy(partial) == doctest::Approx(0.8));
}

TEST_CASE("assemble_features matches feature_tensor and validates depth") {
  SynthSpec spec = default_detection_synth();
  spec.images_per_class = 2;
  spec.image_size = 40;
  const auto records = synth_generate(spec, tmp_dir("features"));
  PreprocPolicy policy;
  policy.subset = subset_hvda();

  std::vector<const ManifestRecord*> batch{&records[0], &records[1]};
  const Tensor features = assemble_features(batch, policy, 4, 0);
  CHECK(features.shape == std::vector<int>{2, 256, 256, 4});

  const PixelImage img = decode_image(records[0].path);
  const CoocTensor expect = feature_tensor(img, policy.subset);
  for (size_t i = 0; i < expect.values.v.size(); ++i)
    REQUIRE(features.v[i] == expect.values.v[i]);

  CHECK_THROWS_WITH_AS(assemble_features(batch, policy, 12, 0),
                       doctest::Contains("depth"), Error);
}

TEST_CASE("train: zero epochs returns initialized parameters and empty history") {
  const auto records = small_corpus(6, 40, 11, "zero_epochs");
  XceptionNet model(tiny_arch(4, Head::Detection), 3);
  XceptionNet reference(tiny_arch(4, Head::Detection), 3);
  PreprocPolicy policy;
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.batch_size = 4;
  cfg.seed = 5;
  const TrainResult result = train_model(model, records, policy, cfg);
  CHECK(result.history.empty());
  CHECK(result.checkpoint.meta.epochs_run == 0);
  const auto got = model.params();
  const auto want = reference.params();
  for (size_t i = 0; i < got.size(); ++i) REQUIRE(got[i]->w.v == want[i]->w.v);
}

TEST_CASE("train: identical seeds give identical histories and checkpoints") {
  const auto records = small_corpus(8, 40, 21, "determinism");
  PreprocPolicy policy;
  policy.rng_seed = 7;
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batches_per_epoch = 3;
  cfg.val_batches = 2;
  cfg.batch_size = 4;
  cfg.seed = 9;
  XceptionNet m1(tiny_arch(4, Head::Detection), 13);
  XceptionNet m2(tiny_arch(4, Head::Detection), 13);
  const TrainResult r1 = train_model(m1, records, policy, cfg);
  const TrainResult r2 = train_model(m2, records, policy, cfg);
  REQUIRE(r1.history.size() == r2.history.size());
  for (size_t i = 0; i < r1.history.size(); ++i) {
    REQUIRE(r1.history[i].train_loss == r2.history[i].train_loss);
    REQUIRE(r1.history[i].val_acc == r2.history[i].val_acc);
  }
  CHECK(checkpoint_equal(r1.checkpoint, r2.checkpoint));
}

TEST_CASE("train: best validation accuracy is the history maximum") {
  const auto records = small_corpus(8, 40, 31, "monotonic");
  PreprocPolicy policy;
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batches_per_epoch = 2;
  cfg.val_batches = 2;
  cfg.batch_size = 4;
  cfg.adam.lr = 1e-3;
  cfg.seed = 17;
  XceptionNet model(tiny_arch(4, Head::Detection), 29);
  const TrainResult result = train_model(model, records, policy, cfg);
  double max_val = 0;
  for (const auto& h : result.history) max_val = std::max(max_val, h.val_acc);
  CHECK(result.best_val_acc == doctest::Approx(max_val));
  CHECK(result.checkpoint.meta.best_val_acc == doctest::Approx(max_val));
}

TEST_CASE("evaluate: confusion row sums match per-class record counts") {
  const auto records = small_corpus(8, 40, 41, "rowsums");
  PreprocPolicy policy;
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batches_per_epoch = 2;
  cfg.val_batches = 1;
  cfg.batch_size = 4;
  cfg.seed = 3;
  XceptionNet model(tiny_arch(4, Head::Detection), 5);
  const TrainResult tr = train_model(model, records, policy, cfg);

  std::vector<ManifestRecord> test_records;
  for (const auto& r : records)
    if (r.split == Split::Test) test_records.push_back(r);
  const EvalReport report = evaluate(tr.checkpoint, test_records, policy, {4, 2000});

  int64_t real_count = 0, gan_count = 0;
  for (const auto& r : test_records) (r.label == "real" ? real_count : gan_count) += 1;
  CHECK(report.confusion.row_sum(0) == real_count);
  CHECK(report.confusion.row_sum(1) == gan_count);
  CHECK(report.confusion.total() == static_cast<int64_t>(test_records.size()));
  CHECK(report.evaluated == static_cast<int64_t>(test_records.size()));
}

TEST_CASE("evaluate: the record cap and unknown labels") {
  const auto records = small_corpus(8, 40, 51, "cap");
  PreprocPolicy policy;
  XceptionNet model(tiny_arch(4, Head::Detection), 5);
  CheckpointMeta meta;
  const ModelCheckpoint ckpt =
      checkpoint_from_model(model, {"real", "gan"}, policy.subset, "", meta);

  std::vector<ManifestRecord> test_records(records.begin(), records.begin() + 10);
  const EvalReport capped = evaluate(ckpt, test_records, policy, {2, 3});  // cap 6 records
  CHECK(capped.evaluated == 6);

  // Attribution checkpoints must reject labels outside their class list.
  XceptionNet att(tiny_arch(4, Head::Attribution, 3), 5);
  const ModelCheckpoint att_ckpt =
      checkpoint_from_model(att, {"ganA", "ganB", "real"}, policy.subset, "", meta);
  std::vector<ManifestRecord> bad{{records[0].path, "stylegan", "g1", Split::Test}};
  CHECK_THROWS_WITH_AS(evaluate(att_ckpt, bad, policy), doctest::Contains("absent"), Error);
}

TEST_CASE("evaluate is order-independent for a frozen checkpoint") {
  const auto records = small_corpus(6, 40, 63, "eval_order");
  PreprocPolicy policy;
  XceptionNet model(tiny_arch(4, Head::Detection), 5);
  CheckpointMeta meta;
  const ModelCheckpoint ckpt =
      checkpoint_from_model(model, {"real", "gan"}, policy.subset, "", meta);
  std::vector<ManifestRecord> subset(records.begin(), records.begin() + 9);
  const EvalReport a = evaluate(ckpt, subset, policy, {4, 100});
  std::reverse(subset.begin(), subset.end());  // changes batching boundaries too
  const EvalReport b = evaluate(ckpt, subset, policy, {4, 100});
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.confusion.counts == b.confusion.counts);
  CHECK(a.equal_prior_accuracy == b.equal_prior_accuracy);
}

TEST_CASE("evaluate is deterministic for a frozen checkpoint") {
  const auto records = small_corpus(6, 40, 61, "eval_det");
  PreprocPolicy policy;
  XceptionNet model(tiny_arch(4, Head::Detection), 5);
  CheckpointMeta meta;
  const ModelCheckpoint ckpt =
      checkpoint_from_model(model, {"real", "gan"}, policy.subset, "", meta);
  std::vector<ManifestRecord> subset(records.begin(), records.begin() + 8);
  const EvalReport a = evaluate(ckpt, subset, policy, {4, 100});
  const EvalReport b = evaluate(ckpt, subset, policy, {4, 100});
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.confusion.counts == b.confusion.counts);
  CHECK(a.config_fingerprint == b.config_fingerprint);
}

TEST_CASE("sweep: a single-cell grid equals one train plus evaluate") {
  const auto records = small_corpus(8, 40, 71, "sweep1");
  PreprocPolicy base;
  base.rng_seed = derive_seed(3, "policy");
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batches_per_epoch = 2;
  cfg.val_batches = 1;
  cfg.batch_size = 4;
  cfg.seed = 19;

  const SweepResult sweep =
      sweep_grid(SweepKind::Jpeg, {"none"}, {"none"}, tiny_arch(4, Head::Detection), records,
                 base, cfg);
  REQUIRE(sweep.cells.size() == 1);
  REQUIRE(sweep.cells[0].size() == 1);

  // Reproduce the cell by hand with the same derived seeds.
  const PreprocPolicy cell_policy = sweep_policy(SweepKind::Jpeg, "none", base);
  XceptionNet model(tiny_arch(4, Head::Detection), derive_seed(cfg.seed, "sweep-none"));
  TrainConfig cell_cfg = cfg;
  cell_cfg.seed = derive_seed(cfg.seed, "sweep-train-none");
  const TrainResult tr = train_model(model, records, cell_policy, cell_cfg);
  std::vector<ManifestRecord> test_records;
  for (const auto& r : records)
    if (r.split == Split::Test) test_records.push_back(r);
  const EvalReport expect =
      evaluate(tr.checkpoint, test_records, cell_policy, {cfg.batch_size, cfg.test_batches_cap});
  CHECK(sweep.cells[0][0].accuracy == doctest::Approx(expect.accuracy));
  CHECK(sweep.cells[0][0].confusion.counts == expect.confusion.counts);
}

TEST_CASE("sweep policies override the right axis") {
  PreprocPolicy base;
  base.patch = PatchSpec{64, 8};
  base.jpeg_qualities = {85};
  const PreprocPolicy p = sweep_policy(SweepKind::Patch, "128", base);
  CHECK(p.patch->size == 128);
  CHECK(p.patch->stride == 8);
  CHECK(p.jpeg_qualities == base.jpeg_qualities);
  const PreprocPolicy j = sweep_policy(SweepKind::Jpeg, "75", base);
  CHECK(j.jpeg_qualities == std::vector<std::optional<int>>{75});
  CHECK(j.patch->size == 64);
  const PreprocPolicy jn = sweep_policy(SweepKind::Jpeg, "none", base);
  CHECK(jn.jpeg_qualities.empty());
}

TEST_CASE("history CSV is written with the documented columns") {
  const std::vector<EpochStats> history{{0, 0.693, 0.5}, {1, 0.512, 0.875}};
  const std::string path = tmp_dir("csv") + "/history.csv";
  write_history_csv(history, path);
  const std::string text = read_file_bytes(path);
  CHECK(text.find("epoch,train_loss,val_acc\n") == 0);
  CHECK(text.find("0,0.693,0.5\n") != std::string::npos);
  CHECK(text.find("1,0.512,0.875\n") != std::string::npos);
}

TEST_CASE("report JSON carries the confusion matrix and fingerprint") {
  ConfusionMatrix cm({"real", "gan"});
  cm.at(0, 0) = 9;
  cm.at(1, 1) = 7;
  cm.at(1, 0) = 1;
  EvalReport report;
  report.accuracy = 16.0 / 17.0;
  report.equal_prior_accuracy = equal_prior_accuracy(cm);
  report.per_class_recall = {1.0, 7.0 / 8.0};
  report.confusion = cm;
  report.config_fingerprint = "deadbeef";
  report.evaluated = 17;
  const std::string text = report_to_json(report);
  CHECK(text.find("\"deadbeef\"") != std::string::npos);
  CHECK(text.find("\"classes\"") != std::string::npos);
}

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

#include <filesystem>

#include "cofor/persist.hpp"
#include "oracle_helpers.hpp"

using namespace cofor;
namespace fs = std::filesystem;

static std::string tmp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "cofor_persist_tests";
  fs::create_directories(dir);
  return (dir / name).string();
}

static ArchConfig small_arch(int depth, Head head, int classes = 1) {
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

static ModelCheckpoint make_checkpoint(uint64_t seed = 5) {
  XceptionNet model(small_arch(2, Head::Detection), seed);
  CheckpointMeta meta;
  meta.seed = seed;
  meta.epochs_run = 3;
  meta.best_val_acc = 0.9375;
  return checkpoint_from_model(model, {"real", "gan"}, subset_hv(), "fp-test", meta);
}

TEST_CASE("checkpoint round-trips bit-exactly, including metadata") {
  const ModelCheckpoint ckpt = make_checkpoint();
  const std::string path = tmp_path("roundtrip.ck");
  save_checkpoint(ckpt, path);
  const ModelCheckpoint back = load_checkpoint(path);

  CHECK(back.format_version == ckpt.format_version);
  CHECK(back.classes == ckpt.classes);
  CHECK(back.subset.tag() == ckpt.subset.tag());
  CHECK(back.preproc_fingerprint == ckpt.preproc_fingerprint);
  CHECK(back.meta.seed == ckpt.meta.seed);
  CHECK(back.meta.epochs_run == ckpt.meta.epochs_run);
  CHECK(back.meta.best_val_acc == ckpt.meta.best_val_acc);  // exact double
  REQUIRE(back.blobs.size() == ckpt.blobs.size());
  for (size_t i = 0; i < ckpt.blobs.size(); ++i) {
    REQUIRE(back.blobs[i].first == ckpt.blobs[i].first);
    REQUIRE(back.blobs[i].second.shape == ckpt.blobs[i].second.shape);
    REQUIRE(std::equal(back.blobs[i].second.v.begin(), back.blobs[i].second.v.end(),
                       ckpt.blobs[i].second.v.begin()));
  }
  CHECK(checkpoint_equal(back, ckpt));
}

TEST_CASE("saving twice produces identical bytes") {
  const ModelCheckpoint ckpt = make_checkpoint();
  const std::string p1 = tmp_path("dup1.ck"), p2 = tmp_path("dup2.ck");
  save_checkpoint(ckpt, p1);
  save_checkpoint(ckpt, p2);
  CHECK(read_file_bytes(p1) == read_file_bytes(p2));
}

TEST_CASE("loaded weights reproduce the saved model's outputs exactly") {
  Rng rng(9);
  XceptionNet model(small_arch(2, Head::Detection), 77);
  CheckpointMeta meta;
  const ModelCheckpoint ckpt =
      checkpoint_from_model(model, {"real", "gan"}, subset_hv(), "", meta);
  const std::string path = tmp_path("weights.ck");
  save_checkpoint(ckpt, path);
  XceptionNet loaded = model_from_checkpoint(load_checkpoint(path));

  Tensor batch({1, 256, 256, 2});
  for (auto& v : batch.v) v = rng.uniform01() < 0.1 ? static_cast<float>(rng.uniform01()) : 0.0f;
  Tensor copy = batch;
  const Tensor out1 = model.forward(std::move(batch), false);
  const Tensor out2 = loaded.forward(std::move(copy), false);
  CHECK(out1.v == out2.v);
}

TEST_CASE("truncated files name the failing section") {
  const ModelCheckpoint ckpt = make_checkpoint();
  const std::string path = tmp_path("full.ck");
  save_checkpoint(ckpt, path);
  const std::string bytes = read_file_bytes(path);

  struct Case {
    size_t keep;
    const char* expect;
  };
  const Case cases[] = {
      {4, "magic"},
      {12, "header length"},
      {30, "header"},
  };
  for (const auto& c : cases) {
    const std::string cut = tmp_path("cut.ck");
    write_file_atomic(cut, bytes.data(), c.keep);
    CHECK_THROWS_WITH_AS(load_checkpoint(cut), doctest::Contains(c.expect), Error);
  }

  // Cut inside the first blob: the error names that blob.
  const std::string cut_blob = tmp_path("cut_blob.ck");
  write_file_atomic(cut_blob, bytes.data(), bytes.size() - 10);
  try {
    load_checkpoint(cut_blob);
    FAIL("expected truncation error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("truncated") != std::string::npos);
  }
}

TEST_CASE("bad magic and unsupported version are rejected") {
  const std::string junk = tmp_path("junk.ck");
  const std::string data = "NOTMAGICxxxxxxxxxxxxxxxxxxx";
  write_file_atomic(junk, data.data(), data.size());
  CHECK_THROWS_WITH_AS(load_checkpoint(junk), doctest::Contains("magic"), Error);

  ModelCheckpoint v2 = make_checkpoint();
  v2.format_version = 2;
  const std::string path = tmp_path("v2.ck");
  save_checkpoint(v2, path);
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("format_version 2"), Error);
}

TEST_CASE("checkpoint saved with HV subset rejects HVDA-depth features") {
  // Grayscale HV features have depth 2; the model is built for that.
  const ModelCheckpoint ckpt = make_checkpoint();
  const std::string path = tmp_path("hv.ck");
  save_checkpoint(ckpt, path);
  XceptionNet model = model_from_checkpoint(load_checkpoint(path));

  Tensor hvda_features({1, 256, 256, 4});  // grayscale HVDA depth
  try {
    model.forward(std::move(hvda_features), false);
    FAIL("expected depth mismatch");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("depth 2") != std::string::npos);
    CHECK(msg.find("depth 4") != std::string::npos);
  }
}

TEST_CASE("load_into_model rejects a mismatched architecture") {
  const ModelCheckpoint ckpt = make_checkpoint();
  XceptionNet other(small_arch(4, Head::Detection), 0);  // different input depth
  CHECK_THROWS_WITH_AS(load_into_model(ckpt, other), doctest::Contains("shape"), Error);
}

TEST_CASE("feature dump round-trips records exactly") {
  Rng rng(12);
  std::vector<FeatureRecord> records;
  for (int i = 0; i < 3; ++i) {
    FeatureRecord r;
    r.path = "img_" + std::to_string(i) + ".png";
    r.row = i * 8;
    r.col = i * 4;
    r.tensor = Tensor({4, 4, 2});
    oracle::fill_uniform(r.tensor, rng);
    records.push_back(std::move(r));
  }
  const std::string path = tmp_path("features.cft");
  save_feature_dump(subset_hvda(), records, path);

  PairSubset subset;
  const auto back = load_feature_dump(path, &subset);
  CHECK(subset.tag() == "hvda");
  REQUIRE(back.size() == records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    CHECK(back[i].path == records[i].path);
    CHECK(back[i].row == records[i].row);
    CHECK(back[i].col == records[i].col);
    CHECK(back[i].tensor.shape == records[i].tensor.shape);
    CHECK(std::equal(back[i].tensor.v.begin(), back[i].tensor.v.end(),
                     records[i].tensor.v.begin()));
  }
}

TEST_CASE("arch config JSON round trip") {
  ArchConfig cfg = full_config(12, Head::Attribution, 6);
  const ArchConfig back = arch_from_json(arch_to_json(cfg));
  CHECK(back.input_depth == cfg.input_depth);
  CHECK(back.entry_widths == cfg.entry_widths);
  CHECK(back.block_widths == cfg.block_widths);
  CHECK(back.middle_blocks == cfg.middle_blocks);
  CHECK(back.exit_widths == cfg.exit_widths);
  CHECK(back.head == cfg.head);
  CHECK(back.classes == cfg.classes);
  CHECK(back.scale == cfg.scale);
}

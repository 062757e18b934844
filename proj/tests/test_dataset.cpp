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
#include <map>
#include <set>

#include "cofor/dataset.hpp"
#include "oracle_helpers.hpp"

using namespace cofor;
namespace fs = std::filesystem;

static std::string tmp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "cofor_dataset_tests" / name;
  fs::create_directories(dir);
  return dir.string();
}

static std::vector<ManifestRecord> singleton_manifest(int n) {
  std::vector<ManifestRecord> records;
  for (int i = 0; i < n; ++i) {
    records.push_back({"img" + std::to_string(i) + ".png", i % 2 ? "ganA" : "real",
                       "g" + std::to_string(i), Split::Unassigned});
  }
  return records;
}

TEST_CASE("split: 100 singleton groups land exactly 90/5/5") {
  auto records = singleton_manifest(100);
  split_manifest(records, {0.90, 0.05, 0.05}, 3);
  int train = 0, val = 0, test = 0;
  for (const auto& r : records) {
    train += r.split == Split::Train;
    val += r.split == Split::Val;
    test += r.split == Split::Test;
  }
  CHECK(train == 90);
  CHECK(val == 5);
  CHECK(test == 5);
}

TEST_CASE("split: one group of 100 records stays together") {
  std::vector<ManifestRecord> records;
  for (int i = 0; i < 100; ++i)
    records.push_back({"img" + std::to_string(i) + ".png", "real", "same-group"});
  split_manifest(records, {0.90, 0.05, 0.05}, 1);
  const Split s = records.front().split;
  for (const auto& r : records) REQUIRE(r.split == s);
}

TEST_CASE("split: deterministic for a fixed seed, different across seeds") {
  auto a = singleton_manifest(60), b = singleton_manifest(60), c = singleton_manifest(60);
  split_manifest(a, {0.90, 0.05, 0.05}, 7);
  split_manifest(b, {0.90, 0.05, 0.05}, 7);
  split_manifest(c, {0.90, 0.05, 0.05}, 8);
  bool same7 = true, same8 = true;
  for (size_t i = 0; i < a.size(); ++i) {
    same7 = same7 && a[i].split == b[i].split;
    same8 = same8 && a[i].split == c[i].split;
  }
  CHECK(same7);
  CHECK_FALSE(same8);
}

TEST_CASE("split: validation") {
  std::vector<ManifestRecord> empty;
  CHECK_THROWS_AS(split_manifest(empty, {0.9, 0.05, 0.05}, 0), Error);
  auto records = singleton_manifest(10);
  CHECK_THROWS_AS(split_manifest(records, {0.5, 0.1, 0.1}, 0), Error);
}

TEST_CASE("property: group leakage is zero over random manifests") {
  Rng rng(44);
  for (int trial = 0; trial < 15; ++trial) {
    std::vector<ManifestRecord> records;
    const int groups = 5 + static_cast<int>(rng.index(40));
    for (int g = 0; g < groups; ++g) {
      const int members = 1 + static_cast<int>(rng.index(6));
      for (int m = 0; m < members; ++m)
        records.push_back({"f" + std::to_string(g) + "_" + std::to_string(m),
                           g % 2 ? "ganA" : "real", "group" + std::to_string(g)});
    }
    split_manifest(records, {0.8, 0.1, 0.1}, trial);
    std::map<std::string, std::set<Split>> splits_by_group;
    for (const auto& r : records) splits_by_group[r.group_id].insert(r.split);
    for (const auto& [gid, splits] : splits_by_group) REQUIRE(splits.size() == 1);
  }
}

TEST_CASE("manifest JSONL round trip") {
  auto records = singleton_manifest(7);
  split_manifest(records, {0.90, 0.05, 0.05}, 2);
  const std::string path = tmp_dir("manifest") + "/m.jsonl";
  save_manifest(records, path);
  const auto back = load_manifest(path);
  REQUIRE(back.size() == records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    CHECK(back[i].path == records[i].path);
    CHECK(back[i].label == records[i].label);
    CHECK(back[i].group_id == records[i].group_id);
    CHECK(back[i].split == records[i].split);
  }
}

static std::vector<const ManifestRecord*> ptrs(const std::vector<ManifestRecord>& v) {
  std::vector<const ManifestRecord*> out;
  for (const auto& r : v) out.push_back(&r);
  return out;
}

TEST_CASE("balanced batches: 6 classes x 10 gives 60-record batches") {
  std::vector<ManifestRecord> records;
  const std::vector<std::string> labels{"real", "ganA", "ganB", "ganC", "ganD", "ganE"};
  for (const auto& l : labels)
    for (int i = 0; i < 25; ++i)
      records.push_back({l + std::to_string(i), l, l + std::to_string(i)});
  BalancedBatcher batcher(ptrs(records), 10, 5);
  CHECK(batcher.batch_size() == 60);
  const auto batch = batcher.next();
  REQUIRE(batch.size() == 60);
  std::map<std::string, int> per_class;
  for (const auto* r : batch) ++per_class[r->label];
  for (const auto& l : labels) CHECK(per_class[l] == 10);
}

TEST_CASE("balanced batches: 2 classes x 32 gives 64-record batches") {
  std::vector<ManifestRecord> records;
  for (int i = 0; i < 40; ++i) {
    records.push_back({"r" + std::to_string(i), "real", "r" + std::to_string(i)});
    records.push_back({"g" + std::to_string(i), "gan", "g" + std::to_string(i)});
  }
  BalancedBatcher batcher(ptrs(records), 32, 5);
  CHECK(batcher.batch_size() == 64);
  CHECK(batcher.next().size() == 64);
}

TEST_CASE("balanced batches: exactly equal class counts over 100 batches") {
  std::vector<ManifestRecord> records;
  for (const auto& l : {"real", "ganA", "ganB"})
    for (int i = 0; i < 17; ++i)
      records.push_back({std::string(l) + std::to_string(i), l,
                         std::string(l) + std::to_string(i)});
  BalancedBatcher batcher(ptrs(records), 4, 9);
  std::map<std::string, int> seen;
  for (int b = 0; b < 100; ++b)
    for (const auto* r : batcher.next()) ++seen[r->label];
  CHECK(seen["real"] == 400);
  CHECK(seen["ganA"] == 400);
  CHECK(seen["ganB"] == 400);
}

TEST_CASE("balanced batches: without-replacement per epoch cycle") {
  std::vector<ManifestRecord> records;
  for (int i = 0; i < 12; ++i)
    records.push_back({"r" + std::to_string(i), "real", "r" + std::to_string(i)});
  BalancedBatcher batcher(ptrs(records), 4, 1);
  std::multiset<std::string> first_cycle;
  for (int b = 0; b < 3; ++b)
    for (const auto* r : batcher.next()) first_cycle.insert(r->path);
  // 12 records drawn in 3 batches of 4: each exactly once.
  CHECK(first_cycle.size() == 12);
  std::set<std::string> unique(first_cycle.begin(), first_cycle.end());
  CHECK(unique.size() == 12);
}

TEST_CASE("balanced batches: class with too few records fails") {
  std::vector<ManifestRecord> records{{"a", "real", "a"}, {"b", "gan", "b"}};
  CHECK_THROWS_WITH_AS(BalancedBatcher(ptrs(records), 2, 0), doctest::Contains("fewer"), Error);
}

TEST_CASE("synth: quantization steps sculpt the emitted levels") {
  SynthSpec spec;
  spec.classes = {{"real", 1.0, 48.0, 1}, {"ganA", 2.5, 48.0, 4}};
  spec.image_size = 128;
  spec.images_per_class = 30;
  spec.rng_seed = 13;
  const auto manifest = synth_generate(spec, tmp_dir("steps"));

  std::set<int> real_levels, quant_levels;
  for (const auto& r : manifest) {
    const PixelImage img = decode_image(r.path);
    for (uint8_t v : img.data) (r.label == "real" ? real_levels : quant_levels).insert(v);
  }
  // Step 4: only multiples of 4 may appear.
  for (int v : quant_levels) REQUIRE(v % 4 == 0);
  // Step 1: the full 8-bit range is exercised.
  CHECK(real_levels.size() == 256);
}

TEST_CASE("synth: manifest counts and unique group ids") {
  SynthSpec spec = default_detection_synth();
  spec.images_per_class = 50;
  spec.image_size = 32;
  const auto manifest = synth_generate(spec, tmp_dir("counts"));
  CHECK(manifest.size() == 100);
  std::set<std::string> gids;
  for (const auto& r : manifest) gids.insert(r.group_id);
  CHECK(gids.size() == 100);
}

TEST_CASE("synth: same seed is byte-identical") {
  SynthSpec spec = default_detection_synth();
  spec.images_per_class = 4;
  spec.image_size = 48;
  spec.rng_seed = 77;
  const auto m1 = synth_generate(spec, tmp_dir("det1"));
  const auto m2 = synth_generate(spec, tmp_dir("det2"));
  REQUIRE(m1.size() == m2.size());
  for (size_t i = 0; i < m1.size(); ++i)
    REQUIRE(read_file_bytes(m1[i].path) == read_file_bytes(m2[i].path));
}

// Depth-1 decision stump on co-occurrence diagonal mass. The default
// synthetic corpus must be separable by this alone, proving the corpus is
// learnable before any CNN is involved.
TEST_CASE("synth: default detection corpus separable by a diagonal-mass stump") {
  SynthSpec spec = default_detection_synth();
  spec.images_per_class = 150;
  spec.rng_seed = 5;
  const auto manifest = synth_generate(spec, tmp_dir("stump"));

  std::vector<std::pair<double, int>> feature_label;
  for (const auto& r : manifest) {
    const PixelImage img = decode_image(r.path);
    const auto counts = pair_histogram(channel_view(img, 0), PairDirection::Horizontal);
    uint64_t diag = 0, total = 0;
    for (int i = 0; i < 256; ++i) {
      diag += counts[static_cast<size_t>(i) * 256 + i];
      for (int j = 0; j < 256; ++j) total += counts[static_cast<size_t>(i) * 256 + j];
    }
    feature_label.emplace_back(static_cast<double>(diag) / static_cast<double>(total),
                               r.label == "real" ? 0 : 1);
  }
  std::sort(feature_label.begin(), feature_label.end());
  // Best threshold over sorted features (stump in either polarity).
  const int n = static_cast<int>(feature_label.size());
  int best_correct = 0;
  for (int cut = 0; cut <= n; ++cut) {
    int correct_le = 0;
    for (int i = 0; i < n; ++i) {
      const bool predicted_gan = i >= cut;
      correct_le += (predicted_gan == (feature_label[static_cast<size_t>(i)].second == 1));
    }
    best_correct = std::max({best_correct, correct_le, n - correct_le});
  }
  const double acc = static_cast<double>(best_correct) / n;
  CHECK(acc > 0.99);
}

TEST_CASE("preproc policy: a single listed quality is a constant function") {
  PreprocPolicy policy;
  policy.jpeg_qualities = {85};
  policy.rng_seed = 3;
  for (int i = 0; i < 20; ++i)
    REQUIRE(policy.quality_for("any/path" + std::to_string(i)) == 85);
}

TEST_CASE("preproc policy: mixed draw is per-path deterministic and balanced") {
  PreprocPolicy policy;
  policy.jpeg_qualities = parse_jpeg_mode("mixed");
  policy.rng_seed = 9;
  std::map<std::string, int> hist;
  for (int i = 0; i < 4000; ++i) {
    const std::string path = "img" + std::to_string(i) + ".png";
    const auto q1 = policy.quality_for(path);
    const auto q2 = policy.quality_for(path);
    REQUIRE(q1 == q2);
    ++hist[q1 ? std::to_string(*q1) : "none"];
  }
  for (const auto& key : {"75", "85", "90", "none"}) {
    CHECK(hist[key] > 800);  // each of four options near 1000
    CHECK(hist[key] < 1200);
  }
}

TEST_CASE("apply_policy: evaluation draw is stable, training draws vary") {
  Rng rng(2);
  const PixelImage img = oracle::random_image(rng, 64, 48, 1);
  PreprocPolicy policy;
  policy.patch = PatchSpec{16, 8};
  policy.rng_seed = 4;
  const PixelImage a = apply_policy(img, policy, "p.png", 0);
  const PixelImage b = apply_policy(img, policy, "p.png", 0);
  CHECK(a.data == b.data);
  CHECK(a.width == 16);
  CHECK(a.height == 16);
  bool any_different = false;
  for (uint64_t draw = 1; draw < 12 && !any_different; ++draw)
    any_different = apply_policy(img, policy, "p.png", draw).data != a.data;
  CHECK(any_different);
}

TEST_CASE("parse_jpeg_mode accepts none/mixed/quality and rejects junk") {
  CHECK(parse_jpeg_mode("none").empty());
  CHECK(parse_jpeg_mode("mixed").size() == 4);
  CHECK(parse_jpeg_mode("85") == std::vector<std::optional<int>>{85});
  CHECK_THROWS_AS(parse_jpeg_mode("0"), Error);
  CHECK_THROWS_AS(parse_jpeg_mode("banana"), Error);
}

TEST_CASE("leave-one-out: held-out class vanishes from train/val") {
  SynthSpec spec = default_attribution_synth();
  spec.images_per_class = 10;
  spec.image_size = 32;
  auto records = synth_generate(spec, tmp_dir("loo"));
  const auto plan = leave_one_out_plan(records, "ganB", 3);

  for (const auto& r : plan.train_val) REQUIRE(r.label != "ganB");
  int held = 0;
  for (const auto& r : plan.test) held += r.label == "ganB";
  CHECK(held == 10);  // completeness: every held-out record is in test
  int real_in_test = 0;
  for (const auto& r : plan.test) real_in_test += r.label == "real";
  CHECK(real_in_test == 5);  // matching share, capped at half the real pool
  // Remaining classes survive in train/val.
  std::set<std::string> remaining;
  for (const auto& r : plan.train_val) remaining.insert(r.label);
  CHECK(remaining == std::set<std::string>{"real", "ganA", "ganC", "ganD", "ganE"});
}

TEST_CASE("leave-one-out: degenerate and unknown classes are rejected") {
  std::vector<ManifestRecord> two_class;
  for (int i = 0; i < 6; ++i) {
    two_class.push_back({"r" + std::to_string(i), "real", "r" + std::to_string(i)});
    two_class.push_back({"g" + std::to_string(i), "ganA", "g" + std::to_string(i)});
  }
  CHECK_THROWS_WITH_AS(leave_one_out_plan(two_class, "ganA", 0),
                       doctest::Contains("no other"), Error);
  CHECK_THROWS_WITH_AS(leave_one_out_plan(two_class, "progan", 0),
                       doctest::Contains("not present"), Error);
}

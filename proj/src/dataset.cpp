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
#include "cofor/dataset.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "json.hpp"

namespace cofor {

using nlohmann::json;

std::string split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    case Split::Unassigned: return "unassigned";
  }
  fail("bad Split");
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  if (name == "unassigned") return Split::Unassigned;
  fail("unknown split name: " + name);
}

std::vector<ManifestRecord> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open manifest: " + path);
  std::vector<ManifestRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const std::exception& e) {
      fail("manifest " + path + " line " + std::to_string(lineno) + ": " + e.what());
    }
    ManifestRecord r;
    r.path = j.at("path").get<std::string>();
    r.label = j.at("label").get<std::string>();
    r.group_id = j.at("group_id").get<std::string>();
    if (r.group_id.empty())
      fail("manifest " + path + " line " + std::to_string(lineno) + ": empty group_id");
    r.split = j.contains("split") ? split_from_name(j["split"].get<std::string>())
                                  : Split::Unassigned;
    out.push_back(std::move(r));
  }
  return out;
}

void save_manifest(const std::vector<ManifestRecord>& records, const std::string& path) {
  std::string out;
  for (const auto& r : records) {
    json j{{"path", r.path}, {"label", r.label}, {"group_id", r.group_id},
           {"split", split_name(r.split)}};
    out += j.dump();
    out += '\n';
  }
  write_file_atomic(path, out.data(), out.size());
}

void split_manifest(std::vector<ManifestRecord>& records, std::array<double, 3> fractions,
                    uint64_t seed) {
  if (records.empty()) fail("split_manifest on empty manifest");
  const double fsum = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(fsum - 1.0) > 1e-9) fail("split fractions must sum to 1");

  // Group ids in first-appearance order, then a seeded shuffle, so the
  // assignment is independent of manifest sorting quirks.
  std::vector<std::string> group_order;
  std::map<std::string, std::vector<size_t>> members;
  for (size_t i = 0; i < records.size(); ++i) {
    auto [it, inserted] = members.try_emplace(records[i].group_id);
    if (inserted) group_order.push_back(records[i].group_id);
    it->second.push_back(i);
  }
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(group_order);

  const double total = static_cast<double>(records.size());
  const double t_train = fractions[0] * total;
  const double t_val = fractions[1] * total;
  size_t assigned = 0;
  double train_n = 0, val_n = 0;
  for (const auto& gid : group_order) {
    const auto& idx = members[gid];
    Split s;
    if (train_n + 1e-9 < t_train) {
      s = Split::Train;
      train_n += static_cast<double>(idx.size());
    } else if (val_n + 1e-9 < t_val) {
      s = Split::Val;
      val_n += static_cast<double>(idx.size());
    } else {
      s = Split::Test;
    }
    for (size_t i : idx) records[i].split = s;
    assigned += idx.size();
  }
  (void)assigned;
}

std::vector<const ManifestRecord*> records_in_split(const std::vector<ManifestRecord>& records,
                                                    Split split) {
  std::vector<const ManifestRecord*> out;
  for (const auto& r : records)
    if (r.split == split) out.push_back(&r);
  return out;
}

std::vector<std::string> sorted_labels(const std::vector<ManifestRecord>& records) {
  std::set<std::string> s;
  for (const auto& r : records) s.insert(r.label);
  return {s.begin(), s.end()};
}

BalancedBatcher::BalancedBatcher(std::vector<const ManifestRecord*> records, int per_class,
                                 uint64_t seed)
    : per_class_(per_class) {
  if (per_class <= 0) fail("per_class must be positive");
  std::map<std::string, std::vector<const ManifestRecord*>> by_class;
  for (const auto* r : records) by_class[r->label].push_back(r);
  for (auto& [label, recs] : by_class) {
    if (recs.empty()) continue;
    classes_.push_back(label);
  }
  if (classes_.empty()) fail("balanced batches need at least one class with records");
  int ci = 0;
  for (auto& label : classes_) {
    auto& recs = by_class[label];
    if (static_cast<int>(recs.size()) < per_class)
      fail("class '" + label + "' has " + std::to_string(recs.size()) +
           " records, fewer than per_class " + std::to_string(per_class));
    ClassQueue q{std::move(recs), 0, Rng(derive_seed(seed, "batcher-" + label))};
    q.rng.shuffle(q.records);
    queues_.push_back(std::move(q));
    ++ci;
  }
  (void)ci;
}

std::vector<const ManifestRecord*> BalancedBatcher::next() {
  std::vector<const ManifestRecord*> batch;
  batch.reserve(static_cast<size_t>(batch_size()));
  for (auto& q : queues_) {
    for (int k = 0; k < per_class_; ++k) {
      if (q.cursor >= q.records.size()) {
        q.rng.shuffle(q.records);
        q.cursor = 0;
      }
      batch.push_back(q.records[q.cursor++]);
    }
  }
  return batch;
}

std::optional<int> PreprocPolicy::quality_for(const std::string& path) const {
  if (jpeg_qualities.empty()) return std::nullopt;
  if (jpeg_qualities.size() == 1) return jpeg_qualities[0];
  Rng rng(derive_seed(rng_seed, "jpeg|" + path));
  return jpeg_qualities[static_cast<size_t>(rng.index(jpeg_qualities.size()))];
}

std::string PreprocPolicy::fingerprint() const {
  json j;
  json q = json::array();
  for (const auto& v : jpeg_qualities) {
    if (v) q.push_back(*v);
    else q.push_back(nullptr);
  }
  j["jpeg"] = q;
  if (patch) j["patch"] = {{"size", patch->size}, {"stride", patch->stride}};
  else j["patch"] = nullptr;
  j["subset"] = subset.tag();
  j["seed"] = rng_seed;
  return hex64(fnv1a64(j.dump()));
}

std::vector<std::optional<int>> parse_jpeg_mode(const std::string& mode) {
  if (mode == "none") return {};
  if (mode == "mixed") return {75, 85, 90, std::nullopt};
  try {
    const int q = std::stoi(mode);
    if (q < 1 || q > 100) fail("JPEG quality out of range: " + mode);
    return {q};
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    fail("bad --jpeg value '" + mode + "' (expected none, mixed, or a quality in [1,100])");
  }
}

PixelImage apply_policy(const PixelImage& img, const PreprocPolicy& policy,
                        const std::string& path, uint64_t draw) {
  PixelImage result = jpeg_recompress(img, policy.quality_for(path));
  if (policy.patch) {
    const auto origins = patch_origins(result.width, result.height, *policy.patch);
    size_t pick = 0;
    if (origins.size() > 1) {
      Rng rng(derive_seed(policy.rng_seed, "patch|" + path + "|" + std::to_string(draw)));
      pick = static_cast<size_t>(rng.index(origins.size()));
    }
    const auto [r, c] = origins[pick];
    const int h = std::min(policy.patch->size, result.height);
    const int w = std::min(policy.patch->size, result.width);
    result = crop(result, r, c, h, w);
  }
  return result;
}

SynthSpec default_detection_synth() {
  SynthSpec s;
  s.classes = {{"real", 1.0, 48.0, 1}, {"ganA", 2.5, 48.0, 3}};
  s.images_per_class = 2000;
  return s;
}

SynthSpec default_attribution_synth() {
  SynthSpec s;
  s.classes = {{"real", 1.0, 48.0, 1}, {"ganA", 1.3, 48.0, 2}, {"ganB", 1.6, 48.0, 3},
               {"ganC", 1.9, 48.0, 4}, {"ganD", 2.2, 48.0, 5}, {"ganE", 2.5, 48.0, 6}};
  s.images_per_class = 800;
  return s;
}

PixelImage synth_texture(const SynthClassParams& params, int size, int channels, Rng& rng) {
  if (channels != 1 && channels != 3) fail("synth_texture channels must be 1 or 3");
  const int n = size;
  PixelImage img(n, n, channels);

  // Gaussian blur kernel for the autocorrelation length.
  const double sigma = params.autocorr_len;
  const int radius = std::max(0, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<size_t>(2 * radius + 1), 1.0);
  if (radius > 0) {
    double ksum = 0;
    for (int i = -radius; i <= radius; ++i) {
      kernel[static_cast<size_t>(i + radius)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
      ksum += kernel[static_cast<size_t>(i + radius)];
    }
    for (auto& k : kernel) k /= ksum;
  }

  std::vector<double> field(static_cast<size_t>(n) * n), tmp(field.size());
  for (int c = 0; c < channels; ++c) {
    for (auto& v : field) v = rng.normal();

    if (radius > 0) {
      // Separable blur with reflected borders.
      auto reflect = [n](int i) {
        if (i < 0) return -i - 1;
        if (i >= n) return 2 * n - i - 1;
        return i;
      };
      for (int r = 0; r < n; ++r)
        for (int col = 0; col < n; ++col) {
          double acc = 0;
          for (int k = -radius; k <= radius; ++k)
            acc += field[static_cast<size_t>(r) * n + reflect(col + k)] *
                   kernel[static_cast<size_t>(k + radius)];
          tmp[static_cast<size_t>(r) * n + col] = acc;
        }
      for (int col = 0; col < n; ++col)
        for (int r = 0; r < n; ++r) {
          double acc = 0;
          for (int k = -radius; k <= radius; ++k)
            acc += tmp[static_cast<size_t>(reflect(r + k)) * n + col] *
                   kernel[static_cast<size_t>(k + radius)];
          field[static_cast<size_t>(r) * n + col] = acc;
        }
    }

    // Restore the target contrast lost to smoothing, then quantize. The
    // quantized maximum stays a multiple of the step.
    double mean = 0, var = 0;
    for (double v : field) mean += v;
    mean /= static_cast<double>(field.size());
    for (double v : field) var += (v - mean) * (v - mean);
    var /= static_cast<double>(field.size());
    const double scale = var > 1e-12 ? params.noise_amp / std::sqrt(var) : 0.0;
    const int step = std::max(1, params.quant_step);
    const int max_level = 255 / step;
    for (int r = 0; r < n; ++r) {
      for (int col = 0; col < n; ++col) {
        double v = 128.0 + (field[static_cast<size_t>(r) * n + col] - mean) * scale;
        v = std::clamp(v, 0.0, 255.0);
        const int level = std::min(max_level, static_cast<int>(std::lround(v / step)));
        img.at(r, col, c) = static_cast<uint8_t>(level * step);
      }
    }
  }
  return img;
}

std::vector<ManifestRecord> synth_generate(const SynthSpec& spec, const std::string& out_dir) {
  if (spec.classes.empty()) fail("SynthSpec has no classes");
  if (spec.classes.size() > 6) fail("SynthSpec supports at most 6 classes");
  std::filesystem::create_directories(out_dir);

  std::vector<ManifestRecord> manifest;
  struct Job {
    int class_idx;
    int image_idx;
  };
  std::vector<Job> jobs;
  for (int c = 0; c < static_cast<int>(spec.classes.size()); ++c) {
    for (int i = 0; i < spec.images_per_class; ++i) jobs.push_back({c, i});
  }
  manifest.resize(jobs.size());

  // Per-image derived seeds keep output independent of scheduling.
#pragma omp parallel for schedule(dynamic, 8)
  for (int64_t j = 0; j < static_cast<int64_t>(jobs.size()); ++j) {
    const auto& [c, i] = jobs[static_cast<size_t>(j)];
    const auto& cls = spec.classes[static_cast<size_t>(c)];
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%05d.png", cls.label.c_str(), i);
    const std::string path = (std::filesystem::path(out_dir) / name).string();
    Rng rng(derive_seed(spec.rng_seed, cls.label + "/" + std::to_string(i)));
    const PixelImage img = synth_texture(cls, spec.image_size, spec.channels, rng);
    encode_png(img, path);
    char gid[64];
    std::snprintf(gid, sizeof(gid), "%s-%05d", cls.label.c_str(), i);
    manifest[static_cast<size_t>(j)] = ManifestRecord{path, cls.label, gid, Split::Unassigned};
  }
  return manifest;
}

LeaveOneOutPlan leave_one_out_plan(const std::vector<ManifestRecord>& records,
                                   const std::string& held_out_class, uint64_t seed) {
  bool found = false;
  std::set<std::string> other_gan_classes;
  for (const auto& r : records) {
    if (r.label == held_out_class) found = true;
    else if (r.label != "real") other_gan_classes.insert(r.label);
  }
  if (!found) fail("held-out class '" + held_out_class + "' not present in manifest");
  if (held_out_class != "real" && other_gan_classes.empty())
    fail("cannot hold out '" + held_out_class + "': no other non-real class would remain");

  LeaveOneOutPlan plan;
  std::vector<size_t> real_idx;
  size_t held_count = 0;
  for (size_t i = 0; i < records.size(); ++i) {
    if (records[i].label == held_out_class) ++held_count;
    else if (records[i].label == "real") real_idx.push_back(i);
  }

  // A share of real records matching the held-out count moves to test,
  // capped at half the real pool so the training side always keeps real
  // examples (the paper's corpora have far more real than GAN images; desk
  // corpora may not).
  Rng rng(derive_seed(seed, "loo|" + held_out_class));
  rng.shuffle(real_idx);
  const size_t real_share = std::min(real_idx.size() / 2, held_count);
  std::set<size_t> test_real(real_idx.begin(), real_idx.begin() + static_cast<long>(real_share));

  for (size_t i = 0; i < records.size(); ++i) {
    ManifestRecord r = records[i];
    if (r.label == held_out_class || test_real.count(i)) {
      r.split = Split::Test;
      plan.test.push_back(std::move(r));
    } else {
      plan.train_val.push_back(std::move(r));
    }
  }
  split_manifest(plan.train_val, {0.95, 0.05, 0.0}, derive_seed(seed, "loo-split"));
  return plan;
}

}  // namespace cofor

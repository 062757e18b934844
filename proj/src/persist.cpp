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
#include "cofor/persist.hpp"

#include <bit>
#include <cstring>

#include "json.hpp"

namespace cofor {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

namespace {

constexpr char kCheckpointMagic[8] = {'C', 'O', 'F', 'O', 'R', 'C', 'K', '1'};
constexpr char kFeatureMagic[8] = {'C', 'O', 'F', 'O', 'R', 'F', 'T', '1'};

void append_u64(std::string& out, uint64_t v) {
  out.append(reinterpret_cast<const char*>(&v), 8);
}

void append_floats(std::string& out, const Tensor& t) {
  out.append(reinterpret_cast<const char*>(t.data()), t.v.size() * sizeof(float));
}

struct Reader {
  const std::string& bytes;
  size_t pos = 0;
  std::string where;

  void need(size_t n, const std::string& section) {
    if (pos + n > bytes.size())
      fail("checkpoint file truncated in section '" + section + "' (" + where + ")");
  }
  void magic(const char (&m)[8], const std::string& kind) {
    need(8, "magic");
    if (std::memcmp(bytes.data() + pos, m, 8) != 0)
      fail("bad magic: not a " + kind + " file (" + where + ")");
    pos += 8;
  }
  uint64_t u64(const std::string& section) {
    need(8, section);
    uint64_t v;
    std::memcpy(&v, bytes.data() + pos, 8);
    pos += 8;
    return v;
  }
  std::string chunk(size_t n, const std::string& section) {
    need(n, section);
    std::string s = bytes.substr(pos, n);
    pos += n;
    return s;
  }
  void floats(Tensor& t, const std::string& section) {
    const size_t n = static_cast<size_t>(t.size()) * sizeof(float);
    if (pos + n > bytes.size())
      fail("blob '" + section + "' truncated: expected " + std::to_string(n) + " bytes (" +
           where + ")");
    std::memcpy(t.data(), bytes.data() + pos, n);
    pos += n;
  }
};

json subset_json(const PairSubset& s) { return s.tag(); }
PairSubset subset_from_json(const json& j) { return PairSubset::parse(j.get<std::string>()); }

}  // namespace

std::string arch_to_json(const ArchConfig& cfg) {
  json j;
  j["input_depth"] = cfg.input_depth;
  j["entry_widths"] = cfg.entry_widths;
  j["block_widths"] = cfg.block_widths;
  j["middle_blocks"] = cfg.middle_blocks;
  j["middle_width"] = cfg.middle_width;
  j["exit_widths"] = cfg.exit_widths;
  j["head"] = head_name(cfg.head);
  j["classes"] = cfg.classes;
  j["scale"] = cfg.scale;
  return j.dump();
}

ArchConfig arch_from_json(const std::string& text) {
  json j = json::parse(text);
  ArchConfig cfg;
  cfg.input_depth = j.at("input_depth").get<int>();
  cfg.entry_widths = j.at("entry_widths").get<std::vector<int>>();
  cfg.block_widths = j.at("block_widths").get<std::vector<int>>();
  cfg.middle_blocks = j.at("middle_blocks").get<int>();
  cfg.middle_width = j.at("middle_width").get<int>();
  cfg.exit_widths = j.at("exit_widths").get<std::vector<int>>();
  const std::string head = j.at("head").get<std::string>();
  if (head == "detection") cfg.head = Head::Detection;
  else if (head == "attribution") cfg.head = Head::Attribution;
  else fail("unknown head kind in checkpoint: " + head);
  cfg.classes = j.at("classes").get<int>();
  cfg.scale = j.at("scale").get<std::string>();
  return cfg;
}

ModelCheckpoint checkpoint_from_model(XceptionNet& model, std::vector<std::string> classes,
                                      PairSubset subset, std::string preproc_fingerprint,
                                      CheckpointMeta meta) {
  ModelCheckpoint ckpt;
  ckpt.arch = model.config();
  ckpt.classes = std::move(classes);
  ckpt.subset = std::move(subset);
  ckpt.preproc_fingerprint = std::move(preproc_fingerprint);
  ckpt.meta = meta;
  for (auto* p : model.params()) ckpt.blobs.emplace_back(p->name, p->w);
  return ckpt;
}

void load_into_model(const ModelCheckpoint& ckpt, XceptionNet& model) {
  auto params = model.params();
  if (params.size() != ckpt.blobs.size())
    fail("checkpoint blob count " + std::to_string(ckpt.blobs.size()) +
         " does not match architecture (" + std::to_string(params.size()) + " parameters)");
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& [name, blob] = ckpt.blobs[i];
    if (params[i]->name != name)
      fail("checkpoint blob '" + name + "' does not match parameter '" + params[i]->name + "'");
    if (params[i]->w.shape != blob.shape)
      fail("checkpoint blob '" + name + "' shape " + blob.shape_str() +
           " does not match architecture shape " + params[i]->w.shape_str());
    params[i]->w = blob;
  }
}

XceptionNet model_from_checkpoint(const ModelCheckpoint& ckpt) {
  XceptionNet model(ckpt.arch, /*seed=*/0);
  load_into_model(ckpt, model);
  return model;
}

static std::string serialize_checkpoint(const ModelCheckpoint& ckpt) {
  json hdr;
  hdr["format_version"] = ckpt.format_version;
  hdr["arch"] = json::parse(arch_to_json(ckpt.arch));
  hdr["classes"] = ckpt.classes;
  hdr["subset"] = subset_json(ckpt.subset);
  hdr["preproc_fingerprint"] = ckpt.preproc_fingerprint;
  json blobs = json::array();
  for (const auto& [name, t] : ckpt.blobs) blobs.push_back({{"name", name}, {"shape", t.shape}});
  hdr["blobs"] = blobs;
  hdr["meta"] = {{"seed", ckpt.meta.seed},
                 {"epochs_run", ckpt.meta.epochs_run},
                 {"best_val_acc", ckpt.meta.best_val_acc}};
  const std::string header = hdr.dump();

  std::string out;
  out.append(kCheckpointMagic, 8);
  append_u64(out, header.size());
  out += header;
  for (const auto& [name, t] : ckpt.blobs) append_floats(out, t);
  return out;
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  write_file_atomic(path, bytes.data(), bytes.size());
}

ModelCheckpoint load_checkpoint(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  Reader r{bytes, 0, path};
  r.magic(kCheckpointMagic, "cofor checkpoint");
  const uint64_t hlen = r.u64("header length");
  const std::string htext = r.chunk(hlen, "header");
  json hdr;
  try {
    hdr = json::parse(htext);
  } catch (const std::exception& e) {
    fail("checkpoint header is not valid JSON (" + path + "): " + e.what());
  }

  ModelCheckpoint ckpt;
  ckpt.format_version = hdr.at("format_version").get<int>();
  if (ckpt.format_version != 1)
    fail("unsupported checkpoint format_version " + std::to_string(ckpt.format_version) +
         " (this build reads version 1): " + path);
  ckpt.arch = arch_from_json(hdr.at("arch").dump());
  ckpt.classes = hdr.at("classes").get<std::vector<std::string>>();
  ckpt.subset = subset_from_json(hdr.at("subset"));
  ckpt.preproc_fingerprint = hdr.at("preproc_fingerprint").get<std::string>();
  ckpt.meta.seed = hdr.at("meta").at("seed").get<uint64_t>();
  ckpt.meta.epochs_run = hdr.at("meta").at("epochs_run").get<int>();
  ckpt.meta.best_val_acc = hdr.at("meta").at("best_val_acc").get<double>();

  for (const auto& b : hdr.at("blobs")) {
    const std::string name = b.at("name").get<std::string>();
    const std::vector<int> shape = b.at("shape").get<std::vector<int>>();
    Tensor t = Tensor::uninit(shape);
    r.floats(t, name);
    ckpt.blobs.emplace_back(name, std::move(t));
  }
  if (r.pos != bytes.size())
    fail("checkpoint has " + std::to_string(bytes.size() - r.pos) + " trailing bytes: " + path);
  return ckpt;
}

std::string checkpoint_fingerprint(const ModelCheckpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  return hex64(fnv1a64(bytes.data(), bytes.size()));
}

bool checkpoint_equal(const ModelCheckpoint& a, const ModelCheckpoint& b) {
  return serialize_checkpoint(a) == serialize_checkpoint(b);
}

void save_feature_dump(const PairSubset& subset, const std::vector<FeatureRecord>& records,
                       const std::string& path) {
  json hdr;
  hdr["format_version"] = 1;
  hdr["subset"] = subset_json(subset);
  json recs = json::array();
  for (const auto& r : records) {
    recs.push_back({{"path", r.path}, {"origin", {r.row, r.col}}, {"shape", r.tensor.shape}});
  }
  hdr["records"] = recs;
  const std::string header = hdr.dump();

  std::string out;
  out.append(kFeatureMagic, 8);
  append_u64(out, header.size());
  out += header;
  for (const auto& r : records) append_floats(out, r.tensor);
  write_file_atomic(path, out.data(), out.size());
}

std::vector<FeatureRecord> load_feature_dump(const std::string& path, PairSubset* subset) {
  const std::string bytes = read_file_bytes(path);
  Reader r{bytes, 0, path};
  r.magic(kFeatureMagic, "cofor feature dump");
  const uint64_t hlen = r.u64("header length");
  json hdr = json::parse(r.chunk(hlen, "header"));
  if (hdr.at("format_version").get<int>() != 1)
    fail("unsupported feature dump version: " + path);
  if (subset) *subset = subset_from_json(hdr.at("subset"));

  std::vector<FeatureRecord> out;
  for (const auto& jr : hdr.at("records")) {
    FeatureRecord rec;
    rec.path = jr.at("path").get<std::string>();
    rec.row = jr.at("origin")[0].get<int>();
    rec.col = jr.at("origin")[1].get<int>();
    rec.tensor = Tensor::uninit(jr.at("shape").get<std::vector<int>>());
    r.floats(rec.tensor, rec.path);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace cofor

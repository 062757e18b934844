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
#include "cofor/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "cofor/embedding.hpp"
#include "cofor/localize.hpp"
#include "cofor/pipeline.hpp"

namespace cofor::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CommonOpts {
  uint64_t seed = 0;
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
  cmd->add_option("--seed", c.seed, "RNG seed; fixes every random choice of the run");
  cmd->add_option("--threads", c.threads, "Worker cap (0 = all cores; results are identical)");
}

// Every command prints its effective configuration before doing work, so a
// run can be reproduced from its log alone.
void print_config(const std::string& command, json extra, const CommonOpts& c) {
  extra["command"] = command;
  extra["seed"] = c.seed;
  extra["threads"] = c.threads;
  std::cout << "config: " << extra.dump() << "\n";
  if (c.threads > 0) set_thread_cap(c.threads);
}

struct PolicyOpts {
  std::string pairs = "hvda";
  std::string jpeg = "none";
  int patch_size = 0;  // 0 = whole image
  int stride = 8;
};

void add_policy(CLI::App* cmd, PolicyOpts& p) {
  cmd->add_option("--pairs", p.pairs, "Pair directions (h, v, hv, hvda, ...)")
      ->default_val("hvda");
  cmd->add_option("--jpeg", p.jpeg, "JPEG preprocessing: none, mixed, or a quality in [1,100]")
      ->default_val("none");
  cmd->add_option("--patch-size", p.patch_size, "Patch size (0 = whole image)")->default_val(0);
  cmd->add_option("--stride", p.stride, "Patch stride")->default_val(8);
}

PreprocPolicy make_policy(const PolicyOpts& p, uint64_t seed) {
  PreprocPolicy policy;
  policy.subset = PairSubset::parse(p.pairs);
  policy.jpeg_qualities = parse_jpeg_mode(p.jpeg);
  if (p.patch_size > 0) policy.patch = PatchSpec{p.patch_size, p.stride};
  policy.rng_seed = derive_seed(seed, "policy");
  return policy;
}

json policy_json(const PolicyOpts& p) {
  return json{{"pairs", p.pairs}, {"jpeg", p.jpeg}, {"patch_size", p.patch_size},
              {"stride", p.stride}};
}

std::vector<ManifestRecord> load_split_or_all(const std::string& manifest_path,
                                              const std::string& split_sel) {
  auto records = load_manifest(manifest_path);
  if (records.empty()) fail("manifest is empty: " + manifest_path);
  if (split_sel == "all") return records;
  Split want;
  if (split_sel == "auto") {
    const auto test = records_in_split(records, Split::Test);
    if (test.empty()) return records;
    want = Split::Test;
  } else {
    want = split_from_name(split_sel);
  }
  std::vector<ManifestRecord> out;
  for (const auto& r : records)
    if (r.split == want) out.push_back(r);
  if (out.empty()) fail("no records in split '" + split_sel + "' of " + manifest_path);
  return out;
}

int infer_depth(const std::vector<ManifestRecord>& records, const PairSubset& subset) {
  const PixelImage probe = decode_image(records.front().path);
  return feature_depth(probe.channels, subset);
}

SynthSpec synth_spec_for(int classes, int count, int size, int channels, uint64_t seed) {
  if (classes < 2 || classes > 6) fail("--classes must be in [2,6]");
  SynthSpec spec;
  if (classes == 2) {
    spec = default_detection_synth();
  } else if (classes == 6) {
    spec = default_attribution_synth();
  } else {
    spec.classes.push_back({"real", 1.0, 48.0, 1});
    for (int k = 1; k < classes; ++k) {
      const double len = 1.0 + 1.5 * static_cast<double>(k) / (classes - 1);
      spec.classes.push_back({std::string("gan") + static_cast<char>('A' + k - 1), len, 48.0,
                              k + 1});
    }
  }
  if (count > 0) spec.images_per_class = count;
  if (size > 0) spec.image_size = size;
  spec.channels = channels;
  spec.rng_seed = seed;
  return spec;
}

int cmd_synth(const std::string& out_dir, const std::string& manifest_path, int classes,
              int count, int size, int channels, const CommonOpts& common) {
  const SynthSpec spec = synth_spec_for(classes, count, size, channels, common.seed);
  const auto manifest = synth_generate(spec, out_dir);
  save_manifest(manifest, manifest_path);
  std::printf("wrote %zu images (%d classes x %d) under %s\n", manifest.size(),
              static_cast<int>(spec.classes.size()), spec.images_per_class, out_dir.c_str());
  std::printf("manifest: %s\n", manifest_path.c_str());
  return 0;
}

int cmd_split(const std::string& manifest_path, const std::string& out_path,
              const std::string& fractions_text, const CommonOpts& common) {
  auto records = load_manifest(manifest_path);
  std::array<double, 3> fr{0.90, 0.05, 0.05};
  if (!fractions_text.empty()) {
    if (std::sscanf(fractions_text.c_str(), "%lf,%lf,%lf", &fr[0], &fr[1], &fr[2]) != 3)
      fail("bad --fractions (expected train,val,test): " + fractions_text);
  }
  split_manifest(records, fr, common.seed);
  const std::string out = out_path.empty() ? manifest_path : out_path;
  save_manifest(records, out);
  int counts[3] = {0, 0, 0};
  for (const auto& r : records) {
    if (r.split == Split::Train) ++counts[0];
    else if (r.split == Split::Val) ++counts[1];
    else if (r.split == Split::Test) ++counts[2];
  }
  std::printf("split %zu records: train=%d val=%d test=%d -> %s\n", records.size(), counts[0],
              counts[1], counts[2], out.c_str());
  return 0;
}

int cmd_extract(const std::string& manifest_path, const std::string& out_path,
                const PolicyOpts& popts, const std::string& split_sel, int limit,
                const CommonOpts& common) {
  const auto records = load_split_or_all(manifest_path, split_sel);
  const PreprocPolicy policy = make_policy(popts, common.seed);
  std::vector<FeatureRecord> dump;
  int n = 0;
  for (const auto& rec : records) {
    if (limit > 0 && n >= limit) break;
    PixelImage img = decode_image(rec.path);
    img = jpeg_recompress(img, policy.quality_for(rec.path));
    if (policy.patch) {
      for (const auto& p : extract_patches(img, *policy.patch)) {
        CoocTensor t = feature_tensor(p.image, policy.subset);
        dump.push_back({rec.path, p.row, p.col, std::move(t.values)});
      }
    } else {
      CoocTensor t = feature_tensor(img, policy.subset);
      dump.push_back({rec.path, 0, 0, std::move(t.values)});
    }
    ++n;
  }
  save_feature_dump(policy.subset, dump, out_path);
  std::printf("wrote %zu feature records (%d images) to %s\n", dump.size(), n, out_path.c_str());
  return 0;
}

struct TrainOpts {
  std::string head = "detect";
  std::string arch = "mini";
  int epochs = 50;
  int batch_size = 64;
  int per_class = 10;
  int batches_per_epoch = 100;
  int val_batches = 50;
  double lr = 1e-4;
  double early_stop = 0.0;  // 0 = off
};

void add_train_opts(CLI::App* cmd, TrainOpts& t) {
  cmd->add_option("--epochs", t.epochs)->default_val(50);
  cmd->add_option("--batch-size", t.batch_size)->default_val(64);
  cmd->add_option("--per-class", t.per_class, "Records per class per batch (attribution)")
      ->default_val(10);
  cmd->add_option("--batches-per-epoch", t.batches_per_epoch)->default_val(100);
  cmd->add_option("--val-batches", t.val_batches)->default_val(50);
  cmd->add_option("--lr", t.lr)->default_val(1e-4);
  cmd->add_option("--early-stop", t.early_stop,
                  "Stop when validation accuracy reaches this (0 = run all epochs)")
      ->default_val(0.0);
}

TrainConfig make_train_config(const TrainOpts& t, uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = t.epochs;
  cfg.batch_size = t.batch_size;
  cfg.per_class = t.per_class;
  cfg.batches_per_epoch = t.batches_per_epoch;
  cfg.val_batches = t.val_batches;
  cfg.adam.lr = t.lr;
  cfg.seed = seed;
  if (t.early_stop > 0) cfg.early_stop_val_acc = t.early_stop;
  return cfg;
}

int cmd_train(const std::string& manifest_path, const std::string& out_path,
              const std::string& history_path, const TrainOpts& topts, const PolicyOpts& popts,
              const CommonOpts& common) {
  auto records = load_manifest(manifest_path);
  if (records.empty()) fail("manifest is empty: " + manifest_path);
  if (records_in_split(records, Split::Train).empty()) {
    std::printf("manifest has no split assignment; applying 90/5/5 with seed %llu\n",
                static_cast<unsigned long long>(common.seed));
    split_manifest(records, {0.90, 0.05, 0.05}, common.seed);
  }

  const PreprocPolicy policy = make_policy(popts, common.seed);
  const Head head = topts.head == "attribute" ? Head::Attribution : Head::Detection;
  const int depth = infer_depth(records, policy.subset);
  const int classes =
      head == Head::Attribution ? static_cast<int>(sorted_labels(records).size()) : 1;

  ArchConfig arch;
  if (topts.arch == "mini") arch = mini_config(depth, head, classes);
  else if (topts.arch == "full") arch = full_config(depth, head, classes);
  else fail("unknown --arch '" + topts.arch + "' (expected mini or full)");

  XceptionNet model(arch, common.seed);
  std::printf("model: %lld parameters, input depth %d\n",
              static_cast<long long>(model.param_count()), depth);

  const TrainConfig cfg = make_train_config(topts, common.seed);
  const TrainResult result = train_model(model, records, policy, cfg);
  save_checkpoint(result.checkpoint, out_path);
  const std::string hist = history_path.empty() ? out_path + ".history.csv" : history_path;
  write_history_csv(result.history, hist);
  std::printf("best val accuracy %.4f at epoch %d (%zu epochs run)\n", result.best_val_acc,
              result.best_epoch, result.history.size());
  std::printf("checkpoint: %s (fingerprint %s)\n", out_path.c_str(),
              checkpoint_fingerprint(result.checkpoint).c_str());
  std::printf("history: %s\n", hist.c_str());
  return 0;
}

// Scores loose images (no labels, whole-image features).
int score_images(const ModelCheckpoint& ckpt, const std::vector<std::string>& images,
                 const PreprocPolicy& policy) {
  XceptionNet model = model_from_checkpoint(ckpt);
  for (const auto& path : images) {
    PixelImage img = decode_image(path);
    img = apply_policy(img, policy, path, 0);
    CoocTensor t = feature_tensor(img, policy.subset);
    Tensor batch = Tensor::uninit({1, kCoocBins, kCoocBins, t.values.dim(2)});
    std::copy(t.values.v.begin(), t.values.v.end(), batch.v.begin());
    Tensor logits = model.forward(std::move(batch), false);
    if (ckpt.arch.head == Head::Detection) {
      const double p = nn::sigmoid(logits.v[0]);
      std::printf("%s  p_gan=%.4f  verdict=%s\n", path.c_str(), p, p > 0.5 ? "gan" : "real");
    } else {
      const int C = logits.dim(1);
      double mx = logits.v[0];
      for (int c = 1; c < C; ++c) mx = std::max(mx, static_cast<double>(logits.v[c]));
      double sum = 0;
      std::vector<double> probs(static_cast<size_t>(C));
      for (int c = 0; c < C; ++c) {
        probs[static_cast<size_t>(c)] = std::exp(static_cast<double>(logits.v[c]) - mx);
        sum += probs[static_cast<size_t>(c)];
      }
      std::printf("%s ", path.c_str());
      int best = 0;
      for (int c = 0; c < C; ++c) {
        probs[static_cast<size_t>(c)] /= sum;
        std::printf(" %s=%.4f", ckpt.classes[static_cast<size_t>(c)].c_str(),
                    probs[static_cast<size_t>(c)]);
        if (probs[static_cast<size_t>(c)] > probs[static_cast<size_t>(best)]) best = c;
      }
      std::printf("  argmax=%s\n", ckpt.classes[static_cast<size_t>(best)].c_str());
    }
  }
  return 0;
}

int cmd_classify(Head expect_head, const std::string& model_path,
                 const std::string& manifest_path, const std::vector<std::string>& images,
                 const std::string& split_sel, const std::string& out_path,
                 const PolicyOpts& popts, const CommonOpts& common) {
  const ModelCheckpoint ckpt = load_checkpoint(model_path);
  if (ckpt.arch.head != expect_head)
    fail(std::string("checkpoint has a ") + head_name(ckpt.arch.head) + " head; this command needs " +
         head_name(expect_head));
  PolicyOpts adjusted = popts;
  adjusted.pairs = ckpt.subset.tag();  // feature layout comes from the checkpoint
  const PreprocPolicy policy = make_policy(adjusted, common.seed);

  if (!images.empty()) return score_images(ckpt, images, policy);
  if (manifest_path.empty()) fail("provide --manifest or image paths");

  const auto records = load_split_or_all(manifest_path, split_sel);
  const EvalReport report = evaluate(ckpt, records, policy);
  std::printf("evaluated %lld records\n", static_cast<long long>(report.evaluated));
  std::printf("accuracy %.4f  equal-prior %.4f\n", report.accuracy,
              report.equal_prior_accuracy);
  for (size_t c = 0; c < report.confusion.classes.size(); ++c) {
    std::printf("  recall[%s] = %.4f\n", report.confusion.classes[c].c_str(),
                report.per_class_recall[c]);
  }
  if (!out_path.empty()) {
    const std::string text = report_to_json(report);
    write_file_atomic(out_path, text.data(), text.size());
    std::printf("report: %s\n", out_path.c_str());
  }
  return 0;
}

int cmd_localize(const std::string& model_path, const std::string& image_path, int patch_size,
                 int stride, std::string out_prefix, const CommonOpts&) {
  const ModelCheckpoint ckpt = load_checkpoint(model_path);
  const PixelImage img = decode_image(image_path);
  CheckpointScorer scorer(ckpt);
  const Heatmap hm = compute_heatmap(img, scorer, PatchSpec{patch_size, stride});
  if (out_prefix.empty()) {
    fs::path p(image_path);
    out_prefix = (p.parent_path() / p.stem()).string() + "_heatmap";
  }
  render_heatmap(hm, out_prefix + ".png", out_prefix + ".cfhm");
  double mean = 0;
  for (float s : hm.scores) mean += s;
  mean /= static_cast<double>(hm.scores.size());
  std::printf("heatmap %dx%d, mean score %.4f -> %s.png (+.cfhm sidecar)\n", hm.width, hm.height,
              mean, out_prefix.c_str());
  return 0;
}

int cmd_embed(const std::string& model_path, const std::string& manifest_path, int cap,
              int pca_dim, double perplexity, int iterations, double learning_rate,
              const std::string& split_sel, const std::string& out_prefix,
              const CommonOpts& common) {
  const ModelCheckpoint ckpt = load_checkpoint(model_path);
  const auto records = load_split_or_all(manifest_path, split_sel);
  PolicyOpts popts;
  popts.pairs = ckpt.subset.tag();
  const PreprocPolicy policy = make_policy(popts, common.seed);

  EmbeddingSet set = extract_embeddings(ckpt, records, policy, cap, common.seed);
  std::printf("extracted %d embeddings of width %d\n", set.n, set.dim);
  save_embeddings_jsonl(set, out_prefix + "_embeddings.jsonl");

  const PcaResult pca = pca_reduce(set, std::min(pca_dim, set.n - 1));
  std::printf("PCA -> %d components\n", pca.effective_rank);

  TsneConfig tcfg;
  tcfg.perplexity = perplexity;
  tcfg.iterations = iterations;
  tcfg.learning_rate = learning_rate;
  tcfg.seed = common.seed;
  const TsneResult layout = tsne(pca.reduced, tcfg);
  std::printf("t-SNE final KL %.4f after %d iterations\n", layout.kl_history.back(),
              iterations);
  save_layout_csv(layout, set, out_prefix + "_layout.csv");
  plot_embedding(layout.y, set.labels, out_prefix + "_plot.png");
  std::printf("outputs: %s_embeddings.jsonl, %s_layout.csv, %s_plot.png\n", out_prefix.c_str(),
              out_prefix.c_str(), out_prefix.c_str());
  return 0;
}

int cmd_sweep(const std::string& manifest_path, const std::string& grid,
              const std::string& values_text, const std::string& out_path,
              const std::string& arch_name, const TrainOpts& topts, const PolicyOpts& popts,
              const CommonOpts& common) {
  auto records = load_manifest(manifest_path);
  if (records_in_split(records, Split::Train).empty())
    split_manifest(records, {0.90, 0.05, 0.05}, common.seed);

  SweepKind kind;
  std::vector<std::string> values;
  if (grid == "patch") {
    kind = SweepKind::Patch;
    values = {"64", "128", "256"};
  } else if (grid == "jpeg") {
    kind = SweepKind::Jpeg;
    values = {"75", "85", "90", "none"};
  } else {
    fail("--grid must be patch or jpeg");
  }
  if (!values_text.empty()) {
    values.clear();
    std::string cur;
    for (char c : values_text + ",") {
      if (c == ',') {
        if (!cur.empty()) values.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
  }

  const PreprocPolicy base = make_policy(popts, common.seed);
  const int depth = infer_depth(records, base.subset);
  ArchConfig arch = arch_name == "full" ? full_config(depth, Head::Detection)
                                        : mini_config(depth, Head::Detection);
  const TrainConfig cfg = make_train_config(topts, common.seed);

  const SweepResult sweep = sweep_grid(kind, values, values, arch, records, base, cfg);
  const std::string text = sweep_to_json(sweep);
  write_file_atomic(out_path, text.data(), text.size());

  std::printf("%-8s", "tr\\te");
  for (const auto& v : sweep.test_values) std::printf(" %8s", v.c_str());
  std::printf("\n");
  for (size_t i = 0; i < sweep.cells.size(); ++i) {
    std::printf("%-8s", sweep.train_values[i].c_str());
    for (const auto& cell : sweep.cells[i]) std::printf(" %8.4f", cell.accuracy);
    std::printf("\n");
  }
  std::printf("matrix: %s\n", out_path.c_str());
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& manifest_path,
             const std::string& split_sel, const std::string& out_path, const PolicyOpts& popts,
             const CommonOpts& common) {
  return cmd_classify(load_checkpoint(model_path).arch.head, model_path, manifest_path, {},
                      split_sel, out_path, popts, common);
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"cofor: GAN-image detection, attribution and localization from pixel "
               "co-occurrence statistics"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic texture corpus");
  std::string s_out_dir, s_manifest;
  int s_classes = 2, s_count = 0, s_size = 0, s_channels = 1;
  CommonOpts s_common;
  synth->add_option("--out-dir", s_out_dir, "Directory for PNGs")->required();
  synth->add_option("--manifest", s_manifest, "Manifest output path")->required();
  synth->add_option("--classes", s_classes, "Number of classes (2..6)")->default_val(2);
  synth->add_option("--count", s_count, "Images per class (0 = preset default)");
  synth->add_option("--size", s_size, "Image size (0 = preset default)");
  synth->add_option("--channels", s_channels, "1 or 3")->default_val(1);
  add_common(synth, s_common);

  // split
  auto* split = app.add_subcommand("split", "Assign group-aware train/val/test splits");
  std::string sp_manifest, sp_out, sp_fractions;
  CommonOpts sp_common;
  split->add_option("--manifest", sp_manifest)->required();
  split->add_option("--out", sp_out, "Output manifest (default: overwrite input)");
  split->add_option("--fractions", sp_fractions, "train,val,test (default 0.9,0.05,0.05)");
  add_common(split, sp_common);

  // extract
  auto* extract = app.add_subcommand("extract", "Dump co-occurrence feature tensors");
  std::string ex_manifest, ex_out, ex_split = "all";
  int ex_limit = 0;
  PolicyOpts ex_policy;
  CommonOpts ex_common;
  extract->add_option("--manifest", ex_manifest)->required();
  extract->add_option("--out", ex_out, "Feature dump file")->required();
  extract->add_option("--split", ex_split, "train|val|test|all")->default_val("all");
  extract->add_option("--limit", ex_limit, "Max images (0 = all)");
  add_policy(extract, ex_policy);
  add_common(extract, ex_common);

  // train
  auto* train = app.add_subcommand("train", "Train a detector or attributor");
  std::string tr_manifest, tr_out, tr_history;
  TrainOpts tr_opts;
  PolicyOpts tr_policy;
  CommonOpts tr_common;
  train->add_option("--manifest", tr_manifest)->required();
  train->add_option("--out", tr_out, "Checkpoint output path")->required();
  train->add_option("--history", tr_history, "Metric history CSV (default <out>.history.csv)");
  train->add_option("--head", tr_opts.head, "detect or attribute")->default_val("detect");
  train->add_option("--arch", tr_opts.arch, "mini or full")->default_val("mini");
  add_train_opts(train, tr_opts);
  add_policy(train, tr_policy);
  add_common(train, tr_common);

  // detect / attribute
  auto* detect = app.add_subcommand("detect", "Score images as real vs GAN");
  auto* attribute = app.add_subcommand("attribute", "Attribute images to a generator class");
  struct ClassifyArgs {
    std::string model, manifest, split = "auto", out;
    std::vector<std::string> images;
    PolicyOpts policy;
    CommonOpts common;
  } de_args, at_args;
  for (auto [cmd, a] : {std::pair{detect, &de_args}, std::pair{attribute, &at_args}}) {
    cmd->add_option("--model", a->model, "Checkpoint path")->required();
    cmd->add_option("--manifest", a->manifest, "Labeled manifest to evaluate");
    cmd->add_option("--split", a->split, "train|val|test|all|auto")->default_val("auto");
    cmd->add_option("--out", a->out, "Report JSON path");
    cmd->add_option("images", a->images, "Loose image files to score");
    add_policy(cmd, a->policy);
    add_common(cmd, a->common);
  }

  // localize
  auto* localize = app.add_subcommand("localize", "Render a per-pixel GAN-score heatmap");
  std::string lo_model, lo_image, lo_out;
  int lo_patch = 128, lo_stride = 8;
  CommonOpts lo_common;
  localize->add_option("--model", lo_model)->required();
  localize->add_option("image", lo_image, "Input image")->required();
  localize->add_option("--patch-size", lo_patch)->default_val(128);
  localize->add_option("--stride", lo_stride)->default_val(8);
  localize->add_option("--out", lo_out, "Output prefix (default <image>_heatmap)");
  add_common(localize, lo_common);

  // embed
  auto* embed = app.add_subcommand("embed", "Penultimate features -> PCA -> t-SNE plot");
  std::string em_model, em_manifest, em_split = "auto", em_prefix = "embedding";
  int em_cap = 1000, em_pca = 50, em_iters = 1000;
  double em_perplexity = 30.0, em_lr = 200.0;
  CommonOpts em_common;
  embed->add_option("--model", em_model)->required();
  embed->add_option("--manifest", em_manifest)->required();
  embed->add_option("--split", em_split)->default_val("auto");
  embed->add_option("--cap", em_cap, "Max images per class")->default_val(1000);
  embed->add_option("--pca-dim", em_pca)->default_val(50);
  embed->add_option("--perplexity", em_perplexity)->default_val(30.0);
  embed->add_option("--iterations", em_iters)->default_val(1000);
  embed->add_option("--learning-rate", em_lr)->default_val(200.0);
  embed->add_option("--out-prefix", em_prefix)->default_val("embedding");
  add_common(embed, em_common);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Train/test cross grid over patch size or JPEG");
  std::string sw_manifest, sw_grid, sw_values, sw_out, sw_arch = "mini";
  TrainOpts sw_topts;
  PolicyOpts sw_policy;
  CommonOpts sw_common;
  sweep->add_option("--manifest", sw_manifest)->required();
  sweep->add_option("--grid", sw_grid, "patch or jpeg")->required();
  sweep->add_option("--values", sw_values, "Comma-separated axis values");
  sweep->add_option("--out", sw_out, "Matrix JSON path")->required();
  sweep->add_option("--arch", sw_arch, "mini or full")->default_val("mini");
  add_train_opts(sweep, sw_topts);
  add_policy(sweep, sw_policy);
  add_common(sweep, sw_common);

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
  std::string ev_model, ev_manifest, ev_split = "auto", ev_out;
  PolicyOpts ev_policy;
  CommonOpts ev_common;
  eval->add_option("--model", ev_model)->required();
  eval->add_option("--manifest", ev_manifest)->required();
  eval->add_option("--split", ev_split)->default_val("auto");
  eval->add_option("--out", ev_out, "Report JSON path");
  add_policy(eval, ev_policy);
  add_common(eval, ev_common);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (synth->parsed()) {
      print_config("synth",
                   {{"out_dir", s_out_dir}, {"manifest", s_manifest}, {"classes", s_classes},
                    {"count", s_count}, {"size", s_size}, {"channels", s_channels}},
                   s_common);
      return cmd_synth(s_out_dir, s_manifest, s_classes, s_count, s_size, s_channels, s_common);
    }
    if (split->parsed()) {
      print_config("split", {{"manifest", sp_manifest}, {"fractions", sp_fractions}}, sp_common);
      return cmd_split(sp_manifest, sp_out, sp_fractions, sp_common);
    }
    if (extract->parsed()) {
      json cfgj = policy_json(ex_policy);
      cfgj["manifest"] = ex_manifest;
      cfgj["out"] = ex_out;
      print_config("extract", cfgj, ex_common);
      return cmd_extract(ex_manifest, ex_out, ex_policy, ex_split, ex_limit, ex_common);
    }
    if (train->parsed()) {
      json cfgj = policy_json(tr_policy);
      cfgj["manifest"] = tr_manifest;
      cfgj["out"] = tr_out;
      cfgj["head"] = tr_opts.head;
      cfgj["arch"] = tr_opts.arch;
      cfgj["epochs"] = tr_opts.epochs;
      cfgj["batch_size"] = tr_opts.batch_size;
      cfgj["lr"] = tr_opts.lr;
      print_config("train", cfgj, tr_common);
      return cmd_train(tr_manifest, tr_out, tr_history, tr_opts, tr_policy, tr_common);
    }
    for (auto [cmd, a, head] :
         {std::tuple{detect, &de_args, Head::Detection},
          std::tuple{attribute, &at_args, Head::Attribution}}) {
      if (!cmd->parsed()) continue;
      json cfgj = policy_json(a->policy);
      cfgj["model"] = a->model;
      cfgj["manifest"] = a->manifest;
      cfgj["checkpoint_fingerprint"] = checkpoint_fingerprint(load_checkpoint(a->model));
      print_config(cmd->get_name(), cfgj, a->common);
      return cmd_classify(head, a->model, a->manifest, a->images, a->split, a->out, a->policy,
                          a->common);
    }
    if (localize->parsed()) {
      print_config("localize",
                   {{"model", lo_model}, {"image", lo_image}, {"patch_size", lo_patch},
                    {"stride", lo_stride},
                    {"checkpoint_fingerprint", checkpoint_fingerprint(load_checkpoint(lo_model))}},
                   lo_common);
      return cmd_localize(lo_model, lo_image, lo_patch, lo_stride, lo_out, lo_common);
    }
    if (embed->parsed()) {
      const ModelCheckpoint probe = load_checkpoint(em_model);
      print_config("embed",
                   {{"model", em_model}, {"manifest", em_manifest}, {"cap", em_cap},
                    {"pca_dim", em_pca}, {"perplexity", em_perplexity},
                    {"iterations", em_iters}, {"pairs", probe.subset.tag()},
                    {"checkpoint_fingerprint", checkpoint_fingerprint(probe)}},
                   em_common);
      return cmd_embed(em_model, em_manifest, em_cap, em_pca, em_perplexity, em_iters, em_lr,
                       em_split, em_prefix, em_common);
    }
    if (sweep->parsed()) {
      json cfgj = policy_json(sw_policy);
      cfgj["manifest"] = sw_manifest;
      cfgj["grid"] = sw_grid;
      cfgj["values"] = sw_values;
      print_config("sweep", cfgj, sw_common);
      return cmd_sweep(sw_manifest, sw_grid, sw_values, sw_out, sw_arch, sw_topts, sw_policy,
                       sw_common);
    }
    if (eval->parsed()) {
      json cfgj = policy_json(ev_policy);
      cfgj["model"] = ev_model;
      cfgj["manifest"] = ev_manifest;
      cfgj["checkpoint_fingerprint"] = checkpoint_fingerprint(load_checkpoint(ev_model));
      print_config("eval", cfgj, ev_common);
      return cmd_eval(ev_model, ev_manifest, ev_split, ev_out, ev_policy, ev_common);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace cofor::cli

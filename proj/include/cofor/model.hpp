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

#include <memory>
#include <string>
#include <vector>

#include "cofor/layers.hpp"

namespace cofor {

enum class Head { Detection, Attribution };

inline std::string head_name(Head h) { return h == Head::Detection ? "detection" : "attribution"; }

/// Architecture over 256x256xD co-occurrence tensors. entry_widths are the
/// strided stem convolutions; block_widths the entry-flow residual blocks
/// (each halves the spatial extent); the exit chain is sepconv+relu stages
/// feeding global average pooling and the head.
struct ArchConfig {
  int input_depth = 12;
  std::vector<int> entry_widths{16, 32};
  std::vector<int> block_widths{64, 128, 256};
  int middle_blocks = 4;
  int middle_width = 256;
  std::vector<int> exit_widths{384, 512};
  Head head = Head::Detection;
  int classes = 1;  // head output width: 1 for detection, C for attribution
  std::string scale = "mini";

  void validate() const {
    if (input_depth < 1) fail("input_depth must be >= 1");
    if (entry_widths.empty() || block_widths.empty() || exit_widths.empty())
      fail("ArchConfig width lists must be nonempty");
    if (block_widths.back() != middle_width)
      fail("inconsistent widths: last entry block (" + std::to_string(block_widths.back()) +
           ") must match middle_width (" + std::to_string(middle_width) + ")");
    if (head == Head::Detection && classes != 1) fail("detection head has a single output");
    if (head == Head::Attribution && classes < 2) fail("attribution head needs >= 2 classes");
  }
};

inline ArchConfig mini_config(int input_depth, Head head, int classes = 1) {
  ArchConfig c;
  c.input_depth = input_depth;
  c.head = head;
  c.classes = head == Head::Detection ? 1 : classes;
  return c;
}

/// Full-scale preset following the published Xception widths.
inline ArchConfig full_config(int input_depth, Head head, int classes = 1) {
  ArchConfig c;
  c.input_depth = input_depth;
  c.entry_widths = {32, 64};
  c.block_widths = {128, 256, 728};
  c.middle_blocks = 8;
  c.middle_width = 728;
  c.exit_widths = {1024, 1536, 2048};
  c.head = head;
  c.classes = head == Head::Detection ? 1 : classes;
  c.scale = "full";
  return c;
}

inline constexpr int kInputSpatial = 256;  // co-occurrence histogram size

/// Mini-Xception classifier: stem convs (stride 2), entry residual blocks,
/// identity middle blocks, exit sepconv chain, global average pool, dense
/// head. Construction is deterministic in the seed.
template <class S>
class XceptionNetT {
 public:
  XceptionNetT(const ArchConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(seed, "model-init"));
    int ch = cfg_.input_depth;
    int stem = 0;
    for (int w : cfg_.entry_widths) {
      const bool first = stem == 0;
      features_.push_back(std::make_unique<nn::Conv2dLayerT<S>>(
          "stem" + std::to_string(stem++), 3, 3, ch, w, 2, nn::Padding::Same, rng,
          /*want_dx=*/!first));
      features_.push_back(std::make_unique<nn::ReluLayerT<S>>());
      ch = w;
    }
    int eb = 0;
    for (int w : cfg_.block_widths) {
      features_.push_back(
          std::make_unique<nn::EntryBlockT<S>>("entry" + std::to_string(eb++), ch, w, rng));
      ch = w;
    }
    for (int i = 0; i < cfg_.middle_blocks; ++i) {
      features_.push_back(
          std::make_unique<nn::MiddleBlockT<S>>("middle" + std::to_string(i), ch, rng));
    }
    int ex = 0;
    for (int w : cfg_.exit_widths) {
      features_.push_back(std::make_unique<nn::SeparableConvLayerT<S>>(
          "exit" + std::to_string(ex++), ch, w, rng));
      features_.push_back(std::make_unique<nn::ReluLayerT<S>>());
      ch = w;
    }
    features_.push_back(std::make_unique<nn::GlobalAvgPoolLayerT<S>>());
    head_ = std::make_unique<nn::DenseLayerT<S>>("head", ch, cfg_.classes, rng, 0.5);
    penultimate_width_ = ch;
  }

  const ArchConfig& config() const { return cfg_; }
  int penultimate_width() const { return penultimate_width_; }

  void check_batch(const TensorT<S>& batch) const {
    if (batch.rank() != 4) fail("model input must be NHWC");
    if (batch.dim(1) != kInputSpatial || batch.dim(2) != kInputSpatial)
      fail("model input spatial extent must be 256x256, got " + batch.shape_str());
    if (batch.dim(3) != cfg_.input_depth)
      fail("feature depth mismatch: model expects depth " + std::to_string(cfg_.input_depth) +
           ", input has depth " + std::to_string(batch.dim(3)));
  }

  /// Pre-activation logits, [N, classes].
  TensorT<S> forward(TensorT<S> batch, bool train = false) {
    check_batch(batch);
    check_finite(batch, "model input");
    TensorT<S> t = std::move(batch);
    for (auto& l : features_) t = l->forward(std::move(t), train);
    TensorT<S> logits = head_->forward(std::move(t), train);
    check_finite(logits, "model logits");
    forwarded_ = train;
    return logits;
  }

  /// Global-average-pool output (the layer feeding the head), [N, P].
  TensorT<S> forward_features(TensorT<S> batch) {
    check_batch(batch);
    TensorT<S> t = std::move(batch);
    for (auto& l : features_) t = l->forward(std::move(t), false);
    return t;
  }

  /// Reverse-mode pass; accumulates parameter gradients, in the same order
  /// every time. Requires a preceding forward(train=true).
  void backward(TensorT<S> dlogits) {
    if (!forwarded_) fail("backward called before forward");
    TensorT<S> d = head_->backward(std::move(dlogits));
    for (auto it = features_.rbegin(); it != features_.rend(); ++it) {
      d = (*it)->backward(std::move(d));
    }
    forwarded_ = false;
  }

  std::vector<nn::LayerParamT<S>*> params() {
    std::vector<nn::LayerParamT<S>*> out;
    for (auto& l : features_) l->collect(out);
    head_->collect(out);
    return out;
  }

  void zero_grads() {
    for (auto* p : params()) p->zero_grad();
  }

  int64_t param_count() {
    int64_t n = 0;
    for (auto* p : params()) n += p->w.size();
    return n;
  }

  std::string summary() {
    std::string s;
    for (auto& l : features_) s += l->describe() + "\n";
    s += head_->describe() + "\n";
    s += "head: " + head_name(cfg_.head) + " (" + std::to_string(cfg_.classes) + ")\n";
    s += "parameters: " + std::to_string(param_count()) + "\n";
    return s;
  }

 private:
  ArchConfig cfg_;
  std::vector<std::unique_ptr<nn::LayerT<S>>> features_;
  std::unique_ptr<nn::DenseLayerT<S>> head_;
  int penultimate_width_ = 0;
  bool forwarded_ = false;
};

using XceptionNet = XceptionNetT<float>;

}  // namespace cofor

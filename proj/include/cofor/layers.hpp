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

#include "cofor/nn.hpp"

namespace cofor::nn {

// Layers cache whatever the backward pass needs when forward runs with
// train=true. Inputs are taken by value so callers can move activations
// through the stack without duplicating them.
template <class S>
class LayerT {
 public:
  virtual ~LayerT() = default;
  virtual TensorT<S> forward(TensorT<S> x, bool train) = 0;
  virtual TensorT<S> backward(TensorT<S> dy) = 0;
  virtual void collect(std::vector<LayerParamT<S>*>& out) { (void)out; }
  virtual std::string describe() const = 0;
};

template <class S>
class Conv2dLayerT : public LayerT<S> {
 public:
  Conv2dLayerT(const std::string& name, int kh, int kw, int cin, int cout, int stride,
               Padding pad, Rng& rng, bool want_dx = true, double gain = 1.0)
      : stride_(stride), pad_(pad), want_dx_(want_dx) {
    w_.name = name + ".w";
    w_.w = TensorT<S>({kh, kw, cin, cout});
    init_uniform_fan_in(w_.w, kh * kw * cin, rng, gain);
    w_.init_state();
    b_.name = name + ".b";
    b_.w = TensorT<S>({cout});
    b_.init_state();
    name_ = name;
  }

  TensorT<S> forward(TensorT<S> x, bool train) override {
    TensorT<S> y = conv2d_forward(x, w_.w, b_.w, stride_, pad_);
    if (train) x_ = std::move(x);
    return y;
  }

  TensorT<S> backward(TensorT<S> dy) override {
    TensorT<S> dx;
    conv2d_backward(x_, w_.w, dy, stride_, pad_, want_dx_ ? &dx : nullptr, &w_.g, &b_.g);
    x_ = TensorT<S>();
    return dx;
  }

  void collect(std::vector<LayerParamT<S>*>& out) override {
    out.push_back(&w_);
    out.push_back(&b_);
  }
  std::string describe() const override { return name_ + " conv " + w_.w.shape_str(); }

  LayerParamT<S> w_, b_;

 private:
  std::string name_;
  int stride_;
  Padding pad_;
  bool want_dx_;
  TensorT<S> x_;
};

template <class S>
class SeparableConvLayerT : public LayerT<S> {
 public:
  SeparableConvLayerT(const std::string& name, int cin, int cout, Rng& rng,
                      double pw_gain = 1.0)
      : name_(name) {
    dw_.name = name + ".dw";
    dw_.w = TensorT<S>({3, 3, cin});
    // No nonlinearity between the two stages, so the depthwise half is
    // variance-preserving and the pointwise half carries the ReLU gain.
    init_uniform_fan_in(dw_.w, 9, rng, 0.7071067811865476);
    dw_.init_state();
    pw_.name = name + ".pw";
    pw_.w = TensorT<S>({1, 1, cin, cout});
    init_uniform_fan_in(pw_.w, cin, rng, pw_gain);
    pw_.init_state();
    b_.name = name + ".b";
    b_.w = TensorT<S>({cout});
    b_.init_state();
  }

  TensorT<S> forward(TensorT<S> x, bool train) override {
    TensorT<S> t = depthwise_forward(x, dw_.w);
    TensorT<S> y = conv2d_forward(t, pw_.w, b_.w, 1, Padding::Same);
    if (train) {
      x_ = std::move(x);
      t_ = std::move(t);
    }
    return y;
  }

  TensorT<S> backward(TensorT<S> dy) override {
    TensorT<S> dt;
    conv2d_backward(t_, pw_.w, dy, 1, Padding::Same, &dt, &pw_.g, &b_.g);
    TensorT<S> dx;
    depthwise_backward(x_, dw_.w, dt, &dx, &dw_.g);
    x_ = TensorT<S>();
    t_ = TensorT<S>();
    return dx;
  }

  void collect(std::vector<LayerParamT<S>*>& out) override {
    out.push_back(&dw_);
    out.push_back(&pw_);
    out.push_back(&b_);
  }
  std::string describe() const override {
    return name_ + " sepconv " + dw_.w.shape_str() + "+" + pw_.w.shape_str();
  }

  LayerParamT<S> dw_, pw_, b_;

 private:
  std::string name_;
  TensorT<S> x_, t_;
};

template <class S>
class ReluLayerT : public LayerT<S> {
 public:
  TensorT<S> forward(TensorT<S> x, bool train) override {
    TensorT<S> y = relu_forward(x);
    if (train) x_ = std::move(x);
    return y;
  }
  TensorT<S> backward(TensorT<S> dy) override {
    TensorT<S> dx = relu_backward(x_, dy);
    x_ = TensorT<S>();
    return dx;
  }
  std::string describe() const override { return "relu"; }

 private:
  TensorT<S> x_;
};

template <class S>
class MaxPoolLayerT : public LayerT<S> {
 public:
  MaxPoolLayerT(int k, int stride) : k_(k), stride_(stride) {}
  TensorT<S> forward(TensorT<S> x, bool train) override {
    TensorT<S> y = maxpool2d_forward(x, k_, stride_, Padding::Same, &argmax_);
    if (train) x_shape_ = x.shape;
    return y;
  }
  TensorT<S> backward(TensorT<S> dy) override {
    return maxpool2d_backward(dy, argmax_, x_shape_);
  }
  std::string describe() const override {
    return "maxpool " + std::to_string(k_) + "x" + std::to_string(k_) + " s" +
           std::to_string(stride_);
  }

 private:
  int k_, stride_;
  std::vector<int32_t> argmax_;
  std::vector<int> x_shape_;
};

template <class S>
class GlobalAvgPoolLayerT : public LayerT<S> {
 public:
  TensorT<S> forward(TensorT<S> x, bool train) override {
    if (train) x_shape_ = x.shape;
    return global_avg_pool_forward(x);
  }
  TensorT<S> backward(TensorT<S> dy) override {
    return global_avg_pool_backward(dy, x_shape_);
  }
  std::string describe() const override { return "global_avg_pool"; }

 private:
  std::vector<int> x_shape_;
};

template <class S>
class DenseLayerT : public LayerT<S> {
 public:
  DenseLayerT(const std::string& name, int in, int out, Rng& rng, double gain = 1.0)
      : name_(name) {
    w_.name = name + ".w";
    w_.w = TensorT<S>({in, out});
    init_uniform_fan_in(w_.w, in, rng, gain);
    w_.init_state();
    b_.name = name + ".b";
    b_.w = TensorT<S>({out});
    b_.init_state();
  }
  TensorT<S> forward(TensorT<S> x, bool train) override {
    TensorT<S> y = dense_forward(x, w_.w, b_.w);
    if (train) x_ = std::move(x);
    return y;
  }
  TensorT<S> backward(TensorT<S> dy) override {
    TensorT<S> dx;
    dense_backward(x_, w_.w, dy, &dx, &w_.g, &b_.g);
    x_ = TensorT<S>();
    return dx;
  }
  void collect(std::vector<LayerParamT<S>*>& out) override {
    out.push_back(&w_);
    out.push_back(&b_);
  }
  std::string describe() const override { return name_ + " dense " + w_.w.shape_str(); }

  LayerParamT<S> w_, b_;

 private:
  std::string name_;
  TensorT<S> x_;
};

/// Entry-flow residual block: sepconv -> relu -> sepconv -> 3x3/2 maxpool,
/// joined with a strided 1x1 projection shortcut.
template <class S>
class EntryBlockT : public LayerT<S> {
 public:
  EntryBlockT(const std::string& name, int cin, int cout, Rng& rng)
      : name_(name),
        sep1_(name + ".sep1", cin, cout, rng),
        sep2_(name + ".sep2", cout, cout, rng, 0.5),
        pool_(3, 2),
        shortcut_(name + ".proj", 1, 1, cin, cout, 2, Padding::Same, rng, true,
                  0.7071067811865476) {}

  TensorT<S> forward(TensorT<S> x, bool train) override {
    TensorT<S> main = sep1_.forward(x, train);  // x still needed for the shortcut
    main = relu_.forward(std::move(main), train);
    main = sep2_.forward(std::move(main), train);
    main = pool_.forward(std::move(main), train);
    TensorT<S> sc = shortcut_.forward(std::move(x), train);
    return residual_add(main, sc);
  }

  TensorT<S> backward(TensorT<S> dy) override {
    TensorT<S> dsc = shortcut_.backward(dy);  // dy reused by both branches
    TensorT<S> dm = pool_.backward(std::move(dy));
    dm = sep2_.backward(std::move(dm));
    dm = relu_.backward(std::move(dm));
    dm = sep1_.backward(std::move(dm));
    return residual_add(dm, dsc);
  }

  void collect(std::vector<LayerParamT<S>*>& out) override {
    sep1_.collect(out);
    sep2_.collect(out);
    shortcut_.collect(out);
  }
  std::string describe() const override { return name_ + " entry_block"; }

 private:
  std::string name_;
  SeparableConvLayerT<S> sep1_, sep2_;
  ReluLayerT<S> relu_;
  MaxPoolLayerT<S> pool_;
  Conv2dLayerT<S> shortcut_;
};

/// Middle-flow residual block: three (relu -> sepconv) stages over an
/// identity shortcut; width is unchanged.
template <class S>
class MiddleBlockT : public LayerT<S> {
 public:
  MiddleBlockT(const std::string& name, int c, Rng& rng) : name_(name) {
    for (int i = 0; i < 3; ++i) {
      seps_.emplace_back(name + ".sep" + std::to_string(i + 1), c, c, rng, i == 2 ? 0.5 : 1.0);
    }
    relus_.resize(3);
  }

  TensorT<S> forward(TensorT<S> x, bool train) override {
    TensorT<S> t = x;  // keep x alive for the identity shortcut
    for (int i = 0; i < 3; ++i) {
      t = relus_[i].forward(std::move(t), train);
      t = seps_[i].forward(std::move(t), train);
    }
    return residual_add(x, t);
  }

  TensorT<S> backward(TensorT<S> dy) override {
    TensorT<S> dt = dy;
    for (int i = 2; i >= 0; --i) {
      dt = seps_[i].backward(std::move(dt));
      dt = relus_[i].backward(std::move(dt));
    }
    return residual_add(dt, dy);
  }

  void collect(std::vector<LayerParamT<S>*>& out) override {
    for (auto& s : seps_) s.collect(out);
  }
  std::string describe() const override { return name_ + " middle_block"; }

 private:
  std::string name_;
  std::vector<SeparableConvLayerT<S>> seps_;
  std::vector<ReluLayerT<S>> relus_;
};

}  // namespace cofor::nn

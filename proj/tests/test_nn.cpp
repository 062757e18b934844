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

#include <cmath>

#include "cofor/nn.hpp"
#include "oracle_helpers.hpp"

using namespace cofor;
using nn::Padding;

TEST_CASE("conv2d: scalar product") {
  Tensor x({1, 1, 1, 1});
  x.v[0] = 3.0f;
  Tensor w({1, 1, 1, 1});
  w.v[0] = 2.0f;
  Tensor b({1});
  const Tensor y = nn::conv2d_forward(x, w, b, 1, Padding::Valid);
  CHECK(y.shape == std::vector<int>{1, 1, 1, 1});
  CHECK(y.v[0] == doctest::Approx(6.0f));
}

TEST_CASE("conv2d: centered identity kernel reproduces the input") {
  Rng rng(4);
  Tensor x({2, 7, 6, 3});
  oracle::fill_uniform(x, rng);
  Tensor w({3, 3, 3, 3});
  for (int c = 0; c < 3; ++c) w.at4(1, 1, c, c) = 1.0f;
  Tensor b({3});
  const Tensor y = nn::conv2d_forward(x, w, b, 1, Padding::Same);
  REQUIRE(y.shape == x.shape);
  for (size_t i = 0; i < x.v.size(); ++i) REQUIRE(y.v[i] == doctest::Approx(x.v[i]).epsilon(1e-6));
}

TEST_CASE("conv2d: random case equals the six-loop reference") {
  Rng rng(10);
  for (int stride : {1, 2}) {
    for (auto pad : {Padding::Same, Padding::Valid}) {
      Tensor x({1, 5, 5, 2});
      oracle::fill_uniform(x, rng);
      Tensor w({3, 3, 2, 4});
      oracle::fill_uniform(w, rng);
      Tensor b({4});
      oracle::fill_uniform(b, rng);
      const Tensor y = nn::conv2d_forward(x, w, b, stride, pad);
      const Tensor ref = oracle::conv2d_reference(x, w, b, stride, pad);
      REQUIRE(y.shape == ref.shape);
      for (size_t i = 0; i < y.v.size(); ++i)
        REQUIRE(y.v[i] == doctest::Approx(ref.v[i]).epsilon(1e-6));
    }
  }
}

TEST_CASE("conv2d: pointwise fast path agrees with the reference") {
  Rng rng(77);
  Tensor x({3, 4, 5, 7});  // odd pixel count exercises the tile remainder
  oracle::fill_uniform(x, rng);
  Tensor w({1, 1, 7, 5});
  oracle::fill_uniform(w, rng);
  Tensor b({5});
  oracle::fill_uniform(b, rng);
  const Tensor y = nn::conv2d_forward(x, w, b, 1, Padding::Same);
  const Tensor ref = oracle::conv2d_reference(x, w, b, 1, Padding::Same);
  for (size_t i = 0; i < y.v.size(); ++i)
    REQUIRE(y.v[i] == doctest::Approx(ref.v[i]).epsilon(1e-6));
}

TEST_CASE("separable_conv2d: composed identities reproduce the input") {
  Rng rng(6);
  Tensor x({1, 6, 6, 3});
  oracle::fill_uniform(x, rng);
  Tensor dw({3, 3, 3});
  for (int c = 0; c < 3; ++c) dw.v[(1 * 3 + 1) * 3 + static_cast<size_t>(c)] = 1.0f;
  Tensor pw({1, 1, 3, 3});
  for (int c = 0; c < 3; ++c) pw.at4(0, 0, c, c) = 1.0f;
  Tensor b({3});
  const Tensor y = nn::separable_conv2d(x, dw, pw, b);
  REQUIRE(y.shape == x.shape);
  for (size_t i = 0; i < x.v.size(); ++i) REQUIRE(y.v[i] == doctest::Approx(x.v[i]).epsilon(1e-6));
}

TEST_CASE("separable_conv2d: identity depthwise reduces to a 1x1 conv") {
  Rng rng(16);
  Tensor x({2, 5, 4, 3});
  oracle::fill_uniform(x, rng);
  Tensor dw({3, 3, 3});
  for (int c = 0; c < 3; ++c) dw.v[(1 * 3 + 1) * 3 + static_cast<size_t>(c)] = 1.0f;
  Tensor pw({1, 1, 3, 6});
  oracle::fill_uniform(pw, rng);
  Tensor b({6});
  oracle::fill_uniform(b, rng);
  const Tensor y = nn::separable_conv2d(x, dw, pw, b);
  const Tensor ref = oracle::conv2d_reference(x, pw, b, 1, Padding::Same);
  for (size_t i = 0; i < y.v.size(); ++i)
    REQUIRE(y.v[i] == doctest::Approx(ref.v[i]).epsilon(1e-6));
}

TEST_CASE("separable_conv2d: random case equals per-channel conv then 1x1") {
  Rng rng(26);
  const int C = 3;
  Tensor x({1, 6, 5, C});
  oracle::fill_uniform(x, rng);
  Tensor dw({3, 3, C});
  oracle::fill_uniform(dw, rng);
  Tensor pw({1, 1, C, 4});
  oracle::fill_uniform(pw, rng);
  Tensor b({4});
  oracle::fill_uniform(b, rng);

  // Reference: per-channel spatial conv via single-channel reference calls.
  Tensor mid({1, 6, 5, C});
  for (int c = 0; c < C; ++c) {
    Tensor xc({1, 6, 5, 1});
    Tensor wc({3, 3, 1, 1});
    for (int h = 0; h < 6; ++h)
      for (int wpos = 0; wpos < 5; ++wpos) xc.at4(0, h, wpos, 0) = x.at4(0, h, wpos, c);
    for (int kh = 0; kh < 3; ++kh)
      for (int kw = 0; kw < 3; ++kw)
        wc.at4(kh, kw, 0, 0) = dw.v[(static_cast<size_t>(kh) * 3 + kw) * C + c];
    const Tensor yc = oracle::conv2d_reference(xc, wc, Tensor(), 1, Padding::Same);
    for (int h = 0; h < 6; ++h)
      for (int wpos = 0; wpos < 5; ++wpos) mid.at4(0, h, wpos, c) = yc.at4(0, h, wpos, 0);
  }
  const Tensor ref = oracle::conv2d_reference(mid, pw, b, 1, Padding::Same);
  const Tensor y = nn::separable_conv2d(x, dw, pw, b);
  for (size_t i = 0; i < y.v.size(); ++i)
    REQUIRE(y.v[i] == doctest::Approx(ref.v[i]).epsilon(1e-6));
}

TEST_CASE("relu clamps negatives") {
  Tensor x({1, 3});
  x.v = {-1.0f, 0.0f, 2.0f};
  const Tensor y = nn::relu_forward(x);
  CHECK(y.v[0] == 0.0f);
  CHECK(y.v[1] == 0.0f);
  CHECK(y.v[2] == 2.0f);
}

TEST_CASE("global_avg_pool of a constant map returns the constant") {
  Tensor x({2, 4, 4, 3});
  for (int n = 0; n < 2; ++n)
    for (int h = 0; h < 4; ++h)
      for (int w = 0; w < 4; ++w)
        for (int c = 0; c < 3; ++c) x.at4(n, h, w, c) = static_cast<float>(10 * n + c);
  const Tensor y = nn::global_avg_pool_forward(x);
  REQUIRE(y.shape == std::vector<int>{2, 3});
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      CHECK(y.at2(n, c) == doctest::Approx(static_cast<float>(10 * n + c)));
}

TEST_CASE("dense equals a naive matrix-vector oracle on 8x4") {
  Rng rng(14);
  Tensor x({1, 8});
  oracle::fill_uniform(x, rng);
  Tensor w({8, 4});
  oracle::fill_uniform(w, rng);
  Tensor b({4});
  oracle::fill_uniform(b, rng);
  const Tensor y = nn::dense_forward(x, w, b);
  for (int o = 0; o < 4; ++o) {
    float acc = b.v[static_cast<size_t>(o)];
    for (int i = 0; i < 8; ++i) acc += x.v[static_cast<size_t>(i)] * w.at2(i, o);
    REQUIRE(y.v[static_cast<size_t>(o)] == doctest::Approx(acc).epsilon(1e-6));
  }
}

TEST_CASE("residual_add with a zero branch is exactly the input") {
  Rng rng(9);
  Tensor x({2, 3, 3, 2});
  oracle::fill_uniform(x, rng);
  Tensor zero(x.shape);
  const Tensor y = nn::residual_add(x, zero);
  CHECK(y.v == x.v);
  Tensor other({2, 3, 3, 3});
  CHECK_THROWS_AS(nn::residual_add(x, other), Error);
}

TEST_CASE("maxpool: known 4x4 single channel") {
  Tensor x({1, 4, 4, 1});
  for (int i = 0; i < 16; ++i) x.v[static_cast<size_t>(i)] = static_cast<float>(i);
  std::vector<int32_t> argmax;
  const Tensor y = nn::maxpool2d_forward(x, 2, 2, Padding::Valid, &argmax);
  REQUIRE(y.shape == std::vector<int>{1, 2, 2, 1});
  CHECK(y.v[0] == 5.0f);
  CHECK(y.v[1] == 7.0f);
  CHECK(y.v[2] == 13.0f);
  CHECK(y.v[3] == 15.0f);
  // Backward scatters into the recorded argmax positions.
  Tensor dy(y.shape);
  dy.v = {1.0f, 2.0f, 3.0f, 4.0f};
  const Tensor dx = nn::maxpool2d_backward(dy, argmax, x.shape);
  CHECK(dx.v[5] == 1.0f);
  CHECK(dx.v[7] == 2.0f);
  CHECK(dx.v[13] == 3.0f);
  CHECK(dx.v[15] == 4.0f);
  float total = 0;
  for (float v : dx.v) total += v;
  CHECK(total == 10.0f);
}

TEST_CASE("sigmoid_xent: symmetric point and saturation") {
  auto [loss0, grad0] = nn::sigmoid_xent(0.0, 1.0);
  CHECK(loss0 == doctest::Approx(std::log(2.0)));
  CHECK(grad0 == doctest::Approx(-0.5));

  auto [loss_sat, grad_sat] = nn::sigmoid_xent(40.0, 1.0);
  CHECK(std::isfinite(loss_sat));
  CHECK(std::isfinite(grad_sat));
  CHECK(loss_sat == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::abs(grad_sat) < 1e-12);

  auto [loss_neg, grad_neg] = nn::sigmoid_xent(-40.0, 0.0);
  CHECK(loss_neg == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::abs(grad_neg) < 1e-12);
}

TEST_CASE("sigmoid stays within [0,1] and is strictly inside for moderate logits") {
  for (double z = -12.0; z <= 12.0; z += 0.25) {
    const double p = nn::sigmoid(z);
    REQUIRE(p > 0.0);
    REQUIRE(p < 1.0);
  }
  // Saturated logits round to the closed endpoints in floating point.
  CHECK(nn::sigmoid(200.0f) <= 1.0f);
  CHECK(nn::sigmoid(-200.0f) >= 0.0f);
}

TEST_CASE("softmax_xent: uniform logits give ln C") {
  std::vector<double> logits(6, 0.7);
  auto [loss, grad] = nn::softmax_xent(logits, 3);
  CHECK(loss == doctest::Approx(std::log(6.0)));
  double sum = 0;
  for (size_t c = 0; c < grad.size(); ++c) sum += grad[c] + (c == 3 ? 1.0 : 0.0);
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));  // softmax sums to 1
}

TEST_CASE("softmax_xent: confident correct prediction has near-zero loss") {
  auto [loss, grad] = nn::softmax_xent(std::vector<double>{10.0, -10.0}, 0);
  CHECK(loss == doctest::Approx(0.0).epsilon(1e-8));
  CHECK(grad[0] == doctest::Approx(0.0).epsilon(1e-8));
}

TEST_CASE("softmax_xent: label out of range") {
  CHECK_THROWS_AS(nn::softmax_xent(std::vector<double>{0.0, 1.0}, 2), Error);
  CHECK_THROWS_AS(nn::softmax_xent(std::vector<double>{0.0, 1.0}, -1), Error);
  CHECK_THROWS_AS(nn::softmax_xent(std::vector<double>{0.0}, 0), Error);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  nn::LayerParam p;
  p.name = "p";
  p.w = Tensor({4});
  p.w.v = {1.0f, -2.0f, 3.0f, 0.5f};
  p.init_state();
  nn::AdamConfig cfg;
  const auto before = p.w.v;
  nn::adam_step<float>({&p}, cfg);
  CHECK(p.w.v == before);
  CHECK(cfg.step == 1);
}

TEST_CASE("adam: first step with unit gradient moves by lr/(1+eps)") {
  nn::LayerParam p;
  p.name = "p";
  p.w = Tensor({1});
  p.w.v = {1.0f};
  p.init_state();
  p.g.v = {1.0f};
  nn::AdamConfig cfg;  // lr 1e-4
  nn::adam_step<float>({&p}, cfg);
  const double expect = 1.0 - 1e-4 / (1.0 + 1e-8);
  CHECK(p.w.v[0] == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("adam: two identical steps follow the scalar recurrence") {
  nn::LayerParam p;
  p.name = "p";
  p.w = Tensor({1});
  p.w.v = {0.0f};
  p.init_state();
  nn::AdamConfig cfg;
  p.g.v = {1.0f};
  nn::adam_step<float>({&p}, cfg);
  p.g.v = {1.0f};
  nn::adam_step<float>({&p}, cfg);
  CHECK(cfg.step == 2);
  // Hand recurrence: m2 = 0.9*0.1 + 0.1, v2 = 0.999*0.001 + 0.001.
  CHECK(p.adam_m.v[0] == doctest::Approx(0.19).epsilon(1e-6));
  CHECK(p.adam_v.v[0] == doctest::Approx(0.001999).epsilon(1e-6));
  // Both bias-corrected steps equal lr/(1+eps) for a constant unit gradient.
  CHECK(p.w.v[0] == doctest::Approx(-2.0 * 1e-4 / (1.0 + 1e-8)).epsilon(1e-5));
}

TEST_CASE("adam: config validation") {
  nn::LayerParam p;
  p.name = "p";
  p.w = Tensor({1});
  p.init_state();
  nn::AdamConfig bad;
  bad.lr = 0.0;
  CHECK_THROWS_AS(nn::adam_step<float>({&p}, bad), Error);
  bad.lr = 1e-4;
  bad.beta1 = 1.0;
  CHECK_THROWS_AS(nn::adam_step<float>({&p}, bad), Error);
}

TEST_CASE("forward passes are deterministic bit-for-bit") {
  Rng rng(31);
  Tensor x({2, 9, 9, 4});
  oracle::fill_uniform(x, rng);
  Tensor w({3, 3, 4, 8});
  oracle::fill_uniform(w, rng);
  Tensor b({8});
  oracle::fill_uniform(b, rng);
  const Tensor y1 = nn::conv2d_forward(x, w, b, 2, Padding::Same);
  const Tensor y2 = nn::conv2d_forward(x, w, b, 2, Padding::Same);
  CHECK(y1.v == y2.v);
}

TEST_CASE("conv2d backward shapes and bias gradient") {
  Rng rng(3);
  Tensor x({2, 6, 6, 3});
  oracle::fill_uniform(x, rng);
  Tensor w({3, 3, 3, 5});
  oracle::fill_uniform(w, rng);
  const auto g = nn::conv_geometry(6, 6, 3, 3, 2, Padding::Same);
  Tensor dy({2, g.oh, g.ow, 5});
  oracle::fill_uniform(dy, rng);
  Tensor dx, dw(w.shape), db({5});
  nn::conv2d_backward(x, w, dy, 2, Padding::Same, &dx, &dw, &db);
  CHECK(dx.shape == x.shape);
  for (int co = 0; co < 5; ++co) {
    double expect = 0;
    for (int n = 0; n < 2; ++n)
      for (int oh = 0; oh < g.oh; ++oh)
        for (int ow = 0; ow < g.ow; ++ow) expect += dy.at4(n, oh, ow, co);
    REQUIRE(db.v[static_cast<size_t>(co)] == doctest::Approx(expect).epsilon(1e-5));
  }
}

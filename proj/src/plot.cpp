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
#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "cofor/embedding.hpp"
#include "cofor/image.hpp"

namespace cofor {

namespace {

// 5x7 bitmap font, one byte per row, low 5 bits used. Uppercase, digits,
// and the punctuation that shows up in class labels and file names.
struct Glyph {
  char ch;
  uint8_t rows[7];
};

constexpr Glyph kFont[] = {
    {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
    {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
    {'D', {0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E}},
    {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
    {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
    {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
    {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
    {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
    {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
    {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
    {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
    {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
    {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
    {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
    {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
    {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
    {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
    {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
    {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
    {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x1B, 0x11}},
    {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
    {'Y', {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04}},
    {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
    {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
    {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
    {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
    {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
    {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
    {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
    {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
    {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
    {'/', {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10}},
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
};

const Glyph* find_glyph(char c) {
  const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (const auto& g : kFont)
    if (g.ch == up) return &g;
  return nullptr;
}

void put_px(PixelImage& img, int r, int c, const uint8_t* rgb) {
  if (r < 0 || r >= img.height || c < 0 || c >= img.width) return;
  for (int k = 0; k < 3; ++k) img.at(r, c, k) = rgb[k];
}

void draw_text(PixelImage& img, int row, int col, const std::string& text, const uint8_t* rgb) {
  int x = col;
  for (char c : text) {
    const Glyph* g = find_glyph(c);
    if (g) {
      for (int r = 0; r < 7; ++r)
        for (int b = 0; b < 5; ++b)
          if (g->rows[r] & (1 << (4 - b))) put_px(img, row + r, x + b, rgb);
    }
    x += 6;
  }
}

void draw_dot(PixelImage& img, int row, int col, const uint8_t* rgb) {
  for (int dr = -1; dr <= 1; ++dr)
    for (int dc = -1; dc <= 1; ++dc) put_px(img, row + dr, col + dc, rgb);
}

constexpr uint8_t kPalette[][3] = {
    {31, 119, 180}, {255, 127, 14}, {44, 160, 44},  {214, 39, 40},
    {148, 103, 189}, {140, 86, 75},  {227, 119, 194}, {127, 127, 127},
};

}  // namespace

void plot_embedding(const std::vector<double>& layout_xy, const std::vector<std::string>& labels,
                    const std::string& out_path) {
  if (layout_xy.empty()) fail("plot_embedding: empty layout");
  if (layout_xy.size() != labels.size() * 2)
    fail("plot_embedding: layout/label size mismatch");
  const int n = static_cast<int>(labels.size());

  // Stable class order: first appearance.
  std::vector<std::string> classes;
  std::map<std::string, int> class_idx;
  for (const auto& l : labels) {
    if (class_idx.emplace(l, static_cast<int>(classes.size())).second) classes.push_back(l);
  }

  const int plot_size = 720, margin = 24, legend_w = 160;
  PixelImage img(plot_size + 2 * margin + legend_w, plot_size + 2 * margin, 3);
  std::fill(img.data.begin(), img.data.end(), 255);

  double min_x = layout_xy[0], max_x = layout_xy[0];
  double min_y = layout_xy[1], max_y = layout_xy[1];
  for (int i = 0; i < n; ++i) {
    min_x = std::min(min_x, layout_xy[static_cast<size_t>(i) * 2]);
    max_x = std::max(max_x, layout_xy[static_cast<size_t>(i) * 2]);
    min_y = std::min(min_y, layout_xy[static_cast<size_t>(i) * 2 + 1]);
    max_y = std::max(max_y, layout_xy[static_cast<size_t>(i) * 2 + 1]);
  }
  const double span_x = std::max(max_x - min_x, 1e-12);
  const double span_y = std::max(max_y - min_y, 1e-12);

  for (int i = 0; i < n; ++i) {
    const double fx = (layout_xy[static_cast<size_t>(i) * 2] - min_x) / span_x;
    const double fy = (layout_xy[static_cast<size_t>(i) * 2 + 1] - min_y) / span_y;
    const int col = margin + static_cast<int>(std::lround(fx * (plot_size - 1)));
    const int row = margin + static_cast<int>(std::lround((1.0 - fy) * (plot_size - 1)));
    const int ci = class_idx[labels[static_cast<size_t>(i)]] % 8;
    draw_dot(img, row, col, kPalette[ci]);
  }

  // Legend: colored square + label per class.
  const uint8_t black[3] = {0, 0, 0};
  int ly = margin;
  const int lx = plot_size + 2 * margin;
  for (size_t c = 0; c < classes.size(); ++c) {
    for (int dr = 0; dr < 9; ++dr)
      for (int dc = 0; dc < 9; ++dc) put_px(img, ly + dr, lx + dc, kPalette[c % 8]);
    draw_text(img, ly + 1, lx + 13, classes[c], black);
    ly += 16;
  }
  encode_png(img, out_path);
}

}  // namespace cofor

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

#include <string>
#include <vector>

#include "cofor/dataset.hpp"
#include "cofor/persist.hpp"
#include "cofor/pipeline.hpp"

namespace cofor {

/// N vectors of width dim, with labels and source ids.
struct EmbeddingSet {
  int n = 0;
  int dim = 0;
  std::vector<double> x;  // row-major N x dim
  std::vector<std::string> labels;
  std::vector<std::string> ids;

  double* row(int i) { return x.data() + static_cast<size_t>(i) * dim; }
  const double* row(int i) const { return x.data() + static_cast<size_t>(i) * dim; }
};

/// Penultimate-layer (global-average-pool) outputs per record, at most
/// cap_per_class per class (seed-deterministic subset).
EmbeddingSet extract_embeddings(const ModelCheckpoint& ckpt,
                                const std::vector<ManifestRecord>& records,
                                const PreprocPolicy& policy, int cap_per_class = 1000,
                                uint64_t seed = 0, int batch_size = 64);

struct PcaResult {
  EmbeddingSet reduced;
  std::vector<double> components;       // out_dim x in_dim, orthonormal rows
  std::vector<double> mean;             // in_dim
  std::vector<double> explained_var;    // out_dim eigenvalues
  int effective_rank = 0;
};

/// Mean-centered projection onto the top out_dim principal components.
/// Rank-deficient input reduces to the available rank with a warning on
/// stderr.
PcaResult pca_reduce(const EmbeddingSet& set, int out_dim = 50);

struct TsneConfig {
  double perplexity = 30.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  int exaggeration_iters = 250;
  double momentum_start = 0.5;
  double momentum_final = 0.8;
  int momentum_switch_iter = 250;
  uint64_t seed = 0;
};

struct TsneResult {
  std::vector<double> y;           // N x 2 layout
  std::vector<double> kl_history;  // KL per iteration against the true P
};

/// Exact O(N^2) t-SNE: per-point Gaussian bandwidths bisected to the target
/// perplexity (entropy within 1e-4), symmetrized affinities, Student-t
/// low-dimensional kernel, gradient descent with momentum and gains.
TsneResult tsne(const EmbeddingSet& set, const TsneConfig& cfg);

/// Per-point conditional entropy check used by tests; returns achieved
/// entropy (nats) per point for the fitted bandwidths.
std::vector<double> tsne_fit_entropies(const EmbeddingSet& set, double perplexity);

/// The symmetrized affinity matrix P (N x N row-major) the optimizer uses.
std::vector<double> tsne_affinities(const EmbeddingSet& set, double perplexity);

/// KL(P || Q(layout)) for a given layout; the t-SNE cost function.
double tsne_kl(const std::vector<double>& affinities, const std::vector<double>& layout_xy);

void save_embeddings_jsonl(const EmbeddingSet& set, const std::string& path);
void save_layout_csv(const TsneResult& layout, const EmbeddingSet& set, const std::string& path);

/// Scatter plot of the 2-D layout, one fixed color per class, legend
/// included. Errors on an empty layout.
void plot_embedding(const std::vector<double>& layout_xy, const std::vector<std::string>& labels,
                    const std::string& out_path);

}  // namespace cofor

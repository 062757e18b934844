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
#include "cofor/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "json.hpp"

namespace cofor {

using nlohmann::json;

EmbeddingSet extract_embeddings(const ModelCheckpoint& ckpt,
                                const std::vector<ManifestRecord>& records,
                                const PreprocPolicy& policy, int cap_per_class, uint64_t seed,
                                int batch_size) {
  XceptionNet model = model_from_checkpoint(ckpt);

  // Seed-deterministic subset: shuffle within each class, keep the first
  // cap_per_class, then restore a stable order.
  std::map<std::string, std::vector<size_t>> by_class;
  for (size_t i = 0; i < records.size(); ++i) by_class[records[i].label].push_back(i);
  std::vector<size_t> keep;
  for (auto& [label, idx] : by_class) {
    Rng rng(derive_seed(seed, "embed-cap-" + label));
    rng.shuffle(idx);
    const size_t take = std::min(idx.size(), static_cast<size_t>(cap_per_class));
    keep.insert(keep.end(), idx.begin(), idx.begin() + static_cast<long>(take));
  }
  std::sort(keep.begin(), keep.end());

  EmbeddingSet set;
  set.n = static_cast<int>(keep.size());
  set.dim = model.penultimate_width();
  set.x.resize(static_cast<size_t>(set.n) * set.dim);
  for (size_t i : keep) {
    set.labels.push_back(records[i].label);
    set.ids.push_back(records[i].path);
  }

  for (int off = 0; off < set.n; off += batch_size) {
    const int end = std::min(set.n, off + batch_size);
    std::vector<const ManifestRecord*> batch;
    for (int i = off; i < end; ++i) batch.push_back(&records[keep[static_cast<size_t>(i)]]);
    Tensor features =
        assemble_features(batch, policy, model.config().input_depth, /*draw=*/0);
    Tensor pen = model.forward_features(std::move(features));
    for (int i = 0; i < end - off; ++i)
      for (int d = 0; d < set.dim; ++d)
        set.x[static_cast<size_t>(off + i) * set.dim + d] =
            static_cast<double>(pen.at2(i, d));
  }
  return set;
}

// Cyclic Jacobi eigendecomposition of a symmetric matrix, eigenvalues
// descending. Plenty for penultimate widths (a few hundred).
static void jacobi_eigen(std::vector<double>& a, int n, std::vector<double>& eigvals,
                         std::vector<double>& eigvecs) {
  eigvecs.assign(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) eigvecs[static_cast<size_t>(i) * n + i] = 1.0;

  auto A = [&](int r, int c) -> double& { return a[static_cast<size_t>(r) * n + c]; };
  auto V = [&](int r, int c) -> double& { return eigvecs[static_cast<size_t>(r) * n + c]; };

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += A(p, q) * A(p, q);
    if (off < 1e-22 * n * n) break;

    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = A(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = A(k, p), akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = A(p, k), aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = V(k, p), vkq = V(k, q);
          V(k, p) = c * vkp - s * vkq;
          V(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  eigvals.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) eigvals[static_cast<size_t>(i)] = A(i, i);

  // Sort descending, permuting eigenvector columns alongside.
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
    return eigvals[static_cast<size_t>(x)] > eigvals[static_cast<size_t>(y)];
  });
  std::vector<double> ev(eigvals.size());
  std::vector<double> vecs(eigvecs.size());
  for (int dst = 0; dst < n; ++dst) {
    const int src = order[static_cast<size_t>(dst)];
    ev[static_cast<size_t>(dst)] = eigvals[static_cast<size_t>(src)];
    for (int k = 0; k < n; ++k)
      vecs[static_cast<size_t>(k) * n + dst] = eigvecs[static_cast<size_t>(k) * n + src];
  }
  eigvals = std::move(ev);
  eigvecs = std::move(vecs);
}

PcaResult pca_reduce(const EmbeddingSet& set, int out_dim) {
  if (set.n <= out_dim)
    fail("pca_reduce needs more samples (" + std::to_string(set.n) + ") than out_dim (" +
         std::to_string(out_dim) + ")");
  const int n = set.n, d = set.dim;

  PcaResult res;
  res.mean.assign(static_cast<size_t>(d), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) res.mean[static_cast<size_t>(j)] += set.row(i)[j];
  for (auto& m : res.mean) m /= n;

  // Sample covariance (d x d).
  std::vector<double> cov(static_cast<size_t>(d) * d, 0.0);
  for (int i = 0; i < n; ++i) {
    const double* r = set.row(i);
    for (int a = 0; a < d; ++a) {
      const double va = r[a] - res.mean[static_cast<size_t>(a)];
      double* crow = cov.data() + static_cast<size_t>(a) * d;
      for (int b = a; b < d; ++b) crow[b] += va * (r[b] - res.mean[static_cast<size_t>(b)]);
    }
  }
  for (int a = 0; a < d; ++a)
    for (int b = a; b < d; ++b) {
      const double v = cov[static_cast<size_t>(a) * d + b] / (n - 1);
      cov[static_cast<size_t>(a) * d + b] = v;
      cov[static_cast<size_t>(b) * d + a] = v;
    }

  std::vector<double> eigvals, eigvecs;
  jacobi_eigen(cov, d, eigvals, eigvecs);

  // Usable rank: eigenvalues above a relative floor.
  const double floor_ev = std::max(eigvals.empty() ? 0.0 : eigvals[0], 0.0) * 1e-12;
  int rank = 0;
  for (int i = 0; i < std::min(out_dim, d); ++i)
    if (eigvals[static_cast<size_t>(i)] > floor_ev) ++rank;
  if (rank < out_dim) {
    std::fprintf(stderr,
                 "pca_reduce: input rank %d is below requested %d components; reducing\n", rank,
                 out_dim);
  }
  if (rank == 0) fail("pca_reduce: input has no variance");
  res.effective_rank = rank;

  res.components.assign(static_cast<size_t>(rank) * d, 0.0);
  res.explained_var.assign(static_cast<size_t>(rank), 0.0);
  for (int c = 0; c < rank; ++c) {
    res.explained_var[static_cast<size_t>(c)] = eigvals[static_cast<size_t>(c)];
    for (int j = 0; j < d; ++j)
      res.components[static_cast<size_t>(c) * d + j] = eigvecs[static_cast<size_t>(j) * d + c];
  }

  res.reduced.n = n;
  res.reduced.dim = rank;
  res.reduced.labels = set.labels;
  res.reduced.ids = set.ids;
  res.reduced.x.assign(static_cast<size_t>(n) * rank, 0.0);
  for (int i = 0; i < n; ++i) {
    const double* r = set.row(i);
    for (int c = 0; c < rank; ++c) {
      double acc = 0;
      const double* comp = res.components.data() + static_cast<size_t>(c) * d;
      for (int j = 0; j < d; ++j) acc += (r[j] - res.mean[static_cast<size_t>(j)]) * comp[j];
      res.reduced.x[static_cast<size_t>(i) * rank + c] = acc;
    }
  }
  return res;
}

namespace {

// Squared Euclidean distances, N x N.
std::vector<double> pairwise_sq(const EmbeddingSet& set) {
  const int n = set.n, d = set.dim;
  std::vector<double> dist(static_cast<size_t>(n) * n, 0.0);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double *a = set.row(i), *b = set.row(j);
      double s = 0;
      for (int k = 0; k < d; ++k) {
        const double diff = a[k] - b[k];
        s += diff * diff;
      }
      dist[static_cast<size_t>(i) * n + j] = s;
      dist[static_cast<size_t>(j) * n + i] = s;
    }
  }
  return dist;
}

// Conditional p_{j|i} for one row via bisection on the precision beta.
// Returns achieved entropy (nats). Degenerate rows fall back to uniform.
double fit_row(const double* dist_row, int n, int i, double target_entropy, double* p_row) {
  double beta = 1.0, beta_lo = 0.0, beta_hi = std::numeric_limits<double>::infinity();
  double entropy = 0;
  for (int iter = 0; iter < 200; ++iter) {
    double sum = 0;
    for (int j = 0; j < n; ++j) {
      p_row[j] = j == i ? 0.0 : std::exp(-beta * dist_row[j]);
      sum += p_row[j];
    }
    bool collapsed = sum < 1e-300;
    if (collapsed) {
      entropy = 0.0;  // all mass on the nearest neighbor
    } else {
      double sum_dp = 0;
      for (int j = 0; j < n; ++j)
        if (j != i) sum_dp += dist_row[j] * p_row[j];
      // H = log(sum) + beta * E[d]
      entropy = std::log(sum) + beta * sum_dp / sum;
      for (int j = 0; j < n; ++j) p_row[j] /= sum;
    }
    const double diff = entropy - target_entropy;
    if (std::abs(diff) < 1e-4 && !collapsed) return entropy;
    if (diff > 0) {
      beta_lo = beta;  // entropy too high: sharpen
      beta = std::isinf(beta_hi) ? beta * 2 : (beta_lo + beta_hi) / 2;
    } else {
      beta_hi = beta;
      beta = (beta_lo + beta_hi) / 2;
    }
  }
  // Identical points (all distances 0) land here: uniform fallback.
  bool degenerate = true;
  for (int j = 0; j < n && degenerate; ++j)
    if (j != i && dist_row[j] > 1e-300) degenerate = false;
  if (degenerate) {
    for (int j = 0; j < n; ++j) p_row[j] = j == i ? 0.0 : 1.0 / (n - 1);
    return std::log(static_cast<double>(n - 1));
  }
  return entropy;
}

std::vector<double> symmetrized_affinities(const EmbeddingSet& set, double perplexity,
                                           std::vector<double>* entropies) {
  const int n = set.n;
  if (n < 2) fail("t-SNE needs at least 2 points");
  if (perplexity >= (n - 1) / 3.0)
    fail("perplexity " + std::to_string(perplexity) + " infeasible for " + std::to_string(n) +
         " points (needs perplexity < (N-1)/3)");
  const std::vector<double> dist = pairwise_sq(set);
  std::vector<double> p(static_cast<size_t>(n) * n, 0.0);
  if (entropies) entropies->assign(static_cast<size_t>(n), 0.0);
  const double target = std::log(perplexity);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const double h = fit_row(dist.data() + static_cast<size_t>(i) * n, n, i, target,
                             p.data() + static_cast<size_t>(i) * n);
    if (entropies) (*entropies)[static_cast<size_t>(i)] = h;
  }
  // Symmetrize: P_ij = (p_{j|i} + p_{i|j}) / 2N, floored away from zero.
  std::vector<double> sym(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      sym[static_cast<size_t>(i) * n + j] = std::max(
          (p[static_cast<size_t>(i) * n + j] + p[static_cast<size_t>(j) * n + i]) / (2.0 * n),
          1e-12);
    }
  return sym;
}

}  // namespace

std::vector<double> tsne_fit_entropies(const EmbeddingSet& set, double perplexity) {
  std::vector<double> entropies;
  symmetrized_affinities(set, perplexity, &entropies);
  return entropies;
}

std::vector<double> tsne_affinities(const EmbeddingSet& set, double perplexity) {
  return symmetrized_affinities(set, perplexity, nullptr);
}

double tsne_kl(const std::vector<double>& affinities, const std::vector<double>& layout_xy) {
  const int n = static_cast<int>(layout_xy.size() / 2);
  if (affinities.size() != static_cast<size_t>(n) * n) fail("tsne_kl size mismatch");
  std::vector<double> q(affinities.size(), 0.0);
  double sum_q = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double d0 = layout_xy[static_cast<size_t>(i) * 2] - layout_xy[static_cast<size_t>(j) * 2];
      const double d1 =
          layout_xy[static_cast<size_t>(i) * 2 + 1] - layout_xy[static_cast<size_t>(j) * 2 + 1];
      q[static_cast<size_t>(i) * n + j] = 1.0 / (1.0 + d0 * d0 + d1 * d1);
      sum_q += q[static_cast<size_t>(i) * n + j];
    }
  double kl = 0;
  for (size_t k = 0; k < q.size(); ++k) {
    if (affinities[k] <= 0) continue;
    kl += affinities[k] * std::log(affinities[k] / std::max(q[k] / sum_q, 1e-300));
  }
  return kl;
}

TsneResult tsne(const EmbeddingSet& set, const TsneConfig& cfg) {
  const int n = set.n;
  const std::vector<double> P = symmetrized_affinities(set, cfg.perplexity, nullptr);

  TsneResult res;
  res.y.assign(static_cast<size_t>(n) * 2, 0.0);
  Rng rng(derive_seed(cfg.seed, "tsne-init"));
  for (auto& v : res.y) v = rng.normal() * 1e-4;

  std::vector<double> vel(res.y.size(), 0.0), gains(res.y.size(), 1.0);
  std::vector<double> q(static_cast<size_t>(n) * n, 0.0);
  std::vector<double> grad(res.y.size(), 0.0);

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const double exag = iter < cfg.exaggeration_iters ? cfg.early_exaggeration : 1.0;
    const double momentum =
        iter < cfg.momentum_switch_iter ? cfg.momentum_start : cfg.momentum_final;

    // Unnormalized Student-t affinities; the scalar sums run serially so
    // the result is identical for any thread count.
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      const double yi0 = res.y[static_cast<size_t>(i) * 2];
      const double yi1 = res.y[static_cast<size_t>(i) * 2 + 1];
      for (int j = 0; j < n; ++j) {
        if (i == j) {
          q[static_cast<size_t>(i) * n + j] = 0;
          continue;
        }
        const double d0 = yi0 - res.y[static_cast<size_t>(j) * 2];
        const double d1 = yi1 - res.y[static_cast<size_t>(j) * 2 + 1];
        q[static_cast<size_t>(i) * n + j] = 1.0 / (1.0 + d0 * d0 + d1 * d1);
      }
    }
    double sum_q = 0;
    for (const double qij : q) sum_q += qij;

    // KL divergence against the true (unexaggerated) P.
    double kl = 0;
    for (size_t k = 0; k < q.size(); ++k) {
      const double pij = P[k];
      if (pij <= 0) continue;
      kl += pij * std::log(pij / std::max(q[k] / sum_q, 1e-300));
    }
    res.kl_history.push_back(kl);

    // Gradient: 4 * sum_j (exag*P_ij - Q_ij) * q_ij * (y_i - y_j).
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      double g0 = 0, g1 = 0;
      const double yi0 = res.y[static_cast<size_t>(i) * 2];
      const double yi1 = res.y[static_cast<size_t>(i) * 2 + 1];
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const double qij = q[static_cast<size_t>(i) * n + j];
        const double mult = (exag * P[static_cast<size_t>(i) * n + j] - qij / sum_q) * qij;
        g0 += mult * (yi0 - res.y[static_cast<size_t>(j) * 2]);
        g1 += mult * (yi1 - res.y[static_cast<size_t>(j) * 2 + 1]);
      }
      grad[static_cast<size_t>(i) * 2] = 4.0 * g0;
      grad[static_cast<size_t>(i) * 2 + 1] = 4.0 * g1;
    }

    // Gain-adapted momentum update, then recenter.
    for (size_t k = 0; k < res.y.size(); ++k) {
      gains[k] = (grad[k] > 0) != (vel[k] > 0) ? gains[k] + 0.2 : gains[k] * 0.8;
      gains[k] = std::max(gains[k], 0.01);
      vel[k] = momentum * vel[k] - cfg.learning_rate * gains[k] * grad[k];
      res.y[k] += vel[k];
    }
    double m0 = 0, m1 = 0;
    for (int i = 0; i < n; ++i) {
      m0 += res.y[static_cast<size_t>(i) * 2];
      m1 += res.y[static_cast<size_t>(i) * 2 + 1];
    }
    m0 /= n;
    m1 /= n;
    for (int i = 0; i < n; ++i) {
      res.y[static_cast<size_t>(i) * 2] -= m0;
      res.y[static_cast<size_t>(i) * 2 + 1] -= m1;
    }
  }
  return res;
}

void save_embeddings_jsonl(const EmbeddingSet& set, const std::string& path) {
  std::string out;
  for (int i = 0; i < set.n; ++i) {
    json j;
    j["id"] = set.ids[static_cast<size_t>(i)];
    j["label"] = set.labels[static_cast<size_t>(i)];
    std::vector<double> vec(set.row(i), set.row(i) + set.dim);
    j["vector"] = vec;
    out += j.dump();
    out += '\n';
  }
  write_file_atomic(path, out.data(), out.size());
}

void save_layout_csv(const TsneResult& layout, const EmbeddingSet& set, const std::string& path) {
  std::string out = "id,label,x,y\n";
  char line[512];
  for (int i = 0; i < set.n; ++i) {
    std::snprintf(line, sizeof(line), "\"%s\",%s,%.9g,%.9g\n",
                  set.ids[static_cast<size_t>(i)].c_str(),
                  set.labels[static_cast<size_t>(i)].c_str(),
                  layout.y[static_cast<size_t>(i) * 2], layout.y[static_cast<size_t>(i) * 2 + 1]);
    out += line;
  }
  write_file_atomic(path, out.data(), out.size());
}

}  // namespace cofor

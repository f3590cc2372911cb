#pragma once

// Brute-force reference predictors and random model generators shared by the
// unit tests and the acceptance binary. The references are written from the
// documented decision rules, not from the library code paths.

#include <algorithm>
#include <cmath>

#include "nilm/models.hpp"

namespace oracle {

using nilm::ClassId;
using nilm::Rng;

// Full sort of (distance, row); vote ties -> smaller summed distance -> lower class.
inline ClassId knn(const nilm::KnnModel& m, const std::vector<double>& x) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t r = 0; r < m.train.rows; ++r) {
    double d = 0;
    for (std::size_t c = 0; c < x.size(); ++c) d += (m.train(r, c) - x[c]) * (m.train(r, c) - x[c]);
    all.push_back({d, r});
  }
  std::sort(all.begin(), all.end());
  std::vector<int> votes(m.class_count, 0);
  std::vector<double> dist(m.class_count, 0.0);
  for (std::size_t q = 0; q < std::min(m.k, all.size()); ++q) {
    votes[m.labels[all[q].second]] += 1;
    dist[m.labels[all[q].second]] += all[q].first;
  }
  ClassId best = 0;
  for (ClassId c = 0; c < m.class_count; ++c) {
    if (votes[c] > votes[best] || (votes[c] == votes[best] && dist[c] < dist[best])) best = c;
  }
  return best;
}

inline double kernel(const nilm::Kernel& k, std::span<const double> a, const std::vector<double>& b) {
  double acc = 0;
  if (k.type == nilm::KernelType::linear) {
    for (std::size_t i = 0; i < b.size(); ++i) acc += a[i] * b[i];
    return acc;
  }
  for (std::size_t i = 0; i < b.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::exp(-k.gamma * acc);
}

// Enumerates every class pair and walks the whole SV list for each.
inline ClassId svm(const nilm::SvmModel& m, const std::vector<double>& x) {
  std::vector<ClassId> owner;
  for (ClassId c = 0; c < m.class_count; ++c) owner.insert(owner.end(), m.sv_per_class[c], c);
  std::vector<int> votes(m.class_count, 0);
  std::vector<double> score(m.class_count, 0.0);
  std::size_t p = 0;
  for (ClassId i = 0; i < m.class_count; ++i) {
    for (ClassId j = i + 1; j < m.class_count; ++j) {
      double f = 0;
      for (std::size_t s = 0; s < owner.size(); ++s) {
        if (owner[s] == i) f += m.dual_coef(j - 1, s) * kernel(m.kernel, m.support_vectors.row(s), x);
        if (owner[s] == j) f += m.dual_coef(i, s) * kernel(m.kernel, m.support_vectors.row(s), x);
      }
      f += m.intercepts[p++];
      votes[f > 0 ? i : j] += 1;
      score[i] += f;
      score[j] -= f;
    }
  }
  ClassId best = 0;
  for (ClassId c = 0; c < m.class_count; ++c) {
    if (votes[c] > votes[best] || (votes[c] == votes[best] && score[c] > score[best])) best = c;
  }
  return best;
}

inline ClassId mlp(const nilm::MlpModel& m, const std::vector<double>& x) {
  std::vector<double> a = x;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& L = m.layers[l];
    std::vector<double> next(L.out);
    for (std::size_t o = 0; o < L.out; ++o) {
      double z = L.bias[o];
      for (std::size_t i = 0; i < L.in; ++i) z += L.weights[o * L.in + i] * a[i];
      next[o] = (l + 1 == m.layers.size() || z > 0) ? z : 0.0;
    }
    a = next;
  }
  return static_cast<ClassId>(std::max_element(a.begin(), a.end()) - a.begin());
}

inline ClassId tree(const nilm::RfTree& t, std::size_t node, const std::vector<double>& x) {
  const auto& n = t.nodes.at(node);
  if (n.feature < 0) return n.leaf_class;
  return tree(t, x.at(static_cast<std::size_t>(n.feature)) <= n.threshold ? n.left : n.right, x);
}

inline ClassId rf(const nilm::RfModel& m, const std::vector<double>& x) {
  std::vector<int> votes(m.class_count, 0);
  for (const auto& t : m.trees) votes[tree(t, 0, x)] += 1;
  return static_cast<ClassId>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

inline ClassId predict(const nilm::Model& m, const std::vector<double>& x) {
  if (auto* k = std::get_if<nilm::KnnModel>(&m)) return knn(*k, x);
  if (auto* s = std::get_if<nilm::SvmModel>(&m)) return svm(*s, x);
  if (auto* p = std::get_if<nilm::MlpModel>(&m)) return mlp(*p, x);
  return rf(std::get<nilm::RfModel>(m), x);
}

// --- random models ---------------------------------------------------------------
// Integer-valued kNN rows and inputs make distance ties common.

inline std::vector<double> random_input(Rng& rng, std::size_t dim, bool integer) {
  std::vector<double> x(dim);
  for (auto& v : x) v = integer ? static_cast<double>(rng.below(3)) : rng.uniform(-2, 2);
  return x;
}

inline nilm::KnnModel random_knn(Rng& rng, std::size_t dim, std::size_t classes) {
  nilm::KnnModel m;
  m.k = 1 + rng.below(6);
  m.class_count = classes;
  const std::size_t rows = m.k + rng.below(20);
  for (std::size_t r = 0; r < rows; ++r) {
    m.train.append_row(random_input(rng, dim, true));
    m.labels.push_back(static_cast<ClassId>(rng.below(classes)));
  }
  return m;
}

inline nilm::SvmModel random_svm(Rng& rng, std::size_t dim, std::size_t classes) {
  nilm::SvmModel m;
  m.class_count = classes;
  m.kernel = {rng.below(2) ? nilm::KernelType::rbf : nilm::KernelType::linear, rng.uniform(0.05, 1.0)};
  for (std::size_t c = 0; c < classes; ++c) m.sv_per_class.push_back(1 + rng.below(4));
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t s = 0; s < m.sv_per_class[c]; ++s) m.support_vectors.append_row(random_input(rng, dim, false));
  }
  m.dual_coef = nilm::Matrix(classes - 1, m.support_vectors.rows);
  for (auto& v : m.dual_coef.data) v = rng.uniform(-3, 3);
  for (std::size_t p = 0; p < nilm::SvmModel::pair_count(classes); ++p) m.intercepts.push_back(rng.uniform(-1, 1));
  return m;
}

inline nilm::MlpModel random_mlp(Rng& rng, const std::vector<std::size_t>& sizes) {
  auto m = nilm::MlpModel::zeros(sizes);
  for (auto& L : m.layers) {
    for (auto& w : L.weights) w = rng.uniform(-1, 1);
    for (auto& b : L.bias) b = rng.uniform(-0.5, 0.5);
  }
  return m;
}

inline void grow(nilm::RfTree& t, std::size_t node, std::size_t depth, Rng& rng, std::size_t dim, std::size_t classes) {
  if (depth == 0 || rng.uniform() < 0.25) {
    t.nodes[node].leaf_class = static_cast<ClassId>(rng.below(classes));
    return;
  }
  t.nodes[node].feature = static_cast<std::int32_t>(rng.below(dim));
  t.nodes[node].threshold = rng.uniform(-1.5, 1.5);
  const auto left = static_cast<std::uint32_t>(t.nodes.size());
  t.nodes.emplace_back();
  t.nodes.emplace_back();
  t.nodes[node].left = left;
  t.nodes[node].right = left + 1;
  grow(t, left, depth - 1, rng, dim, classes);
  grow(t, left + 1, depth - 1, rng, dim, classes);
}

inline nilm::RfModel random_rf(Rng& rng, std::size_t dim, std::size_t classes) {
  nilm::RfModel m;
  m.feature_count = dim;
  m.class_count = classes;
  const std::size_t trees = 1 + rng.below(9);
  for (std::size_t k = 0; k < trees; ++k) {
    nilm::RfTree t;
    t.nodes.emplace_back();
    grow(t, 0, 1 + rng.below(6), rng, dim, classes);
    m.trees.push_back(std::move(t));
  }
  return m;
}

}  // namespace oracle

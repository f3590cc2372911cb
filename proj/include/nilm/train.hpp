#pragma once

// Training for the four classifier families, cross-validated grid search,
// permutation importance (MDA) and the feature-count sweep.

#include <algorithm>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nilm/cost.hpp"
#include "nilm/models.hpp"
#include "nilm/signal_io.hpp"

namespace nilm {

// --- dataset ------------------------------------------------------------------

struct Dataset {
  Matrix x;
  std::vector<ClassId> y;
  std::vector<std::string> classes;
  HarmonicMode layout_mode = HarmonicMode::complex_pairs;
  FeatureSource source = FeatureSource::window;
  DeltaSign delta_sign = DeltaSign::pre_minus_post;
  std::vector<std::size_t> columns;  // layout index of each column of x
  std::string provenance;

  std::size_t size() const { return x.rows; }
  std::size_t dim() const { return x.cols; }
  FeatureLayout layout() const { return FeatureLayout(layout_mode); }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(classes.size(), 0);
    for (auto c : y) ++counts.at(c);
    return counts;
  }

  /// `min_per_class` applies to classes that occur at all; partitions of a
  /// small class may legitimately hold a single instance.
  void validate(std::size_t min_per_class = 2) const {
    require(x.rows > 0, ErrorKind::Validation, "dataset is empty");
    require(y.size() == x.rows, ErrorKind::Validation, "label count does not match row count");
    require(columns.size() == x.cols, ErrorKind::Validation, "column map does not match feature count");
    validate_indices(columns, layout().size());
    for (std::size_t k = 0; k < x.data.size(); ++k) {
      require(std::isfinite(x.data[k]), ErrorKind::Validation,
              "non-finite value at row " + std::to_string(k / std::max<std::size_t>(1, x.cols)));
    }
    for (auto c : y) {
      require(c < classes.size(), ErrorKind::Validation, "label " + std::to_string(c) + " outside the class table");
    }
    const auto counts = class_counts();
    for (std::size_t c = 0; c < counts.size(); ++c) {
      require(counts[c] == 0 || counts[c] >= min_per_class, ErrorKind::Validation,
              "class '" + classes[c] + "' has " + std::to_string(counts[c]) + " instance(s)");
    }
  }

  Dataset take_rows(std::span<const std::size_t> rows) const {
    Dataset out = with_columns(columns);
    out.x = Matrix{};
    out.x.cols = x.cols;
    out.y.clear();
    for (auto r : rows) {
      out.x.append_row(x.row(r));
      out.y.push_back(y[r]);
    }
    return out;
  }

  /// Keeps the given column positions (into x), in the given order.
  Dataset take_columns(std::span<const std::size_t> positions) const {
    validate_indices(positions, x.cols);
    std::vector<std::size_t> cols;
    for (auto p : positions) cols.push_back(columns[p]);
    Dataset out = with_columns(cols);
    out.x = Matrix(x.rows, positions.size());
    for (std::size_t r = 0; r < x.rows; ++r) {
      for (std::size_t k = 0; k < positions.size(); ++k) out.x(r, k) = x(r, positions[k]);
    }
    out.y = y;
    return out;
  }

 private:
  Dataset with_columns(std::vector<std::size_t> cols) const {
    Dataset out;
    out.classes = classes;
    out.layout_mode = layout_mode;
    out.source = source;
    out.delta_sign = delta_sign;
    out.columns = std::move(cols);
    out.provenance = provenance;
    return out;
  }
};

/// Stratified split: each class contributes round(train_frac * n_c) rows to
/// the training side, clamped so both sides keep at least one instance.
inline std::pair<Dataset, Dataset> split_dataset(const Dataset& d, double train_frac, std::uint64_t seed) {
  require(train_frac > 0.0 && train_frac < 1.0, ErrorKind::Validation, "train fraction must lie in (0, 1)");
  d.validate();
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> by_class(d.classes.size());
  for (std::size_t r = 0; r < d.size(); ++r) by_class[d.y[r]].push_back(r);
  std::vector<std::size_t> train_rows, test_rows;
  for (auto& rows : by_class) {
    if (rows.empty()) continue;
    rng.shuffle(rows);
    const auto n = static_cast<double>(rows.size());
    auto n_train = static_cast<std::size_t>(std::llround(train_frac * n));
    n_train = std::clamp<std::size_t>(n_train, 1, rows.size() - 1);
    train_rows.insert(train_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_train));
    test_rows.insert(test_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_train), rows.end());
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  return {d.take_rows(train_rows), d.take_rows(test_rows)};
}

// --- dataset files ------------------------------------------------------------------
//
// CSV `label,f0,f1,...` (label = class id) plus `<path>.json` holding the
// class table, layout, column map and provenance.

inline std::string dataset_sidecar_path(const std::string& csv_path) { return csv_path + ".json"; }

inline void save_dataset(const std::string& path, const Dataset& d) {
  std::string csv = "label";
  for (std::size_t c = 0; c < d.dim(); ++c) csv += ",f" + std::to_string(c);
  csv += '\n';
  for (std::size_t r = 0; r < d.size(); ++r) {
    csv += std::to_string(d.y[r]);
    for (double v : d.x.row(r)) csv += "," + format_double(v);
    csv += '\n';
  }
  write_file(path, csv);
  const FeatureLayout lay = d.layout();
  std::vector<std::string> names;
  for (auto c : d.columns) names.push_back(lay[c].name);
  nlohmann::json meta = {{"format", "nilm-dataset"},
                         {"version", 1},
                         {"classes", d.classes},
                         {"layout", d.layout_mode == HarmonicMode::complex_pairs ? "complex_pairs" : "magnitude"},
                         {"source", to_string(d.source)},
                         {"delta_sign", d.delta_sign == DeltaSign::pre_minus_post ? "pre_minus_post" : "post_minus_pre"},
                         {"columns", d.columns},
                         {"feature_names", names},
                         {"provenance", d.provenance}};
  write_file(dataset_sidecar_path(path), meta.dump(2) + "\n");
}

inline Dataset load_dataset(const std::string& path) {
  Dataset d;
  try {
    const auto meta = nlohmann::json::parse(read_file(dataset_sidecar_path(path)));
    require(meta.at("format") == "nilm-dataset", ErrorKind::Format, "not a dataset sidecar");
    require(meta.at("version").get<int>() == 1, ErrorKind::Version, "unsupported dataset version");
    d.classes = meta.at("classes").get<std::vector<std::string>>();
    d.layout_mode = meta.at("layout") == "magnitude" ? HarmonicMode::magnitude : HarmonicMode::complex_pairs;
    d.source = meta.at("source") == "delta" ? FeatureSource::delta : FeatureSource::window;
    d.delta_sign = meta.at("delta_sign") == "post_minus_pre" ? DeltaSign::post_minus_pre : DeltaSign::pre_minus_post;
    d.columns = meta.at("columns").get<std::vector<std::size_t>>();
    d.provenance = meta.at("provenance").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, dataset_sidecar_path(path) + ": " + e.what());
  }
  const std::string text = read_file(path);
  std::size_t line_no = 0, pos = 0;
  d.x.cols = d.columns.size();
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    const std::string where = path + ": line " + std::to_string(line_no) + ": ";
    if (line_no == 1) {
      require(fields.size() == d.columns.size() + 1 && fields[0] == "label", ErrorKind::Parse,
              where + "header does not match the sidecar column count");
      continue;
    }
    require(fields.size() == d.columns.size() + 1, ErrorKind::Parse, where + "expected " +
                                                                         std::to_string(d.columns.size() + 1) + " fields");
    ClassId label = 0;
    auto res = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), label);
    require(res.ec == std::errc{} && res.ptr == fields[0].data() + fields[0].size(), ErrorKind::Parse,
            where + "bad label '" + std::string(fields[0]) + "'");
    std::vector<double> row;
    for (std::size_t k = 1; k < fields.size(); ++k) {
      double v = 0.0;
      require(parse_double(fields[k], v), ErrorKind::Parse, where + "bad number '" + std::string(fields[k]) + "'");
      row.push_back(v);
    }
    d.x.append_row(row);
    d.y.push_back(label);
  }
  d.validate();
  return d;
}

inline void save_model_file(const std::string& path, const ModelFile& file) {
  const auto bytes = serialize(file);
  write_file(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

inline ModelFile load_model_file(const std::string& path) {
  const std::string raw = read_file(path);
  return deserialize(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()));
}

// --- metrics ------------------------------------------------------------------------

struct Metrics {
  std::vector<std::vector<std::size_t>> confusion;  // [truth][predicted]
  double accuracy = 0.0;
  double precision = 0.0;  // macro over classes that occur in truth or predictions
  double recall = 0.0;
};

inline Metrics compute_metrics(std::span<const ClassId> truth, std::span<const ClassId> predicted, std::size_t classes) {
  require(truth.size() == predicted.size(), ErrorKind::LengthMismatch, "truth and prediction counts differ");
  Metrics m;
  m.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t k = 0; k < truth.size(); ++k) ++m.confusion.at(truth[k]).at(predicted[k]);
  std::size_t trace = 0;
  for (std::size_t c = 0; c < classes; ++c) trace += m.confusion[c][c];
  m.accuracy = truth.empty() ? 0.0 : static_cast<double>(trace) / static_cast<double>(truth.size());
  double p_sum = 0, r_sum = 0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t row = 0, col = 0;
    for (std::size_t o = 0; o < classes; ++o) {
      row += m.confusion[c][o];
      col += m.confusion[o][c];
    }
    if (row == 0 && col == 0) continue;
    ++used;
    const double tp = static_cast<double>(m.confusion[c][c]);
    p_sum += col ? tp / static_cast<double>(col) : 0.0;
    r_sum += row ? tp / static_cast<double>(row) : 0.0;
  }
  if (used) {
    m.precision = p_sum / static_cast<double>(used);
    m.recall = r_sum / static_cast<double>(used);
  }
  return m;
}

inline nlohmann::json to_json(const Metrics& m) {
  return {{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall}, {"confusion", m.confusion}};
}

// --- kNN ----------------------------------------------------------------------------

inline KnnModel train_knn(const Matrix& x, std::span<const ClassId> y, std::size_t class_count, std::size_t k) {
  require(k >= 1 && k <= x.rows, ErrorKind::Validation,
          "kNN k=" + std::to_string(k) + " needs 1 <= k <= " + std::to_string(x.rows));
  KnnModel m;
  m.k = k;
  m.class_count = class_count;
  m.train = x;
  m.labels.assign(y.begin(), y.end());
  m.validate();
  return m;
}

// --- random forest ------------------------------------------------------------------------

namespace detail {

inline ClassId majority(std::span<const std::size_t> counts) {
  ClassId best = 0;
  for (ClassId c = 1; c < counts.size(); ++c) {
    if (counts[c] > counts[best]) best = c;
  }
  return best;
}

// n * gini = n - sum(c^2) / n
inline double weighted_gini(std::span<const std::size_t> counts, std::size_t n) {
  if (n == 0) return 0.0;
  double sq = 0;
  for (auto c : counts) sq += static_cast<double>(c) * static_cast<double>(c);
  return static_cast<double>(n) - sq / static_cast<double>(n);
}

struct Split {
  std::size_t feature = 0;
  double threshold = 0.0;
  double impurity = std::numeric_limits<double>::infinity();
};

inline RfTree grow_tree(const Matrix& x, std::span<const ClassId> y, std::size_t class_count,
                        std::vector<std::size_t> sample, std::size_t max_depth, Rng& rng) {
  struct Pending {
    std::size_t node;
    std::vector<std::size_t> rows;
    std::size_t depth;
  };
  const std::size_t f = x.cols;
  const auto mtry = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(f)))));
  std::vector<std::size_t> features(f);
  std::iota(features.begin(), features.end(), 0);
  std::vector<std::pair<double, ClassId>> column;
  std::vector<std::size_t> left(class_count), total(class_count);

  RfTree tree;
  tree.nodes.emplace_back();
  std::deque<Pending> queue;
  queue.push_back({0, std::move(sample), 0});
  // Breadth-first, so children are always appended after their parent.
  while (!queue.empty()) {
    Pending job = std::move(queue.front());
    queue.pop_front();
    std::fill(total.begin(), total.end(), 0);
    for (auto r : job.rows) ++total[y[r]];
    const ClassId leaf = majority(total);
    const std::size_t n = job.rows.size();
    tree.nodes[job.node].leaf_class = leaf;
    if (job.depth >= max_depth || n < 2 || total[leaf] == n) continue;

    const double parent = weighted_gini(total, n);
    Split best;
    for (std::size_t k = 0; k < std::min(mtry, f); ++k) {
      std::swap(features[k], features[k + rng.below(f - k)]);
    }
    for (std::size_t k = 0; k < std::min(mtry, f); ++k) {
      const std::size_t feat = features[k];
      column.clear();
      for (auto r : job.rows) column.emplace_back(x(r, feat), y[r]);
      std::sort(column.begin(), column.end());
      std::fill(left.begin(), left.end(), 0);
      std::vector<std::size_t> right = total;
      for (std::size_t p = 0; p + 1 < n; ++p) {
        ++left[column[p].second];
        --right[column[p].second];
        if (!(column[p].first < column[p + 1].first)) continue;
        const double imp = weighted_gini(left, p + 1) + weighted_gini(right, n - p - 1);
        if (imp < best.impurity) {
          const double lo = column[p].first, hi = column[p + 1].first;
          double thr = lo + (hi - lo) / 2.0;
          if (!(thr < hi)) thr = lo;
          best = {feat, thr, imp};
        }
      }
    }
    if (!(best.impurity < parent - 1e-12)) continue;

    std::vector<std::size_t> lrows, rrows;
    for (auto r : job.rows) (x(r, best.feature) <= best.threshold ? lrows : rrows).push_back(r);
    const auto l = static_cast<std::uint32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    auto& node = tree.nodes[job.node];
    node.feature = static_cast<std::int32_t>(best.feature);
    node.threshold = best.threshold;
    node.left = l;
    node.right = l + 1;
    queue.push_back({l, std::move(lrows), job.depth + 1});
    queue.push_back({l + 1, std::move(rrows), job.depth + 1});
  }
  return tree;
}

}  // namespace detail

/// Bagged CART forest. Each tree sees a bootstrap sample (n draws with
/// replacement) and considers ceil(sqrt(f)) random features per node.
inline RfModel train_rf(const Matrix& x, std::span<const ClassId> y, std::size_t class_count, std::size_t n_trees,
                        std::size_t max_depth, std::uint64_t seed) {
  require(n_trees >= 1, ErrorKind::Validation, "RF needs at least one tree");
  require(x.rows > 0 && y.size() == x.rows, ErrorKind::Validation, "RF training data is empty or mislabeled");
  RfModel m;
  m.feature_count = x.cols;
  m.class_count = class_count;
  for (std::size_t t = 0; t < n_trees; ++t) {
    Rng rng(derive_seed(seed, t));
    std::vector<std::size_t> sample(x.rows);
    for (auto& s : sample) s = rng.below(x.rows);
    m.trees.push_back(detail::grow_tree(x, y, class_count, std::move(sample), max_depth, rng));
  }
  m.validate();
  return m;
}

// --- MLP -----------------------------------------------------------------------------------

/// Mean softmax cross-entropy over `rows`. When `grad` is given it receives
/// the gradient of that mean (same shapes as `m`).
inline double mlp_loss_gradient(const MlpModel& m, const Matrix& x, std::span<const ClassId> y,
                                std::span<const std::size_t> rows, MlpModel* grad) {
  require(!rows.empty(), ErrorKind::Validation, "loss over zero rows");
  const std::size_t depth = m.layers.size();
  if (grad) {
    *grad = MlpModel::zeros(m.layer_sizes());
  }
  std::vector<std::vector<double>> act(depth + 1);
  std::vector<double> delta, prev;
  double loss = 0.0;
  for (auto r : rows) {
    act[0].assign(x.row(r).begin(), x.row(r).end());
    for (std::size_t l = 0; l < depth; ++l) {
      const auto& L = m.layers[l];
      act[l + 1].resize(L.out);
      for (std::size_t o = 0; o < L.out; ++o) {
        const double* w = L.weights.data() + o * L.in;
        double acc = L.bias[o];
        for (std::size_t i = 0; i < L.in; ++i) acc += w[i] * act[l][i];
        act[l + 1][o] = l + 1 < depth ? std::max(0.0, acc) : acc;
      }
    }
    auto& z = act[depth];
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - zmax);
    const double log_sum = zmax + std::log(sum);
    loss += log_sum - z[y[r]];
    if (!grad) continue;

    delta.resize(z.size());
    for (std::size_t c = 0; c < z.size(); ++c) delta[c] = std::exp(z[c] - log_sum) - (c == y[r] ? 1.0 : 0.0);
    for (std::size_t l = depth; l-- > 0;) {
      const auto& L = m.layers[l];
      auto& G = grad->layers[l];
      const auto& a = act[l];
      for (std::size_t o = 0; o < L.out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        double* g = G.weights.data() + o * L.in;
        for (std::size_t i = 0; i < L.in; ++i) g[i] += d * a[i];
        G.bias[o] += d;
      }
      if (l == 0) break;
      prev.assign(L.in, 0.0);
      for (std::size_t o = 0; o < L.out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        const double* w = L.weights.data() + o * L.in;
        for (std::size_t i = 0; i < L.in; ++i) prev[i] += w[i] * d;
      }
      for (std::size_t i = 0; i < L.in; ++i) {
        if (!(a[i] > 0.0)) prev[i] = 0.0;
      }
      delta.swap(prev);
    }
  }
  const double n = static_cast<double>(rows.size());
  if (grad) {
    for (auto& G : grad->layers) {
      for (double& g : G.weights) g /= n;
      for (double& g : G.bias) g /= n;
    }
  }
  return loss / n;
}

/// Glorot-uniform weights in +-sqrt(6 / (in + out)), zero biases.
inline MlpModel init_mlp(const std::vector<std::size_t>& sizes, Rng& rng) {
  MlpModel m = MlpModel::zeros(sizes);
  for (auto& L : m.layers) {
    const double limit = std::sqrt(6.0 / static_cast<double>(L.in + L.out));
    for (double& w : L.weights) w = rng.uniform(-limit, limit);
  }
  return m;
}

struct MlpSchedule {
  std::vector<std::size_t> hidden{800, 100};
  double learning_rate = 0.01;
  std::size_t epochs = 200;
  std::size_t batch = 32;
};

/// Mini-batch SGD on softmax cross-entropy. 10% of the rows are held out and
/// the epoch snapshot with the best held-out accuracy is returned, lower
/// held-out loss breaking ties.
inline MlpModel train_mlp(const Matrix& x, std::span<const ClassId> y, std::size_t class_count,
                          const MlpSchedule& schedule, std::uint64_t seed) {
  require(schedule.epochs >= 1, ErrorKind::Validation, "MLP needs at least one epoch");
  require(schedule.batch >= 1 && schedule.learning_rate > 0.0, ErrorKind::Validation,
          "MLP batch and learning rate must be positive");
  require(x.rows > 0 && y.size() == x.rows, ErrorKind::Validation, "MLP training data is empty or mislabeled");
  for (auto h : schedule.hidden) require(h >= 1, ErrorKind::Validation, "MLP hidden layers must be non-empty");
  Rng rng(seed);
  std::vector<std::size_t> sizes{x.cols};
  sizes.insert(sizes.end(), schedule.hidden.begin(), schedule.hidden.end());
  sizes.push_back(class_count);
  MlpModel m = init_mlp(sizes, rng);

  std::vector<std::size_t> order(x.rows);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  const std::size_t n_hold = x.rows >= 10 ? x.rows / 10 : 0;
  std::vector<std::size_t> hold(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_hold));
  std::vector<std::size_t> fit(order.begin() + static_cast<std::ptrdiff_t>(n_hold), order.end());
  const auto& judge = hold.empty() ? fit : hold;

  auto accuracy_on = [&](const MlpModel& net) {
    std::size_t hit = 0;
    for (auto r : judge) hit += predict_mlp(net, x.row(r)) == y[r];
    return static_cast<double>(hit) / static_cast<double>(judge.size());
  };

  MlpModel best = m;
  double best_acc = -1.0;
  double best_loss = std::numeric_limits<double>::infinity();
  MlpModel grad;
  for (std::size_t epoch = 1; epoch <= schedule.epochs; ++epoch) {
    rng.shuffle(fit);
    double loss = 0.0;
    for (std::size_t b = 0; b < fit.size(); b += schedule.batch) {
      const std::size_t e = std::min(fit.size(), b + schedule.batch);
      const std::span<const std::size_t> batch(fit.data() + b, e - b);
      loss += mlp_loss_gradient(m, x, y, batch, &grad) * static_cast<double>(batch.size());
      for (std::size_t l = 0; l < m.layers.size(); ++l) {
        auto& L = m.layers[l];
        const auto& G = grad.layers[l];
        for (std::size_t k = 0; k < L.weights.size(); ++k) L.weights[k] -= schedule.learning_rate * G.weights[k];
        for (std::size_t k = 0; k < L.bias.size(); ++k) L.bias[k] -= schedule.learning_rate * G.bias[k];
      }
    }
    loss /= static_cast<double>(fit.size());
    if (!std::isfinite(loss)) {
      fail(ErrorKind::Divergence, "MLP training diverged at epoch " + std::to_string(epoch) + " (loss is not finite)");
    }
    const double acc = accuracy_on(m);
    const double held_loss = mlp_loss_gradient(m, x, y, judge, nullptr);
    if (acc > best_acc || (acc == best_acc && held_loss < best_loss)) {
      best_acc = acc;
      best_loss = held_loss;
      best = m;
    }
  }
  return best;
}

// --- SVM -----------------------------------------------------------------------------------

struct SvmTrainInfo {
  std::size_t iterations = 0;
  bool capped = false;
};

namespace detail {

struct BinarySvm {
  std::vector<double> alpha;  // per pair row
  double rho = 0.0;
  std::size_t iterations = 0;
  bool capped = false;
};

/// Dual soft-margin SVM by SMO with second-order working-set selection.
/// `kmat` is the n x n kernel matrix, `y` is +1/-1.
inline BinarySvm solve_binary_svm(const std::vector<double>& kmat, const std::vector<double>& y, double c,
                                  double eps = 1e-3) {
  const std::size_t n = y.size();
  constexpr double tau = 1e-12;
  auto q = [&](std::size_t i, std::size_t j) { return y[i] * y[j] * kmat[i * n + j]; };
  BinarySvm out;
  auto& a = out.alpha;
  a.assign(n, 0.0);
  std::vector<double> g(n, -1.0);
  const std::size_t cap = std::max<std::size_t>(10000000, 100 * n);
  const double inf = std::numeric_limits<double>::infinity();

  for (;;) {
    double gmax = -inf;
    std::size_t i = n;
    for (std::size_t t = 0; t < n; ++t) {
      if (y[t] > 0) {
        if (a[t] < c && -g[t] >= gmax) gmax = -g[t], i = t;
      } else if (a[t] > 0 && g[t] >= gmax) {
        gmax = g[t], i = t;
      }
    }
    double gmax2 = -inf, best_obj = inf;
    std::size_t j = n;
    for (std::size_t t = 0; t < n && i < n; ++t) {
      if (y[t] > 0) {
        if (!(a[t] > 0)) continue;
        const double diff = gmax + g[t];
        gmax2 = std::max(gmax2, g[t]);
        if (diff > 0) {
          const double quad = kmat[i * n + i] + kmat[t * n + t] - 2.0 * y[i] * q(i, t);
          const double obj = -(diff * diff) / (quad > 0 ? quad : tau);
          if (obj <= best_obj) best_obj = obj, j = t;
        }
      } else {
        if (!(a[t] < c)) continue;
        const double diff = gmax - g[t];
        gmax2 = std::max(gmax2, -g[t]);
        if (diff > 0) {
          const double quad = kmat[i * n + i] + kmat[t * n + t] + 2.0 * y[i] * q(i, t);
          const double obj = -(diff * diff) / (quad > 0 ? quad : tau);
          if (obj <= best_obj) best_obj = obj, j = t;
        }
      }
    }
    if (i == n || j == n || gmax + gmax2 < eps) break;
    if (out.iterations >= cap) {
      out.capped = true;
      break;
    }
    ++out.iterations;

    const double ai = a[i], aj = a[j];
    if (y[i] != y[j]) {
      double quad = kmat[i * n + i] + kmat[j * n + j] + 2.0 * q(i, j);
      if (quad <= 0) quad = tau;
      const double delta = (-g[i] - g[j]) / quad;
      const double diff = a[i] - a[j];
      a[i] += delta;
      a[j] += delta;
      if (diff > 0) {
        if (a[j] < 0) a[j] = 0, a[i] = diff;
      } else if (a[i] < 0) {
        a[i] = 0, a[j] = -diff;
      }
      if (diff > 0) {
        if (a[i] > c) a[i] = c, a[j] = c - diff;
      } else if (a[j] > c) {
        a[j] = c, a[i] = c + diff;
      }
    } else {
      double quad = kmat[i * n + i] + kmat[j * n + j] - 2.0 * q(i, j);
      if (quad <= 0) quad = tau;
      const double delta = (g[i] - g[j]) / quad;
      const double sum = a[i] + a[j];
      a[i] -= delta;
      a[j] += delta;
      if (sum > c) {
        if (a[i] > c) a[i] = c, a[j] = sum - c;
      } else if (a[j] < 0) {
        a[j] = 0, a[i] = sum;
      }
      if (sum > c) {
        if (a[j] > c) a[j] = c, a[i] = sum - c;
      } else if (a[i] < 0) {
        a[i] = 0, a[j] = sum;
      }
    }
    const double di = a[i] - ai, dj = a[j] - aj;
    for (std::size_t t = 0; t < n; ++t) g[t] += q(i, t) * di + q(j, t) * dj;
  }

  double ub = inf, lb = -inf, free_sum = 0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * g[t];
    if (a[t] >= c) {
      if (y[t] < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (a[t] <= 0) {
      if (y[t] > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++n_free;
      free_sum += yg;
    }
  }
  out.rho = n_free ? free_sum / static_cast<double>(n_free) : (ub + lb) / 2.0;
  return out;
}

}  // namespace detail

/// One binary SVM per class pair, merged into the shared-SV one-vs-one
/// layout. A training row becomes a support vector when it carries a
/// non-zero multiplier in any pair.
inline SvmModel train_svm(const Matrix& x, std::span<const ClassId> y, std::size_t class_count, double c,
                          Kernel kernel, SvmTrainInfo* info = nullptr) {
  require(c > 0.0, ErrorKind::Validation, "SVM C must be positive");
  require(kernel.type == KernelType::linear || kernel.gamma > 0.0, ErrorKind::Validation, "rbf gamma must be positive");
  require(x.rows > 0 && y.size() == x.rows, ErrorKind::Validation, "SVM training data is empty or mislabeled");
  require(class_count >= 1, ErrorKind::Validation, "SVM needs a class table");
  std::vector<std::vector<std::size_t>> by_class(class_count);
  for (std::size_t r = 0; r < x.rows; ++r) by_class[y[r]].push_back(r);

  const std::size_t pairs = SvmModel::pair_count(class_count);
  std::vector<std::vector<double>> coef(pairs, std::vector<double>(x.rows, 0.0));  // signed alpha per row
  std::vector<double> intercepts(pairs, 0.0);
  std::vector<bool> is_sv(x.rows, false);
  SvmTrainInfo stats;
  std::size_t p = 0;
  for (std::size_t i = 0; i < class_count; ++i) {
    for (std::size_t j = i + 1; j < class_count; ++j, ++p) {
      std::vector<std::size_t> rows = by_class[i];
      rows.insert(rows.end(), by_class[j].begin(), by_class[j].end());
      if (by_class[i].empty() || by_class[j].empty()) {
        // Absent class: the pair always votes for whichever class exists.
        intercepts[p] = by_class[i].empty() ? -1.0 : 1.0;
        continue;
      }
      const std::size_t n = rows.size();
      std::vector<double> kmat(n * n), sign(n);
      for (std::size_t a = 0; a < n; ++a) {
        sign[a] = a < by_class[i].size() ? 1.0 : -1.0;
        for (std::size_t b = 0; b <= a; ++b) {
          kmat[a * n + b] = kmat[b * n + a] = kernel(x.row(rows[a]), x.row(rows[b]));
        }
      }
      const auto sol = detail::solve_binary_svm(kmat, sign, c);
      stats.iterations += sol.iterations;
      stats.capped = stats.capped || sol.capped;
      intercepts[p] = -sol.rho;
      for (std::size_t a = 0; a < n; ++a) {
        if (sol.alpha[a] > 0.0) {
          coef[p][rows[a]] = sol.alpha[a] * sign[a];
          is_sv[rows[a]] = true;
        }
      }
    }
  }

  SvmModel m;
  m.class_count = class_count;
  m.kernel = kernel;
  m.support_vectors.cols = x.cols;
  m.sv_per_class.assign(class_count, 0);
  std::vector<std::size_t> sv_rows;
  for (std::size_t k = 0; k < class_count; ++k) {
    for (auto r : by_class[k]) {
      if (!is_sv[r]) continue;
      sv_rows.push_back(r);
      m.support_vectors.append_row(x.row(r));
      ++m.sv_per_class[k];
    }
  }
  m.dual_coef = Matrix(class_count - 1, sv_rows.size());
  p = 0;
  for (std::size_t i = 0; i < class_count; ++i) {
    for (std::size_t j = i + 1; j < class_count; ++j, ++p) {
      for (std::size_t s = 0; s < sv_rows.size(); ++s) {
        const auto cls = y[sv_rows[s]];
        if (cls == i) m.dual_coef(j - 1, s) = coef[p][sv_rows[s]];
        if (cls == j) m.dual_coef(i, s) = coef[p][sv_rows[s]];
      }
    }
  }
  m.intercepts = std::move(intercepts);
  m.validate();
  if (info) *info = stats;
  return m;
}

// --- hyperparameters and fitting -------------------------------------------------------------

struct Hyper {
  ModelKind kind = ModelKind::rf;
  std::size_t k = 5;
  double c = 10.0;
  double gamma = 0.0;  // 0 selects 1 / feature count
  KernelType kernel = KernelType::rbf;
  MlpSchedule mlp{};
  std::size_t trees = 100;
  std::size_t depth = 16;

  bool operator==(const Hyper&) const = default;
};

inline nlohmann::json to_json(const Hyper& h) {
  nlohmann::json j = {{"kind", to_string(h.kind)}};
  switch (h.kind) {
    case ModelKind::knn: j["k"] = h.k; break;
    case ModelKind::svm:
      j["c"] = h.c;
      j["gamma"] = h.gamma;
      j["kernel"] = to_string(h.kernel);
      break;
    case ModelKind::mlp:
      j["hidden"] = h.mlp.hidden;
      j["learning_rate"] = h.mlp.learning_rate;
      j["epochs"] = h.mlp.epochs;
      j["batch"] = h.mlp.batch;
      break;
    case ModelKind::rf:
      j["trees"] = h.trees;
      j["max_depth"] = h.depth;
      break;
  }
  return j;
}

inline std::size_t parameter_count(const Model& model) {
  return std::visit(
      [](const auto& m) -> std::size_t {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, KnnModel>) {
          return m.train.rows * m.train.cols;
        } else if constexpr (std::is_same_v<T, SvmModel>) {
          return m.sv_count() * m.dim() + m.dual_coef.data.size() + m.intercepts.size();
        } else if constexpr (std::is_same_v<T, MlpModel>) {
          return m.parameter_count();
        } else {
          return m.node_count();
        }
      },
      model);
}

/// Fits scaler (except for RF) and model on `d`; the result carries the
/// dataset's column map and class table.
inline ModelFile fit_model(const Dataset& d, const Hyper& h, std::uint64_t seed) {
  d.validate(1);
  ModelFile file;
  file.layout_mode = d.layout_mode;
  file.source = d.source;
  file.delta_sign = d.delta_sign;
  file.selected = d.columns;
  file.class_names = d.classes;
  if (h.kind != ModelKind::rf) file.scaler = Scaler::fit(d.x);
  const Matrix xs = file.scaler.apply(d.x);
  const std::size_t classes = d.classes.size();
  switch (h.kind) {
    case ModelKind::knn: file.model = train_knn(xs, d.y, classes, h.k); break;
    case ModelKind::svm: {
      const double gamma = h.gamma > 0.0 ? h.gamma : 1.0 / static_cast<double>(d.dim());
      SvmTrainInfo info;
      file.model = train_svm(xs, d.y, classes, h.c, Kernel{h.kernel, gamma}, &info);
      if (info.capped) file.notes = "svm training capped at " + std::to_string(info.iterations) + " iterations";
      break;
    }
    case ModelKind::mlp: file.model = train_mlp(xs, d.y, classes, h.mlp, seed); break;
    case ModelKind::rf: file.model = train_rf(xs, d.y, classes, h.trees, h.depth, seed); break;
  }
  file.validate();
  return file;
}

/// Predictions for the rows of `d`, whose columns must match the model's.
inline std::vector<ClassId> predict_rows(const ModelFile& file, const Dataset& d) {
  require(d.columns == file.selected, ErrorKind::Dimension, "dataset columns differ from the model's feature selection");
  std::vector<ClassId> out(d.size());
  for (std::size_t r = 0; r < d.size(); ++r) out[r] = predict(file.model, file.scaler.apply(d.x.row(r)));
  return out;
}

inline Metrics evaluate(const ModelFile& file, const Dataset& d) {
  return compute_metrics(d.y, predict_rows(file, d), d.classes.size());
}

// --- grid search ---------------------------------------------------------------------------

struct GridSpec {
  std::vector<std::size_t> knn_k{1, 3, 5, 7};
  std::vector<double> svm_c{1, 10, 100};
  std::vector<double> svm_gamma{0.0};
  std::vector<KernelType> svm_kernel{KernelType::rbf};
  std::vector<std::vector<std::size_t>> mlp_hidden{{800, 100}};
  std::vector<double> mlp_lr{0.01};
  std::size_t mlp_epochs = 200;
  std::size_t mlp_batch = 32;
  std::vector<std::size_t> rf_trees{50, 100};
  std::vector<std::size_t> rf_depth{8, 16};

  void validate(ModelKind kind) const {
    auto nonempty = [](bool ok, const char* axis) {
      require(ok, ErrorKind::Validation, std::string("grid axis '") + axis + "' is empty");
    };
    auto positive = [](bool ok, const char* axis) {
      require(ok, ErrorKind::Validation, std::string("grid axis '") + axis + "' has a non-positive value");
    };
    switch (kind) {
      case ModelKind::knn:
        nonempty(!knn_k.empty(), "k");
        positive(std::all_of(knn_k.begin(), knn_k.end(), [](auto v) { return v > 0; }), "k");
        break;
      case ModelKind::svm:
        nonempty(!svm_c.empty(), "c");
        nonempty(!svm_gamma.empty(), "gamma");
        nonempty(!svm_kernel.empty(), "kernel");
        positive(std::all_of(svm_c.begin(), svm_c.end(), [](auto v) { return v > 0; }), "c");
        positive(std::all_of(svm_gamma.begin(), svm_gamma.end(), [](auto v) { return v >= 0; }), "gamma");
        break;
      case ModelKind::mlp:
        nonempty(!mlp_hidden.empty(), "hidden");
        nonempty(!mlp_lr.empty(), "learning_rate");
        positive(std::all_of(mlp_lr.begin(), mlp_lr.end(), [](auto v) { return v > 0; }), "learning_rate");
        positive(mlp_epochs > 0 && mlp_batch > 0, "epochs");
        break;
      case ModelKind::rf:
        nonempty(!rf_trees.empty(), "trees");
        nonempty(!rf_depth.empty(), "max_depth");
        positive(std::all_of(rf_trees.begin(), rf_trees.end(), [](auto v) { return v > 0; }), "trees");
        break;
    }
  }

  /// Cells in axis order (first axis outermost).
  std::vector<Hyper> cells(ModelKind kind) const {
    validate(kind);
    std::vector<Hyper> out;
    Hyper h;
    h.kind = kind;
    switch (kind) {
      case ModelKind::knn:
        for (auto k : knn_k) h.k = k, out.push_back(h);
        break;
      case ModelKind::svm:
        for (auto c : svm_c)
          for (auto g : svm_gamma)
            for (auto kt : svm_kernel) h.c = c, h.gamma = g, h.kernel = kt, out.push_back(h);
        break;
      case ModelKind::mlp:
        h.mlp.epochs = mlp_epochs;
        h.mlp.batch = mlp_batch;
        for (const auto& hid : mlp_hidden)
          for (auto lr : mlp_lr) h.mlp.hidden = hid, h.mlp.learning_rate = lr, out.push_back(h);
        break;
      case ModelKind::rf:
        for (auto t : rf_trees)
          for (auto d : rf_depth) h.trees = t, h.depth = d, out.push_back(h);
        break;
    }
    return out;
  }
};

struct CvRow {
  Hyper hyper;
  std::vector<double> fold_accuracy;
  double mean_accuracy = 0.0;
  double mean_parameters = 0.0;
  bool failed = false;
  std::string error;
};

struct GridResult {
  Hyper best;
  std::size_t best_index = 0;
  std::vector<CvRow> table;
};

/// Stratified fold id per row: each class's rows are shuffled, then dealt round-robin.
inline std::vector<std::size_t> stratified_folds(const Dataset& d, std::size_t folds, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> fold(d.size(), 0);
  std::vector<std::vector<std::size_t>> by_class(d.classes.size());
  for (std::size_t r = 0; r < d.size(); ++r) by_class[d.y[r]].push_back(r);
  for (auto& rows : by_class) {
    rng.shuffle(rows);
    for (std::size_t k = 0; k < rows.size(); ++k) fold[rows[k]] = k % folds;
  }
  return fold;
}

inline GridResult grid_search(const Dataset& d, ModelKind kind, const GridSpec& grid, std::size_t folds,
                              std::uint64_t seed) {
  require(folds >= 2, ErrorKind::Validation, "grid search needs at least 2 folds");
  d.validate(1);
  const auto fold_of = stratified_folds(d, folds, seed);
  GridResult result;
  const auto cells = grid.cells(kind);
  for (std::size_t cell = 0; cell < cells.size(); ++cell) {
    CvRow row;
    row.hyper = cells[cell];
    const std::uint64_t cell_seed = derive_seed(seed, cell);
    try {
      double params = 0;
      for (std::size_t f = 0; f < folds; ++f) {
        std::vector<std::size_t> tr, te;
        for (std::size_t r = 0; r < d.size(); ++r) (fold_of[r] == f ? te : tr).push_back(r);
        if (te.empty() || tr.empty()) continue;
        const Dataset train = d.take_rows(tr), test = d.take_rows(te);
        const auto model = fit_model(train, row.hyper, derive_seed(cell_seed, f));
        row.fold_accuracy.push_back(evaluate(model, test).accuracy);
        params += static_cast<double>(parameter_count(model.model));
      }
      require(!row.fold_accuracy.empty(), ErrorKind::Validation, "no usable fold");
      const double nf = static_cast<double>(row.fold_accuracy.size());
      row.mean_accuracy = std::accumulate(row.fold_accuracy.begin(), row.fold_accuracy.end(), 0.0) / nf;
      row.mean_parameters = params / nf;
    } catch (const Error& e) {
      row.failed = true;
      row.error = e.what();
      row.fold_accuracy.clear();
    }
    result.table.push_back(std::move(row));
  }
  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < result.table.size(); ++k) {
    const auto& r = result.table[k];
    if (r.failed) continue;
    if (!best) {
      best = k;
      continue;
    }
    const auto& b = result.table[*best];
    if (r.mean_accuracy > b.mean_accuracy ||
        (r.mean_accuracy == b.mean_accuracy && r.mean_parameters < b.mean_parameters)) {
      best = k;
    }
  }
  require(best.has_value(), ErrorKind::Validation, "every grid cell failed to train");
  result.best_index = *best;
  result.best = result.table[*best].hyper;
  return result;
}

inline nlohmann::json to_json(const GridResult& g) {
  auto rows = nlohmann::json::array();
  for (const auto& r : g.table) {
    rows.push_back({{"hyper", to_json(r.hyper)},
                    {"fold_accuracy", r.fold_accuracy},
                    {"mean_accuracy", r.mean_accuracy},
                    {"mean_parameters", r.mean_parameters},
                    {"failed", r.failed},
                    {"error", r.error}});
  }
  return {{"best", to_json(g.best)}, {"best_index", g.best_index}, {"table", rows}};
}

// --- MDA -----------------------------------------------------------------------------------

struct MdaReport {
  double baseline = 0.0;
  std::vector<double> importance;      // per dataset column
  std::vector<std::size_t> ranking;    // column positions, most important first
  std::vector<std::size_t> columns;    // layout index of each column
  std::uint64_t seed = 0;
  std::size_t repeats = 0;
};

/// Permutation importance: the model is trained once on `train`; each test
/// column is shuffled `repeats` times and the mean accuracy drop recorded.
inline MdaReport mda_rank(const Hyper& h, const Dataset& train, const Dataset& test, std::size_t repeats,
                          std::uint64_t seed) {
  require(repeats >= 1, ErrorKind::Validation, "MDA needs at least one repetition");
  require(train.columns == test.columns, ErrorKind::Dimension, "train and test columns differ");
  const auto model = fit_model(train, h, seed);
  MdaReport rep;
  rep.seed = seed;
  rep.repeats = repeats;
  rep.columns = train.columns;
  rep.baseline = evaluate(model, test).accuracy;
  rep.importance.assign(test.dim(), 0.0);
  Dataset shuffled = test;
  std::vector<double> col(test.size());
  for (std::size_t f = 0; f < test.dim(); ++f) {
    for (std::size_t r = 0; r < test.size(); ++r) col[r] = test.x(r, f);
    double acc_sum = 0.0;
    for (std::size_t k = 0; k < repeats; ++k) {
      Rng rng(derive_seed(seed, 1 + f * repeats + k));
      std::vector<double> perm = col;
      rng.shuffle(perm);
      for (std::size_t r = 0; r < test.size(); ++r) shuffled.x(r, f) = perm[r];
      acc_sum += evaluate(model, shuffled).accuracy;
    }
    for (std::size_t r = 0; r < test.size(); ++r) shuffled.x(r, f) = col[r];
    rep.importance[f] = rep.baseline - acc_sum / static_cast<double>(repeats);
  }
  rep.ranking.resize(test.dim());
  std::iota(rep.ranking.begin(), rep.ranking.end(), 0);
  std::stable_sort(rep.ranking.begin(), rep.ranking.end(),
                   [&](std::size_t a, std::size_t b) { return rep.importance[a] > rep.importance[b]; });
  return rep;
}

inline nlohmann::json to_json(const MdaReport& r, const FeatureLayout& layout) {
  auto ranked = nlohmann::json::array();
  for (auto pos : r.ranking) {
    ranked.push_back({{"column", pos},
                      {"feature", r.columns[pos]},
                      {"name", layout[r.columns[pos]].name},
                      {"importance", r.importance[pos]}});
  }
  return {{"baseline_accuracy", r.baseline}, {"seed", r.seed},       {"repeats", r.repeats},
          {"importance", r.importance},      {"ranking", r.ranking}, {"columns", r.columns},
          {"ranked", ranked}};
}

inline MdaReport mda_from_json(const nlohmann::json& j) {
  try {
    MdaReport r;
    r.baseline = j.at("baseline_accuracy");
    r.seed = j.at("seed");
    r.repeats = j.at("repeats");
    r.importance = j.at("importance").get<std::vector<double>>();
    r.ranking = j.at("ranking").get<std::vector<std::size_t>>();
    r.columns = j.at("columns").get<std::vector<std::size_t>>();
    require(r.importance.size() == r.ranking.size() && r.columns.size() == r.ranking.size(), ErrorKind::Format,
            "MDA report arrays differ in length");
    validate_indices(r.ranking, r.ranking.size());
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("MDA report: ") + e.what());
  }
}

// --- feature-count sweep ---------------------------------------------------------------------

struct SweepOptions {
  std::vector<std::size_t> counts;  // empty: 1..f
  bool fast = true;                 // fixed hyperparameters instead of a grid search per point
  Hyper fixed{};
  GridSpec grid{};
  std::size_t folds = 5;
  double drop_tolerance = 0.05;
  std::uint64_t seed = 0;
};

struct SweepPoint {
  std::size_t m = 0;
  std::vector<std::size_t> selected;  // layout indices, MDA order
  Hyper hyper;
  Metrics metrics;
  CostReport cost;
};

struct SweepReport {
  std::vector<SweepPoint> points;
  std::size_t chosen = 0;  // index into points
  bool infeasible = false;
  bool overfitting_dip = false;
  double max_accuracy = 0.0;
  double drop_tolerance = 0.05;
  std::uint64_t seed = 0;
};

/// For each m, keeps the top-m MDA columns, tunes (or uses fixed)
/// hyperparameters, trains, evaluates and costs the model. The chosen point
/// is the smallest m within `drop_tolerance` of the best accuracy that also
/// fits the budget; without such a point the smallest m within tolerance is
/// reported and flagged infeasible.
inline SweepReport sweep_feature_count(const Dataset& train, const Dataset& test, ModelKind kind, const MdaReport& mda,
                                       const CostProfile& profile, const SweepOptions& opt) {
  require(mda.ranking.size() == train.dim(), ErrorKind::Validation, "MDA ranking does not cover every feature");
  require(train.columns == test.columns, ErrorKind::Dimension, "train and test columns differ");
  std::vector<std::size_t> counts = opt.counts;
  if (counts.empty()) {
    counts.resize(train.dim());
    std::iota(counts.begin(), counts.end(), 1);
  }
  for (std::size_t k = 0; k < counts.size(); ++k) {
    require(counts[k] >= 1 && counts[k] <= train.dim(), ErrorKind::Validation, "sweep count out of range");
    require(k == 0 || counts[k] > counts[k - 1], ErrorKind::Validation, "sweep counts must be strictly increasing");
  }
  SweepReport rep;
  rep.seed = opt.seed;
  rep.drop_tolerance = opt.drop_tolerance;
  for (auto m : counts) {
    const std::vector<std::size_t> cols(mda.ranking.begin(), mda.ranking.begin() + static_cast<std::ptrdiff_t>(m));
    const Dataset tr = train.take_columns(cols), te = test.take_columns(cols);
    SweepPoint pt;
    pt.m = m;
    pt.selected = tr.columns;
    if (opt.fast) {
      pt.hyper = opt.fixed;
      pt.hyper.kind = kind;
    } else {
      pt.hyper = grid_search(tr, kind, opt.grid, opt.folds, derive_seed(opt.seed, 2 * m)).best;
    }
    const auto model = fit_model(tr, pt.hyper, derive_seed(opt.seed, 2 * m + 1));
    pt.metrics = evaluate(model, te);
    pt.cost = cost_report(model, profile);
    rep.max_accuracy = std::max(rep.max_accuracy, pt.metrics.accuracy);
    rep.points.push_back(std::move(pt));
  }
  const double floor = rep.max_accuracy - opt.drop_tolerance;
  std::optional<std::size_t> feasible, within;
  for (std::size_t k = 0; k < rep.points.size(); ++k) {
    const auto& p = rep.points[k];
    if (p.metrics.accuracy < floor) continue;
    if (!within) within = k;
    if (!feasible && p.cost.verdict.fits()) feasible = k;
  }
  rep.infeasible = !feasible.has_value();
  rep.chosen = feasible ? *feasible : *within;
  const auto& last = rep.points.back();
  rep.overfitting_dip = last.m == train.dim() && last.metrics.accuracy < floor;
  return rep;
}

inline nlohmann::json to_json(const SweepReport& r, const FeatureLayout& layout) {
  auto pts = nlohmann::json::array();
  for (const auto& p : r.points) {
    std::vector<std::string> names;
    for (auto c : p.selected) names.push_back(layout[c].name);
    pts.push_back({{"m", p.m},
                   {"selected", p.selected},
                   {"selected_names", names},
                   {"hyper", to_json(p.hyper)},
                   {"metrics", to_json(p.metrics)},
                   {"cost", to_json(p.cost)}});
  }
  return {{"seed", r.seed},
          {"drop_tolerance", r.drop_tolerance},
          {"max_accuracy", r.max_accuracy},
          {"chosen", r.chosen},
          {"chosen_m", r.points.at(r.chosen).m},
          {"infeasible", r.infeasible},
          {"overfitting_dip", r.overfitting_dip},
          {"points", pts}};
}

/// Per-point CSV for accuracy / MAC / Flash trade-off curves.
inline std::string sweep_to_csv(const SweepReport& r) {
  std::string out = "m,accuracy,precision,recall,mac,cycles,flash_bytes,sram_bytes,fits,chosen\n";
  for (std::size_t k = 0; k < r.points.size(); ++k) {
    const auto& p = r.points[k];
    out += std::to_string(p.m) + "," + format_double(p.metrics.accuracy) + "," + format_double(p.metrics.precision) +
           "," + format_double(p.metrics.recall) + "," + format_double(p.cost.total.mac) + "," +
           format_double(p.cost.total.cycles) + "," + format_double(p.cost.total.flash_bytes) + "," +
           format_double(p.cost.total.sram_bytes) + "," + (p.cost.verdict.fits() ? "1" : "0") + "," +
           (k == r.chosen ? "1" : "0") + "\n";
  }
  return out;
}

}  // namespace nilm

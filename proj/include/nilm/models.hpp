#pragma once

// Inference engines for the four classifier families and the NLMM model file.

#include <algorithm>
#include <charconv>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "nilm/common.hpp"
#include "nilm/events.hpp"
#include "nilm/features.hpp"

namespace nilm {

// --- scaler -----------------------------------------------------------------

/// Per-feature standardization fitted on training data. An empty scaler is
/// the identity. Zero-variance columns keep scale 1 (they map to a constant
/// 0) and are listed in `constant_features`.
struct Scaler {
  std::vector<double> mean;
  std::vector<double> scale;
  std::vector<std::size_t> constant_features;

  bool is_identity() const { return mean.empty(); }

  static Scaler fit(const Matrix& x) {
    require(x.rows > 0, ErrorKind::Validation, "cannot fit a scaler on zero rows");
    Scaler s;
    s.mean.assign(x.cols, 0.0);
    s.scale.assign(x.cols, 0.0);
    for (std::size_t r = 0; r < x.rows; ++r) {
      for (std::size_t c = 0; c < x.cols; ++c) s.mean[c] += x(r, c);
    }
    for (double& m : s.mean) m /= static_cast<double>(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) {
      for (std::size_t c = 0; c < x.cols; ++c) {
        const double d = x(r, c) - s.mean[c];
        s.scale[c] += d * d;
      }
    }
    for (std::size_t c = 0; c < x.cols; ++c) {
      const double sd = std::sqrt(s.scale[c] / static_cast<double>(x.rows));
      if (sd > 1e-12 * std::max(1.0, std::abs(s.mean[c]))) {
        s.scale[c] = sd;
      } else {
        s.scale[c] = 1.0;
        s.constant_features.push_back(c);
      }
    }
    return s;
  }

  std::vector<double> apply(std::span<const double> x) const {
    if (is_identity()) return {x.begin(), x.end()};
    require(x.size() == mean.size(), ErrorKind::Dimension, "scaler dimension mismatch");
    std::vector<double> out(x.size());
    for (std::size_t c = 0; c < x.size(); ++c) out[c] = (x[c] - mean[c]) / scale[c];
    return out;
  }

  Matrix apply(const Matrix& x) const {
    Matrix out = x;
    if (is_identity()) return out;
    require(x.cols == mean.size(), ErrorKind::Dimension, "scaler dimension mismatch");
    for (std::size_t r = 0; r < x.rows; ++r) {
      for (std::size_t c = 0; c < x.cols; ++c) out(r, c) = (x(r, c) - mean[c]) / scale[c];
    }
    return out;
  }

  bool operator==(const Scaler&) const = default;
};

// --- models -----------------------------------------------------------------

enum class ModelKind : std::uint8_t { knn = 1, svm = 2, mlp = 3, rf = 4 };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::knn: return "knn";
    case ModelKind::svm: return "svm";
    case ModelKind::mlp: return "mlp";
    case ModelKind::rf: return "rf";
  }
  return "?";
}

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "knn") return ModelKind::knn;
  if (s == "svm") return ModelKind::svm;
  if (s == "mlp") return ModelKind::mlp;
  if (s == "rf") return ModelKind::rf;
  fail(ErrorKind::Parse, "unknown model kind '" + std::string(s) + "'");
}

struct KnnModel {
  std::size_t k = 1;
  std::size_t class_count = 0;
  Matrix train;  // scaled training rows, stored verbatim
  std::vector<ClassId> labels;

  std::size_t dim() const { return train.cols; }

  void validate() const {
    require(k >= 1, ErrorKind::Integrity, "kNN k must be positive");
    require(train.rows == labels.size(), ErrorKind::Integrity, "kNN label count does not match rows");
    require(train.rows >= k, ErrorKind::Integrity, "kNN needs at least k training rows");
    require(std::all_of(labels.begin(), labels.end(), [&](ClassId c) { return c < class_count; }),
            ErrorKind::Integrity, "kNN label outside the class table");
  }
};

enum class KernelType : std::uint8_t { linear = 0, rbf = 1 };

inline KernelType parse_kernel(std::string_view s) {
  if (s == "linear") return KernelType::linear;
  if (s == "rbf") return KernelType::rbf;
  fail(ErrorKind::Parse, "unknown kernel '" + std::string(s) + "'");
}

inline const char* to_string(KernelType k) { return k == KernelType::linear ? "linear" : "rbf"; }

struct Kernel {
  KernelType type = KernelType::rbf;
  double gamma = 0.1;

  double operator()(std::span<const double> a, std::span<const double> b) const {
    if (type == KernelType::linear) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
      return acc;
    }
    double d2 = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double d = a[k] - b[k];
      d2 += d * d;
    }
    return std::exp(-gamma * d2);
  }

  bool operator==(const Kernel&) const = default;
};

/// One-vs-one SVM with a shared support-vector set. Support vectors are
/// grouped by class (`sv_per_class`). For the pair (i, j), i < j, the
/// coefficient of a class-i vector lives in row j-1 of `dual_coef` and that
/// of a class-j vector in row i. A positive decision votes for i.
struct SvmModel {
  std::size_t class_count = 0;
  Kernel kernel{};
  Matrix support_vectors;            // n_sv x f
  std::vector<std::size_t> sv_per_class;
  Matrix dual_coef;                  // (C-1) x n_sv
  std::vector<double> intercepts;    // C(C-1)/2, pair order (0,1),(0,2),...,(1,2),...

  std::size_t dim() const { return support_vectors.cols; }
  std::size_t sv_count() const { return support_vectors.rows; }
  static std::size_t pair_count(std::size_t c) { return c * (c - 1) / 2; }

  void validate() const {
    require(class_count >= 1, ErrorKind::Integrity, "SVM needs at least one class");
    require(sv_per_class.size() == class_count, ErrorKind::Integrity, "SVM per-class SV counts malformed");
    require(std::accumulate(sv_per_class.begin(), sv_per_class.end(), std::size_t{0}) == sv_count(),
            ErrorKind::Integrity, "SVM per-class SV counts do not add up");
    require(dual_coef.rows == class_count - 1 && dual_coef.cols == sv_count(), ErrorKind::Integrity,
            "SVM dual-coefficient matrix must be (C-1) x n_sv");
    require(intercepts.size() == pair_count(class_count), ErrorKind::Integrity, "SVM intercept count mismatch");
    require(kernel.type == KernelType::linear || kernel.gamma > 0.0, ErrorKind::Integrity, "rbf gamma must be > 0");
  }
};

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;  // out x in, row-major
  std::vector<double> bias;     // out

  bool operator==(const DenseLayer&) const = default;
};

/// Fully connected network; rectifier on hidden layers, affine scores at the output.
struct MlpModel {
  std::vector<DenseLayer> layers;

  std::size_t dim() const { return layers.empty() ? 0 : layers.front().in; }
  std::size_t class_count() const { return layers.empty() ? 0 : layers.back().out; }

  std::vector<std::size_t> layer_sizes() const {
    std::vector<std::size_t> out;
    if (layers.empty()) return out;
    out.push_back(layers.front().in);
    for (const auto& l : layers) out.push_back(l.out);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.in * l.out + l.out;
    return n;
  }

  static MlpModel zeros(const std::vector<std::size_t>& sizes) {
    MlpModel m;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      m.layers.push_back({sizes[l], sizes[l + 1], std::vector<double>(sizes[l] * sizes[l + 1], 0.0),
                          std::vector<double>(sizes[l + 1], 0.0)});
    }
    return m;
  }

  void validate() const {
    require(!layers.empty(), ErrorKind::Integrity, "MLP has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& L = layers[l];
      require(L.weights.size() == L.in * L.out && L.bias.size() == L.out, ErrorKind::Integrity,
              "MLP layer shape inconsistent");
      if (l > 0) require(layers[l - 1].out == L.in, ErrorKind::Integrity, "MLP consecutive layer sizes disagree");
    }
  }
};

struct RfNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  ClassId leaf_class = 0;

  bool is_leaf() const { return feature < 0; }
  bool operator==(const RfNode&) const = default;
};

struct RfTree {
  std::vector<RfNode> nodes;  // nodes[0] is the root; children always follow their parent

  bool operator==(const RfTree&) const = default;
};

struct RfModel {
  std::size_t feature_count = 0;
  std::size_t class_count = 0;
  std::vector<RfTree> trees;

  std::size_t dim() const { return feature_count; }

  std::size_t node_count() const {
    std::size_t n = 0;
    for (const auto& t : trees) n += t.nodes.size();
    return n;
  }

  void validate() const {
    require(class_count >= 1, ErrorKind::Integrity, "RF needs at least one class");
    for (const auto& t : trees) {
      require(!t.nodes.empty(), ErrorKind::Integrity, "RF tree without nodes");
      for (std::size_t k = 0; k < t.nodes.size(); ++k) {
        const auto& n = t.nodes[k];
        if (n.is_leaf()) {
          require(n.leaf_class < class_count, ErrorKind::Integrity, "RF leaf class outside the class table");
        } else {
          require(static_cast<std::size_t>(n.feature) < feature_count, ErrorKind::Integrity,
                  "RF split feature out of range");
          require(n.left > k && n.left < t.nodes.size() && n.right > k && n.right < t.nodes.size(),
                  ErrorKind::Integrity, "RF child index invalid");
        }
      }
    }
  }
};

/// Length of the longest root-to-leaf path (edges).
inline std::size_t tree_depth(const RfTree& tree) {
  std::vector<std::size_t> depth(tree.nodes.size(), 0);
  std::size_t worst = 0;
  for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
    const auto& n = tree.nodes[k];
    worst = std::max(worst, depth[k]);
    if (!n.is_leaf()) {
      depth[n.left] = depth[k] + 1;
      depth[n.right] = depth[k] + 1;
    }
  }
  return worst;
}

using Model = std::variant<KnnModel, SvmModel, MlpModel, RfModel>;

inline ModelKind kind_of(const Model& m) {
  switch (m.index()) {
    case 0: return ModelKind::knn;
    case 1: return ModelKind::svm;
    case 2: return ModelKind::mlp;
    default: return ModelKind::rf;
  }
}

inline std::size_t input_dim(const Model& m) {
  return std::visit([](const auto& x) { return x.dim(); }, m);
}

inline std::size_t class_count(const Model& m) {
  return std::visit(
      [](const auto& x) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(x)>, MlpModel>) {
          return x.class_count();
        } else {
          return x.class_count;
        }
      },
      m);
}

inline void validate(const Model& m) {
  std::visit([](const auto& x) { x.validate(); }, m);
}

// --- prediction ---------------------------------------------------------------

namespace detail {

inline void check_dim(std::size_t expected, std::size_t got) {
  require(expected == got, ErrorKind::Dimension,
          "input has " + std::to_string(got) + " features, model expects " + std::to_string(expected));
}

}  // namespace detail

/// Majority of the k nearest rows (squared Euclidean). Vote ties go to the
/// smaller summed distance, then the lower class id; distance ties to the
/// lower training row.
inline ClassId predict_knn(const KnnModel& m, std::span<const double> x) {
  detail::check_dim(m.dim(), x.size());
  const std::size_t n = m.train.rows;
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = m.train.row(r);
    double d = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) {
      const double t = row[c] - x[c];
      d += t * t;
    }
    dist[r] = {d, r};
  }
  const std::size_t k = std::min(m.k, n);
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  std::vector<std::size_t> votes(m.class_count, 0);
  std::vector<double> summed(m.class_count, 0.0);
  for (std::size_t q = 0; q < k; ++q) {
    const ClassId c = m.labels[dist[q].second];
    ++votes[c];
    summed[c] += dist[q].first;
  }
  ClassId best = 0;
  for (ClassId c = 1; c < m.class_count; ++c) {
    if (votes[c] > votes[best] || (votes[c] == votes[best] && summed[c] < summed[best])) best = c;
  }
  return best;
}

/// Decision value of every class pair, in pair order.
inline std::vector<double> svm_decision_values(const SvmModel& m, std::span<const double> x) {
  detail::check_dim(m.dim(), x.size());
  const std::size_t n_sv = m.sv_count();
  std::vector<double> kv(n_sv);
  for (std::size_t s = 0; s < n_sv; ++s) kv[s] = m.kernel(m.support_vectors.row(s), x);
  std::vector<std::size_t> start(m.class_count, 0);
  for (std::size_t c = 1; c < m.class_count; ++c) start[c] = start[c - 1] + m.sv_per_class[c - 1];

  std::vector<double> dec;
  dec.reserve(SvmModel::pair_count(m.class_count));
  std::size_t p = 0;
  for (std::size_t i = 0; i < m.class_count; ++i) {
    for (std::size_t j = i + 1; j < m.class_count; ++j, ++p) {
      double sum = 0.0;
      for (std::size_t s = 0; s < m.sv_per_class[i]; ++s) sum += m.dual_coef(j - 1, start[i] + s) * kv[start[i] + s];
      for (std::size_t s = 0; s < m.sv_per_class[j]; ++s) sum += m.dual_coef(i, start[j] + s) * kv[start[j] + s];
      dec.push_back(sum + m.intercepts[p]);
    }
  }
  return dec;
}

/// One-vs-one voting; vote ties go to the larger summed decision value in
/// the class's favour, then the lower class id.
inline ClassId predict_svm(const SvmModel& m, std::span<const double> x) {
  const auto dec = svm_decision_values(m, x);
  std::vector<std::size_t> votes(m.class_count, 0);
  std::vector<double> score(m.class_count, 0.0);
  std::size_t p = 0;
  for (std::size_t i = 0; i < m.class_count; ++i) {
    for (std::size_t j = i + 1; j < m.class_count; ++j, ++p) {
      ++votes[dec[p] > 0.0 ? i : j];
      score[i] += dec[p];
      score[j] -= dec[p];
    }
  }
  ClassId best = 0;
  for (ClassId c = 1; c < m.class_count; ++c) {
    if (votes[c] > votes[best] || (votes[c] == votes[best] && score[c] > score[best])) best = c;
  }
  return best;
}

inline std::vector<double> mlp_scores(const MlpModel& m, std::span<const double> x) {
  detail::check_dim(m.dim(), x.size());
  std::vector<double> a(x.begin(), x.end());
  std::vector<double> z;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& L = m.layers[l];
    z.assign(L.out, 0.0);
    for (std::size_t o = 0; o < L.out; ++o) {
      const double* w = L.weights.data() + o * L.in;
      double acc = L.bias[o];
      for (std::size_t i = 0; i < L.in; ++i) acc += w[i] * a[i];
      z[o] = (l + 1 < m.layers.size()) ? std::max(0.0, acc) : acc;
    }
    a.swap(z);
  }
  return a;
}

inline ClassId argmax_lowest(std::span<const double> scores) {
  ClassId best = 0;
  for (ClassId c = 1; c < scores.size(); ++c) {
    if (scores[c] > scores[best]) best = c;
  }
  return best;
}

inline ClassId predict_mlp(const MlpModel& m, std::span<const double> x) { return argmax_lowest(mlp_scores(m, x)); }

inline ClassId predict_tree(const RfTree& tree, std::span<const double> x) {
  std::size_t k = 0;
  while (true) {
    require(k < tree.nodes.size(), ErrorKind::Integrity, "RF node index out of range");
    const auto& n = tree.nodes[k];
    if (n.is_leaf()) return n.leaf_class;
    require(static_cast<std::size_t>(n.feature) < x.size(), ErrorKind::Integrity, "RF split feature out of range");
    const std::size_t next = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    require(next > k, ErrorKind::Integrity, "RF child index does not advance");
    k = next;
  }
}

/// Majority vote over trees; ties go to the lowest class id.
inline ClassId predict_rf(const RfModel& m, std::span<const double> x) {
  detail::check_dim(m.dim(), x.size());
  std::vector<std::size_t> votes(m.class_count, 0);
  for (const auto& t : m.trees) {
    const ClassId c = predict_tree(t, x);
    require(c < m.class_count, ErrorKind::Integrity, "RF leaf class outside the class table");
    ++votes[c];
  }
  ClassId best = 0;
  for (ClassId c = 1; c < m.class_count; ++c) {
    if (votes[c] > votes[best]) best = c;
  }
  return best;
}

inline ClassId predict(const Model& m, std::span<const double> x) {
  switch (m.index()) {
    case 0: return predict_knn(std::get<KnnModel>(m), x);
    case 1: return predict_svm(std::get<SvmModel>(m), x);
    case 2: return predict_mlp(std::get<MlpModel>(m), x);
    default: return predict_rf(std::get<RfModel>(m), x);
  }
}

// --- model file -----------------------------------------------------------------

/// What the model consumes: a single window's features or the differential
/// feature around an event.
enum class FeatureSource : std::uint8_t { window = 0, delta = 1 };

inline const char* to_string(FeatureSource s) { return s == FeatureSource::window ? "window" : "delta"; }

struct ModelFile {
  Model model;
  HarmonicMode layout_mode = HarmonicMode::complex_pairs;
  FeatureSource source = FeatureSource::window;
  DeltaSign delta_sign = DeltaSign::pre_minus_post;
  std::vector<std::size_t> selected;  // indices into the full layout
  Scaler scaler;                      // identity for RF
  std::vector<std::string> class_names;
  std::string notes;

  ModelKind kind() const { return kind_of(model); }
  FeatureLayout layout() const { return FeatureLayout(layout_mode); }

  void validate() const {
    nilm::validate(model);
    const FeatureLayout lay = layout();
    validate_indices(selected, lay.size());
    require(selected.size() == input_dim(model), ErrorKind::Integrity, "selected feature count differs from model input");
    require(scaler.is_identity() || scaler.mean.size() == selected.size(), ErrorKind::Integrity,
            "scaler dimension differs from model input");
    require(class_names.size() == class_count(model), ErrorKind::Integrity, "class table size mismatch");
  }

  /// Full layout vector in, class id out: select, scale, predict.
  ClassId classify(std::span<const double> full_features) const {
    const auto picked = select_features(full_features, selected);
    return predict(model, scaler.apply(picked));
  }
};

inline constexpr std::uint16_t kModelFileVersion = 1;

namespace detail {

inline void put_matrix(ByteWriter& w, const Matrix& m) {
  w.u32(static_cast<std::uint32_t>(m.rows));
  w.u32(static_cast<std::uint32_t>(m.cols));
  for (double x : m.data) w.f64(x);
}

inline Matrix get_matrix(ByteReader& r) {
  const std::size_t rows = r.u32();
  const std::size_t cols = r.u32();
  require(rows * cols * 8 <= r.remaining(), ErrorKind::Truncation, "matrix payload truncated");
  Matrix m(rows, cols);
  for (double& x : m.data) x = r.f64();
  return m;
}

inline void put_reals(ByteWriter& w, const std::vector<double>& v) {
  w.u32(static_cast<std::uint32_t>(v.size()));
  for (double x : v) w.f64(x);
}

inline std::vector<double> get_reals(ByteReader& r) {
  const std::size_t n = r.u32();
  require(n * 8 <= r.remaining(), ErrorKind::Truncation, "real array truncated");
  std::vector<double> v(n);
  for (double& x : v) x = r.f64();
  return v;
}

inline void put_section(ByteWriter& w, const ByteWriter& section) {
  w.u32(static_cast<std::uint32_t>(section.bytes().size()));
  w.append(section.bytes());
}

inline ByteReader get_section(ByteReader& r) {
  const std::size_t n = r.u32();
  return ByteReader(r.take(n));
}

inline ByteWriter encode_payload(const Model& model) {
  ByteWriter w;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, KnnModel>) {
          w.u32(static_cast<std::uint32_t>(m.k));
          w.u32(static_cast<std::uint32_t>(m.class_count));
          put_matrix(w, m.train);
          w.u32(static_cast<std::uint32_t>(m.labels.size()));
          for (auto l : m.labels) w.u32(l);
        } else if constexpr (std::is_same_v<T, SvmModel>) {
          w.u32(static_cast<std::uint32_t>(m.class_count));
          w.u8(static_cast<std::uint8_t>(m.kernel.type));
          w.f64(m.kernel.gamma);
          put_matrix(w, m.support_vectors);
          w.u32(static_cast<std::uint32_t>(m.sv_per_class.size()));
          for (auto n : m.sv_per_class) w.u32(static_cast<std::uint32_t>(n));
          put_matrix(w, m.dual_coef);
          put_reals(w, m.intercepts);
        } else if constexpr (std::is_same_v<T, MlpModel>) {
          w.u32(static_cast<std::uint32_t>(m.layers.size()));
          for (const auto& L : m.layers) {
            w.u32(static_cast<std::uint32_t>(L.in));
            w.u32(static_cast<std::uint32_t>(L.out));
            put_reals(w, L.weights);
            put_reals(w, L.bias);
          }
        } else {
          w.u32(static_cast<std::uint32_t>(m.feature_count));
          w.u32(static_cast<std::uint32_t>(m.class_count));
          w.u32(static_cast<std::uint32_t>(m.trees.size()));
          for (const auto& t : m.trees) {
            w.u32(static_cast<std::uint32_t>(t.nodes.size()));
            for (const auto& n : t.nodes) {
              w.u32(static_cast<std::uint32_t>(n.feature));
              w.f64(n.threshold);
              w.u32(n.left);
              w.u32(n.right);
              w.u32(n.leaf_class);
            }
          }
        }
      },
      model);
  return w;
}

inline Model decode_payload(ModelKind kind, ByteReader& r) {
  switch (kind) {
    case ModelKind::knn: {
      KnnModel m;
      m.k = r.u32();
      m.class_count = r.u32();
      m.train = get_matrix(r);
      const std::size_t n = r.u32();
      require(n * 4 <= r.remaining(), ErrorKind::Truncation, "label array truncated");
      m.labels.resize(n);
      for (auto& l : m.labels) l = r.u32();
      return m;
    }
    case ModelKind::svm: {
      SvmModel m;
      m.class_count = r.u32();
      const auto kt = r.u8();
      require(kt <= 1, ErrorKind::Integrity, "unknown kernel type");
      m.kernel.type = static_cast<KernelType>(kt);
      m.kernel.gamma = r.f64();
      m.support_vectors = get_matrix(r);
      const std::size_t n = r.u32();
      require(n * 4 <= r.remaining(), ErrorKind::Truncation, "SV count array truncated");
      m.sv_per_class.resize(n);
      for (auto& c : m.sv_per_class) c = r.u32();
      m.dual_coef = get_matrix(r);
      m.intercepts = get_reals(r);
      return m;
    }
    case ModelKind::mlp: {
      MlpModel m;
      const std::size_t layers = r.u32();
      require(layers * 16 <= r.remaining(), ErrorKind::Truncation, "layer table truncated");
      for (std::size_t l = 0; l < layers; ++l) {
        DenseLayer L;
        L.in = r.u32();
        L.out = r.u32();
        L.weights = get_reals(r);
        L.bias = get_reals(r);
        m.layers.push_back(std::move(L));
      }
      return m;
    }
    case ModelKind::rf: {
      RfModel m;
      m.feature_count = r.u32();
      m.class_count = r.u32();
      const std::size_t trees = r.u32();
      require(trees * 4 <= r.remaining(), ErrorKind::Truncation, "tree table truncated");
      m.trees.resize(trees);
      for (auto& t : m.trees) {
        const std::size_t nodes = r.u32();
        require(nodes * 24 <= r.remaining(), ErrorKind::Truncation, "node table truncated");
        t.nodes.resize(nodes);
        for (auto& n : t.nodes) {
          n.feature = static_cast<std::int32_t>(r.u32());
          n.threshold = r.f64();
          n.left = r.u32();
          n.right = r.u32();
          n.leaf_class = r.u32();
        }
      }
      return m;
    }
  }
  fail(ErrorKind::Format, "unknown model kind");
}

}  // namespace detail

/// NLMM binary: magic, u16 version, u8 kind, then three length-prefixed
/// sections (metadata, scaler, payload). All integers little-endian, reals
/// IEEE-754 binary64.
inline std::vector<std::uint8_t> serialize(const ModelFile& file) {
  file.validate();
  ByteWriter w;
  w.raw("NLMM");
  w.u16(kModelFileVersion);
  w.u8(static_cast<std::uint8_t>(file.kind()));

  ByteWriter meta;
  meta.u8(static_cast<std::uint8_t>(file.layout_mode));
  meta.u8(static_cast<std::uint8_t>(file.source));
  meta.u8(static_cast<std::uint8_t>(file.delta_sign));
  meta.u32(static_cast<std::uint32_t>(file.selected.size()));
  for (auto idx : file.selected) meta.u32(static_cast<std::uint32_t>(idx));
  meta.u32(static_cast<std::uint32_t>(file.class_names.size()));
  for (const auto& name : file.class_names) meta.str(name);
  meta.str(file.notes);
  detail::put_section(w, meta);

  ByteWriter sc;
  detail::put_reals(sc, file.scaler.mean);
  detail::put_reals(sc, file.scaler.scale);
  sc.u32(static_cast<std::uint32_t>(file.scaler.constant_features.size()));
  for (auto c : file.scaler.constant_features) sc.u32(static_cast<std::uint32_t>(c));
  detail::put_section(w, sc);

  detail::put_section(w, detail::encode_payload(file.model));
  return w.take();
}

inline ModelFile deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  require(bytes.size() >= 4, ErrorKind::Truncation, "model file shorter than its magic");
  require(r.raw(4) == "NLMM", ErrorKind::Format, "missing NLMM magic");
  const auto version = r.u16();
  require(version == kModelFileVersion, ErrorKind::Version,
          "unsupported model file version " + std::to_string(version));
  const auto kind_byte = r.u8();
  require(kind_byte >= 1 && kind_byte <= 4, ErrorKind::Format, "unknown model kind byte");
  const auto kind = static_cast<ModelKind>(kind_byte);

  ModelFile file;
  {
    auto meta = detail::get_section(r);
    const auto mode = meta.u8();
    const auto source = meta.u8();
    const auto sign = meta.u8();
    require(mode <= 1 && source <= 1 && sign <= 1, ErrorKind::Integrity, "metadata enum out of range");
    file.layout_mode = static_cast<HarmonicMode>(mode);
    file.source = static_cast<FeatureSource>(source);
    file.delta_sign = static_cast<DeltaSign>(sign);
    const std::size_t n_sel = meta.u32();
    require(n_sel * 4 <= meta.remaining(), ErrorKind::Truncation, "selected index list truncated");
    for (std::size_t k = 0; k < n_sel; ++k) file.selected.push_back(meta.u32());
    const std::size_t n_cls = meta.u32();
    for (std::size_t k = 0; k < n_cls; ++k) file.class_names.push_back(meta.str());
    file.notes = meta.str();
    require(meta.done(), ErrorKind::Format, "trailing bytes in metadata section");
  }
  {
    auto sc = detail::get_section(r);
    file.scaler.mean = detail::get_reals(sc);
    file.scaler.scale = detail::get_reals(sc);
    const std::size_t n_const = sc.u32();
    for (std::size_t k = 0; k < n_const; ++k) file.scaler.constant_features.push_back(sc.u32());
    require(sc.done(), ErrorKind::Format, "trailing bytes in scaler section");
    require(file.scaler.mean.size() == file.scaler.scale.size(), ErrorKind::Integrity, "scaler arrays differ in size");
  }
  {
    auto payload = detail::get_section(r);
    file.model = detail::decode_payload(kind, payload);
    require(payload.done(), ErrorKind::Format, "trailing bytes in payload section");
  }
  require(r.done(), ErrorKind::Format, "trailing bytes after model file");
  try {
    file.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Integrity, e.what());
  }
  return file;
}

// --- JSON inspection export --------------------------------------------------------
// Reals are written as C99 hexadecimal floating literals ("0x1.8p+1"), which
// round-trip exactly.

inline std::string hex_real(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  char* p = buf;
  if (std::signbit(x)) {
    *p++ = '-';
    x = -x;
  }
  *p++ = '0';
  *p++ = 'x';
  auto res = std::to_chars(p, buf + sizeof(buf), x, std::chars_format::hex);
  return std::string(buf, res.ptr);
}

inline double parse_hex_real(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::string_view v = s;
  bool neg = false;
  if (!v.empty() && v.front() == '-') {
    neg = true;
    v.remove_prefix(1);
  }
  require(v.size() > 2 && v[0] == '0' && (v[1] == 'x' || v[1] == 'X'), ErrorKind::Parse, "bad hex real '" + s + "'");
  v.remove_prefix(2);
  double x = 0.0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), x, std::chars_format::hex);
  require(res.ec == std::errc() && res.ptr == v.data() + v.size(), ErrorKind::Parse, "bad hex real '" + s + "'");
  return neg ? -x : x;
}

namespace detail {

inline nlohmann::json reals_json(const std::vector<double>& v) {
  auto a = nlohmann::json::array();
  for (double x : v) a.push_back(hex_real(x));
  return a;
}

inline std::vector<double> reals_from(const nlohmann::json& a) {
  std::vector<double> v;
  for (const auto& x : a) v.push_back(parse_hex_real(x.get<std::string>()));
  return v;
}

inline nlohmann::json matrix_json(const Matrix& m) {
  return {{"rows", m.rows}, {"cols", m.cols}, {"data", reals_json(m.data)}};
}

inline Matrix matrix_from(const nlohmann::json& j) {
  Matrix m;
  m.rows = j.at("rows").get<std::size_t>();
  m.cols = j.at("cols").get<std::size_t>();
  m.data = reals_from(j.at("data"));
  require(m.data.size() == m.rows * m.cols, ErrorKind::Integrity, "matrix data size mismatch");
  return m;
}

}  // namespace detail

inline nlohmann::json to_json(const ModelFile& file) {
  using nlohmann::json;
  json j;
  j["format"] = "NLMM";
  j["version"] = kModelFileVersion;
  j["kind"] = to_string(file.kind());
  j["layout"] = file.layout_mode == HarmonicMode::complex_pairs ? "complex_pairs" : "magnitude";
  j["source"] = to_string(file.source);
  j["delta_sign"] = file.delta_sign == DeltaSign::pre_minus_post ? "pre_minus_post" : "post_minus_pre";
  j["selected"] = file.selected;
  auto names = json::array();
  const auto lay = file.layout();
  for (auto idx : file.selected) names.push_back(lay[idx].name);
  j["selected_names"] = names;
  j["classes"] = file.class_names;
  j["notes"] = file.notes;
  j["scaler"] = {{"mean", detail::reals_json(file.scaler.mean)},
                 {"scale", detail::reals_json(file.scaler.scale)},
                 {"constant_features", file.scaler.constant_features}};
  json p;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, KnnModel>) {
          p = {{"k", m.k}, {"class_count", m.class_count}, {"train", detail::matrix_json(m.train)}, {"labels", m.labels}};
        } else if constexpr (std::is_same_v<T, SvmModel>) {
          p = {{"class_count", m.class_count},
               {"kernel", to_string(m.kernel.type)},
               {"gamma", hex_real(m.kernel.gamma)},
               {"support_vectors", detail::matrix_json(m.support_vectors)},
               {"sv_per_class", m.sv_per_class},
               {"dual_coef", detail::matrix_json(m.dual_coef)},
               {"intercepts", detail::reals_json(m.intercepts)}};
        } else if constexpr (std::is_same_v<T, MlpModel>) {
          auto layers = json::array();
          for (const auto& L : m.layers) {
            layers.push_back({{"in", L.in},
                              {"out", L.out},
                              {"weights", detail::reals_json(L.weights)},
                              {"bias", detail::reals_json(L.bias)}});
          }
          p = {{"layers", layers}};
        } else {
          auto trees = json::array();
          for (const auto& t : m.trees) {
            auto nodes = json::array();
            for (const auto& n : t.nodes) {
              nodes.push_back({n.feature, hex_real(n.threshold), n.left, n.right, n.leaf_class});
            }
            trees.push_back(nodes);
          }
          p = {{"feature_count", m.feature_count}, {"class_count", m.class_count}, {"trees", trees}};
        }
      },
      file.model);
  j["payload"] = p;
  return j;
}

inline ModelFile from_json(const nlohmann::json& j) {
  require(j.at("format") == "NLMM", ErrorKind::Format, "not an NLMM JSON export");
  require(j.at("version").get<int>() == kModelFileVersion, ErrorKind::Version, "unsupported model JSON version");
  ModelFile file;
  file.layout_mode = j.at("layout") == "magnitude" ? HarmonicMode::magnitude : HarmonicMode::complex_pairs;
  file.source = j.at("source") == "delta" ? FeatureSource::delta : FeatureSource::window;
  file.delta_sign = j.at("delta_sign") == "post_minus_pre" ? DeltaSign::post_minus_pre : DeltaSign::pre_minus_post;
  file.selected = j.at("selected").get<std::vector<std::size_t>>();
  file.class_names = j.at("classes").get<std::vector<std::string>>();
  file.notes = j.at("notes").get<std::string>();
  file.scaler.mean = detail::reals_from(j.at("scaler").at("mean"));
  file.scaler.scale = detail::reals_from(j.at("scaler").at("scale"));
  file.scaler.constant_features = j.at("scaler").at("constant_features").get<std::vector<std::size_t>>();
  const auto& p = j.at("payload");
  switch (parse_model_kind(j.at("kind").get<std::string>())) {
    case ModelKind::knn: {
      KnnModel m;
      m.k = p.at("k");
      m.class_count = p.at("class_count");
      m.train = detail::matrix_from(p.at("train"));
      m.labels = p.at("labels").get<std::vector<ClassId>>();
      file.model = std::move(m);
      break;
    }
    case ModelKind::svm: {
      SvmModel m;
      m.class_count = p.at("class_count");
      m.kernel.type = parse_kernel(p.at("kernel").get<std::string>());
      m.kernel.gamma = parse_hex_real(p.at("gamma"));
      m.support_vectors = detail::matrix_from(p.at("support_vectors"));
      m.sv_per_class = p.at("sv_per_class").get<std::vector<std::size_t>>();
      m.dual_coef = detail::matrix_from(p.at("dual_coef"));
      m.intercepts = detail::reals_from(p.at("intercepts"));
      file.model = std::move(m);
      break;
    }
    case ModelKind::mlp: {
      MlpModel m;
      for (const auto& L : p.at("layers")) {
        m.layers.push_back({L.at("in"), L.at("out"), detail::reals_from(L.at("weights")), detail::reals_from(L.at("bias"))});
      }
      file.model = std::move(m);
      break;
    }
    case ModelKind::rf: {
      RfModel m;
      m.feature_count = p.at("feature_count");
      m.class_count = p.at("class_count");
      for (const auto& t : p.at("trees")) {
        RfTree tree;
        for (const auto& n : t) {
          tree.nodes.push_back({n.at(0).get<std::int32_t>(), parse_hex_real(n.at(1)), n.at(2).get<std::uint32_t>(),
                                n.at(3).get<std::uint32_t>(), n.at(4).get<ClassId>()});
        }
        m.trees.push_back(std::move(tree));
      }
      file.model = std::move(m);
      break;
    }
  }
  file.validate();
  return file;
}

}  // namespace nilm

#include "helpers.hpp"
#include "nilm/cost.hpp"
#include "nilm/signal_io.hpp"

using namespace nilm;

namespace {

const CostProfile& shipped() { return cortex_m4_paper_profile(); }

RfModel complete_forest(std::size_t trees, std::size_t depth) {
  RfModel m;
  m.feature_count = 5;
  m.class_count = 2;
  for (std::size_t t = 0; t < trees; ++t) {
    RfTree tree;
    const std::size_t n = (std::size_t{1} << (depth + 1)) - 1;
    tree.nodes.resize(n);
    for (std::size_t k = 0; 2 * k + 2 < n; ++k) {
      tree.nodes[k].feature = 0;
      tree.nodes[k].left = static_cast<std::uint32_t>(2 * k + 1);
      tree.nodes[k].right = static_cast<std::uint32_t>(2 * k + 2);
    }
    m.trees.push_back(tree);
  }
  return m;
}

SvmModel svm_shape(std::size_t f, std::size_t n_sv, std::size_t classes) {
  SvmModel m;
  m.class_count = classes;
  m.support_vectors = Matrix(n_sv, f);
  m.sv_per_class.assign(classes, 0);
  m.sv_per_class[0] = n_sv;
  m.dual_coef = Matrix(classes - 1, n_sv);
  m.intercepts.assign(SvmModel::pair_count(classes), 0.0);
  return m;
}

}  // namespace

TEST(Profile, ExtractionTableVerbatim) {
  const auto& full = shipped().row(rows::full_vector);
  EXPECT_EQ(full.cycles, 105e3);
  EXPECT_EQ(full.flash_bytes, 14.1e3);
  EXPECT_EQ(full.sram_bytes, 24e3);
  EXPECT_EQ(full.mac, 18.24e3);
  EXPECT_EQ(shipped().row(rows::raw_conv_i).cycles, 9e3);
  EXPECT_EQ(shipped().row(rows::fft_unordered).cycles, 62e3);
  EXPECT_EQ(shipped().row(rows::fft).flash_bytes, 17.6e3);
  EXPECT_TRUE(shipped().consistency_issues().empty());
  EXPECT_NO_THROW(shipped().validate());
}

TEST(Profile, ConsistencyFindingsReported) {
  auto p = shipped();
  p.extraction[rows::full_vector].cycles = 100e3;
  EXPECT_EQ(p.consistency_issues().size(), 1u);
}

TEST(Profile, JsonRoundTripAndShippedFile) {
  const auto back = profile_from_json(nlohmann::json::parse(to_json(shipped()).dump()));
  EXPECT_EQ(back, shipped());
  const auto file =
      profile_from_json(nlohmann::json::parse(read_file(std::string(NILM_SOURCE_DIR) + "/profiles/cortex-m4-paper.json")));
  EXPECT_EQ(file, shipped());
}

TEST(Profile, MissingRowIsValidationError) {
  auto p = shipped();
  p.extraction.erase(rows::fft);
  EXPECT_NILM_ERROR(p.validate(), ErrorKind::Validation);
}

TEST(Extraction, SubsetsComposeFromRows) {
  const FeatureLayout lay;
  auto cost = [&](std::vector<std::size_t> idx) { return extraction_cost(lay, idx, shipped()); };
  auto r = [&](const char* k) { return shipped().row(k); };
  EXPECT_EQ(cost({}), CostFigures{});
  EXPECT_EQ(cost({3, 4}), r(rows::raw_conv_i) + r(rows::fft_unordered));
  EXPECT_EQ(cost({0}), r(rows::raw_conv_vi) + r(rows::p));
  EXPECT_EQ(cost({2}), r(rows::raw_conv_vi) + r(rows::q_without_p_s));
  EXPECT_EQ(cost({0, 2}), r(rows::raw_conv_vi) + r(rows::p) + r(rows::q_without_s));
  EXPECT_EQ(cost({1, 2}), r(rows::raw_conv_vi) + r(rows::s_abs) + r(rows::q_without_p));
  EXPECT_EQ(cost({0, 1, 2}), r(rows::raw_conv_vi) + r(rows::p) + r(rows::s_abs) + r(rows::q_with_p_s));
  EXPECT_EQ(cost(all_indices(103)), r(rows::full_vector));
  // every group present: the measured row, not the 105.08 K sum of parts
  EXPECT_EQ(cost({0, 1, 2, 50}), r(rows::full_vector));
  EXPECT_EQ(cost({0, 1, 50}).cycles, 15e3 + 17e3 + 11e3 + 62e3);
}

TEST(Calibration, ReferencePointsReproduced) {
  const CalibrationReference ref;
  const auto& p = shipped();
  for (const auto& pt : ref.mlp) {
    auto m = MlpModel::zeros(pt.layers);
    EXPECT_NEAR(model_cycles(m, p), pt.cycles, 1e-6 * pt.cycles);
  }
  for (const auto& pt : ref.rf) {
    const auto m = complete_forest(pt.trees, pt.depth);
    EXPECT_NEAR(model_cycles(m, p), pt.cycles, 1e-6 * pt.cycles);
  }
  const auto rf100 = complete_forest(100, 5);
  EXPECT_NEAR(model_flash(rf100, p), 126.2e3, 1e-6 * 126.2e3);
  // No non-negative per-MAC/per-SV line passes through both SVM points. The
  // slope is the least-squares one: residuals -1.0% (103 features) and
  // +6.9% (36 features), and nudging it either way only adds error.
  std::vector<SvmModel> svms;
  for (const auto& pt : ref.svm) svms.push_back(svm_shape(pt.features, pt.support_vectors, pt.classes));
  auto sse = [&](const CostProfile& q) {
    double e = 0;
    for (std::size_t k = 0; k < svms.size(); ++k) e += std::pow(model_cycles(svms[k], q) - ref.svm[k].cycles, 2);
    return e;
  };
  for (double nudge : {-1e-3, 1e-3}) {
    auto q = p;
    q.classification[ModelKind::svm].cycles_per_mac += nudge;
    EXPECT_GT(sse(q), sse(p));
  }
  EXPECT_NEAR(model_cycles(svms[0], p), ref.svm[0].cycles, 0.02 * ref.svm[0].cycles);
  EXPECT_NEAR(model_cycles(svms[1], p), ref.svm[1].cycles, 0.08 * ref.svm[1].cycles);
}

TEST(Classification, KnownShapes) {
  const auto& p = shipped();
  const auto mlp = MlpModel::zeros({100, 800, 100, 5});
  EXPECT_EQ(model_flash(mlp, p), 645620.0);
  EXPECT_EQ(model_macs(mlp), 160500.0);
  const auto svm = svm_shape(103, 1950, 10);
  EXPECT_EQ(model_macs(svm), 1950.0 * 103 + 1950.0 * 9);
  EXPECT_EQ(model_flash(svm, p), (1950.0 * 103 + 1950.0 * 9 + 45) * 4);
  KnnModel knn;
  knn.k = 3;
  knn.class_count = 2;
  knn.train = Matrix(10, 4);
  knn.labels.assign(10, 0);
  EXPECT_EQ(model_macs(knn), 40.0);
  EXPECT_EQ(model_flash(knn, p), 160.0);
  EXPECT_EQ(model_sram(knn, p), 4 * 4 + 6 * 4.0);
  const auto& kc = p.coefficients(ModelKind::knn);
  EXPECT_DOUBLE_EQ(model_cycles(knn, p), 40 * kc.cycles_per_mac + 10 * kc.cycles_per_unit + kc.fixed_overhead);
}

TEST(Budget, EdgesAndHeadroom) {
  const auto& p = shipped();
  CostFigures c{96e3, 512e3, 0, 8.4e6};
  EXPECT_TRUE(budget_check(c, p).fits());
  c.cycles += 1;
  const auto v = budget_check(c, p);
  EXPECT_FALSE(v.fits_cycles);
  EXPECT_TRUE(v.fits_flash);
  EXPECT_EQ(v.margin_cycles, -1.0);
  EXPECT_EQ(classification_headroom_cycles(p.row(rows::full_vector), p), 8.295e6);
  const auto framework = budget_check(CostFigures{0, 659.72e3, 0, 0}, p);
  EXPECT_FALSE(framework.fits_flash);
  EXPECT_NEAR(framework.margin_flash_bytes, -147.72e3, 1e-6);
  EXPECT_TRUE(budget_check(CostFigures{}, p).fits());
}

TEST(Report, TableAndJson) {
  const auto rep = make_cost_report(shipped().row(rows::full_vector), CostFigures{1, 2, 3, 4}, shipped());
  EXPECT_EQ(rep.total.cycles, 105004.0);
  const auto j = to_json(rep);
  EXPECT_EQ(j["total"]["cycles"], 105004.0);
  EXPECT_EQ(j["verdict"]["fits_cycles"], true);
  EXPECT_NE(cost_table(rep).find("extraction"), std::string::npos);
}

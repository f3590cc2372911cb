#include "helpers.hpp"
#include "nilm/models.hpp"
#include "oracles.hpp"

using namespace nilm;

namespace {

ModelFile wrap(Model m, std::size_t dim, std::size_t classes, bool scaled, Rng& rng) {
  ModelFile f;
  f.model = std::move(m);
  for (std::size_t k = 0; k < dim; ++k) f.selected.push_back(3 + 2 * k);
  for (std::size_t c = 0; c < classes; ++c) f.class_names.push_back("c" + std::to_string(c));
  if (scaled) {
    for (std::size_t k = 0; k < dim; ++k) {
      f.scaler.mean.push_back(rng.uniform(-1, 1));
      f.scaler.scale.push_back(rng.uniform(0.5, 2));
    }
  }
  f.notes = "unit";
  return f;
}

std::vector<ModelFile> sample_files(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ModelFile> out;
  out.push_back(wrap(oracle::random_knn(rng, 4, 3), 4, 3, true, rng));
  out.push_back(wrap(oracle::random_svm(rng, 5, 4), 5, 4, true, rng));
  out.push_back(wrap(oracle::random_mlp(rng, {6, 7, 3}), 6, 3, true, rng));
  out.push_back(wrap(oracle::random_rf(rng, 5, 3), 5, 3, false, rng));
  out[3].source = FeatureSource::delta;
  out[3].delta_sign = DeltaSign::post_minus_pre;
  out[3].layout_mode = HarmonicMode::magnitude;
  return out;
}

}  // namespace

TEST(Predict, MatchesOracles) {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t dim = 1 + rng.below(5), classes = 2 + rng.below(4);
    const auto knn = oracle::random_knn(rng, dim, classes);
    const auto svm = oracle::random_svm(rng, dim, classes);
    const auto mlp = oracle::random_mlp(rng, {dim, 1 + rng.below(6), classes});
    const auto rf = oracle::random_rf(rng, dim, classes);
    const auto xi = oracle::random_input(rng, dim, true);
    const auto xr = oracle::random_input(rng, dim, false);
    ASSERT_EQ(predict_knn(knn, xi), oracle::knn(knn, xi)) << trial;
    ASSERT_EQ(predict_svm(svm, xr), oracle::svm(svm, xr)) << trial;
    ASSERT_EQ(predict_mlp(mlp, xr), oracle::mlp(mlp, xr)) << trial;
    ASSERT_EQ(predict_rf(rf, xr), oracle::rf(rf, xr)) << trial;
  }
}

TEST(Predict, KnnTieBreaks) {
  KnnModel m;
  m.k = 2;
  m.class_count = 3;
  for (double v : {1.0, -1.0, 5.0}) m.train.append_row(std::vector<double>{v});
  m.labels = {2, 1, 0};
  // one vote each at equal distance: lower class id wins
  EXPECT_EQ(predict_knn(m, std::vector<double>{0.0}), 1);
  // equal votes, smaller summed distance wins
  EXPECT_EQ(predict_knn(m, std::vector<double>{0.5}), 2);
}

TEST(Predict, RfVoteTieGoesToLowerClass) {
  RfModel m;
  m.feature_count = 1;
  m.class_count = 3;
  for (ClassId c : {2, 1}) m.trees.push_back(RfTree{{RfNode{-1, 0, 0, 0, c}}});
  EXPECT_EQ(predict_rf(m, std::vector<double>{0.0}), 1);
}

TEST(Predict, DimensionChecked) {
  Rng rng(1);
  const auto m = oracle::random_mlp(rng, {3, 2});
  EXPECT_NILM_ERROR(predict_mlp(m, std::vector<double>{1, 2}), ErrorKind::Dimension);
}

TEST(Scaler, ZeroVarianceColumnsMapToZero) {
  Matrix x;
  x.append_row(std::vector<double>{1, 5});
  x.append_row(std::vector<double>{3, 5});
  const auto s = Scaler::fit(x);
  EXPECT_EQ(s.constant_features, std::vector<std::size_t>{1});
  const auto y = s.apply(std::vector<double>{3, 5});
  EXPECT_DOUBLE_EQ(y[0], 1.0);
  EXPECT_DOUBLE_EQ(y[1], 0.0);
}

TEST(ModelFile, BinaryRoundTripPreservesPredictions) {
  Rng rng(7);
  for (const auto& f : sample_files(11)) {
    const auto bytes = serialize(f);
    const auto back = deserialize(bytes);
    EXPECT_EQ(serialize(back), bytes);
    EXPECT_EQ(back.class_names, f.class_names);
    EXPECT_EQ(back.source, f.source);
    EXPECT_EQ(back.delta_sign, f.delta_sign);
    EXPECT_EQ(back.scaler, f.scaler);
    for (int k = 0; k < 50; ++k) {
      std::vector<double> full(f.layout().size());
      for (auto& v : full) v = rng.uniform(-2, 2);
      ASSERT_EQ(back.classify(full), f.classify(full));
    }
  }
}

TEST(ModelFile, JsonRoundTripIsExact) {
  for (const auto& f : sample_files(12)) {
    const auto back = from_json(nlohmann::json::parse(to_json(f).dump()));
    EXPECT_EQ(serialize(back), serialize(f));
  }
  EXPECT_EQ(parse_hex_real(hex_real(0.1)), 0.1);
  EXPECT_EQ(parse_hex_real(hex_real(-3.5e-300)), -3.5e-300);
}

TEST(ModelFile, EveryTruncationIsRejected) {
  const auto bytes = serialize(sample_files(13)[2]);
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    EXPECT_THROW(deserialize(std::span(bytes.data(), n)), Error) << n;
  }
}

TEST(ModelFile, HeaderErrors) {
  auto bytes = serialize(sample_files(14)[0]);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_NILM_ERROR(deserialize(bad), ErrorKind::Format);
  bad = bytes;
  bad[4] = 9;
  EXPECT_NILM_ERROR(deserialize(bad), ErrorKind::Version);
  bad = bytes;
  bad[6] = 7;
  EXPECT_NILM_ERROR(deserialize(bad), ErrorKind::Format);
  bad = bytes;
  bad.push_back(0);
  EXPECT_NILM_ERROR(deserialize(bad), ErrorKind::Format);
}

TEST(ModelFile, CorruptTreeIsIntegrityError) {
  auto f = sample_files(15)[3];
  auto& rf = std::get<RfModel>(f.model);
  // first internal node: point its left child back at itself
  bool changed = false;
  for (auto& t : rf.trees) {
    if (!t.nodes[0].is_leaf()) {
      t.nodes[0].left = 0;
      changed = true;
      break;
    }
  }
  ASSERT_TRUE(changed);
  EXPECT_NILM_ERROR(f.validate(), ErrorKind::Integrity);
}

TEST(ModelFile, MismatchedMetadataRejected) {
  auto f = sample_files(16)[1];
  f.class_names.pop_back();
  EXPECT_NILM_ERROR(f.validate(), ErrorKind::Integrity);
  f = sample_files(16)[1];
  f.selected.push_back(200);
  EXPECT_NILM_ERROR(f.validate(), ErrorKind::Validation);
}

TEST(Rf, TreeDepth) {
  RfTree t;
  t.nodes = {RfNode{0, 0.0, 1, 2}, RfNode{}, RfNode{0, 1.0, 3, 4}, RfNode{}, RfNode{}};
  EXPECT_EQ(tree_depth(t), 2u);
}

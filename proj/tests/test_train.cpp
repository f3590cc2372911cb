#include <set>

#include "helpers.hpp"
#include "nilm/train.hpp"

using namespace nilm;

namespace {

// Gaussian blobs: class c centred at (sep*c, -sep*c, 0, ...), unit noise.
Dataset blobs(std::size_t classes, std::size_t per_class, std::size_t dim, double sep, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  for (std::size_t c = 0; c < classes; ++c) d.classes.push_back("k" + std::to_string(c));
  d.columns = all_indices(dim);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t k = 0; k < per_class; ++k) {
      std::vector<double> row(dim);
      for (std::size_t f = 0; f < dim; ++f) row[f] = rng.normal();
      row[0] += sep * static_cast<double>(c);
      if (dim > 1) row[1] -= sep * static_cast<double>(c);
      d.x.append_row(row);
      d.y.push_back(static_cast<ClassId>(c));
    }
  }
  return d;
}

double train_accuracy(const ModelFile& f, const Dataset& d) { return evaluate(f, d).accuracy; }

}  // namespace

TEST(Split, StratifiedDisjointDeterministic) {
  auto d = blobs(3, 10, 2, 1.0, 1);
  d.x.append_row(std::vector<double>{9, 9});
  d.y.push_back(0);
  d.x.append_row(std::vector<double>{8, 8});
  d.y.push_back(0);  // class 0 now has 12 rows
  const auto [tr, te] = split_dataset(d, 0.75, 5);
  EXPECT_EQ(tr.class_counts(), (std::vector<std::size_t>{9, 8, 8}));
  EXPECT_EQ(te.class_counts(), (std::vector<std::size_t>{3, 2, 2}));
  std::multiset<std::vector<double>> all, parts;
  for (std::size_t r = 0; r < d.size(); ++r) all.insert({d.x.row(r).begin(), d.x.row(r).end()});
  for (const auto* p : {&tr, &te}) {
    for (std::size_t r = 0; r < p->size(); ++r) parts.insert({p->x.row(r).begin(), p->x.row(r).end()});
  }
  EXPECT_EQ(all, parts);
  const auto again = split_dataset(d, 0.75, 5);
  EXPECT_EQ(again.first.x, tr.x);
  EXPECT_NE(split_dataset(d, 0.75, 6).first.x, tr.x);
  EXPECT_NILM_ERROR(split_dataset(d, 1.0, 1), ErrorKind::Validation);
}

TEST(Split, TwoInstanceClassKeepsOneEachSide) {
  auto d = blobs(2, 2, 1, 1.0, 1);
  const auto [tr, te] = split_dataset(d, 0.9, 1);
  EXPECT_EQ(tr.class_counts(), (std::vector<std::size_t>{1, 1}));
  EXPECT_EQ(te.class_counts(), (std::vector<std::size_t>{1, 1}));
}

TEST(DatasetIo, RoundTripIsExact) {
  auto d = blobs(3, 5, 4, 2.0, 3);
  d.columns = {0, 5, 17, 102};
  d.source = FeatureSource::delta;
  d.provenance = "unit";
  const auto path = (testutil::scratch_dir() / "d.csv").string();
  save_dataset(path, d);
  const auto back = load_dataset(path);
  EXPECT_EQ(back.x, d.x);
  EXPECT_EQ(back.y, d.y);
  EXPECT_EQ(back.columns, d.columns);
  EXPECT_EQ(back.source, FeatureSource::delta);
  const auto meta = nlohmann::json::parse(read_file(path + ".json"));
  EXPECT_EQ(meta["feature_names"][1], "H3_re");
}

TEST(DatasetIo, BadRowsReported) {
  const auto path = (testutil::scratch_dir() / "d.csv").string();
  save_dataset(path, blobs(2, 3, 2, 1.0, 1));
  write_file(path, "label,f0,f1\n0,1,2\n1,x,2\n");
  try {
    load_dataset(path);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Parse);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(Metrics, HandComputed) {
  const std::vector<ClassId> truth{0, 0, 1, 1, 2}, pred{0, 1, 1, 1, 0};
  const auto m = compute_metrics(truth, pred, 3);
  EXPECT_DOUBLE_EQ(m.accuracy, 3.0 / 5.0);
  EXPECT_EQ(m.confusion[0][1], 1u);
  EXPECT_EQ(m.confusion[2][0], 1u);
  // precision: c0 1/2, c1 2/3, c2 0/0 -> 0; recall: 1/2, 1, 0
  EXPECT_DOUBLE_EQ(m.precision, (0.5 + 2.0 / 3.0 + 0.0) / 3.0);
  EXPECT_DOUBLE_EQ(m.recall, (0.5 + 1.0 + 0.0) / 3.0);
}

TEST(Knn, OneNeighbourMemorises) {
  const auto d = blobs(3, 10, 3, 0.5, 2);
  Hyper h;
  h.kind = ModelKind::knn;
  h.k = 1;
  EXPECT_DOUBLE_EQ(train_accuracy(fit_model(d, h, 1), d), 1.0);
}

TEST(Rf, SeparableAndSeeded) {
  const auto d = blobs(4, 15, 3, 6.0, 4);
  Hyper h;
  h.trees = 15;
  const auto a = fit_model(d, h, 9);
  EXPECT_DOUBLE_EQ(train_accuracy(a, d), 1.0);
  EXPECT_EQ(serialize(fit_model(d, h, 9)), serialize(a));
  EXPECT_NE(serialize(fit_model(d, h, 10)), serialize(a));
  for (const auto& t : std::get<RfModel>(a.model).trees) EXPECT_LE(tree_depth(t), h.depth);
  EXPECT_TRUE(a.scaler.is_identity());
}

TEST(Rf, DepthLimitHonoured) {
  const auto d = blobs(5, 20, 4, 0.3, 4);
  const auto m = train_rf(d.x, d.y, 5, 5, 2, 1);
  for (const auto& t : m.trees) EXPECT_LE(tree_depth(t), 2u);
}

TEST(Mlp, GradientMatchesFiniteDifferences) {
  Rng rng(8);
  auto net = init_mlp({4, 3, 3, 2}, rng);
  for (auto& L : net.layers)
    for (auto& b : L.bias) b = rng.uniform(0.1, 0.5);  // keep units active
  Matrix x(6, 4);
  for (auto& v : x.data) v = rng.uniform(-1, 1);
  const std::vector<ClassId> y{0, 1, 1, 0, 1, 0};
  const std::vector<std::size_t> rows{0, 1, 2, 3, 4, 5};
  MlpModel grad;
  mlp_loss_gradient(net, x, y, rows, &grad);
  const double h = 1e-6;
  double worst = 0;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto check = [&](std::vector<double>& p, const std::vector<double>& g) {
      for (std::size_t k = 0; k < p.size(); ++k) {
        const double keep = p[k];
        p[k] = keep + h;
        const double up = mlp_loss_gradient(net, x, y, rows, nullptr);
        p[k] = keep - h;
        const double down = mlp_loss_gradient(net, x, y, rows, nullptr);
        p[k] = keep;
        const double fd = (up - down) / (2 * h);
        worst = std::max(worst, std::abs(fd - g[k]) / std::max(1e-3, std::abs(fd) + std::abs(g[k])));
      }
    };
    check(net.layers[l].weights, grad.layers[l].weights);
    check(net.layers[l].bias, grad.layers[l].bias);
  }
  EXPECT_LE(worst, 1e-5);
}

TEST(Mlp, LearnsBlobsAndIsSeeded) {
  const auto d = blobs(3, 30, 2, 4.0, 5);
  Hyper h;
  h.kind = ModelKind::mlp;
  h.mlp.hidden = {16};
  h.mlp.epochs = 60;
  h.mlp.learning_rate = 0.1;
  const auto a = fit_model(d, h, 3);
  EXPECT_GE(train_accuracy(a, d), 0.95);
  EXPECT_EQ(serialize(fit_model(d, h, 3)), serialize(a));
}

TEST(Mlp, DivergenceNamesEpoch) {
  auto d = blobs(2, 20, 2, 1.0, 5);
  for (auto& v : d.x.data) v *= 1e150;
  try {
    train_mlp(d.x, d.y, 2, MlpSchedule{{4}, 10.0, 5, 8}, 1);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Divergence);
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos);
  }
}

TEST(Svm, TwoPointAnalyticSolution) {
  // x = -1 (y=-1), x = +1 (y=+1), linear kernel: alpha = 0.5 each, rho = 0
  const std::vector<double> k{1, -1, -1, 1}, y{-1, 1};
  const auto s = detail::solve_binary_svm(k, y, 100.0, 1e-9);
  EXPECT_NEAR(s.alpha[0], 0.5, 1e-9);
  EXPECT_NEAR(s.alpha[1], 0.5, 1e-9);
  EXPECT_NEAR(s.rho, 0.0, 1e-9);
}

TEST(Svm, KktConditionsHold) {
  Rng rng(21);
  const std::size_t n = 40;
  std::vector<std::vector<double>> pts;
  std::vector<double> y;
  for (std::size_t t = 0; t < n; ++t) {
    const double lab = t % 2 ? 1.0 : -1.0;
    pts.push_back({rng.normal() + lab, rng.normal()});
    y.push_back(lab);
  }
  const Kernel kern{KernelType::rbf, 0.5};
  std::vector<double> kmat(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) kmat[i * n + j] = kern(pts[i], pts[j]);
  const double c = 2.0;
  const auto s = detail::solve_binary_svm(kmat, y, c, 1e-6);
  double balance = 0;
  for (std::size_t t = 0; t < n; ++t) balance += s.alpha[t] * y[t];
  EXPECT_NEAR(balance, 0.0, 1e-9);
  for (std::size_t t = 0; t < n; ++t) {
    double f = -s.rho;
    for (std::size_t u = 0; u < n; ++u) f += s.alpha[u] * y[u] * kmat[t * n + u];
    const double margin = y[t] * f;
    ASSERT_GE(s.alpha[t], 0.0);
    ASSERT_LE(s.alpha[t], c);
    if (s.alpha[t] < 1e-12) EXPECT_GE(margin, 1.0 - 1e-4) << t;
    else if (s.alpha[t] > c - 1e-12) EXPECT_LE(margin, 1.0 + 1e-4) << t;
    else EXPECT_NEAR(margin, 1.0, 1e-4) << t;
  }
}

TEST(Svm, MulticlassSeparable) {
  const auto d = blobs(4, 12, 2, 5.0, 6);
  Hyper h;
  h.kind = ModelKind::svm;
  const auto f = fit_model(d, h, 1);
  EXPECT_GE(train_accuracy(f, d), 0.98);
  const auto& m = std::get<SvmModel>(f.model);
  EXPECT_EQ(m.intercepts.size(), 6u);
  EXPECT_DOUBLE_EQ(m.kernel.gamma, 0.5);  // 1 / feature count
  EXPECT_TRUE(f.notes.empty());
}

TEST(Grid, PicksBestMeanAccuracy) {
  const auto d = blobs(3, 12, 2, 3.0, 7);
  GridSpec g;
  g.knn_k = {1, 3, 15};
  const auto res = grid_search(d, ModelKind::knn, g, 3, 4);
  ASSERT_EQ(res.table.size(), 3u);
  double best = -1;
  for (const auto& r : res.table) best = std::max(best, r.mean_accuracy);
  EXPECT_EQ(res.table[res.best_index].mean_accuracy, best);
  for (std::size_t k = 0; k < res.best_index; ++k) EXPECT_LT(res.table[k].mean_accuracy, best);
}

TEST(Grid, FailedCellsAreSkipped) {
  const auto d = blobs(2, 6, 2, 3.0, 7);
  GridSpec g;
  g.knn_k = {50, 1};  // k larger than any training fold fails
  const auto res = grid_search(d, ModelKind::knn, g, 2, 1);
  EXPECT_TRUE(res.table[0].failed);
  EXPECT_EQ(res.best_index, 1u);
  GridSpec empty;
  empty.rf_trees.clear();
  EXPECT_NILM_ERROR(grid_search(d, ModelKind::rf, empty, 2, 1), ErrorKind::Validation);
}

TEST(Mda, NoiseColumnRanksLast) {
  auto d = blobs(3, 30, 3, 3.0, 9);  // column 2 carries no class signal
  const auto [tr, te] = split_dataset(d, 0.7, 1);
  Hyper h;
  h.trees = 20;
  const auto rep = mda_rank(h, tr, te, 5, 3);
  EXPECT_EQ(rep.ranking.back(), 2u);
  const auto back = mda_from_json(to_json(rep, d.layout()));
  EXPECT_EQ(back.ranking, rep.ranking);
  EXPECT_EQ(back.importance, rep.importance);
}

TEST(Sweep, ChoosesSmallestWithinTolerance) {
  auto d = blobs(3, 30, 4, 3.0, 10);
  const auto [tr, te] = split_dataset(d, 0.7, 1);
  Hyper h;
  h.trees = 10;
  const auto mda = mda_rank(h, tr, te, 3, 2);
  SweepOptions opt;
  opt.fixed = h;
  opt.seed = 4;
  const auto rep = sweep_feature_count(tr, te, ModelKind::rf, mda, cortex_m4_paper_profile(), opt);
  ASSERT_EQ(rep.points.size(), 4u);
  double best = 0;
  for (const auto& p : rep.points) best = std::max(best, p.metrics.accuracy);
  EXPECT_EQ(rep.max_accuracy, best);
  std::size_t want = 0;
  while (rep.points[want].metrics.accuracy < best - 0.05 || !rep.points[want].cost.verdict.fits()) ++want;
  EXPECT_EQ(rep.chosen, want);
  EXPECT_FALSE(rep.infeasible);
  const auto csv = sweep_to_csv(rep);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  opt.counts = {3, 2};
  EXPECT_NILM_ERROR(sweep_feature_count(tr, te, ModelKind::rf, mda, cortex_m4_paper_profile(), opt),
                    ErrorKind::Validation);
}

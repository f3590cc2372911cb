// nilm: synthesis, feature extraction, training, MDA, sweeps, online
// classification and MCU cost reports from the command line.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 budget infeasible
// (only with --strict-budget).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nilm/presets.hpp"

namespace fs = std::filesystem;
using namespace nilm;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitBudget = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::uint64_t seed = 1;
  std::string profile = "cortex-m4-paper";
  std::string format;
};

void check_output(const std::string& path) {
  if (path.empty()) throw UsageError("--out is required");
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) {
    throw UsageError("output directory '" + parent.string() + "' does not exist");
  }
}

void echo_seed(const Common& c) { std::cout << "seed: " << c.seed << "\n"; }

CostProfile resolve_profile(const std::string& name) {
  if (name == "cortex-m4-paper") return cortex_m4_paper_profile();
  if (!fs::exists(name)) throw UsageError("unknown profile '" + name + "' (not built in, no such file)");
  try {
    return profile_from_json(nlohmann::json::parse(read_file(name)));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, name + ": " + e.what());
  }
}

SampleFormat resolve_format(const Common& c, const std::string& path) {
  if (c.format.empty()) return sample_format_for(path);
  try {
    return parse_sample_format(c.format);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

HarmonicMode parse_layout(const std::string& s) {
  if (s == "complex") return HarmonicMode::complex_pairs;
  if (s == "magnitude") return HarmonicMode::magnitude;
  throw UsageError("--layout must be complex or magnitude");
}

template <typename T>
T parse_number(std::string_view s, const std::string& what) {
  T v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw UsageError("bad " + what + " '" + std::string(s) + "'");
  }
  return v;
}

/// "1-5,8,10" -> {1,2,3,4,5,8,10}
std::vector<std::size_t> parse_index_list(const std::string& text, const std::string& what) {
  std::vector<std::size_t> out;
  if (text.empty()) return out;
  for (auto part : split(text, ',')) {
    const auto dash = part.find('-');
    if (dash == std::string_view::npos) {
      out.push_back(parse_number<std::size_t>(part, what));
      continue;
    }
    const auto lo = parse_number<std::size_t>(part.substr(0, dash), what);
    const auto hi = parse_number<std::size_t>(part.substr(dash + 1), what);
    if (hi < lo) throw UsageError("empty range in " + what + " '" + std::string(part) + "'");
    for (auto k = lo; k <= hi; ++k) out.push_back(k);
  }
  return out;
}

std::vector<double> parse_real_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  for (auto part : split(text, ',')) {
    double v = 0.0;
    if (!parse_double(part, v)) throw UsageError("bad " + what + " '" + std::string(part) + "'");
    out.push_back(v);
  }
  return out;
}

// "800:100" -> {800, 100}; "" -> {}
std::vector<std::size_t> parse_layers(std::string_view text) {
  std::vector<std::size_t> out;
  if (text.empty()) return out;
  for (auto part : split(text, ':')) out.push_back(parse_number<std::size_t>(part, "layer size"));
  return out;
}

ModelKind parse_kind(const std::string& s) {
  try {
    return parse_model_kind(s);
  } catch (const Error&) {
    throw UsageError("--model must be one of knn, svm, mlp, rf");
  }
}

struct HyperOptions {
  std::string kind = "rf";
  std::size_t k = 5;
  double c = 10.0;
  double gamma = 0.0;
  std::string kernel = "rbf";
  std::string hidden = "800:100";
  double lr = 0.01;
  std::size_t epochs = 200;
  std::size_t batch = 32;
  std::size_t trees = 100;
  std::size_t depth = 16;

  void attach(CLI::App* cmd) {
    cmd->add_option("--model", kind, "Model kind: knn | svm | mlp | rf")->capture_default_str();
    cmd->add_option("--k", k, "kNN neighbours")->capture_default_str();
    cmd->add_option("--c", c, "SVM soft-margin C")->capture_default_str();
    cmd->add_option("--gamma", gamma, "SVM rbf gamma (0 = 1/feature count)")->capture_default_str();
    cmd->add_option("--kernel", kernel, "SVM kernel: rbf | linear")->capture_default_str();
    cmd->add_option("--hidden", hidden, "MLP hidden layer sizes, colon separated")->capture_default_str();
    cmd->add_option("--lr", lr, "MLP learning rate")->capture_default_str();
    cmd->add_option("--epochs", epochs, "MLP epochs")->capture_default_str();
    cmd->add_option("--batch", batch, "MLP mini-batch size")->capture_default_str();
    cmd->add_option("--trees", trees, "RF tree count")->capture_default_str();
    cmd->add_option("--depth", depth, "RF maximum depth")->capture_default_str();
  }

  Hyper resolve() const {
    Hyper h;
    h.kind = parse_kind(kind);
    h.k = k;
    h.c = c;
    h.gamma = gamma;
    try {
      h.kernel = parse_kernel(kernel);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    h.mlp.hidden = parse_layers(hidden);
    h.mlp.learning_rate = lr;
    h.mlp.epochs = epochs;
    h.mlp.batch = batch;
    h.trees = trees;
    h.depth = depth;
    return h;
  }
};

struct GridOptions {
  std::string k, c, gamma, kernel, hidden, lr, trees, depth;

  void attach(CLI::App* cmd) {
    cmd->add_option("--grid-k", k, "kNN k axis, e.g. 1,3,5");
    cmd->add_option("--grid-c", c, "SVM C axis");
    cmd->add_option("--grid-gamma", gamma, "SVM gamma axis");
    cmd->add_option("--grid-kernel", kernel, "SVM kernel axis, e.g. rbf,linear");
    cmd->add_option("--grid-hidden", hidden, "MLP layer axis, e.g. 800:100,100:50");
    cmd->add_option("--grid-lr", lr, "MLP learning-rate axis");
    cmd->add_option("--grid-trees", trees, "RF tree-count axis");
    cmd->add_option("--grid-depth", depth, "RF depth axis");
  }

  GridSpec resolve(const Hyper& base) const {
    GridSpec g;
    if (!k.empty()) g.knn_k = parse_index_list(k, "k");
    if (!c.empty()) g.svm_c = parse_real_list(c, "C");
    if (!gamma.empty()) g.svm_gamma = parse_real_list(gamma, "gamma");
    if (!kernel.empty()) {
      g.svm_kernel.clear();
      for (auto s : split(kernel, ',')) g.svm_kernel.push_back(parse_kernel(s));
    }
    if (!hidden.empty()) {
      g.mlp_hidden.clear();
      for (auto s : split(hidden, ',')) g.mlp_hidden.push_back(parse_layers(s));
    }
    if (!lr.empty()) g.mlp_lr = parse_real_list(lr, "learning rate");
    if (!trees.empty()) g.rf_trees = parse_index_list(trees, "tree count");
    if (!depth.empty()) g.rf_depth = parse_index_list(depth, "depth");
    g.mlp_epochs = base.mlp.epochs;
    g.mlp_batch = base.mlp.batch;
    return g;
  }
};

void write_json(const std::string& path, const nlohmann::json& j) { write_file(path, j.dump(2) + "\n"); }

// --- synth --------------------------------------------------------------------------

struct SynthOptions {
  std::string script, preset, out, layout = "complex";
  bool dataset = false, delta = false;
  std::size_t instances = 50, scenarios = 20, events = 10;
};

int cmd_synth(const Common& c, const SynthOptions& o) {
  check_output(o.out);
  if (o.script.empty() == o.preset.empty()) throw UsageError("give exactly one of --script and --preset");
  echo_seed(c);
  if (o.dataset) {
    if (o.preset.empty()) throw UsageError("--dataset needs --preset");
    const Preset preset = make_preset(o.preset);
    const auto mode = parse_layout(o.layout);
    const bool delta = o.delta || o.preset == "multi5";
    const Dataset d = delta ? delta_dataset(preset, o.scenarios, o.events, c.seed, DeltaSign::pre_minus_post, mode)
                            : window_dataset(preset, o.instances, c.seed, mode);
    save_dataset(o.out, d);
    std::cout << "dataset: " << d.size() << " rows x " << d.dim() << " features, " << d.classes.size()
              << " classes -> " << o.out << "\n";
    return 0;
  }
  ScenarioFile file;
  if (!o.script.empty()) {
    file = parse_scenario(read_file(o.script));
  } else {
    file = random_scenario(make_preset(o.preset), o.events, c.seed);
    write_file(o.out + ".scenario.txt", scenario_to_text(file));
  }
  const auto run = synth_scenario(file.script, file.registry, c.seed);
  save_samples(run.stream, o.out, resolve_format(c, o.out));
  write_file(o.out + ".labels.csv", labels_to_csv(run.labels));
  std::cout << "samples: " << run.stream.size() << " (" << run.labels.size() << " windows) -> " << o.out << "\n";
  return 0;
}

// --- extract ------------------------------------------------------------------------

int cmd_extract(const Common& c, const std::string& in, const std::string& out, const std::string& layout) {
  check_output(out);
  echo_seed(c);
  const auto stream = load_samples(in, resolve_format(c, in));
  const FeatureLayout lay(parse_layout(layout));
  const auto rows = extract_stream(stream, lay);
  write_file(out, features_to_csv(rows, lay));
  std::cout << "windows: " << rows.size() << " -> " << out << "\n";
  return 0;
}

// --- train / mda / sweep --------------------------------------------------------------

struct SelectOptions {
  std::string columns, mda;
  std::size_t top = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--columns", columns, "Dataset columns to keep, e.g. 0-2,5");
    cmd->add_option("--mda", mda, "MDA report whose ranking selects columns (with --top)");
    cmd->add_option("--top", top, "Keep the top-N columns of the MDA ranking");
  }

  Dataset apply(const Dataset& d) const {
    if (!columns.empty() && !mda.empty()) throw UsageError("--columns and --mda are exclusive");
    if (!columns.empty()) return d.take_columns(parse_index_list(columns, "column"));
    if (mda.empty()) return d;
    const auto rep = mda_from_json(nlohmann::json::parse(read_file(mda)));
    if (rep.columns != d.columns) fail(ErrorKind::Validation, "MDA report was computed on different columns");
    const std::size_t n = top ? std::min(top, rep.ranking.size()) : rep.ranking.size();
    return d.take_columns(std::vector<std::size_t>(rep.ranking.begin(), rep.ranking.begin() + static_cast<long>(n)));
  }
};

struct TrainOptions {
  std::string data, out, export_json;
  double train_frac = 0.8;
  bool grid = false, strict_budget = false;
  std::size_t folds = 5;
  HyperOptions hyper;
  GridOptions grid_axes;
  SelectOptions select;
};

int cmd_train(const Common& c, const TrainOptions& o) {
  check_output(o.out);
  Hyper h = o.hyper.resolve();
  const auto profile = resolve_profile(c.profile);
  echo_seed(c);
  const Dataset d = o.select.apply(load_dataset(o.data));
  auto [train, test] = split_dataset(d, o.train_frac, c.seed);
  nlohmann::json report = {{"seed", c.seed}, {"data", o.data}, {"train_rows", train.size()}, {"test_rows", test.size()}};
  if (o.grid) {
    const auto g = grid_search(train, h.kind, o.grid_axes.resolve(h), o.folds, derive_seed(c.seed, 1));
    h = g.best;
    report["grid"] = to_json(g);
  }
  const auto model = fit_model(train, h, derive_seed(c.seed, 2));
  const auto metrics = evaluate(model, test);
  const auto cost = cost_report(model, profile);
  save_model_file(o.out, model);
  if (!o.export_json.empty()) write_json(o.export_json, to_json(model));
  report["hyper"] = to_json(h);
  report["metrics"] = to_json(metrics);
  report["cost"] = to_json(cost);
  if (!model.notes.empty()) report["notes"] = model.notes;
  write_json(o.out + ".metrics.json", report);
  std::printf("model: %s, %zu features -> %s\naccuracy %.4f  precision %.4f  recall %.4f\n", to_string(h.kind),
              model.selected.size(), o.out.c_str(), metrics.accuracy, metrics.precision, metrics.recall);
  std::cout << cost_table(cost);
  if (o.strict_budget && !cost.verdict.fits()) return kExitBudget;
  return 0;
}

struct MdaOptions {
  std::string data, out;
  double train_frac = 0.8;
  std::size_t repeats = 10;
  HyperOptions hyper;
  SelectOptions select;
};

int cmd_mda(const Common& c, const MdaOptions& o) {
  check_output(o.out);
  const Hyper h = o.hyper.resolve();
  echo_seed(c);
  const Dataset d = o.select.apply(load_dataset(o.data));
  auto [train, test] = split_dataset(d, o.train_frac, c.seed);
  const auto rep = mda_rank(h, train, test, o.repeats, c.seed);
  auto j = to_json(rep, d.layout());
  j["hyper"] = to_json(h);
  write_json(o.out, j);
  std::printf("baseline accuracy %.4f; top features:", rep.baseline);
  for (std::size_t k = 0; k < std::min<std::size_t>(10, rep.ranking.size()); ++k) {
    std::printf(" %s", d.layout()[rep.columns[rep.ranking[k]]].name.c_str());
  }
  std::printf("\n");
  return 0;
}

struct SweepCliOptions {
  std::string data, out, mda, counts;
  double train_frac = 0.8, tolerance = 0.05;
  bool full_grid = false, strict_budget = false;
  std::size_t folds = 5, repeats = 10;
  HyperOptions hyper;
  GridOptions grid_axes;
  SelectOptions select;
};

int cmd_sweep(const Common& c, const SweepCliOptions& o) {
  check_output(o.out);
  const Hyper h = o.hyper.resolve();
  const auto profile = resolve_profile(c.profile);
  echo_seed(c);
  const Dataset d = o.select.apply(load_dataset(o.data));
  auto [train, test] = split_dataset(d, o.train_frac, c.seed);
  MdaReport rep;
  if (!o.mda.empty()) {
    rep = mda_from_json(nlohmann::json::parse(read_file(o.mda)));
    if (rep.columns != d.columns) fail(ErrorKind::Validation, "MDA report was computed on different columns");
  } else {
    rep = mda_rank(h, train, test, o.repeats, c.seed);
  }
  SweepOptions opt;
  opt.counts = parse_index_list(o.counts, "feature count");
  opt.fast = !o.full_grid;
  opt.fixed = h;
  opt.grid = o.grid_axes.resolve(h);
  opt.folds = o.folds;
  opt.drop_tolerance = o.tolerance;
  opt.seed = c.seed;
  const auto sweep = sweep_feature_count(train, test, h.kind, rep, profile, opt);
  auto j = to_json(sweep, d.layout());
  j["mda"] = to_json(rep, d.layout());
  write_json(o.out, j);
  write_file(o.out + ".csv", sweep_to_csv(sweep));
  const auto& best = sweep.points[sweep.chosen];
  std::printf("points: %zu, max accuracy %.4f\nchosen m=%zu accuracy %.4f%s%s\n", sweep.points.size(),
              sweep.max_accuracy, best.m, best.metrics.accuracy, sweep.infeasible ? " (INFEASIBLE)" : "",
              sweep.overfitting_dip ? " [overfitting dip at full vector]" : "");
  std::cout << cost_table(best.cost);
  if (o.strict_budget && sweep.infeasible) return kExitBudget;
  return 0;
}

// --- classify ---------------------------------------------------------------------

int cmd_classify(const Common& c, const std::string& in, const std::string& model_path, const std::string& mode,
                 double threshold, const std::string& out) {
  check_output(out);
  ClassifyMode m;
  try {
    m = parse_classify_mode(mode);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (!(threshold > 0.0)) throw UsageError("--threshold must be positive");
  echo_seed(c);
  const auto model = load_model_file(model_path);
  const auto stream = load_samples(in, resolve_format(c, in));
  const auto labels = classify_stream(stream, model, m, threshold);
  write_file(out, event_labels_to_csv(labels, model.class_names));
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& l : labels) ++counts[static_cast<int>(l.status)];
  std::printf("events: %zu (labeled %zu, invalid %zu, pending %zu) -> %s\n", labels.size(), counts[0], counts[1],
              counts[2], out.c_str());
  return 0;
}

// --- cost ------------------------------------------------------------------------------

struct CostOptions {
  std::string model, columns, layout = "complex", out, dump_profile;
  bool strict_budget = false;
};

int cmd_cost(const Common& c, const CostOptions& o) {
  const auto profile = resolve_profile(c.profile);
  echo_seed(c);
  if (!o.dump_profile.empty()) {
    check_output(o.dump_profile);
    write_json(o.dump_profile, to_json(profile));
    std::cout << "profile " << profile.name << " -> " << o.dump_profile << "\n";
    for (const auto& issue : profile.consistency_issues()) std::cout << "warning: " << issue << "\n";
    if (o.model.empty() && o.columns.empty()) return 0;
  }
  CostReport rep;
  if (!o.model.empty()) {
    const auto file = load_model_file(o.model);
    rep = cost_report(file, profile);
  } else {
    const FeatureLayout lay(parse_layout(o.layout));
    const auto cols = o.columns.empty() ? all_indices(lay.size()) : parse_index_list(o.columns, "column");
    validate_indices(cols, lay.size());
    rep = make_cost_report(extraction_cost(lay, cols, profile), CostFigures{}, profile);
  }
  std::cout << cost_table(rep);
  std::printf("classification headroom: %.2f Kcycles\n", classification_headroom_cycles(rep.extraction, profile) / 1e3);
  if (!o.out.empty()) {
    check_output(o.out);
    auto j = to_json(rep);
    j["seed"] = c.seed;
    write_json(o.out, j);
  }
  if (o.strict_budget && !rep.verdict.fits()) return kExitBudget;
  return 0;
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Master seed (echoed in every output)")->capture_default_str();
  cmd->add_option("--profile", c.profile, "Cost profile: built-in name or JSON file")->capture_default_str();
  cmd->add_option("--format", c.format, "Sample file format: csv | bin (default: from extension)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Edge NILM pipeline: synth | extract | train | mda | sweep | classify | cost"};
  app.require_subcommand(1);
  Common common;

  SynthOptions synth;
  auto* c_synth = app.add_subcommand("synth", "Synthesize samples and label track, or a training dataset");
  add_common(c_synth, common);
  c_synth->add_option("--script", synth.script, "Scenario script")->check(CLI::ExistingFile);
  c_synth->add_option("--preset", synth.preset, "Preset: single7 | multi5 | harmonic4");
  c_synth->add_option("--out", synth.out, "Output path")->required();
  c_synth->add_flag("--dataset", synth.dataset, "Write a feature dataset (label,f0,...) instead of samples");
  c_synth->add_flag("--delta", synth.delta, "Dataset of differential features around events");
  c_synth->add_option("--instances", synth.instances, "Instances per class (window dataset)")->capture_default_str();
  c_synth->add_option("--scenarios", synth.scenarios, "Scenarios (delta dataset)")->capture_default_str();
  c_synth->add_option("--events", synth.events, "Events per generated scenario")->capture_default_str();
  c_synth->add_option("--layout", synth.layout, "Harmonic layout: complex | magnitude")->capture_default_str();

  std::string ex_in, ex_out, ex_layout = "complex";
  auto* c_extract = app.add_subcommand("extract", "Per-window feature CSV from a sample file");
  add_common(c_extract, common);
  c_extract->add_option("--in", ex_in, "Sample file")->required()->check(CLI::ExistingFile);
  c_extract->add_option("--out", ex_out, "Feature CSV")->required();
  c_extract->add_option("--layout", ex_layout, "Harmonic layout: complex | magnitude")->capture_default_str();

  TrainOptions train;
  auto* c_train = app.add_subcommand("train", "Train a model on a dataset (stratified split, optional grid search)");
  add_common(c_train, common);
  c_train->add_option("--data", train.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  c_train->add_option("--out", train.out, "Model file (NLMM)")->required();
  c_train->add_option("--train-frac", train.train_frac, "Training fraction")->capture_default_str();
  c_train->add_flag("--grid", train.grid, "Grid-search hyperparameters by stratified k-fold CV");
  c_train->add_option("--folds", train.folds, "CV folds")->capture_default_str();
  c_train->add_option("--export-json", train.export_json, "Also export the model as JSON");
  c_train->add_flag("--strict-budget", train.strict_budget, "Exit 3 when the model exceeds the profile budget");
  train.hyper.attach(c_train);
  train.grid_axes.attach(c_train);
  train.select.attach(c_train);

  MdaOptions mda;
  auto* c_mda = app.add_subcommand("mda", "Rank features by mean decrease in accuracy");
  add_common(c_mda, common);
  c_mda->add_option("--data", mda.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  c_mda->add_option("--out", mda.out, "Report JSON")->required();
  c_mda->add_option("--train-frac", mda.train_frac, "Training fraction")->capture_default_str();
  c_mda->add_option("--repeats", mda.repeats, "Shuffles per feature")->capture_default_str();
  mda.hyper.attach(c_mda);
  mda.select.attach(c_mda);

  SweepCliOptions sweep;
  auto* c_sweep = app.add_subcommand("sweep", "Accuracy/cost sweep over the top-m MDA features");
  add_common(c_sweep, common);
  c_sweep->add_option("--data", sweep.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  c_sweep->add_option("--out", sweep.out, "Report JSON (per-point CSV written to <out>.csv)")->required();
  c_sweep->add_option("--mda", sweep.mda, "Precomputed MDA report (computed when absent)");
  c_sweep->add_option("--counts", sweep.counts, "Feature counts, e.g. 1-10,20,35 (default 1..f)");
  c_sweep->add_option("--tolerance", sweep.tolerance, "Accuracy drop tolerance")->capture_default_str();
  c_sweep->add_option("--train-frac", sweep.train_frac, "Training fraction")->capture_default_str();
  c_sweep->add_option("--repeats", sweep.repeats, "MDA shuffles per feature")->capture_default_str();
  c_sweep->add_flag("--full-grid", sweep.full_grid, "Grid-search every point instead of fixed hyperparameters");
  c_sweep->add_option("--folds", sweep.folds, "CV folds for --full-grid")->capture_default_str();
  c_sweep->add_flag("--strict-budget", sweep.strict_budget, "Exit 3 when no point fits the budget");
  sweep.hyper.attach(c_sweep);
  sweep.grid_axes.attach(c_sweep);

  std::string cl_in, cl_model, cl_mode = "single", cl_out;
  double cl_threshold = kDefaultThresholdW;
  auto* c_classify = app.add_subcommand("classify", "Run the online pipeline over a sample file");
  add_common(c_classify, common);
  c_classify->add_option("--in", cl_in, "Sample file")->required()->check(CLI::ExistingFile);
  c_classify->add_option("--model", cl_model, "Model file (NLMM)")->required()->check(CLI::ExistingFile);
  c_classify->add_option("--mode", cl_mode, "single | multi")->capture_default_str();
  c_classify->add_option("--threshold", cl_threshold, "Event threshold in W")->capture_default_str();
  c_classify->add_option("--out", cl_out, "Event label CSV")->required();

  CostOptions cost;
  auto* c_cost = app.add_subcommand("cost", "MCU cost report for a model or a feature subset");
  add_common(c_cost, common);
  c_cost->add_option("--model", cost.model, "Model file (NLMM)")->check(CLI::ExistingFile);
  c_cost->add_option("--columns", cost.columns, "Layout indices for an extraction-only report (default all)");
  c_cost->add_option("--layout", cost.layout, "Harmonic layout: complex | magnitude")->capture_default_str();
  c_cost->add_option("--out", cost.out, "Report JSON");
  c_cost->add_option("--dump-profile", cost.dump_profile, "Write the resolved profile as JSON");
  c_cost->add_flag("--strict-budget", cost.strict_budget, "Exit 3 when the budget is exceeded");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*c_synth) return cmd_synth(common, synth);
    if (*c_extract) return cmd_extract(common, ex_in, ex_out, ex_layout);
    if (*c_train) return cmd_train(common, train);
    if (*c_mda) return cmd_mda(common, mda);
    if (*c_sweep) return cmd_sweep(common, sweep);
    if (*c_classify) return cmd_classify(common, cl_in, cl_model, cl_mode, cl_threshold, cl_out);
    if (*c_cost) return cmd_cost(common, cost);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

// rgcoref: command-line front end.
//
// Exit codes: 0 success, 1 validation or check failure, 2 I/O or usage error.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rgcoref/rgcoref.hpp"

namespace fs = std::filesystem;
using namespace rgcoref;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;

#ifdef RGCOREF_GRADCHECK_FAULT
constexpr bool kInjectGradFault = true;
#else
constexpr bool kInjectGradFault = false;
#endif

std::size_t thread_cap() {
  const char* env = std::getenv("RGCN_THREADS");
  if (!env || !*env) return 0;
  try {
    return static_cast<std::size_t>(std::stoul(env));
  } catch (const std::exception&) {
    std::cerr << "warning: ignoring malformed RGCN_THREADS='" << env << "'\n";
    return 0;
  }
}

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& idx) {
  Dataset out;
  out.embedding_dim = ds.embedding_dim;
  for (auto i : idx) out.examples.push_back(ds.examples[i]);
  return out;
}

int cmd_validate_data(const std::string& data_dir) {
  std::vector<Diagnostic> diags;
  Dataset ds;
  try {
    ds = load_dataset(data_dir, &diags);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCheckFailed;
  }
  for (const auto& d : diags) std::cerr << "diagnostic: " << to_string(d) << '\n';
  std::size_t graph_errors = 0;
  for (const auto& e : ds.examples) {
    try {
      const auto sent = e.snippet.sentence_ids();
      build_graph(e.snippet.heads, sent).check_invariants();
    } catch (const std::exception& ex) {
      std::cerr << "diagnostic: " << e.example.id << ": " << ex.what() << '\n';
      ++graph_errors;
    }
  }
  const std::size_t problems = diags.size() + graph_errors;
  std::cout << "examples: " << ds.size() << "\nembedding_dim: " << ds.embedding_dim
            << "\ndiagnostics: " << problems << '\n';
  return problems == 0 ? kExitOk : kExitCheckFailed;
}

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string setting;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

int cmd_train(const TrainArgs& args) {
  if (!fs::is_directory(args.data)) {
    std::cerr << "error: data directory " << args.data << " does not exist\n";
    return kExitUsage;
  }
  RunConfig rc;
  try {
    if (!args.config.empty()) {
      std::ifstream in(args.config);
      if (!in) {
        std::cerr << "error: cannot read config " << args.config << '\n';
        return kExitUsage;
      }
      std::stringstream text;
      text << in.rdbuf();
      rc = parse_run_config(text.str());
    }
    if (!args.setting.empty()) apply(rc, "setting", args.setting);
    if (args.seed) apply(rc, "seed", std::to_string(*args.seed));
    for (const auto& kv : args.overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      apply(rc, kv.substr(0, eq), kv.substr(eq + 1));
    }
    validate(rc);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  Dataset data, test;
  try {
    std::vector<Diagnostic> diags;
    data = load_dataset(args.data, &diags);
    for (const auto& d : diags) std::cerr << "skipped: " << to_string(d) << '\n';
    if (!diags.empty()) std::cerr << diags.size() << " diagnostics while loading " << args.data << '\n';
    if (!rc.test_data.empty()) {
      diags.clear();
      test = load_dataset(rc.test_data, &diags);
      for (const auto& d : diags) std::cerr << "skipped: " << to_string(d) << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  Dataset train = std::move(data);
  if (rc.test_data.empty() && (rc.test_size > 0 || rc.train_size > 0)) {
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(rc.split_seed);
    shuffle(std::span<std::size_t>(order), rng);
    if (rc.test_size + rc.train_size > order.size()) {
      std::cerr << "error: split sizes exceed the " << order.size() << " loaded examples\n";
      return kExitCheckFailed;
    }
    const std::size_t train_n = rc.train_size ? rc.train_size : order.size() - rc.test_size;
    std::vector<std::size_t> te(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(rc.test_size));
    std::vector<std::size_t> tr(order.begin() + static_cast<std::ptrdiff_t>(rc.test_size),
                                order.begin() + static_cast<std::ptrdiff_t>(rc.test_size + train_n));
    std::sort(te.begin(), te.end());
    std::sort(tr.begin(), tr.end());
    test = subset(train, te);
    train = subset(train, tr);
  }
  if (rc.embedding_dim_set && rc.model().embedding_dim != train.embedding_dim) {
    std::cerr << "error: config embedding_dim " << rc.model().embedding_dim << " but data has width "
              << train.embedding_dim << '\n';
    return kExitCheckFailed;
  }
  rc.model().embedding_dim = train.embedding_dim;
  rc.experiment.threads = thread_cap();

  const auto start = std::chrono::steady_clock::now();
  EnsembleResult result;
  try {
    result = run_experiment(train, test, rc.experiment);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCheckFailed;
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  try {
    fs::create_directories(args.out);
    for (std::size_t f = 0; f < result.folds.size(); ++f)
      save_checkpoint(result.folds[f].best, fs::path(args.out) / ("fold_" + std::to_string(f) + ".ckpt"));
    auto report = report_json(result, config_echo(rc));
    report["data"] = {{"train_examples", train.size()}, {"test_examples", test.size()}};
    std::ofstream(fs::path(args.out) / "report.json") << report.dump(2) << '\n';
    const nlohmann::json timing = {{"wall_clock_seconds", seconds}, {"threads", rc.experiment.threads}};
    std::ofstream(fs::path(args.out) / "timing.json") << timing.dump(2) << '\n';
    if (!test.empty()) write_predictions_tsv(fs::path(args.out) / "test_predictions.tsv", test, result.test_predictions);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  if (result.metrics)
    std::cout << "test log-loss " << result.metrics->log_loss << ", micro F1 " << result.metrics->micro_f1 << '\n';
  std::cout << "wrote " << result.folds.size() << " checkpoints and report.json to " << args.out << '\n';
  return kExitOk;
}

int cmd_predict(const std::string& model_dir, const std::string& data_dir, const std::string& out) {
  std::vector<fs::path> files;
  if (fs::is_regular_file(model_dir)) {
    files.push_back(model_dir);
  } else if (fs::is_directory(model_dir)) {
    for (const auto& entry : fs::directory_iterator(model_dir))
      if (entry.path().extension() == ".ckpt") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
  }
  if (files.empty()) {
    std::cerr << "error: no checkpoints under " << model_dir << '\n';
    return kExitUsage;
  }
  std::vector<ParamStore<float>> ckpts;
  Dataset ds;
  try {
    for (const auto& f : files) ckpts.push_back(load_checkpoint<float>(f));
    std::vector<Diagnostic> diags;
    ds = load_dataset(data_dir, &diags);
    for (const auto& d : diags) std::cerr << "skipped: " << to_string(d) << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  std::vector<Prediction> preds;
  try {
    preds = ensemble_predict(ckpts, ds);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCheckFailed;
  }
  try {
    write_predictions_tsv(out, ds, preds);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  std::cout << "averaged " << ckpts.size() << " checkpoint(s) over " << ds.size() << " examples\n";
  return kExitOk;
}

int cmd_gradcheck(const std::string& setting, std::uint64_t seed) {
  std::vector<Setting> settings;
  if (setting == "all") {
    settings.assign(kSettings.begin(), kSettings.end());
  } else {
    try {
      settings.push_back(parse_setting(setting));
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitUsage;
    }
  }
  bool ok = true;
  for (auto s : settings) {
    GradcheckSuiteOptions opts;
    opts.seed = seed;
    opts.inject_fault = kInjectGradFault;
    const auto r = run_gradcheck_suite(s, opts);
    ok &= r.passed();
    std::cout << (r.passed() ? "PASS " : "FAIL ") << to_string(s) << ": max relative error "
              << r.max_rel_error() << " over " << r.eval_mode.coordinates + r.train_mode.coordinates
              << " coordinates";
    const auto& worst = r.eval_mode.max_rel_error >= r.train_mode.max_rel_error ? r.eval_mode : r.train_mode;
    std::cout << " (worst " << worst.worst_param << "[" << worst.worst_index << "] analytic " << worst.analytic
              << " numeric " << worst.numeric << ")";
    std::cout << '\n';
  }
  return ok ? kExitOk : kExitCheckFailed;
}

int cmd_synth(const std::string& out, const SyntheticSpec& spec) {
  try {
    write_dataset(make_synthetic_dataset(spec), out, true);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  std::cout << "wrote " << spec.examples << " synthetic examples to " << out << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gated relational GCN coreference resolver for ambiguous pronouns"};
  app.require_subcommand(1);

  std::string data_dir;
  auto* validate_cmd = app.add_subcommand("validate-data", "Check a dataset directory");
  validate_cmd->add_option("--data", data_dir, "Dataset directory")->required();

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "K-fold ensemble training with evaluation");
  train_cmd->add_option("--config", train_args.config, "key=value configuration file");
  train_cmd->add_option("--data", train_args.data, "Training dataset directory")->required();
  train_cmd->add_option("--out", train_args.out, "Output directory")->required();
  train_cmd->add_option("--setting", train_args.setting, "bert_only, rgcn_only, concat_no_gate or concat_gated");
  train_cmd->add_option("--seed", train_args.seed, "Run seed");
  train_cmd->add_option("--set", train_args.overrides, "Override a configuration key (key=value)");

  std::string model_dir, predict_data, predict_out;
  auto* predict_cmd = app.add_subcommand("predict", "Ensemble predictions as TSV");
  predict_cmd->add_option("--model", model_dir, "Checkpoint directory or file")->required();
  predict_cmd->add_option("--data", predict_data, "Dataset directory")->required();
  predict_cmd->add_option("--out", predict_out, "Output TSV")->required();

  std::string gc_setting = "all";
  std::uint64_t gc_seed = 1;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient check on a micro-batch");
  gradcheck_cmd->add_option("--setting", gc_setting, "Setting name or 'all'");
  gradcheck_cmd->add_option("--seed", gc_seed, "Seed");

  std::string synth_out;
  SyntheticSpec spec;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic dataset");
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_option("--examples", spec.examples, "Example count");
  synth_cmd->add_option("--dim", spec.embedding_dim, "Embedding width");
  synth_cmd->add_option("--signal", spec.signal, "Label signal strength");
  synth_cmd->add_option("--seed", spec.seed, "Seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  if (*validate_cmd) return cmd_validate_data(data_dir);
  if (*train_cmd) return cmd_train(train_args);
  if (*predict_cmd) return cmd_predict(model_dir, predict_data, predict_out);
  if (*gradcheck_cmd) return cmd_gradcheck(gc_setting, gc_seed);
  if (*synth_cmd) return cmd_synth(synth_out, spec);
  return kExitUsage;
}

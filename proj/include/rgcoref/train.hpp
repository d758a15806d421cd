#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "rgcoref/checkpoint.hpp"
#include "rgcoref/corpus.hpp"
#include "rgcoref/graph.hpp"
#include "rgcoref/model.hpp"
#include "rgcoref/nn.hpp"
#include "rgcoref/random.hpp"

namespace rgcoref {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Metrics

inline constexpr double kProbabilityClamp = 1e-15;

/// Multi-class log-loss with natural log; probabilities clamped to
/// [1e-15, 1 - 1e-15].
inline double log_loss(std::span<const Prediction> preds, std::span<const Class> labels) {
  if (preds.empty()) throw std::invalid_argument("log_loss of zero predictions");
  if (preds.size() != labels.size()) throw std::invalid_argument("log_loss: predictions and labels differ in count");
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double p = std::clamp(preds[i][labels[i]], kProbabilityClamp, 1.0 - kProbabilityClamp);
    total -= std::log(p);
  }
  return total / static_cast<double>(preds.size());
}

struct F1Counts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  double f1() const {
    const std::size_t denom = 2 * tp + fp + fn;
    return denom == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  }
};

/// Each prediction's argmax becomes two name decisions (pronoun-A and
/// pronoun-B), scored against the gold coreference flags.
inline F1Counts f1_counts(std::span<const Prediction> preds, std::span<const Class> gold) {
  if (preds.size() != gold.size()) throw std::invalid_argument("micro_f1: predictions and examples differ in count");
  F1Counts c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const Class p = preds[i].argmax();
    for (Class name : {Class::kA, Class::kB}) {
      const bool predicted = p == name;
      const bool actual = gold[i] == name;
      if (predicted && actual) ++c.tp;
      else if (predicted) ++c.fp;
      else if (actual) ++c.fn;
    }
  }
  return c;
}

inline double micro_f1(std::span<const Prediction> preds, std::span<const Class> gold) {
  return f1_counts(preds, gold).f1();
}

inline double micro_f1(std::span<const Prediction> preds, std::span<const GapExample> examples) {
  std::vector<Class> gold;
  gold.reserve(examples.size());
  for (const auto& ex : examples) gold.push_back(gold_class(ex));
  return micro_f1(preds, std::span<const Class>(gold));
}

// ---------------------------------------------------------------------------
// Fold plans

struct FoldPlan {
  std::size_t k = 0;
  std::vector<std::size_t> assignments;  // fold id per example
  std::uint64_t seed = 0;

  std::vector<std::size_t> held_out(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i)
      if (assignments[i] == fold) out.push_back(i);
    return out;
  }
  std::vector<std::size_t> training(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i)
      if (assignments[i] != fold) out.push_back(i);
    return out;
  }
  std::vector<std::size_t> sizes() const {
    std::vector<std::size_t> out(k, 0);
    for (auto a : assignments) ++out[a];
    return out;
  }
};

/// Shuffles 0..n-1 and deals the permutation round-robin into k folds.
inline FoldPlan kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("k-fold split needs k >= 2, got " + std::to_string(k));
  if (n < k) throw std::invalid_argument("cannot split " + std::to_string(n) + " examples into " + std::to_string(k) + " folds");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  shuffle(std::span<std::size_t>(perm), rng);
  FoldPlan plan{k, std::vector<std::size_t>(n), seed};
  for (std::size_t j = 0; j < n; ++j) plan.assignments[perm[j]] = j % k;
  return plan;
}

// ---------------------------------------------------------------------------
// Training

struct TrainOptions {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
};

struct FoldResult {
  ParamStore<float> best;
  std::size_t best_epoch = 0;  // zero-based
  std::vector<double> train_losses;
  std::vector<double> val_losses;
  std::size_t train_size = 0;
  std::size_t val_size = 0;
};

inline std::vector<RelationalGraph> build_graphs(const Dataset& ds) {
  std::vector<RelationalGraph> out;
  out.reserve(ds.size());
  for (const auto& e : ds.examples) {
    const auto sent = e.snippet.sentence_ids();
    out.push_back(build_graph(e.snippet.heads, sent));
  }
  return out;
}

/// Consecutive chunks of `batch_size`; a trailing single example joins the
/// previous chunk so train-mode batch-norm always sees at least 2 rows.
inline std::vector<std::span<const std::size_t>> make_chunks(std::span<const std::size_t> order,
                                                             std::size_t batch_size) {
  std::vector<std::span<const std::size_t>> chunks;
  for (std::size_t start = 0; start < order.size(); start += batch_size)
    chunks.push_back(order.subspan(start, std::min(batch_size, order.size() - start)));
  if (chunks.size() > 1 && chunks.back().size() == 1) {
    const auto merged_start = static_cast<std::size_t>(chunks[chunks.size() - 2].data() - order.data());
    chunks.pop_back();
    chunks.back() = order.subspan(merged_start);
  }
  return chunks;
}

template <typename T>
std::vector<Prediction> predict_indices(const ParamStore<T>& store, const ResolverConfig& cfg, const Dataset& ds,
                                        std::span<const std::size_t> indices,
                                        std::span<const RelationalGraph> graphs, std::size_t batch_size) {
  std::vector<Prediction> out;
  out.reserve(indices.size());
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const auto part = indices.subspan(start, std::min(batch_size, indices.size() - start));
    const auto b = make_batch<T>(ds, part, graphs);
    for (const auto& p : predict(store, cfg, b)) out.push_back(p);
  }
  return out;
}

inline std::vector<Class> labels_of(const Dataset& ds, std::span<const std::size_t> indices) {
  std::vector<Class> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(gold_class(ds.examples.at(i).example));
  return out;
}

/**
 * Trains one model on `train_idx`, evaluating validation log-loss after every
 * epoch, and keeps the parameters with the lowest validation loss (earliest
 * epoch on ties). The learning rate for zero-based epoch e is lr0 * decay^e.
 */
inline FoldResult train_model(const Dataset& ds, std::span<const std::size_t> train_idx,
                              std::span<const std::size_t> val_idx, const ResolverConfig& cfg,
                              const TrainOptions& opts, std::uint64_t seed,
                              std::span<const RelationalGraph> graphs = {}) {
  cfg.validate();
  if (cfg.embedding_dim != ds.embedding_dim)
    throw std::invalid_argument("model embedding_dim " + std::to_string(cfg.embedding_dim) +
                                " does not match dataset width " + std::to_string(ds.embedding_dim));
  if (train_idx.size() < 2) throw std::invalid_argument("training needs at least 2 examples");
  if (val_idx.empty()) throw std::invalid_argument("training needs a nonempty validation set");
  if (opts.epochs == 0 || opts.batch_size < 2) throw std::invalid_argument("epochs >= 1 and batch_size >= 2 required");
  std::vector<RelationalGraph> own_graphs;
  if (graphs.empty()) {
    own_graphs = build_graphs(ds);
    graphs = own_graphs;
  }

  ParamStore<float> store = build_model<float>(cfg, derive_seed(seed, 0));
  Rng rng(derive_seed(seed, 1));
  const auto val_labels = labels_of(ds, val_idx);
  std::vector<std::size_t> order(train_idx.begin(), train_idx.end());

  FoldResult result;
  result.train_size = train_idx.size();
  result.val_size = val_idx.size();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    const double lr = cfg.hyper.learning_rate(epoch);
    shuffle(std::span<std::size_t>(order), rng);
    double weighted = 0.0;
    for (auto chunk : make_chunks(order, opts.batch_size)) {
      const auto b = make_batch<float>(ds, chunk, graphs);
      ForwardOptions<float> fo;
      fo.mode = Mode::kTrain;
      fo.rng = &rng;
      store.zero_grad();
      const float loss = loss_and_grads(store, cfg, b, std::span<const Class>(b.labels), fo);
      if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << "non-finite training loss " << loss << " at epoch " << epoch + 1 << " (lr " << lr << ")";
        throw TrainingError(os.str());
      }
      adam_step(store, cfg.hyper, lr);
      weighted += static_cast<double>(loss) * static_cast<double>(chunk.size());
    }
    result.train_losses.push_back(weighted / static_cast<double>(order.size()));
    const auto preds = predict_indices(store, cfg, ds, val_idx, graphs, opts.batch_size);
    const double val = log_loss(preds, val_labels);
    if (!std::isfinite(val)) {
      std::ostringstream os;
      os << "non-finite validation loss at epoch " << epoch + 1 << " (lr " << lr << ")";
      throw TrainingError(os.str());
    }
    result.val_losses.push_back(val);
    if (val < best) {
      best = val;
      result.best = store;
      result.best_epoch = epoch;
    }
  }
  result.best.metadata()["best_epoch"] = std::to_string(result.best_epoch + 1);
  return result;
}

inline FoldResult train_fold(const Dataset& ds, const FoldPlan& plan, std::size_t fold, const ResolverConfig& cfg,
                             const TrainOptions& opts, std::span<const RelationalGraph> graphs = {}) {
  if (fold >= plan.k) throw std::out_of_range("fold " + std::to_string(fold) + " of " + std::to_string(plan.k));
  if (plan.assignments.size() != ds.size()) throw std::invalid_argument("fold plan does not match dataset size");
  const auto train = plan.training(fold);
  const auto val = plan.held_out(fold);
  auto r = train_model(ds, train, val, cfg, opts, derive_seed(cfg.hyper.seed, 100 + fold), graphs);
  r.best.metadata()["fold"] = std::to_string(fold);
  return r;
}

// ---------------------------------------------------------------------------
// Ensembling

/// Row-wise arithmetic mean of several prediction lists.
inline std::vector<Prediction> average_predictions(const std::vector<std::vector<Prediction>>& per_model) {
  if (per_model.empty()) throw std::invalid_argument("average of zero models");
  const std::size_t n = per_model.front().size();
  std::vector<Prediction> out(n);
  for (const auto& preds : per_model) {
    if (preds.size() != n) throw std::invalid_argument("models predicted different example counts");
    for (std::size_t i = 0; i < n; ++i) {
      out[i].p_a += preds[i].p_a;
      out[i].p_b += preds[i].p_b;
      out[i].p_neither += preds[i].p_neither;
    }
  }
  const double m = static_cast<double>(per_model.size());
  for (auto& p : out) {
    p.p_a /= m;
    p.p_b /= m;
    p.p_neither /= m;
  }
  return out;
}

/// Architecture of a checkpoint, from its embedded config record.
template <typename T>
ResolverConfig checkpoint_config(const ParamStore<T>& store) {
  const auto it = store.metadata().find(kConfigMetadataKey);
  if (it == store.metadata().end()) throw CheckpointError("checkpoint has no config record");
  return parse_config_record(it->second);
}

inline bool same_architecture(const ResolverConfig& a, const ResolverConfig& b) {
  return a.setting == b.setting && a.embedding_dim == b.embedding_dim && a.bert_branch_dim == b.bert_branch_dim &&
         a.rgcn_dim == b.rgcn_dim && a.head_hidden_dim == b.head_hidden_dim && a.rgcn_layers == b.rgcn_layers &&
         a.pooling == b.pooling && a.gate_bias == b.gate_bias;
}

/// Averages the eval-mode predictions of every checkpoint, in the given order.
inline std::vector<Prediction> ensemble_predict(std::span<const ParamStore<float>> checkpoints, const Dataset& ds,
                                                std::size_t batch_size = 32,
                                                std::span<const RelationalGraph> graphs = {}) {
  if (checkpoints.empty()) throw std::invalid_argument("ensemble_predict needs at least one checkpoint");
  const ResolverConfig first = checkpoint_config(checkpoints.front());
  std::vector<ResolverConfig> configs;
  for (const auto& c : checkpoints) {
    configs.push_back(checkpoint_config(c));
    if (!same_architecture(configs.back(), first))
      throw std::invalid_argument("ensemble checkpoints disagree on model configuration");
  }
  if (ds.empty()) return {};
  if (first.embedding_dim != ds.embedding_dim)
    throw std::invalid_argument("checkpoints expect embedding width " + std::to_string(first.embedding_dim) +
                                ", dataset has " + std::to_string(ds.embedding_dim));
  std::vector<RelationalGraph> own;
  if (graphs.empty()) {
    own = build_graphs(ds);
    graphs = own;
  }
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::vector<Prediction>> per_model;
  for (std::size_t m = 0; m < checkpoints.size(); ++m)
    per_model.push_back(predict_indices(checkpoints[m], configs[m], ds, all, graphs, batch_size));
  return average_predictions(per_model);
}

// ---------------------------------------------------------------------------
// Experiments

struct ExperimentConfig {
  ResolverConfig model;
  TrainOptions train;
  std::size_t folds = 5;
  /// Worker threads for fold training; 0 or 1 trains folds sequentially.
  /// Results do not depend on the thread count.
  std::size_t threads = 0;
};

struct Metrics {
  double log_loss = 0.0;
  double micro_f1 = 0.0;
  F1Counts counts;
  std::size_t examples = 0;
};

struct EnsembleResult {
  FoldPlan plan;
  std::vector<FoldResult> folds;  // folds[f].best is fold f's checkpoint
  std::vector<Prediction> test_predictions;
  std::optional<Metrics> metrics;  // absent when the test set is empty

  std::vector<ParamStore<float>> checkpoints() const {
    std::vector<ParamStore<float>> out;
    for (const auto& f : folds) out.push_back(f.best);
    return out;
  }
};

inline Metrics evaluate(std::span<const Prediction> preds, const Dataset& ds) {
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto gold = labels_of(ds, all);
  Metrics m;
  m.examples = ds.size();
  m.log_loss = log_loss(preds, gold);
  m.counts = f1_counts(preds, gold);
  m.micro_f1 = m.counts.f1();
  return m;
}

/// k-fold training on `train`, ensemble prediction and metrics on `test`.
inline EnsembleResult run_experiment(const Dataset& train, const Dataset& test, const ExperimentConfig& cfg) {
  cfg.model.validate();
  if (cfg.folds < 2) throw std::invalid_argument("k-fold ensembling needs folds >= 2");
  if (!test.empty() && test.embedding_dim != train.embedding_dim)
    throw std::invalid_argument("train and test embedding widths differ");
  EnsembleResult result;
  result.plan = kfold_split(train.size(), cfg.folds, cfg.model.hyper.seed);
  const auto graphs = build_graphs(train);
  result.folds.resize(cfg.folds);

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(cfg.folds);
  auto worker = [&] {
    for (std::size_t f; (f = next.fetch_add(1)) < cfg.folds;) {
      try {
        result.folds[f] = train_fold(train, result.plan, f, cfg.model, cfg.train, graphs);
      } catch (...) {
        errors[f] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min(std::max<std::size_t>(cfg.threads, 1), cfg.folds);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  if (!test.empty()) {
    const auto ckpts = result.checkpoints();
    result.test_predictions = ensemble_predict(ckpts, test, cfg.train.batch_size);
    result.metrics = evaluate(result.test_predictions, test);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Reports

inline nlohmann::json report_json(const EnsembleResult& r, const nlohmann::json& config_echo) {
  nlohmann::json j;
  j["config"] = config_echo;
  j["seeds"] = {{"run", r.plan.seed}};
  auto folds = nlohmann::json::array();
  for (std::size_t f = 0; f < r.folds.size(); ++f) {
    const auto& fr = r.folds[f];
    folds.push_back({{"fold", f},
                     {"train_size", fr.train_size},
                     {"val_size", fr.val_size},
                     {"best_epoch", fr.best_epoch + 1},
                     {"best_val_log_loss", fr.val_losses.empty() ? 0.0 : fr.val_losses[fr.best_epoch]},
                     {"train_loss", fr.train_losses},
                     {"val_log_loss", fr.val_losses}});
  }
  j["folds"] = std::move(folds);
  if (r.metrics) {
    const auto& m = *r.metrics;
    j["metrics"] = {{"test_examples", m.examples},
                    {"test_log_loss", m.log_loss},
                    {"test_micro_f1", m.micro_f1},
                    {"tp", m.counts.tp},
                    {"fp", m.counts.fp},
                    {"fn", m.counts.fn}};
  } else {
    j["metrics"] = nullptr;
  }
  return j;
}

/// Writes `ID<TAB>p_A<TAB>p_B<TAB>p_NEITHER` rows with 6 decimals.
inline void write_predictions_tsv(const std::filesystem::path& path, const Dataset& ds,
                                  std::span<const Prediction> preds) {
  if (preds.size() != ds.size()) throw std::invalid_argument("prediction count does not match dataset");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "ID\tA\tB\tNEITHER\n";
  char buf[128];
  for (std::size_t i = 0; i < preds.size(); ++i) {
    std::snprintf(buf, sizeof buf, "\t%.6f\t%.6f\t%.6f\n", preds[i].p_a, preds[i].p_b, preds[i].p_neither);
    out << ds.examples[i].example.id << buf;
  }
}

}  // namespace rgcoref

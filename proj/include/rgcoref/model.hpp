#pragma once

// End-to-end resolver. Frozen token embeddings feed two paths:
//
//   branch: mean-pooled embeddings of A, B and the pronoun, each through a
//           shared FC block (linear -> batch-norm -> ReLU -> dropout)
//   graph:  relational propagation over the dependency graph, then the same
//           three mention poolings over the final node states
//
// Depending on the setting one or both paths are concatenated as
//   [branch(A) | branch(B) | branch(P) | graph(A) | graph(B) | graph(P)]
// and passed to the head: one FC block, then a linear map to 3 logits.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rgcoref/corpus.hpp"
#include "rgcoref/graph.hpp"
#include "rgcoref/nn.hpp"
#include "rgcoref/param_store.hpp"
#include "rgcoref/rgcn.hpp"

namespace rgcoref {

enum class Setting { kBertOnly, kRgcnOnly, kConcatNoGate, kConcatGated };

inline constexpr std::array<Setting, 4> kSettings = {Setting::kBertOnly, Setting::kRgcnOnly,
                                                      Setting::kConcatNoGate, Setting::kConcatGated};

inline std::string_view to_string(Setting s) {
  switch (s) {
    case Setting::kBertOnly: return "bert_only";
    case Setting::kRgcnOnly: return "rgcn_only";
    case Setting::kConcatNoGate: return "concat_no_gate";
    case Setting::kConcatGated: return "concat_gated";
  }
  throw std::invalid_argument("bad setting");
}

inline Setting parse_setting(std::string_view s) {
  for (auto setting : kSettings)
    if (to_string(setting) == s) return setting;
  throw std::invalid_argument("unknown setting '" + std::string(s) +
                              "' (expected bert_only, rgcn_only, concat_no_gate or concat_gated)");
}

inline bool uses_branch(Setting s) { return s != Setting::kRgcnOnly; }
inline bool uses_graph(Setting s) { return s != Setting::kBertOnly; }
inline bool uses_gates(Setting s) { return s == Setting::kRgcnOnly || s == Setting::kConcatGated; }

struct ResolverConfig {
  Setting setting = Setting::kConcatGated;
  std::size_t embedding_dim = 1024;
  std::size_t bert_branch_dim = 512;
  std::size_t rgcn_dim = 256;
  std::size_t head_hidden_dim = 512;
  std::size_t rgcn_layers = 1;
  std::string pooling = "mean";
  bool gate_bias = true;
  double gate_bias_init = 1.0;
  Hyper hyper;

  void validate() const {
    if (embedding_dim == 0 || bert_branch_dim == 0 || rgcn_dim == 0 || head_hidden_dim == 0)
      throw std::invalid_argument("model widths must be positive");
    if (uses_graph(setting) && rgcn_layers == 0)
      throw std::invalid_argument("graph settings need at least one relational layer");
    if (pooling != "mean") throw std::invalid_argument("only mean pooling is supported");
    hyper.validate();
  }

  std::size_t feature_dim() const {
    return (uses_branch(setting) ? 3 * bert_branch_dim : 0) + (uses_graph(setting) ? 3 * rgcn_dim : 0);
  }
};

/// Flat key=value rendering of the architecture fields, stored in checkpoints.
inline std::string config_record(const ResolverConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "setting=" << to_string(c.setting) << '\n'
     << "embedding_dim=" << c.embedding_dim << '\n'
     << "bert_branch_dim=" << c.bert_branch_dim << '\n'
     << "rgcn_dim=" << c.rgcn_dim << '\n'
     << "head_hidden_dim=" << c.head_hidden_dim << '\n'
     << "rgcn_layers=" << c.rgcn_layers << '\n'
     << "pooling=" << c.pooling << '\n'
     << "gate_bias=" << (c.gate_bias ? "true" : "false") << '\n'
     << "bn_eps=" << c.hyper.bn_eps << '\n'
     << "seed=" << c.hyper.seed << '\n';
  return os.str();
}

inline ResolverConfig parse_config_record(std::string_view record) {
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(record)};
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::invalid_argument(std::string("config record lacks '") + key + "'");
    return it->second;
  };
  ResolverConfig c;
  c.setting = parse_setting(get("setting"));
  c.embedding_dim = std::stoul(get("embedding_dim"));
  c.bert_branch_dim = std::stoul(get("bert_branch_dim"));
  c.rgcn_dim = std::stoul(get("rgcn_dim"));
  c.head_hidden_dim = std::stoul(get("head_hidden_dim"));
  c.rgcn_layers = std::stoul(get("rgcn_layers"));
  c.pooling = get("pooling");
  c.gate_bias = get("gate_bias") == "true";
  c.hyper.bn_eps = std::stod(get("bn_eps"));
  c.hyper.seed = std::stoull(get("seed"));
  return c;
}

inline constexpr const char* kConfigMetadataKey = "config";

/// Class probabilities of one example.
struct Prediction {
  double p_a = 0.0;
  double p_b = 0.0;
  double p_neither = 0.0;

  double operator[](Class c) const {
    return c == Class::kA ? p_a : c == Class::kB ? p_b : p_neither;
  }
  Class argmax() const {
    if (p_a >= p_b && p_a >= p_neither) return Class::kA;
    if (p_b >= p_neither) return Class::kB;
    return Class::kNeither;
  }
  friend bool operator==(const Prediction&, const Prediction&) = default;
};

// ---------------------------------------------------------------------------
// Parameter naming

namespace names {
inline std::string rgcn(std::size_t layer, Relation r, const char* leaf) {
  return "rgcn." + std::to_string(layer) + "." + std::string(to_string(r)) + "." + leaf;
}
inline constexpr const char* kBranchW = "branch.fc.W";
inline constexpr const char* kBranchB = "branch.fc.b";
inline constexpr const char* kBranchBn = "branch.bn";
inline constexpr const char* kHeadW = "head.fc.W";
inline constexpr const char* kHeadB = "head.fc.b";
inline constexpr const char* kHeadBn = "head.bn";
inline constexpr const char* kOutW = "head.out.W";
inline constexpr const char* kOutB = "head.out.b";
}  // namespace names

namespace detail {

template <typename T>
void add_batchnorm(ParamStore<T>& store, const std::string& prefix, std::size_t width) {
  store.add(prefix + ".gamma", {width}).value.fill(T(1));
  store.add(prefix + ".beta", {width});
  store.add(prefix + ".running_mean", {width}, false);
  store.add(prefix + ".running_var", {width}, false).value.fill(T(1));
}

template <typename T>
void add_linear(ParamStore<T>& store, const std::string& w, const std::string& b, std::size_t in,
                std::size_t out, Rng& rng) {
  xavier_uniform(store.add(w, {in, out}).value, in, out, rng);
  store.add(b, {out});
}

}  // namespace detail

/// Allocates and initializes the parameters of `config.setting` only.
template <typename T>
ParamStore<T> build_model(const ResolverConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  ParamStore<T> store;
  if (uses_branch(config.setting)) {
    detail::add_linear(store, names::kBranchW, names::kBranchB, config.embedding_dim, config.bert_branch_dim, rng);
    detail::add_batchnorm(store, names::kBranchBn, config.bert_branch_dim);
  }
  if (uses_graph(config.setting)) {
    const bool gated = uses_gates(config.setting);
    for (std::size_t l = 0; l < config.rgcn_layers; ++l) {
      const std::size_t din = l == 0 ? config.embedding_dim : config.rgcn_dim;
      for (auto r : kRelations) {
        xavier_uniform(store.add(names::rgcn(l, r, "W"), {din, config.rgcn_dim}).value, din, config.rgcn_dim, rng);
        if (!gated) continue;
        xavier_uniform(store.add(names::rgcn(l, r, "gate_w"), {din}).value, din, 1, rng);
        if (config.gate_bias)
          store.add(names::rgcn(l, r, "gate_b"), {1}).value.fill(static_cast<T>(config.gate_bias_init));
      }
    }
  }
  detail::add_linear(store, names::kHeadW, names::kHeadB, config.feature_dim(), config.head_hidden_dim, rng);
  detail::add_batchnorm(store, names::kHeadBn, config.head_hidden_dim);
  detail::add_linear(store, names::kOutW, names::kOutB, config.head_hidden_dim, kNumClasses, rng);
  store.metadata()[kConfigMetadataKey] = config_record(config);
  store.metadata()["seed"] = std::to_string(seed);
  return store;
}

template <typename T>
RgcnLayerView<T> rgcn_layer_view(const ParamStore<T>& store, std::size_t layer, bool gated) {
  RgcnLayerView<T> v;
  for (auto r : kRelations) {
    const auto ri = index_of(r);
    v.weight[ri] = &store.value(names::rgcn(layer, r, "W"));
    if (!gated) continue;
    v.gate_weight[ri] = &store.value(names::rgcn(layer, r, "gate_w"));
    const auto bias = names::rgcn(layer, r, "gate_b");
    v.gate_bias[ri] = store.contains(bias) ? store.value(bias).data() : nullptr;
  }
  return v;
}

// ---------------------------------------------------------------------------
// Mention pooling

/// Mean of rows [span.begin, span.end) of H.
template <typename T>
Tensor<T> pool_mention(const Tensor<T>& H, TokenRange span) {
  if (span.empty()) throw std::invalid_argument("pool_mention: empty span");
  if (span.end > H.rows())
    throw std::out_of_range("pool_mention: span [" + std::to_string(span.begin) + ", " + std::to_string(span.end) +
                            ") outside " + std::to_string(H.rows()) + " rows");
  Tensor<T> out = Tensor<T>::vector(H.cols());
  for (std::size_t r = span.begin; r < span.end; ++r) {
    auto row = H.row(r);
    for (std::size_t j = 0; j < row.size(); ++j) out[j] += row[j];
  }
  const T n = static_cast<T>(span.size());
  for (auto& x : out.values()) x /= n;
  return out;
}

namespace detail {

inline std::array<TokenRange, 3> ordered(const MentionSpans& s) { return {s.a, s.b, s.pronoun}; }

/// Row 3i+k holds the pooled mention k (A, B, pronoun) of example i, so a
/// row-major reshape to [N x 3D] yields the A|B|P concatenation.
template <typename T>
Tensor<T> pool_stacked(const Tensor<T>& H, std::span<const MentionSpans> spans) {
  Tensor<T> out = Tensor<T>::matrix(3 * spans.size(), H.cols());
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const auto parts = ordered(spans[i]);
    for (std::size_t k = 0; k < 3; ++k) {
      const auto pooled = pool_mention(H, parts[k]);
      std::copy(pooled.values().begin(), pooled.values().end(), out.row(3 * i + k).begin());
    }
  }
  return out;
}

template <typename T>
void pool_stacked_backward(const Tensor<T>& dpooled, std::span<const MentionSpans> spans, Tensor<T>& dH) {
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const auto parts = ordered(spans[i]);
    for (std::size_t k = 0; k < 3; ++k) {
      const T inv = T(1) / static_cast<T>(parts[k].size());
      auto src = dpooled.row(3 * i + k);
      for (std::size_t r = parts[k].begin; r < parts[k].end; ++r) {
        auto dst = dH.row(r);
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j] * inv;
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Batches

/// Several examples as one disjoint-union graph. Spans index batch nodes.
template <typename T>
struct Batch {
  BatchedGraph graph;
  Tensor<T> embeddings;  // [nodes x D]
  std::vector<MentionSpans> spans;
  std::vector<Class> labels;

  std::size_t size() const { return spans.size(); }
};

/// Assembles a batch from dataset rows. `graphs` holds one prebuilt graph per
/// dataset example; when empty, graphs are built from the snippets.
template <typename T>
Batch<T> make_batch(const Dataset& ds, std::span<const std::size_t> indices,
                    std::span<const RelationalGraph> graphs = {}) {
  if (indices.empty()) throw std::invalid_argument("make_batch: no examples");
  std::vector<RelationalGraph> built;
  std::vector<const RelationalGraph*> parts;
  if (graphs.empty()) {
    built.reserve(indices.size());
    for (auto i : indices) {
      const auto& s = ds.examples.at(i).snippet;
      const auto sent = s.sentence_ids();
      built.push_back(build_graph(s.heads, sent));
    }
    for (const auto& g : built) parts.push_back(&g);
  } else {
    for (auto i : indices) parts.push_back(&graphs[i]);
  }
  Batch<T> b;
  b.graph = batch(std::span<const RelationalGraph* const>(parts));
  b.embeddings = Tensor<T>::matrix(b.graph.graph.num_nodes(), ds.embedding_dim);
  std::size_t row = 0;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto& e = ds.examples.at(indices[k]);
    const auto& emb = e.snippet.embeddings;
    std::copy(emb.values().begin(), emb.values().end(), b.embeddings.data() + row * ds.embedding_dim);
    const std::size_t off = b.graph.boundaries[k].first;
    auto shift = [off](TokenRange r) { return TokenRange{r.begin + off, r.end + off}; };
    b.spans.push_back({shift(e.spans.a), shift(e.spans.b), shift(e.spans.pronoun)});
    b.labels.push_back(gold_class(e.example));
    row += e.snippet.size();
  }
  return b;
}

// ---------------------------------------------------------------------------
// Forward and backward

template <typename T>
struct ForwardOptions {
  Mode mode = Mode::kEval;
  Rng* rng = nullptr;  // dropout source, required in train mode when p > 0
  std::optional<T> pinned_gate;  // test hook: replaces every gate value
};

template <typename T>
struct FcBlockCache {
  Tensor<T> input;
  Tensor<T> normalized;  // batch-norm output, pre-ReLU
  BatchNormCache<T> bn;
  Tensor<T> mask;
};

template <typename T>
struct ModelCache {
  std::vector<MentionSpans> spans;
  FcBlockCache<T> branch;
  std::vector<PropagationCache<T>> layers;
  FcBlockCache<T> head;
  Tensor<T> head_output;  // input of the output linear
  std::size_t branch_width = 0;
  std::size_t graph_width = 0;
};

namespace detail {

template <typename T>
Tensor<T> fc_block(ParamStore<T>& store, const char* w, const char* b, const std::string& bn, const Tensor<T>& x,
                   const ResolverConfig& cfg, const ForwardOptions<T>& opts, FcBlockCache<T>* cache) {
  Tensor<T> z = linear(x, store.value(w), store.value(b));
  BatchNormCache<T> bn_cache;
  Tensor<T> normalized =
      batchnorm(z,
                BatchNormParams<T>{store.value(bn + ".gamma"), store.value(bn + ".beta"),
                                   store.value(bn + ".running_mean"), store.value(bn + ".running_var")},
                opts.mode, cfg.hyper.bn_eps, cfg.hyper.bn_momentum, cache ? &bn_cache : nullptr);
  Tensor<T> a = relu(normalized);
  Tensor<T> mask;
  Tensor<T> y = a;
  if (opts.mode == Mode::kTrain && cfg.hyper.dropout_p > 0.0) {
    if (!opts.rng) throw std::invalid_argument("train-mode forward with dropout needs an rng");
    y = dropout(a, cfg.hyper.dropout_p, opts.mode, *opts.rng, &mask);
  } else {
    mask = Tensor<T>(a.shape(), T(1));
  }
  if (cache) {
    cache->input = x;
    cache->normalized = std::move(normalized);
    cache->bn = std::move(bn_cache);
    cache->mask = std::move(mask);
  }
  return y;
}

/// Accumulates parameter gradients into the store and returns d(input).
template <typename T>
Tensor<T> fc_block_backward(ParamStore<T>& store, const char* w, const char* b, const std::string& bn,
                            const FcBlockCache<T>& cache, const Tensor<T>& dy, bool input_grad = true) {
  Tensor<T> da = dropout_backward(cache.mask, dy);
  Tensor<T> dn = relu_backward(cache.normalized, da);
  auto bg = batchnorm_backward(cache.bn, store.value(bn + ".gamma"), dn);
  store.grad(bn + ".gamma") += bg.dgamma;
  store.grad(bn + ".beta") += bg.dbeta;
  const Tensor<T>& W = store.value(w);
  store.grad(w) += matmul_tn(cache.input, bg.dx);
  Tensor<T> db = Tensor<T>::vector(W.cols());
  for (std::size_t r = 0; r < bg.dx.rows(); ++r)
    for (std::size_t c = 0; c < bg.dx.cols(); ++c) db[c] += bg.dx(r, c);
  store.grad(b) += db;
  if (!input_grad) return {};
  return matmul_nt(bg.dx, W);
}

}  // namespace detail

/// Logits [N x 3]. Train mode updates batch-norm running statistics.
template <typename T>
Tensor<T> forward_logits(ParamStore<T>& store, const ResolverConfig& cfg, const Batch<T>& batch,
                         const ForwardOptions<T>& opts = {}, ModelCache<T>* cache = nullptr) {
  const std::size_t n = batch.size();
  if (n == 0) throw std::invalid_argument("forward: empty batch");
  if (batch.embeddings.cols() != cfg.embedding_dim)
    throw ShapeError("forward: embeddings have width " + std::to_string(batch.embeddings.cols()) +
                     ", model expects " + std::to_string(cfg.embedding_dim));
  if (batch.embeddings.rows() != batch.graph.graph.num_nodes())
    throw ShapeError("forward: embedding rows do not match graph nodes");
  for (const auto& s : batch.spans)
    for (auto r : detail::ordered(s))
      if (r.empty() || r.end > batch.embeddings.rows())
        throw std::invalid_argument("forward: mention span outside the batch graph");

  std::vector<const Tensor<T>*> parts;
  Tensor<T> branch_out, graph_out;
  if (uses_branch(cfg.setting)) {
    const Tensor<T> pooled = detail::pool_stacked(batch.embeddings, batch.spans);
    branch_out = detail::fc_block(store, names::kBranchW, names::kBranchB, names::kBranchBn, pooled, cfg, opts,
                                  cache ? &cache->branch : nullptr);
    branch_out.reshape({n, 3 * cfg.bert_branch_dim});
    parts.push_back(&branch_out);
  }
  if (uses_graph(cfg.setting)) {
    const bool gated = uses_gates(cfg.setting);
    if (cache) cache->layers.assign(cfg.rgcn_layers, {});
    Tensor<T> h = batch.embeddings;
    for (std::size_t l = 0; l < cfg.rgcn_layers; ++l) {
      const auto view = rgcn_layer_view(store, l, gated);
      auto* lc = cache ? &cache->layers[l] : nullptr;
      h = gated ? gated_rgcn_forward(batch.graph.graph, h, view, lc, opts.pinned_gate)
                : rgcn_forward(batch.graph.graph, h, view, lc);
    }
    graph_out = detail::pool_stacked(h, batch.spans);
    graph_out.reshape({n, 3 * cfg.rgcn_dim});
    parts.push_back(&graph_out);
  }
  const Tensor<T> features = parts.size() == 1 ? *parts.front() : concat_cols(parts);
  Tensor<T> hidden =
      detail::fc_block(store, names::kHeadW, names::kHeadB, names::kHeadBn, features, cfg, opts, cache ? &cache->head : nullptr);
  Tensor<T> logits = linear(hidden, store.value(names::kOutW), store.value(names::kOutB));
  if (cache) {
    cache->spans = batch.spans;
    cache->head_output = std::move(hidden);
    cache->branch_width = uses_branch(cfg.setting) ? 3 * cfg.bert_branch_dim : 0;
    cache->graph_width = uses_graph(cfg.setting) ? 3 * cfg.rgcn_dim : 0;
  }
  return logits;
}

/// Reverse pass from d(logits); accumulates into the store's gradients.
template <typename T>
void backward(ParamStore<T>& store, const ResolverConfig& cfg, const Batch<T>& batch, const ModelCache<T>& cache,
              const Tensor<T>& dlogits) {
  const std::size_t n = batch.size();
  auto out = linear_backward(cache.head_output, store.value(names::kOutW), dlogits);
  store.grad(names::kOutW) += out.dW;
  store.grad(names::kOutB) += out.db;
  const Tensor<T> dfeatures =
      detail::fc_block_backward(store, names::kHeadW, names::kHeadB, names::kHeadBn, cache.head, out.dx);

  if (cache.branch_width > 0) {
    Tensor<T> dbranch = slice_cols(dfeatures, 0, cache.branch_width);
    dbranch.reshape({3 * n, cfg.bert_branch_dim});
    detail::fc_block_backward(store, names::kBranchW, names::kBranchB, names::kBranchBn, cache.branch, dbranch,
                              false);
  }
  if (cache.graph_width > 0) {
    Tensor<T> dpooled = slice_cols(dfeatures, cache.branch_width, cache.graph_width);
    dpooled.reshape({3 * n, cfg.rgcn_dim});
    Tensor<T> dh = Tensor<T>::matrix(batch.graph.graph.num_nodes(), cfg.rgcn_dim);
    detail::pool_stacked_backward(dpooled, cache.spans, dh);
    const bool gated = uses_gates(cfg.setting);
    for (std::size_t l = cfg.rgcn_layers; l-- > 0;) {
      const auto view = rgcn_layer_view(store, l, gated);
      auto g = rgcn_backward(batch.graph.graph, view, cache.layers[l], dh, l > 0);
      for (auto r : kRelations) {
        const auto ri = index_of(r);
        store.grad(names::rgcn(l, r, "W")) += g.dW[ri];
        if (!gated) continue;
        store.grad(names::rgcn(l, r, "gate_w")) += g.dgate_w[ri];
        const auto bias = names::rgcn(l, r, "gate_b");
        if (store.contains(bias)) store.grad(bias)[0] += g.dgate_b[ri];
      }
      dh = std::move(g.dH);
    }
  }
}

/// Cross-entropy plus L2 over weight matrices; gradients accumulate into the store.
template <typename T>
T loss_and_grads(ParamStore<T>& store, const ResolverConfig& cfg, const Batch<T>& batch,
                 std::span<const Class> labels, const ForwardOptions<T>& opts = {}) {
  ModelCache<T> cache;
  const Tensor<T> logits = forward_logits(store, cfg, batch, opts, &cache);
  auto xent = softmax_xent(logits, labels);
  backward(store, cfg, batch, cache, xent.dlogits);
  return xent.loss + l2_penalty(store, cfg.hyper.l2_lambda);
}

/// Loss without gradients, same terms as loss_and_grads.
template <typename T>
T loss_only(ParamStore<T>& store, const ResolverConfig& cfg, const Batch<T>& batch, std::span<const Class> labels,
            const ForwardOptions<T>& opts = {}) {
  const Tensor<T> logits = forward_logits(store, cfg, batch, opts);
  T l2 = T(0);
  if (cfg.hyper.l2_lambda != 0.0)
    for (const auto& [name, p] : store)
      if (p.trainable && is_weight_matrix(name))
        for (T v : p.value.values()) l2 += static_cast<T>(cfg.hyper.l2_lambda) * v * v;
  return softmax_xent(logits, labels).loss + l2;
}

/// Eval-mode class probabilities.
template <typename T>
std::vector<Prediction> predict(const ParamStore<T>& store, const ResolverConfig& cfg, const Batch<T>& batch,
                                std::optional<T> pinned_gate = std::nullopt) {
  ForwardOptions<T> opts;
  opts.pinned_gate = pinned_gate;
  // Eval mode reads the running statistics without writing them.
  auto& mutable_store = const_cast<ParamStore<T>&>(store);
  const Tensor<T> probs = softmax_rows(forward_logits(mutable_store, cfg, batch, opts));
  std::vector<Prediction> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < probs.rows(); ++i)
    out.push_back({static_cast<double>(probs(i, 0)), static_cast<double>(probs(i, 1)),
                   static_cast<double>(probs(i, 2))});
  return out;
}

}  // namespace rgcoref

#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rgcoref/graph.hpp"
#include "rgcoref/nn.hpp"
#include "rgcoref/tensor.hpp"

namespace rgcoref {

/// Non-owning view of one relational layer's parameters. Bias-free
/// propagation: only the gates may carry a (per-relation scalar) bias.
template <typename T>
struct RgcnLayerView {
  std::array<const Tensor<T>*, kNumRelations> weight{};       // [Din x Dout] each
  std::array<const Tensor<T>*, kNumRelations> gate_weight{};  // [Din] each; unused when ungated
  std::array<const T*, kNumRelations> gate_bias{};            // null disables the bias
};

/// Owning parameter set, mostly for tests and tools.
template <typename T>
struct RgcnLayerParams {
  std::array<Tensor<T>, kNumRelations> weight;
  std::array<Tensor<T>, kNumRelations> gate_weight;
  std::array<T, kNumRelations> gate_bias{};
  bool use_gate_bias = true;

  static RgcnLayerParams zeros(std::size_t din, std::size_t dout) {
    RgcnLayerParams p;
    for (std::size_t r = 0; r < kNumRelations; ++r) {
      p.weight[r] = Tensor<T>::matrix(din, dout);
      p.gate_weight[r] = Tensor<T>::vector(din);
    }
    return p;
  }

  RgcnLayerView<T> view() const {
    RgcnLayerView<T> v;
    for (std::size_t r = 0; r < kNumRelations; ++r) {
      v.weight[r] = &weight[r];
      v.gate_weight[r] = &gate_weight[r];
      v.gate_bias[r] = use_gate_bias ? &gate_bias[r] : nullptr;
    }
    return v;
  }
};

enum class Propagation { kGcn, kRgcn, kGatedRgcn };

/// State retained by a forward pass for its backward pass.
template <typename T>
struct PropagationCache {
  Propagation kind = Propagation::kRgcn;
  bool valid = false;
  bool gates_pinned = false;
  Tensor<T> input;
  std::array<Tensor<T>, kNumRelations> messages;  // H W_r; GCN uses slot 0 only
  std::array<std::vector<T>, kNumRelations> gates;  // per sender node, gated only
  Tensor<T> output;
};

template <typename T>
struct RgcnLayerGrads {
  Tensor<T> dH;
  std::array<Tensor<T>, kNumRelations> dW;
  std::array<Tensor<T>, kNumRelations> dgate_w;
  std::array<T, kNumRelations> dgate_b{};
};

template <typename T>
struct GcnGrads {
  Tensor<T> dH;
  Tensor<T> dW;
};

namespace detail {

template <typename T>
void check_propagation_dims(const RelationalGraph& g, const Tensor<T>& H, const Tensor<T>& W,
                            const char* what) {
  if (H.rows() != g.num_nodes())
    throw ShapeError(std::string(what) + ": " + std::to_string(H.rows()) + " node states for " +
                     std::to_string(g.num_nodes()) + " nodes");
  if (W.rows() != H.cols())
    throw ShapeError(std::string(what) + ": weight " + shape_string(W.shape()) + " vs states " +
                     shape_string(H.shape()));
}

template <typename T>
void check_layer_view(const RelationalGraph& g, const Tensor<T>& H, const RgcnLayerView<T>& p,
                      bool gated, const char* what) {
  for (std::size_t r = 0; r < kNumRelations; ++r) {
    if (!p.weight[r]) throw std::invalid_argument(std::string(what) + ": missing relation weight");
    check_propagation_dims(g, H, *p.weight[r], what);
    if (p.weight[r]->cols() != p.weight[0]->cols())
      throw ShapeError(std::string(what) + ": relation weights disagree in output width");
    if (gated && (!p.gate_weight[r] || p.gate_weight[r]->size() != H.cols()))
      throw ShapeError(std::string(what) + ": gate weight must have " + std::to_string(H.cols()) +
                       " entries");
  }
}

/// Sigmoid(H w_r + b_r) for every node acting as a sender.
template <typename T>
std::vector<T> sender_gates(const Tensor<T>& H, const Tensor<T>& w, const T* bias) {
  std::vector<T> g(H.rows());
  for (std::size_t u = 0; u < H.rows(); ++u) {
    T s = bias ? *bias : T(0);
    auto row = H.row(u);
    for (std::size_t j = 0; j < row.size(); ++j) s += row[j] * w[j];
    g[u] = sigmoid(s);
  }
  return g;
}

/// Z[v] = sum_r (1/c_{v,r}) sum_{u in N_r(v)} g_r[u] M_r[u], then ReLU.
/// Relations are visited in fixed order and each relation's neighbor sum is
/// formed before normalization.
template <typename T>
Tensor<T> relational_aggregate(const RelationalGraph& g,
                               const std::array<Tensor<T>, kNumRelations>& messages,
                               const std::array<std::vector<T>, kNumRelations>* gates) {
  const std::size_t dout = messages[0].cols();
  Tensor<T> z = Tensor<T>::matrix(g.num_nodes(), dout);
  std::vector<T> acc(dout);
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    auto zv = z.row(v);
    for (auto r : kRelations) {
      const auto in = g.incoming(v, r);
      if (in.empty()) continue;
      const auto ri = index_of(r);
      std::fill(acc.begin(), acc.end(), T(0));
      for (auto k : in) {
        const auto u = g.edges()[k].src;
        auto mu = messages[ri].row(u);
        if (gates) {
          const T gu = (*gates)[ri][u];
          for (std::size_t j = 0; j < dout; ++j) acc[j] += gu * mu[j];
        } else {
          for (std::size_t j = 0; j < dout; ++j) acc[j] += mu[j];
        }
      }
      const T c = static_cast<T>(in.size());
      for (std::size_t j = 0; j < dout; ++j) zv[j] += acc[j] / c;
    }
  }
  return relu(z);
}

template <typename T>
Tensor<T> relational_forward(const RelationalGraph& g, const Tensor<T>& H, const RgcnLayerView<T>& p,
                             bool gated, std::optional<T> pinned_gate, PropagationCache<T>* cache) {
  check_layer_view(g, H, p, gated, gated ? "gated_rgcn_forward" : "rgcn_forward");
  std::array<Tensor<T>, kNumRelations> messages;
  for (std::size_t r = 0; r < kNumRelations; ++r) messages[r] = matmul(H, *p.weight[r]);
  std::array<std::vector<T>, kNumRelations> gates;
  if (gated) {
    for (std::size_t r = 0; r < kNumRelations; ++r)
      gates[r] = pinned_gate ? std::vector<T>(H.rows(), *pinned_gate)
                             : sender_gates(H, *p.gate_weight[r], p.gate_bias[r]);
  }
  Tensor<T> out = relational_aggregate(g, messages, gated ? &gates : nullptr);
  if (cache) {
    cache->kind = gated ? Propagation::kGatedRgcn : Propagation::kRgcn;
    cache->valid = true;
    cache->gates_pinned = pinned_gate.has_value();
    cache->input = H;
    cache->messages = std::move(messages);
    cache->gates = std::move(gates);
    cache->output = out;
  }
  return out;
}

}  // namespace detail

/// Plain GCN layer: h_v' = ReLU((1/c_v) sum_{u in N(v)} W h_u), relation types
/// ignored, c_v the total in-degree. Requires self-loops so c_v >= 1.
template <typename T>
Tensor<T> gcn_forward(const RelationalGraph& g, const Tensor<T>& H, const Tensor<T>& W,
                      PropagationCache<T>* cache = nullptr) {
  detail::check_propagation_dims(g, H, W, "gcn_forward");
  Tensor<T> m = matmul(H, W);
  Tensor<T> z = Tensor<T>::matrix(g.num_nodes(), W.cols());
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    const std::size_t c = g.in_degree(v);
    if (c == 0) throw GraphError("gcn_forward: node " + std::to_string(v) + " has no in-edges");
    auto zv = z.row(v);
    for (auto r : kRelations)
      for (auto k : g.incoming(v, r)) {
        auto mu = m.row(g.edges()[k].src);
        for (std::size_t j = 0; j < zv.size(); ++j) zv[j] += mu[j];
      }
    for (auto& x : zv) x /= static_cast<T>(c);
  }
  Tensor<T> out = relu(z);
  if (cache) {
    cache->kind = Propagation::kGcn;
    cache->valid = true;
    cache->gates_pinned = false;
    cache->input = H;
    cache->messages = {};
    cache->messages[0] = std::move(m);
    cache->gates = {};
    cache->output = out;
  }
  return out;
}

/// Relational layer without gates.
template <typename T>
Tensor<T> rgcn_forward(const RelationalGraph& g, const Tensor<T>& H, const RgcnLayerView<T>& p,
                       PropagationCache<T>* cache = nullptr) {
  return detail::relational_forward(g, H, p, false, std::optional<T>{}, cache);
}

/// Relational layer where each message is scaled by its sender's gate.
/// `pinned_gate` replaces every gate by a constant (test hook).
template <typename T>
Tensor<T> gated_rgcn_forward(const RelationalGraph& g, const Tensor<T>& H, const RgcnLayerView<T>& p,
                             PropagationCache<T>* cache = nullptr,
                             std::optional<T> pinned_gate = std::nullopt) {
  return detail::relational_forward(g, H, p, true, pinned_gate, cache);
}

/// Gate value of every edge, aligned with g.edges().
template <typename T>
std::vector<T> gate_values(const RelationalGraph& g, const Tensor<T>& H, const RgcnLayerView<T>& p) {
  if (H.rows() != g.num_nodes()) throw ShapeError("gate_values: state rows vs node count");
  std::array<std::vector<T>, kNumRelations> per_sender;
  for (std::size_t r = 0; r < kNumRelations; ++r) {
    if (!p.gate_weight[r] || p.gate_weight[r]->size() != H.cols())
      throw ShapeError("gate_values: gate weight width");
    per_sender[r] = detail::sender_gates(H, *p.gate_weight[r], p.gate_bias[r]);
  }
  std::vector<T> out;
  out.reserve(g.edges().size());
  for (const auto& e : g.edges()) out.push_back(per_sender[index_of(e.rel)][e.src]);
  return out;
}

template <typename T>
GcnGrads<T> gcn_backward(const RelationalGraph& g, const Tensor<T>& W, const PropagationCache<T>& cache,
                         const Tensor<T>& dout) {
  if (!cache.valid || cache.kind != Propagation::kGcn)
    throw std::logic_error("gcn_backward: missing forward cache");
  const Tensor<T> dz = relu_backward(cache.output, dout);
  Tensor<T> dm = Tensor<T>::matrix(g.num_nodes(), W.cols());
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    const T c = static_cast<T>(g.in_degree(v));
    auto dzv = dz.row(v);
    for (auto r : kRelations)
      for (auto k : g.incoming(v, r)) {
        auto dmu = dm.row(g.edges()[k].src);
        for (std::size_t j = 0; j < dzv.size(); ++j) dmu[j] += dzv[j] / c;
      }
  }
  return {matmul_nt(dm, W), matmul_tn(cache.input, dm)};
}

/// Backward pass shared by rgcn_forward and gated_rgcn_forward. With
/// `input_grad` false, dH is left empty (frozen inputs).
template <typename T>
RgcnLayerGrads<T> rgcn_backward(const RelationalGraph& g, const RgcnLayerView<T>& p,
                                const PropagationCache<T>& cache, const Tensor<T>& dout,
                                bool input_grad = true) {
  if (!cache.valid || cache.kind == Propagation::kGcn)
    throw std::logic_error("rgcn_backward: missing forward cache");
  const bool gated = cache.kind == Propagation::kGatedRgcn;
  const Tensor<T>& H = cache.input;
  const std::size_t n = g.num_nodes();
  const std::size_t dout_w = cache.output.cols();
  const Tensor<T> dz = relu_backward(cache.output, dout);

  std::array<Tensor<T>, kNumRelations> dm;
  std::array<std::vector<T>, kNumRelations> dgate;
  for (std::size_t r = 0; r < kNumRelations; ++r) {
    dm[r] = Tensor<T>::matrix(n, dout_w);
    if (gated) dgate[r].assign(n, T(0));
  }
  for (std::size_t v = 0; v < n; ++v) {
    auto dzv = dz.row(v);
    for (auto r : kRelations) {
      const auto in = g.incoming(v, r);
      if (in.empty()) continue;
      const auto ri = index_of(r);
      const T c = static_cast<T>(in.size());
      for (auto k : in) {
        const auto u = g.edges()[k].src;
        auto dmu = dm[ri].row(u);
        const T gu = gated ? cache.gates[ri][u] : T(1);
        for (std::size_t j = 0; j < dout_w; ++j) dmu[j] += gu * dzv[j] / c;
        if (gated) {
          auto mu = cache.messages[ri].row(u);
          T dot = T(0);
          for (std::size_t j = 0; j < dout_w; ++j) dot += mu[j] * dzv[j];
          dgate[ri][u] += dot / c;
        }
      }
    }
  }

  RgcnLayerGrads<T> grads;
  if (input_grad) grads.dH = Tensor<T>::matrix(n, H.cols());
  for (std::size_t r = 0; r < kNumRelations; ++r) {
    grads.dW[r] = matmul_tn(H, dm[r]);
    if (input_grad) grads.dH += matmul_nt(dm[r], *p.weight[r]);
    grads.dgate_w[r] = Tensor<T>::vector(H.cols());
    grads.dgate_b[r] = T(0);
    if (!gated || cache.gates_pinned) continue;
    const auto& w = *p.gate_weight[r];
    for (std::size_t u = 0; u < n; ++u) {
      const T gu = cache.gates[r][u];
      const T ds = dgate[r][u] * gu * (T(1) - gu);
      if (p.gate_bias[r]) grads.dgate_b[r] += ds;
      auto hu = H.row(u);
      for (std::size_t j = 0; j < hu.size(); ++j) grads.dgate_w[r][j] += ds * hu[j];
      if (!input_grad) continue;
      auto dhu = grads.dH.row(u);
      for (std::size_t j = 0; j < hu.size(); ++j) dhu[j] += ds * w[j];
    }
  }
  return grads;
}

}  // namespace rgcoref

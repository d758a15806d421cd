#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "rgcoref/model.hpp"
#include "rgcoref/nn.hpp"
#include "rgcoref/synthetic.hpp"

namespace rgcoref {

inline constexpr double kGradCheckTolerance = 1e-4;
inline constexpr double kGradCheckEps = 1e-6;
inline constexpr double kGradCheckFloor = 1e-5;

struct GradcheckSuiteOptions {
  std::uint64_t seed = 1;
  bool inject_fault = false;  // flips the sign of the output-layer gradient
  double floor = kGradCheckFloor;
};

inline constexpr double kStructuralZeroTolerance = 1e-12;

/// Biases feeding a batch-norm layer; with batch statistics their exact
/// gradient is zero and central differences only see rounding noise.
inline bool is_pre_batchnorm_bias(std::string_view name) {
  return name == names::kBranchB || name == names::kHeadB;
}

struct GradcheckSuiteResult {
  GradCheckResult eval_mode;   // batch-norm on running statistics, no dropout
  GradCheckResult train_mode;  // batch statistics, a fixed dropout mask
  double train_pre_bn_bias_grad = 0.0;  // max |analytic| over pre-batch-norm biases in train mode
  double max_rel_error() const { return std::max(eval_mode.max_rel_error, train_mode.max_rel_error); }
  bool passed() const {
    return max_rel_error() < kGradCheckTolerance && train_pre_bn_bias_grad <= kStructuralZeroTolerance;
  }
};

/// Two 5-token examples at small widths, float64.
inline ResolverConfig micro_config(Setting setting, std::uint64_t seed) {
  ResolverConfig cfg;
  cfg.setting = setting;
  cfg.embedding_dim = 6;
  cfg.bert_branch_dim = 4;
  cfg.rgcn_dim = 5;
  cfg.head_hidden_dim = 4;
  cfg.hyper.l2_lambda = 1e-3;
  cfg.hyper.dropout_p = 0.3;
  cfg.hyper.seed = seed;
  return cfg;
}

inline Dataset micro_dataset(std::uint64_t seed, std::size_t examples = 2) {
  SyntheticSpec spec;
  spec.examples = examples;
  spec.embedding_dim = 6;
  spec.min_tokens = 5;
  spec.max_tokens = 5;
  spec.max_sentences = 1;
  spec.seed = seed;
  return make_synthetic_dataset(spec);
}

/// Finite-difference check of every trainable parameter of `setting`.
inline GradcheckSuiteResult run_gradcheck_suite(Setting setting, const GradcheckSuiteOptions& opts = {}) {
  const ResolverConfig cfg = micro_config(setting, opts.seed);
  const Dataset ds = micro_dataset(derive_seed(opts.seed, 7));
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const Batch<double> batch = make_batch<double>(ds, idx);

  ParamStore<double> store = build_model<double>(cfg, opts.seed);
  // Non-trivial running statistics and gate biases so eval mode is not the identity.
  Rng rng(derive_seed(opts.seed, 3));
  for (auto& [name, p] : store) {
    if (name.ends_with("running_mean"))
      for (auto& v : p.value.values()) v = uniform(rng, -0.5, 0.5);
    if (name.ends_with("running_var"))
      for (auto& v : p.value.values()) v = uniform(rng, 0.5, 2.0);
    if (name.ends_with("gate_b") || name.ends_with(".b") || name.ends_with(".beta"))
      for (auto& v : p.value.values()) v = uniform(rng, -0.3, 0.3);
  }

  auto closure_for = [&](Mode mode) -> LossClosure<double> {
    return [&, mode](ParamStore<double>& s, bool with_grad) {
      Rng dropout_rng(derive_seed(opts.seed, 11));  // same mask on every call
      ForwardOptions<double> fo;
      fo.mode = mode;
      fo.rng = &dropout_rng;
      // Train mode would drift the running statistics between calls; work on
      // a copy so every evaluation sees the same buffers.
      ParamStore<double> scratch_holder;
      ParamStore<double>* target = &s;
      if (mode == Mode::kTrain && !with_grad) {
        scratch_holder = s;
        target = &scratch_holder;
      }
      if (!with_grad) return loss_only(*target, cfg, batch, std::span<const Class>(batch.labels), fo);
      const ParamStore<double> before = s;
      const double loss = loss_and_grads(s, cfg, batch, std::span<const Class>(batch.labels), fo);
      for (auto& [name, p] : s)
        if (!p.trainable) p.value = before.at(name).value;
      if (opts.inject_fault)
        for (auto& g : s.grad(names::kOutW).values()) g = -g;
      return loss;
    };
  };

  GradCheckOptions gco;
  gco.eps = kGradCheckEps;
  gco.floor = opts.floor;
  GradcheckSuiteResult result;
  result.eval_mode = grad_check(closure_for(Mode::kEval), store, gco);
  GradCheckOptions train_gco = gco;
  train_gco.include = [](std::string_view n) { return !is_pre_batchnorm_bias(n); };
  result.train_mode = grad_check(closure_for(Mode::kTrain), store, train_gco);
  ParamStore<double> probe = store;
  probe.zero_grad();
  closure_for(Mode::kTrain)(probe, true);
  for (const auto& [name, p] : probe)
    if (is_pre_batchnorm_bias(name))
      for (auto g : p.grad.values()) result.train_pre_bn_bias_grad = std::max(result.train_pre_bn_bias_grad, std::abs(g));
  return result;
}

}  // namespace rgcoref

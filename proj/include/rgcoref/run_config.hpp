#pragma once

// Flat key=value run configuration. `#` starts a comment; unknown keys are
// rejected. Command-line overrides go through the same apply() path.

#include <cctype>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "rgcoref/model.hpp"
#include "rgcoref/train.hpp"

namespace rgcoref {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  ExperimentConfig experiment;
  bool embedding_dim_set = false;  // otherwise taken from the data
  std::string test_data;           // held-out dataset directory
  std::size_t test_size = 0;       // without test_data: size of a seeded random test split
  std::size_t train_size = 0;      // 0 = every remaining example
  std::uint64_t split_seed = 0;

  ResolverConfig& model() { return experiment.model; }
  const ResolverConfig& model() const { return experiment.model; }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <typename U>
U parse_number(std::string_view key, std::string_view v) {
  U out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("invalid value '" + std::string(v) + "' for " + std::string(key));
  return out;
}

inline bool parse_flag(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("invalid value '" + std::string(v) + "' for " + std::string(key) + " (expected true/false)");
}

}  // namespace detail

inline void apply(RunConfig& rc, std::string_view key, std::string_view value) {
  using detail::parse_number;
  auto& m = rc.experiment.model;
  auto& h = m.hyper;
  auto& t = rc.experiment.train;
  const std::string k(key);
  try {
    if (k == "setting") m.setting = parse_setting(value);
    else if (k == "embedding_dim") { m.embedding_dim = parse_number<std::size_t>(key, value); rc.embedding_dim_set = true; }
    else if (k == "bert_branch_dim") m.bert_branch_dim = parse_number<std::size_t>(key, value);
    else if (k == "rgcn_dim") m.rgcn_dim = parse_number<std::size_t>(key, value);
    else if (k == "head_hidden_dim") m.head_hidden_dim = parse_number<std::size_t>(key, value);
    else if (k == "rgcn_layers") m.rgcn_layers = parse_number<std::size_t>(key, value);
    else if (k == "pooling") m.pooling = value;
    else if (k == "gate_bias") m.gate_bias = detail::parse_flag(key, value);
    else if (k == "gate_bias_init") m.gate_bias_init = parse_number<double>(key, value);
    else if (k == "lr0") h.lr0 = parse_number<double>(key, value);
    else if (k == "lr_decay") h.lr_decay = parse_number<double>(key, value);
    else if (k == "l2_lambda") h.l2_lambda = parse_number<double>(key, value);
    else if (k == "adam_beta1") h.adam_beta1 = parse_number<double>(key, value);
    else if (k == "adam_beta2") h.adam_beta2 = parse_number<double>(key, value);
    else if (k == "adam_eps") h.adam_eps = parse_number<double>(key, value);
    else if (k == "dropout_p") h.dropout_p = parse_number<double>(key, value);
    else if (k == "bn_eps") h.bn_eps = parse_number<double>(key, value);
    else if (k == "bn_momentum") h.bn_momentum = parse_number<double>(key, value);
    else if (k == "seed") h.seed = parse_number<std::uint64_t>(key, value);
    else if (k == "folds") rc.experiment.folds = parse_number<std::size_t>(key, value);
    else if (k == "epochs") t.epochs = parse_number<std::size_t>(key, value);
    else if (k == "batch_size") t.batch_size = parse_number<std::size_t>(key, value);
    else if (k == "test_data") rc.test_data = value;
    else if (k == "test_size") rc.test_size = parse_number<std::size_t>(key, value);
    else if (k == "train_size") rc.train_size = parse_number<std::size_t>(key, value);
    else if (k == "split_seed") rc.split_seed = parse_number<std::uint64_t>(key, value);
    else throw ConfigError("unknown configuration key '" + k + "'");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(k + ": " + e.what());
  }
}

inline RunConfig parse_run_config(std::string_view text, RunConfig base = {}) {
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    try {
      apply(base, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

/// Value checks plus existence of every configured path.
inline void validate(const RunConfig& rc) {
  rc.model().hyper.validate();
  if (rc.experiment.folds < 2) throw ConfigError("folds must be at least 2");
  if (rc.experiment.train.epochs == 0) throw ConfigError("epochs must be positive");
  if (rc.experiment.train.batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (rc.model().pooling != "mean") throw ConfigError("pooling must be 'mean'");
  if (!rc.test_data.empty() && !std::filesystem::is_directory(rc.test_data))
    throw ConfigError("test_data directory " + rc.test_data + " does not exist");
  if (!rc.test_data.empty() && rc.test_size != 0)
    throw ConfigError("test_data and test_size are mutually exclusive");
}

inline nlohmann::json config_echo(const RunConfig& rc) {
  const auto& m = rc.model();
  const auto& h = m.hyper;
  return {{"setting", to_string(m.setting)},
          {"embedding_dim", m.embedding_dim},
          {"bert_branch_dim", m.bert_branch_dim},
          {"rgcn_dim", m.rgcn_dim},
          {"head_hidden_dim", m.head_hidden_dim},
          {"rgcn_layers", m.rgcn_layers},
          {"pooling", m.pooling},
          {"gate_bias", m.gate_bias},
          {"gate_bias_init", m.gate_bias_init},
          {"lr0", h.lr0},
          {"lr_decay", h.lr_decay},
          {"l2_lambda", h.l2_lambda},
          {"adam_beta1", h.adam_beta1},
          {"adam_beta2", h.adam_beta2},
          {"adam_eps", h.adam_eps},
          {"dropout_p", h.dropout_p},
          {"bn_eps", h.bn_eps},
          {"bn_momentum", h.bn_momentum},
          {"seed", h.seed},
          {"folds", rc.experiment.folds},
          {"epochs", rc.experiment.train.epochs},
          {"batch_size", rc.experiment.train.batch_size},
          {"test_data", rc.test_data},
          {"test_size", rc.test_size},
          {"train_size", rc.train_size},
          {"split_seed", rc.split_seed}};
}

}  // namespace rgcoref

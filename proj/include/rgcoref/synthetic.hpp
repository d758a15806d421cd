#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "rgcoref/corpus.hpp"
#include "rgcoref/random.hpp"

namespace rgcoref {

/// Shape of a generated dataset. Every example gets random dependency trees
/// and Gaussian token embeddings; the gold mention's rows are shifted along a
/// fixed direction by `signal`, so labels are learnable from embeddings.
struct SyntheticSpec {
  std::size_t examples = 32;
  std::size_t embedding_dim = 16;
  std::size_t min_tokens = 5;  // per sentence
  std::size_t max_tokens = 9;
  std::size_t max_sentences = 2;
  double signal = 2.0;
  std::uint64_t seed = 1;
};

namespace detail {

inline constexpr std::array<const char*, 8> kFirstNames = {"Mary", "John", "Alice", "Peter",
                                                           "Grace", "Omar", "Lena", "Ravi"};
inline constexpr std::array<const char*, 6> kLastNames = {"Smith", "Okafor", "Ito", "Novak", "Silva", "Berg"};
inline constexpr std::array<const char*, 4> kPronouns = {"she", "he", "her", "his"};
inline constexpr std::array<const char*, 12> kFiller = {"the",  "met",  "later", "in",   "city", "wrote",
                                                        "said", "with", "band",  "film", "and",  "after"};

/// Random dependency tree over n tokens: heads relative to the sentence start.
inline std::vector<std::int64_t> random_tree(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(std::span<std::size_t>(order), rng);
  std::vector<std::int64_t> heads(n, kRoot);
  for (std::size_t k = 1; k < n; ++k)
    heads[order[k]] = static_cast<std::int64_t>(order[uniform_index(rng, k)]);
  return heads;
}

}  // namespace detail

/// Replaces every snippet's heads with fresh random per-sentence trees.
inline void rewire_heads(TokenizedSnippet& s, Rng& rng) {
  std::size_t start = 0;
  while (start < s.tokens.size()) {
    std::size_t end = start;
    while (end < s.tokens.size() && s.tokens[end].sentence_id == s.tokens[start].sentence_id) ++end;
    const auto tree = detail::random_tree(end - start, rng);
    for (std::size_t i = 0; i < tree.size(); ++i)
      s.heads[start + i] = tree[i] == kRoot ? kRoot : tree[i] + static_cast<std::int64_t>(start);
    start = end;
  }
}

inline Dataset make_synthetic_dataset(const SyntheticSpec& spec) {
  Rng rng(spec.seed);
  std::vector<double> direction(spec.embedding_dim);
  for (auto& d : direction) d = standard_normal(rng);
  const double norm = std::sqrt(std::inner_product(direction.begin(), direction.end(), direction.begin(), 0.0));
  for (auto& d : direction) d /= norm;

  Dataset ds;
  ds.embedding_dim = spec.embedding_dim;
  for (std::size_t n = 0; n < spec.examples; ++n) {
    const std::size_t sentences = 1 + uniform_index(rng, spec.max_sentences);
    std::vector<std::size_t> lengths;
    for (std::size_t s = 0; s < sentences; ++s)
      lengths.push_back(spec.min_tokens + uniform_index(rng, spec.max_tokens - spec.min_tokens + 1));
    const std::size_t total = std::accumulate(lengths.begin(), lengths.end(), std::size_t{0});

    // A takes two tokens of one sentence (first + last name), B and the
    // pronoun one token each.
    std::vector<int> sentence_of;
    for (std::size_t s = 0; s < sentences; ++s) sentence_of.insert(sentence_of.end(), lengths[s], static_cast<int>(s));
    std::vector<std::size_t> slots(total);
    std::iota(slots.begin(), slots.end(), std::size_t{0});
    shuffle(std::span<std::size_t>(slots), rng);
    std::size_t k = 0;
    while (slots[k] + 1 >= total || sentence_of[slots[k]] != sentence_of[slots[k] + 1]) ++k;
    const std::size_t a_pos = slots[k];
    std::vector<std::size_t> rest;
    for (auto i : slots)
      if (i != a_pos && i != a_pos + 1) rest.push_back(i);
    const std::size_t b_pos = rest[0];
    const std::size_t p_pos = rest[1];

    std::vector<std::string> words(total);
    for (auto& w : words) w = detail::kFiller[uniform_index(rng, detail::kFiller.size())];
    words[a_pos] = detail::kFirstNames[uniform_index(rng, detail::kFirstNames.size())];
    words[a_pos + 1] = detail::kLastNames[uniform_index(rng, detail::kLastNames.size())];
    words[b_pos] = detail::kFirstNames[uniform_index(rng, detail::kFirstNames.size())];
    words[p_pos] = detail::kPronouns[uniform_index(rng, detail::kPronouns.size())];

    DatasetEntry e;
    auto& ex = e.example;
    auto& s = e.snippet;
    ex.id = "synth-" + std::to_string(n + 1);
    int sent = 0;
    std::size_t in_sentence = 0;
    for (std::size_t i = 0; i < total; ++i) {
      if (!ex.text.empty()) ex.text += ' ';
      Token t;
      t.char_start = ex.text.size();
      ex.text += words[i];
      t.char_end = ex.text.size();
      t.surface = words[i];
      t.sentence_id = sent;
      s.tokens.push_back(std::move(t));
      s.dep_labels.push_back("dep");
      if (++in_sentence == lengths[static_cast<std::size_t>(sent)]) {
        ex.text += '.';
        ++sent;
        in_sentence = 0;
      }
    }
    s.heads.assign(total, kRoot);
    rewire_heads(s, rng);
    for (std::size_t i = 0; i < total; ++i)
      if (s.heads[i] == kRoot) s.dep_labels[i] = "ROOT";

    ex.a_offset = s.tokens[a_pos].char_start;
    ex.a_text = ex.text.substr(ex.a_offset, s.tokens[a_pos + 1].char_end - ex.a_offset);
    ex.b_offset = s.tokens[b_pos].char_start;
    ex.b_text = words[b_pos];
    ex.pronoun_offset = s.tokens[p_pos].char_start;
    ex.pronoun = words[p_pos];
    const auto label = static_cast<Class>(uniform_index(rng, kNumClasses));
    ex.a_coref = label == Class::kA;
    ex.b_coref = label == Class::kB;

    s.embeddings = Tensor<float>::matrix(total, spec.embedding_dim);
    for (auto& v : s.embeddings.values()) v = static_cast<float>(standard_normal(rng));
    auto shift = [&](std::size_t row) {
      for (std::size_t j = 0; j < spec.embedding_dim; ++j)
        s.embeddings(row, j) += static_cast<float>(spec.signal * direction[j]);
    };
    if (label == Class::kA) {
      shift(a_pos);
      shift(a_pos + 1);
    } else if (label == Class::kB) {
      shift(b_pos);
    }
    e.spans = align_mentions(ex, s);
    ds.examples.push_back(std::move(e));
  }
  return ds;
}

}  // namespace rgcoref

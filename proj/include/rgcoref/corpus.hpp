#pragma once

// GAP corpus ingestion and the exported dataset format.
//
// All character offsets are byte offsets into the UTF-8 snippet text, the
// convention of the published GAP files.
//
// Dataset directory:
//   examples.jsonl   one object per line:
//                    {id, text, pronoun_span:[start,len], a_span, b_span,
//                     a_coref, b_coref, tokens:[{s,e,sent}], heads:[int|-1],
//                     dep_labels:[string], emb_row_offset:int}
//   embeddings.bin   "RGCB", u32 version=1, u32 D, u32 reserved=0 (all LE),
//                    then float32 LE token rows [total_tokens x D]
//   manifest.json    optional; when it carries "embeddings_crc32" (hex string
//                    or integer) the payload file is verified against it

#include <algorithm>
#include <bit>
#include <charconv>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "rgcoref/coref_class.hpp"
#include "rgcoref/tensor.hpp"

namespace rgcoref {

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AlignmentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A per-row or per-example problem that was skipped rather than fatal.
struct Diagnostic {
  std::string id;
  std::size_t line = 0;  // 1-based source line, 0 when not applicable
  std::string message;
};

inline std::string to_string(const Diagnostic& d) {
  std::string s = d.id.empty() ? std::string("<no id>") : d.id;
  if (d.line) s += " (line " + std::to_string(d.line) + ")";
  return s + ": " + d.message;
}

struct GapExample {
  std::string id;
  std::string text;
  std::string pronoun;
  std::size_t pronoun_offset = 0;
  std::string a_text;
  std::size_t a_offset = 0;
  bool a_coref = false;
  std::string b_text;
  std::size_t b_offset = 0;
  bool b_coref = false;
  std::string url;

  friend bool operator==(const GapExample&, const GapExample&) = default;
};

inline Class gold_class(const GapExample& ex) {
  if (ex.a_coref && ex.b_coref)
    throw std::invalid_argument(ex.id + ": both A and B marked coreferent");
  if (ex.a_coref) return Class::kA;
  if (ex.b_coref) return Class::kB;
  return Class::kNeither;
}

namespace detail {

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<bool> parse_bool(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "true") return true;
  if (lower == "false") return false;
  return std::nullopt;
}

inline std::optional<std::size_t> parse_offset(std::string_view s) {
  if (s.empty() || s.size() > 18) return std::nullopt;
  std::size_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return std::nullopt;
    v = v * 10 + static_cast<std::size_t>(c - '0');
  }
  return v;
}

inline bool surface_at(std::string_view text, std::size_t offset, std::string_view surface) {
  return offset <= text.size() && text.size() - offset >= surface.size() &&
         text.substr(offset, surface.size()) == surface;
}

}  // namespace detail

inline constexpr std::string_view kGapColumns[] = {
    "ID", "Text", "Pronoun", "Pronoun-offset", "A", "A-offset", "A-coref",
    "B",  "B-offset", "B-coref", "URL"};

/// Checks a GapExample's own invariants; returns an empty string when valid.
inline std::string validate_gap_example(const GapExample& ex) {
  if (!detail::surface_at(ex.text, ex.pronoun_offset, ex.pronoun))
    return "pronoun '" + ex.pronoun + "' not found at offset " + std::to_string(ex.pronoun_offset);
  if (!detail::surface_at(ex.text, ex.a_offset, ex.a_text))
    return "A '" + ex.a_text + "' not found at offset " + std::to_string(ex.a_offset);
  if (!detail::surface_at(ex.text, ex.b_offset, ex.b_text))
    return "B '" + ex.b_text + "' not found at offset " + std::to_string(ex.b_offset);
  if (ex.pronoun.empty() || ex.a_text.empty() || ex.b_text.empty()) return "empty mention";
  if (ex.a_coref && ex.b_coref) return "both A-coref and B-coref are TRUE";
  return {};
}

struct GapParseResult {
  std::vector<GapExample> examples;
  std::vector<Diagnostic> diagnostics;
};

/// Parses a GAP TSV file. Bad rows are skipped with a diagnostic; a missing
/// or wrong header is fatal.
inline GapParseResult parse_gap_tsv(std::string_view bytes) {
  GapParseResult out;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    auto nl = bytes.find('\n', pos);
    std::string_view line = bytes.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? bytes.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!header_seen) {
      const auto cols = detail::split(line, '\t');
      if (cols.size() != std::size(kGapColumns) || !std::equal(cols.begin(), cols.end(), std::begin(kGapColumns)))
        throw CorpusError("GAP TSV: line 1 is not the expected 11-column header");
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    const auto cols = detail::split(line, '\t');
    const std::string id = cols.empty() ? std::string() : std::string(cols[0]);
    if (cols.size() != std::size(kGapColumns)) {
      out.diagnostics.push_back({id, line_no, "expected 11 columns, found " + std::to_string(cols.size())});
      continue;
    }
    GapExample ex;
    ex.id = id;
    ex.text = cols[1];
    ex.pronoun = cols[2];
    ex.a_text = cols[4];
    ex.b_text = cols[7];
    ex.url = cols[10];
    const auto po = detail::parse_offset(cols[3]);
    const auto ao = detail::parse_offset(cols[5]);
    const auto bo = detail::parse_offset(cols[8]);
    const auto ac = detail::parse_bool(cols[6]);
    const auto bc = detail::parse_bool(cols[9]);
    if (!po || !ao || !bo) {
      out.diagnostics.push_back({id, line_no, "non-numeric offset"});
      continue;
    }
    if (!ac || !bc) {
      out.diagnostics.push_back({id, line_no, "coref flags must be TRUE or FALSE"});
      continue;
    }
    ex.pronoun_offset = *po;
    ex.a_offset = *ao;
    ex.b_offset = *bo;
    ex.a_coref = *ac;
    ex.b_coref = *bc;
    if (auto err = validate_gap_example(ex); !err.empty()) {
      out.diagnostics.push_back({id, line_no, err});
      continue;
    }
    out.examples.push_back(std::move(ex));
  }
  if (!header_seen) throw CorpusError("GAP TSV: empty input, header row required");
  return out;
}

// ---------------------------------------------------------------------------
// Tokenized snippets

struct Token {
  std::string surface;
  std::size_t char_start = 0;
  std::size_t char_end = 0;
  int sentence_id = 0;

  friend bool operator==(const Token&, const Token&) = default;
};

struct TokenizedSnippet {
  std::vector<Token> tokens;
  std::vector<std::int64_t> heads;  // kRoot (-1) for sentence roots
  std::vector<std::string> dep_labels;
  Tensor<float> embeddings;  // [tokens x D]

  std::size_t size() const { return tokens.size(); }

  std::vector<int> sentence_ids() const {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(t.sentence_id);
    return out;
  }

  friend bool operator==(const TokenizedSnippet&, const TokenizedSnippet&) = default;
};

/// Half-open token index range.
struct TokenRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return end <= begin; }
  friend bool operator==(const TokenRange&, const TokenRange&) = default;
};

/// Tokens whose character spans intersect [char_start, char_start + length).
inline TokenRange align_span(const TokenizedSnippet& snippet, std::size_t char_start, std::size_t length) {
  const std::size_t char_end = char_start + length;
  std::optional<std::size_t> first;
  std::size_t last = 0;
  if (length > 0) {
    for (std::size_t i = 0; i < snippet.tokens.size(); ++i) {
      const auto& t = snippet.tokens[i];
      if (t.char_start < char_end && char_start < t.char_end) {
        if (!first) first = i;
        last = i;
      }
    }
  }
  if (!first)
    throw AlignmentError("no token overlaps characters [" + std::to_string(char_start) + ", " +
                         std::to_string(char_end) + ")");
  return {*first, last + 1};
}

inline TokenRange align_span(const TokenizedSnippet& snippet, std::size_t char_start, std::string_view surface) {
  return align_span(snippet, char_start, surface.size());
}

/// Checks TokenizedSnippet invariants against its text; empty string when valid.
inline std::string validate_snippet(const TokenizedSnippet& s, std::string_view text) {
  const std::size_t n = s.tokens.size();
  if (s.heads.size() != n || s.dep_labels.size() != n)
    return "tokens/heads/dep_labels lengths differ (" + std::to_string(n) + "/" +
           std::to_string(s.heads.size()) + "/" + std::to_string(s.dep_labels.size()) + ")";
  if (s.embeddings.rank() != 2 || s.embeddings.rows() != n)
    return "embedding rows do not match token count " + std::to_string(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = s.tokens[i];
    if (t.char_start > t.char_end || t.char_end > text.size())
      return "token " + std::to_string(i) + " has invalid span [" + std::to_string(t.char_start) + ", " +
             std::to_string(t.char_end) + ")";
    if (i > 0 && s.tokens[i - 1].sentence_id == t.sentence_id && t.char_start < s.tokens[i - 1].char_end)
      return "token " + std::to_string(i) + " overlaps or precedes token " + std::to_string(i - 1);
    const auto h = s.heads[i];
    if (h == -1) continue;
    if (h < 0 || static_cast<std::size_t>(h) >= n || static_cast<std::size_t>(h) == i)
      return "token " + std::to_string(i) + " has invalid head " + std::to_string(h);
    if (s.tokens[static_cast<std::size_t>(h)].sentence_id != t.sentence_id)
      return "token " + std::to_string(i) + " has head " + std::to_string(h) + " in another sentence";
  }
  return {};
}

// ---------------------------------------------------------------------------
// Dataset

struct MentionSpans {
  TokenRange a;
  TokenRange b;
  TokenRange pronoun;

  friend bool operator==(const MentionSpans&, const MentionSpans&) = default;
};

struct DatasetEntry {
  GapExample example;
  TokenizedSnippet snippet;
  MentionSpans spans;

  friend bool operator==(const DatasetEntry&, const DatasetEntry&) = default;
};

struct Dataset {
  std::vector<DatasetEntry> examples;
  std::size_t embedding_dim = 0;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Aligns A, B and the pronoun; throws AlignmentError naming the mention.
inline MentionSpans align_mentions(const GapExample& ex, const TokenizedSnippet& s) {
  auto one = [&](const char* what, std::size_t off, const std::string& surface) {
    try {
      return align_span(s, off, surface);
    } catch (const AlignmentError& e) {
      throw AlignmentError(std::string(what) + ": " + e.what());
    }
  };
  return {one("A", ex.a_offset, ex.a_text), one("B", ex.b_offset, ex.b_text),
          one("pronoun", ex.pronoun_offset, ex.pronoun)};
}

inline constexpr char kEmbeddingsMagic[4] = {'R', 'G', 'C', 'B'};
inline constexpr std::uint32_t kEmbeddingsVersion = 1;
inline constexpr std::size_t kEmbeddingsHeaderBytes = 16;

namespace detail {

inline std::uint32_t read_u32le(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

inline void write_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos), chunk);
    pos += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

inline std::size_t span_start(const nlohmann::json& j) { return j.at(0).get<std::size_t>(); }
inline std::size_t span_len(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("span must be [start, len]");
  return j.at(1).get<std::size_t>();
}

}  // namespace detail

/// CRC-32 (zlib polynomial) of a byte buffer, as recorded in manifest.json.
inline std::uint32_t embeddings_crc32(std::string_view bytes) { return detail::crc32_of(bytes); }

/**
 * Loads a dataset directory. File-level problems (missing files, bad
 * embeddings header, payload size or checksum mismatch, rows referenced past
 * the payload) throw CorpusError. Example-level invariant violations skip the
 * example and are reported through `diagnostics` when given.
 */
inline Dataset load_dataset(const std::filesystem::path& dir, std::vector<Diagnostic>* diagnostics = nullptr) {
  namespace fs = std::filesystem;
  std::vector<Diagnostic> local;
  auto& diags = diagnostics ? *diagnostics : local;

  if (!fs::is_directory(dir)) throw CorpusError("dataset directory " + dir.string() + " does not exist");
  const auto jsonl_path = dir / "examples.jsonl";
  const auto bin_path = dir / "embeddings.bin";
  for (const auto& p : {jsonl_path, bin_path})
    if (!fs::is_regular_file(p)) throw CorpusError("missing file " + p.string());

  const std::string bin = detail::slurp(bin_path);
  if (bin.size() < kEmbeddingsHeaderBytes)
    throw CorpusError("embeddings.bin: header truncated, file ends at byte " + std::to_string(bin.size()));
  if (std::memcmp(bin.data(), kEmbeddingsMagic, 4) != 0)
    throw CorpusError("embeddings.bin: magic mismatch, expected \"RGCB\"");
  const auto version = detail::read_u32le(bin.data() + 4);
  const auto dim = detail::read_u32le(bin.data() + 8);
  const auto reserved = detail::read_u32le(bin.data() + 12);
  if (version != kEmbeddingsVersion)
    throw CorpusError("embeddings.bin: unsupported version " + std::to_string(version));
  if (dim == 0) throw CorpusError("embeddings.bin: embedding width is zero");
  if (reserved != 0) throw CorpusError("embeddings.bin: reserved header field is nonzero");
  const std::size_t row_bytes = 4ull * dim;
  const std::size_t payload = bin.size() - kEmbeddingsHeaderBytes;
  if (payload % row_bytes != 0) {
    const std::size_t complete = kEmbeddingsHeaderBytes + (payload / row_bytes) * row_bytes;
    throw CorpusError("embeddings.bin: payload ends at byte " + std::to_string(bin.size()) +
                      ", inside row " + std::to_string(payload / row_bytes) + " (rows of " +
                      std::to_string(row_bytes) + " bytes; last complete row ends at byte " +
                      std::to_string(complete) + ")");
  }
  const std::size_t total_rows = payload / row_bytes;

  if (const auto manifest_path = dir / "manifest.json"; fs::is_regular_file(manifest_path)) {
    nlohmann::json manifest;
    try {
      manifest = nlohmann::json::parse(detail::slurp(manifest_path));
    } catch (const nlohmann::json::exception& e) {
      throw CorpusError("manifest.json: " + std::string(e.what()));
    }
    if (manifest.contains("embeddings_crc32")) {
      const auto& field = manifest["embeddings_crc32"];
      std::uint32_t expected = 0;
      if (field.is_string()) {
        const auto hex = field.get<std::string>();
        const auto [end, ec] = std::from_chars(hex.data(), hex.data() + hex.size(), expected, 16);
        if (ec != std::errc() || end != hex.data() + hex.size() || hex.empty())
          throw CorpusError("manifest.json: embeddings_crc32 \"" + hex + "\" is not a 32-bit hex value");
      } else if (field.is_number_unsigned()) {
        expected = field.get<std::uint32_t>();
      } else {
        throw CorpusError("manifest.json: embeddings_crc32 must be a hex string or integer");
      }
      const std::uint32_t actual = detail::crc32_of(bin);
      if (expected != actual) {
        std::ostringstream os;
        os << std::hex << "embeddings.bin: checksum failure (crc32 " << actual << ", manifest says " << expected << ")";
        throw CorpusError(os.str());
      }
    }
    if (manifest.contains("embedding_dim") && manifest["embedding_dim"].get<std::size_t>() != dim)
      throw CorpusError("manifest.json: embedding_dim disagrees with embeddings.bin header");
  }

  Dataset ds;
  ds.embedding_dim = dim;
  std::ifstream in(jsonl_path);
  std::string line;
  std::size_t line_no = 0;
  std::size_t expected_offset = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::string id;
    try {
      const auto j = nlohmann::json::parse(line);
      id = j.at("id").get<std::string>();
      DatasetEntry entry;
      GapExample& ex = entry.example;
      ex.id = id;
      ex.text = j.at("text").get<std::string>();
      const auto& ps = j.at("pronoun_span");
      const auto& as = j.at("a_span");
      const auto& bs = j.at("b_span");
      ex.pronoun_offset = detail::span_start(ps);
      ex.a_offset = detail::span_start(as);
      ex.b_offset = detail::span_start(bs);
      const std::size_t lens[3] = {detail::span_len(ps), detail::span_len(as), detail::span_len(bs)};
      const std::size_t offs[3] = {ex.pronoun_offset, ex.a_offset, ex.b_offset};
      bool spans_inside = true;
      for (int k = 0; k < 3; ++k)
        spans_inside &= offs[k] <= ex.text.size() && lens[k] <= ex.text.size() - offs[k];
      if (spans_inside) {
        ex.pronoun = ex.text.substr(ex.pronoun_offset, lens[0]);
        ex.a_text = ex.text.substr(ex.a_offset, lens[1]);
        ex.b_text = ex.text.substr(ex.b_offset, lens[2]);
      }
      ex.a_coref = j.at("a_coref").get<bool>();
      ex.b_coref = j.at("b_coref").get<bool>();
      if (j.contains("url")) ex.url = j["url"].get<std::string>();

      TokenizedSnippet& s = entry.snippet;
      for (const auto& t : j.at("tokens")) {
        Token tok;
        tok.char_start = t.at("s").get<std::size_t>();
        tok.char_end = t.at("e").get<std::size_t>();
        tok.sentence_id = t.at("sent").get<int>();
        if (tok.char_start <= tok.char_end && tok.char_end <= ex.text.size())
          tok.surface = ex.text.substr(tok.char_start, tok.char_end - tok.char_start);
        s.tokens.push_back(std::move(tok));
      }
      s.heads = j.at("heads").get<std::vector<std::int64_t>>();
      s.dep_labels = j.at("dep_labels").get<std::vector<std::string>>();
      const auto row_offset = j.at("emb_row_offset").get<std::size_t>();
      const std::size_t n = s.tokens.size();
      if (row_offset + n > total_rows)
        throw CorpusError("examples.jsonl line " + std::to_string(line_no) + " (" + id + "): rows [" +
                          std::to_string(row_offset) + ", " + std::to_string(row_offset + n) +
                          ") exceed the " + std::to_string(total_rows) + " rows of embeddings.bin (D=" +
                          std::to_string(dim) + ")");
      if (row_offset != expected_offset)
        diags.push_back({id, line_no, "emb_row_offset " + std::to_string(row_offset) + " leaves a gap or overlap (expected " +
                                          std::to_string(expected_offset) + ")"});
      expected_offset = row_offset + n;

      s.embeddings = Tensor<float>::matrix(n, dim);
      const char* src = bin.data() + kEmbeddingsHeaderBytes + row_offset * row_bytes;
      for (std::size_t k = 0; k < n * dim; ++k) s.embeddings[k] = std::bit_cast<float>(detail::read_u32le(src + 4 * k));

      if (!spans_inside) {
        diags.push_back({id, line_no, "mention span past end of text"});
        continue;
      }

      if (auto err = validate_gap_example(ex); !err.empty()) {
        diags.push_back({id, line_no, err});
        continue;
      }
      if (auto err = validate_snippet(s, ex.text); !err.empty()) {
        diags.push_back({id, line_no, err});
        continue;
      }
      if (!s.embeddings.all_finite()) {
        diags.push_back({id, line_no, "non-finite embedding values"});
        continue;
      }
      entry.spans = align_mentions(ex, s);
      ds.examples.push_back(std::move(entry));
    } catch (const CorpusError&) {
      throw;
    } catch (const std::exception& e) {
      diags.push_back({id, line_no, e.what()});
    }
  }
  if (expected_offset != total_rows)
    diags.push_back({"", 0, std::to_string(total_rows - std::min(total_rows, expected_offset)) +
                                " embedding rows after the last referenced row"});
  return ds;
}

/// Writes `ds` in the on-disk format with contiguous row offsets. The
/// manifest is only written when `with_checksum` is set.
inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir, bool with_checksum = false) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::string bin(kEmbeddingsMagic, 4);
  detail::write_u32le(bin, kEmbeddingsVersion);
  detail::write_u32le(bin, static_cast<std::uint32_t>(ds.embedding_dim));
  detail::write_u32le(bin, 0);

  std::ofstream jsonl(dir / "examples.jsonl", std::ios::binary | std::ios::trunc);
  if (!jsonl) throw CorpusError("cannot write " + (dir / "examples.jsonl").string());
  std::size_t row = 0;
  for (const auto& e : ds.examples) {
    const auto& ex = e.example;
    const auto& s = e.snippet;
    if (s.embeddings.rows() != s.tokens.size() || s.embeddings.cols() != ds.embedding_dim)
      throw CorpusError(ex.id + ": embeddings shape does not match tokens and dataset width");
    nlohmann::json j;
    j["id"] = ex.id;
    j["text"] = ex.text;
    j["pronoun_span"] = {ex.pronoun_offset, ex.pronoun.size()};
    j["a_span"] = {ex.a_offset, ex.a_text.size()};
    j["b_span"] = {ex.b_offset, ex.b_text.size()};
    j["a_coref"] = ex.a_coref;
    j["b_coref"] = ex.b_coref;
    if (!ex.url.empty()) j["url"] = ex.url;
    auto tokens = nlohmann::json::array();
    for (const auto& t : s.tokens) tokens.push_back({{"s", t.char_start}, {"e", t.char_end}, {"sent", t.sentence_id}});
    j["tokens"] = std::move(tokens);
    j["heads"] = s.heads;
    j["dep_labels"] = s.dep_labels;
    j["emb_row_offset"] = row;
    jsonl << j.dump() << '\n';
    for (float f : s.embeddings.values()) detail::write_u32le(bin, std::bit_cast<std::uint32_t>(f));
    row += s.tokens.size();
  }
  std::ofstream out(dir / "embeddings.bin", std::ios::binary | std::ios::trunc);
  if (!out) throw CorpusError("cannot write " + (dir / "embeddings.bin").string());
  out.write(bin.data(), static_cast<std::streamsize>(bin.size()));
  if (with_checksum) {
    std::ostringstream crc;
    crc << std::hex << detail::crc32_of(bin);
    nlohmann::json manifest = {{"embedding_dim", ds.embedding_dim},
                               {"example_count", ds.examples.size()},
                               {"embeddings_crc32", crc.str()}};
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
  }
}

}  // namespace rgcoref

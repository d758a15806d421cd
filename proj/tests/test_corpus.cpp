#include <gtest/gtest.h>

#include <fstream>

#include "test_support.hpp"

namespace rgcoref {
namespace {

namespace fs = std::filesystem;

const std::string kHeader = "ID\tText\tPronoun\tPronoun-offset\tA\tA-offset\tA-coref\tB\tB-offset\tB-coref\tURL\n";

std::string row(const std::string& id, const std::string& text, const std::string& p, std::size_t po,
                const std::string& a, std::size_t ao, const std::string& ac, const std::string& b, std::size_t bo,
                const std::string& bc) {
  return id + "\t" + text + "\t" + p + "\t" + std::to_string(po) + "\t" + a + "\t" + std::to_string(ao) + "\t" +
         ac + "\t" + b + "\t" + std::to_string(bo) + "\t" + bc + "\thttp://x\n";
}

const std::string kText = "Mary met Anna before she left.";

TEST(GapTsv, SkipsRowWithSurfaceMismatch) {
  const std::string tsv = kHeader + row("t-1", kText, "she", 21, "Mary", 0, "TRUE", "Anna", 9, "FALSE") +
                          row("t-2", kText, "she", 20, "Mary", 0, "TRUE", "Anna", 9, "FALSE");
  auto r = parse_gap_tsv(tsv);
  ASSERT_EQ(r.examples.size(), 1u);
  EXPECT_EQ(r.examples[0].id, "t-1");
  EXPECT_EQ(r.examples[0].pronoun_offset, 21u);
  EXPECT_EQ(r.examples[0].url, "http://x");
  ASSERT_EQ(r.diagnostics.size(), 1u);
  EXPECT_EQ(r.diagnostics[0].id, "t-2");
  EXPECT_EQ(r.diagnostics[0].line, 3u);
  EXPECT_NE(r.diagnostics[0].message.find("pronoun"), std::string::npos);
}

TEST(GapTsv, BooleansAreCaseInsensitive) {
  const std::string tsv = kHeader + row("a", kText, "she", 21, "Mary", 0, "true", "Anna", 9, "False") +
                          row("b", kText, "she", 21, "Mary", 0, "FALSE", "Anna", 9, "tRUE") +
                          row("c", kText, "she", 21, "Mary", 0, "yes", "Anna", 9, "FALSE");
  auto r = parse_gap_tsv(tsv);
  ASSERT_EQ(r.examples.size(), 2u);
  EXPECT_EQ(gold_class(r.examples[0]), Class::kA);
  EXPECT_EQ(gold_class(r.examples[1]), Class::kB);
  ASSERT_EQ(r.diagnostics.size(), 1u);
  EXPECT_EQ(r.diagnostics[0].id, "c");
}

TEST(GapTsv, RowLevelProblemsAreDiagnostics) {
  const std::string tsv = kHeader + "short\trow\n" +
                          row("both", kText, "she", 21, "Mary", 0, "TRUE", "Anna", 9, "TRUE") +
                          "num\t" + kText + "\tshe\tx21\tMary\t0\tTRUE\tAnna\t9\tFALSE\tu\n" + "\r\n" +
                          row("ok", kText, "she", 21, "Mary", 0, "FALSE", "Anna", 9, "FALSE");
  auto r = parse_gap_tsv(tsv);
  ASSERT_EQ(r.examples.size(), 1u);
  EXPECT_EQ(gold_class(r.examples[0]), Class::kNeither);
  ASSERT_EQ(r.diagnostics.size(), 3u);
  EXPECT_NE(r.diagnostics[0].message.find("columns"), std::string::npos);
  EXPECT_NE(r.diagnostics[1].message.find("both"), std::string::npos);
  EXPECT_NE(r.diagnostics[2].message.find("offset"), std::string::npos);
}

TEST(GapTsv, HeaderIsMandatory) {
  EXPECT_THROW(parse_gap_tsv(""), CorpusError);
  EXPECT_THROW(parse_gap_tsv(row("a", kText, "she", 21, "Mary", 0, "TRUE", "Anna", 9, "FALSE")), CorpusError);
  auto crlf = kHeader;
  crlf.insert(crlf.size() - 1, "\r");
  EXPECT_NO_THROW(parse_gap_tsv(crlf));
}

TEST(GoldClass, Mapping) {
  GapExample ex;
  EXPECT_EQ(gold_class(ex), Class::kNeither);
  ex.a_coref = true;
  EXPECT_EQ(gold_class(ex), Class::kA);
  ex.b_coref = true;
  EXPECT_THROW(gold_class(ex), std::invalid_argument);
  ex.a_coref = false;
  EXPECT_EQ(gold_class(ex), Class::kB);
}

TokenizedSnippet snippet_of(const std::string& text, std::vector<std::pair<std::size_t, std::size_t>> spans) {
  TokenizedSnippet s;
  for (auto [b, e] : spans) s.tokens.push_back({text.substr(b, e - b), b, e, 0});
  return s;
}

TEST(AlignSpan, Cases) {
  // "Mary Smith met her."
  const std::string text = "Mary Smith met her.";
  auto s = snippet_of(text, {{0, 4}, {5, 10}, {11, 14}, {15, 18}, {18, 19}});
  EXPECT_EQ(align_span(s, 0, std::string_view("Mary Smith")), (TokenRange{0, 2}));
  EXPECT_EQ(align_span(s, 15, std::string_view("her")), (TokenRange{3, 4}));
  EXPECT_EQ(align_span(s, 2, std::size_t{5}), (TokenRange{0, 2}));  // partial overlap on both ends
  EXPECT_EQ(align_span(s, 17, std::size_t{2}), (TokenRange{3, 5}));
  EXPECT_THROW(align_span(s, 4, std::size_t{1}), AlignmentError);  // the space
  EXPECT_THROW(align_span(s, 0, std::size_t{0}), AlignmentError);
  EXPECT_THROW(align_span(s, 40, std::size_t{3}), AlignmentError);
}

TEST(AlignMentions, NamesTheFailingMention) {
  const std::string text = "Mary met her.";
  auto s = snippet_of(text, {{0, 4}, {9, 12}});
  GapExample ex{"x", text, "her", 9, "Mary", 0, false, "met", 5, false, ""};
  try {
    align_mentions(ex, s);
    FAIL() << "expected AlignmentError";
  } catch (const AlignmentError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("B:", 0), 0u);
  }
}

TEST(Crc32, KnownVector) {
  EXPECT_EQ(embeddings_crc32("123456789"), 0xCBF43926u);
  EXPECT_EQ(embeddings_crc32(""), 0u);
}

Dataset small_dataset(std::size_t n = 6, std::size_t dim = 5) {
  SyntheticSpec spec;
  spec.examples = n;
  spec.embedding_dim = dim;
  spec.seed = 3;
  return make_synthetic_dataset(spec);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary | std::ios::trunc).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string load_error(const fs::path& dir) {
  try {
    load_dataset(dir);
  } catch (const CorpusError& e) {
    return e.what();
  }
  return "";
}

TEST(Dataset, RoundTripIsExact) {
  testing::TempDir dir;
  auto ds = small_dataset();
  ds.examples[0].snippet.embeddings[0] = -0.0f;
  ds.examples[0].snippet.embeddings[1] = 1e-40f;  // subnormal
  for (bool checksum : {false, true}) {
    write_dataset(ds, dir.path(), checksum);
    std::vector<Diagnostic> diags;
    auto back = load_dataset(dir.path(), &diags);
    EXPECT_TRUE(diags.empty());
    EXPECT_EQ(back, ds);
    EXPECT_TRUE(std::signbit(back.examples[0].snippet.embeddings[0]));
  }
}

TEST(Dataset, HeaderLayoutIsLittleEndian) {
  testing::TempDir dir;
  auto ds = small_dataset(2, 3);
  write_dataset(ds, dir.path());
  const auto bin = read_file(dir / "embeddings.bin");
  const unsigned char expected[16] = {'R', 'G', 'C', 'B', 1, 0, 0, 0, 3, 0, 0, 0, 0, 0, 0, 0};
  ASSERT_GE(bin.size(), 16u);
  EXPECT_EQ(std::memcmp(bin.data(), expected, 16), 0);
  std::size_t tokens = 0;
  for (const auto& e : ds.examples) tokens += e.snippet.size();
  EXPECT_EQ(bin.size(), 16 + tokens * 3 * 4);
}

TEST(Dataset, EmptyJsonlLoadsEmpty) {
  testing::TempDir dir;
  Dataset ds;
  ds.embedding_dim = 4;
  write_dataset(ds, dir.path());
  EXPECT_EQ(read_file(dir / "examples.jsonl"), "");
  std::vector<Diagnostic> diags;
  auto back = load_dataset(dir.path(), &diags);
  EXPECT_TRUE(back.empty());
  EXPECT_EQ(back.embedding_dim, 4u);
  EXPECT_TRUE(diags.empty());
}

TEST(Dataset, TruncatedPayloadNamesTheByte) {
  testing::TempDir dir;
  write_dataset(small_dataset(), dir.path());
  auto bin = read_file(dir / "embeddings.bin");
  const std::size_t cut = bin.size() - 4;
  bin.resize(cut);
  write_file(dir / "embeddings.bin", bin);
  const auto msg = load_error(dir.path());
  EXPECT_NE(msg.find("byte " + std::to_string(cut)), std::string::npos) << msg;
}

TEST(Dataset, HeaderErrors) {
  testing::TempDir dir;
  write_dataset(small_dataset(), dir.path());
  const auto good = read_file(dir / "embeddings.bin");
  auto with = [&](std::size_t at, char v) {
    auto b = good;
    b[at] = v;
    write_file(dir / "embeddings.bin", b);
    return load_error(dir.path());
  };
  EXPECT_NE(with(0, 'X').find("magic"), std::string::npos);
  EXPECT_NE(with(4, 2).find("version"), std::string::npos);
  EXPECT_NE(with(12, 1).find("reserved"), std::string::npos);
  write_file(dir / "embeddings.bin", good.substr(0, 10));
  EXPECT_NE(load_error(dir.path()).find("truncated"), std::string::npos);
}

TEST(Dataset, ChecksumMismatch) {
  testing::TempDir dir;
  write_dataset(small_dataset(), dir.path(), true);
  auto bin = read_file(dir / "embeddings.bin");
  bin[20] ^= 0x01;
  write_file(dir / "embeddings.bin", bin);
  EXPECT_NE(load_error(dir.path()).find("checksum"), std::string::npos);
  write_file(dir / "manifest.json", R"({"embeddings_crc32": "not-hex"})");
  EXPECT_NE(load_error(dir.path()).find("hex"), std::string::npos);
  write_file(dir / "manifest.json", R"({"embeddings_crc32": )" + std::to_string(embeddings_crc32(bin)) + "}");
  EXPECT_NO_THROW(load_dataset(dir.path()));
  write_file(dir / "manifest.json", "{");
  EXPECT_NE(load_error(dir.path()).find("manifest"), std::string::npos);
}

TEST(Dataset, MissingFiles) {
  testing::TempDir dir;
  EXPECT_THROW(load_dataset(dir / "nope"), CorpusError);
  EXPECT_THROW(load_dataset(dir.path()), CorpusError);
  write_dataset(small_dataset(), dir.path());
  fs::remove(dir / "embeddings.bin");
  EXPECT_NE(load_error(dir.path()).find("embeddings.bin"), std::string::npos);
}

TEST(Dataset, RowsPastPayloadAreFatal) {
  testing::TempDir dir;
  write_dataset(small_dataset(), dir.path());
  auto bin = read_file(dir / "embeddings.bin");
  bin.resize(16);
  write_file(dir / "embeddings.bin", bin);
  EXPECT_NE(load_error(dir.path()).find("exceed"), std::string::npos);
}

TEST(Dataset, ExampleLevelProblemsAreSkipped) {
  testing::TempDir dir;
  auto ds = small_dataset(4, 3);
  write_dataset(ds, dir.path());
  auto lines = read_file(dir / "examples.jsonl");
  std::vector<nlohmann::json> js;
  for (std::size_t pos = 0; pos < lines.size();) {
    auto nl = lines.find('\n', pos);
    js.push_back(nlohmann::json::parse(lines.substr(pos, nl - pos)));
    pos = nl + 1;
  }
  js[1]["heads"][0] = 1000;                     // head outside the snippet
  js[2]["a_span"] = {js[2]["text"].get<std::string>().size(), 5};  // past the end of the text
  std::string out;
  for (auto& j : js) out += j.dump() + "\n";
  out += "not json\n";
  write_file(dir / "examples.jsonl", out);
  std::vector<Diagnostic> diags;
  auto back = load_dataset(dir.path(), &diags);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.examples[0], ds.examples[0]);
  EXPECT_EQ(back.examples[1], ds.examples[3]);
  ASSERT_EQ(diags.size(), 3u);
  EXPECT_EQ(diags[0].id, ds.examples[1].example.id);
  EXPECT_EQ(diags[0].line, 2u);
  EXPECT_EQ(diags[1].id, ds.examples[2].example.id);
  EXPECT_EQ(diags[2].line, 5u);
}

TEST(Dataset, RowOffsetGapIsDiagnostic) {
  testing::TempDir dir;
  auto ds = small_dataset(2, 3);
  write_dataset(ds, dir.path());
  // Append one unreferenced row.
  auto bin = read_file(dir / "embeddings.bin");
  bin.append(12, '\0');
  write_file(dir / "embeddings.bin", bin);
  std::vector<Diagnostic> diags;
  auto back = load_dataset(dir.path(), &diags);
  EXPECT_EQ(back.size(), 2u);
  ASSERT_EQ(diags.size(), 1u);
  EXPECT_NE(diags[0].message.find("1 embedding rows"), std::string::npos);
}

TEST(Dataset, WriteRejectsMismatchedWidth) {
  testing::TempDir dir;
  auto ds = small_dataset(2, 3);
  ds.embedding_dim = 4;
  EXPECT_THROW(write_dataset(ds, dir.path()), CorpusError);
}

TEST(Synthetic, DeterministicAndValid) {
  auto a = small_dataset(10, 4);
  auto b = small_dataset(10, 4);
  EXPECT_EQ(a, b);
  for (const auto& e : a.examples) {
    EXPECT_EQ(validate_gap_example(e.example), "");
    EXPECT_EQ(validate_snippet(e.snippet, e.example.text), "");
    EXPECT_EQ(align_mentions(e.example, e.snippet), e.spans);
    EXPECT_NO_THROW(build_graph(e.snippet.heads, e.snippet.sentence_ids()).check_invariants());
  }
}

TEST(Synthetic, RewireKeepsTokensAndChangesHeads) {
  auto ds = small_dataset(10, 4);
  Rng rng(5);
  std::size_t changed = 0;
  for (auto& e : ds.examples) {
    auto s = e.snippet;
    rewire_heads(s, rng);
    EXPECT_EQ(s.tokens, e.snippet.tokens);
    EXPECT_EQ(s.embeddings, e.snippet.embeddings);
    EXPECT_EQ(validate_snippet(s, e.example.text), "");
    changed += s.heads != e.snippet.heads;
  }
  EXPECT_GT(changed, 0u);
}

}  // namespace
}  // namespace rgcoref

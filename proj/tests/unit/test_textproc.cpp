#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "clip/nd/rng.hpp"
#include "clip/textproc/bpe.hpp"

using namespace clip::textproc;

namespace {

constexpr std::size_t kBase = kByteAlphabetSize + kSpecialTokenCount;

std::string sym(const MergeTable& t, TokenId id) { return t.symbol(id); }

// Independent oracle: count adjacent byte pairs over the raw corpus.
std::map<std::pair<char, char>, int> byte_pair_counts(const std::vector<std::string>& corpus) {
  std::map<std::pair<char, char>, int> counts;
  for (const auto& s : corpus)
    for (std::size_t i = 0; i + 1 < s.size(); ++i) ++counts[{s[i], s[i + 1]}];
  return counts;
}

std::string random_text(clip::nd::Rng& rng, std::size_t max_len) {
  static const std::string alphabet = "abcAB xyz.,!\t";
  std::string s;
  const auto n = rng.index(max_len + 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (rng.uniform() < 0.05) s.push_back(static_cast<char>(rng.index(256)));
    else s.push_back(alphabet[rng.index(alphabet.size())]);
  }
  return s;
}

}  // namespace

TEST_CASE("single most frequent merge") {
  const std::vector<std::string> corpus{"aaab", "aaab"};
  auto counts = byte_pair_counts(corpus);
  auto best = std::max_element(counts.begin(), counts.end(),
                               [](auto& a, auto& b) { return a.second < b.second; });
  REQUIRE(best->first == std::pair<char, char>{'a', 'a'});

  auto table = train_bpe(corpus, kBase + 1);
  REQUIRE(table.merge_count() == 1);
  CHECK(sym(table, table.merges()[0].first) == "a");
  CHECK(sym(table, table.merges()[0].second) == "a");
  CHECK(table.vocab_size() == kBase + 1);
  CHECK_FALSE(table.exhausted());
}

TEST_CASE("hand-run merges on abab") {
  auto table = train_bpe({"abab"}, kBase + 2);
  REQUIRE(table.merge_count() == 2);
  CHECK(sym(table, table.merges()[0].first) == "a");
  CHECK(sym(table, table.merges()[0].second) == "b");
  CHECK(sym(table, table.merges()[1].first) == "ab");
  CHECK(sym(table, table.merges()[1].second) == "ab");

  auto seq = encode("abab", table, 4);
  const TokenId abab = table.id_of("abab");
  REQUIRE(abab > 0);
  CHECK(seq.ids == std::vector<TokenId>{table.sos_id(), abab, table.eos_id(), table.pad_id()});
  CHECK(seq.length == 3);
}

TEST_CASE("empty corpus text exhausts immediately") {
  auto table = train_bpe({""}, kBase + 10);
  CHECK(table.merge_count() == 0);
  CHECK(table.vocab_size() == kBase);
  CHECK(table.exhausted());
  CHECK_THROWS_AS(train_bpe({}, kBase + 1), std::invalid_argument);
  CHECK_THROWS_AS(train_bpe({"abc"}, kBase), std::invalid_argument);
}

TEST_CASE("ties break lexicographically") {
  // "ba" and "ab" pairs occur equally often in "ab ba" style corpora.
  auto table = train_bpe({"ba", "ab"}, kBase + 1);
  CHECK(sym(table, table.merges()[0].first) == "a");
  CHECK(sym(table, table.merges()[0].second) == "b");
}

TEST_CASE("special ids") {
  auto table = train_bpe({"hello world"}, kBase + 5);
  CHECK(table.pad_id() == 0);
  CHECK(table.sos_id() == static_cast<TokenId>(table.vocab_size() - 2));
  CHECK(table.eos_id() == static_cast<TokenId>(table.vocab_size() - 1));
}

TEST_CASE("encode edge cases") {
  auto table = train_bpe({"a photo of a red circle", "a photo of a blue square"}, kBase + 20);
  auto empty = encode("", table, 6);
  CHECK(empty.ids == std::vector<TokenId>{table.sos_id(), table.eos_id(), 0, 0, 0, 0});
  CHECK(empty.length == 2);
  CHECK(encode("A", table, 8) == encode("a", table, 8));
  CHECK(encode("A Photo", table, 8) == encode("a photo", table, 8));
  CHECK_THROWS_AS(encode("x", table, 1), std::invalid_argument);

  auto tiny = encode("a photo of a red circle", table, 2);
  CHECK(tiny.ids == std::vector<TokenId>{table.sos_id(), table.eos_id()});
}

TEST_CASE("decode") {
  auto table = train_bpe({"hello world"}, kBase + 6);
  CHECK(decode(encode("", table, 4), table).empty());
  CHECK(decode(encode("hello world", table, 32), table) == "hello world");
  TokenSequence bad{{table.sos_id(), 99999, table.eos_id()}, 3};
  try {
    decode(bad, table);
    FAIL("expected error");
  } catch (const std::out_of_range& e) {
    CHECK(std::string(e.what()).find("99999") != std::string::npos);
  }
}

TEST_CASE("truncation keeps a prefix and always emits EOS") {
  auto table = train_bpe({"the quick brown fox jumps over the lazy dog"}, kBase + 30);
  const std::string text = "The quick brown fox jumps over the lazy dog";
  const auto full = encode(text, table, 64);
  REQUIRE(full.length < 64);
  for (std::size_t ctx = 2; ctx < full.length; ++ctx) {
    const auto t = encode(text, table, ctx);
    CHECK(t.ids[t.length - 1] == table.eos_id());
    // Prefix oracle: decoded truncated text is a prefix of the lower-cased original.
    const auto dec = decode(t, table);
    CHECK(lowercase(text).starts_with(dec));
    // Token stream prefix: body tokens agree with the untruncated body.
    for (std::size_t i = 1; i + 1 < t.length; ++i) CHECK(t.ids[i] == full.ids[i]);
  }
}

TEST_CASE("round trip property on random byte strings") {
  clip::nd::Rng rng(7);
  std::vector<std::string> corpus;
  for (int i = 0; i < 40; ++i) corpus.push_back(random_text(rng, 30));
  auto table = train_bpe(corpus, kBase + 60);
  for (int i = 0; i < 200; ++i) {
    const auto s = random_text(rng, 40);
    const auto seq = encode(s, table, 128);
    REQUIRE(seq.length < 128);
    CHECK(decode(seq, table) == lowercase(s));
    for (std::size_t j = seq.length; j < seq.ids.size(); ++j) CHECK(seq.ids[j] == table.pad_id());
  }
}

TEST_CASE("training is deterministic and the text form round-trips") {
  clip::nd::Rng rng(8);
  std::vector<std::string> corpus;
  for (int i = 0; i < 30; ++i) corpus.push_back(random_text(rng, 25));
  auto a = train_bpe(corpus, kBase + 40);
  auto b = train_bpe(corpus, kBase + 40);
  CHECK(a == b);
  CHECK(to_text(a) == to_text(b));
  auto back = from_text(to_text(a));
  CHECK(back == a);
  for (int i = 0; i < 50; ++i) {
    const auto s = random_text(rng, 30);
    CHECK(encode(s, back, 64) == encode(s, a, 64));
  }
  CHECK_THROWS_AS(from_text("#bpe-merges v1\nalphabet bytes 10\n"), std::invalid_argument);
}

TEST_CASE("merged symbols are built from earlier symbols") {
  auto table = train_bpe({"banana bandana", "cabana"}, kBase + 25);
  for (std::size_t i = 0; i < table.merge_count(); ++i) {
    const auto [l, r] = table.merges()[i];
    CHECK(static_cast<std::size_t>(l) < kByteAlphabetSize + 1 + i);
    CHECK(static_cast<std::size_t>(r) < kByteAlphabetSize + 1 + i);
  }
}

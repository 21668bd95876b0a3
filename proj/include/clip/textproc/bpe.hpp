#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace clip::textproc {

/// Vocabulary sizes seen for the reference tokenizer: 49408 counts the
/// special tokens, 49152 is the round figure without them.
inline constexpr std::size_t kDefaultVocabSize = 49408;
inline constexpr std::size_t kAlternateVocabSize = 49152;
inline constexpr std::size_t kDefaultContextLength = 76;
inline constexpr std::size_t kByteAlphabetSize = 256;
inline constexpr std::size_t kSpecialTokenCount = 3;

using TokenId = std::int32_t;

/// Learned byte-level merge rules. Ids: PAD = 0, bytes 1..256, merged symbols
/// in merge order, then SOS = vocab−2 and EOS = vocab−1.
class MergeTable {
 public:
  using Pair = std::pair<TokenId, TokenId>;

  MergeTable();

  std::size_t vocab_size() const { return kByteAlphabetSize + merges_.size() + kSpecialTokenCount; }
  const std::vector<Pair>& merges() const { return merges_; }
  std::size_t merge_count() const { return merges_.size(); }

  TokenId pad_id() const { return 0; }
  TokenId sos_id() const { return static_cast<TokenId>(vocab_size() - 2); }
  TokenId eos_id() const { return static_cast<TokenId>(vocab_size() - 1); }
  static TokenId byte_id(unsigned char b) { return static_cast<TokenId>(b) + 1; }

  bool is_special(TokenId id) const { return id == pad_id() || id == sos_id() || id == eos_id(); }
  /// Byte string of an ordinary symbol; throws std::out_of_range naming the id otherwise.
  const std::string& symbol(TokenId id) const;
  /// Id of an ordinary symbol, or -1.
  TokenId id_of(std::string_view symbol) const;
  /// Priority of merging (left, right), lower first; -1 when absent.
  std::ptrdiff_t rank(TokenId left, TokenId right) const;

  /// Set when merge learning ran out of pairs before reaching the requested size.
  bool exhausted() const { return exhausted_; }

  /// Appends a merge of two existing symbols and returns the new symbol id.
  TokenId add_merge(TokenId left, TokenId right);
  void set_exhausted(bool v) { exhausted_ = v; }

  friend bool operator==(const MergeTable& a, const MergeTable& b) {
    return a.merges_ == b.merges_ && a.exhausted_ == b.exhausted_;
  }

 private:
  static std::uint64_t key(TokenId l, TokenId r) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(l)) << 32) |
           static_cast<std::uint32_t>(r);
  }

  std::vector<Pair> merges_;
  std::vector<std::string> symbols_;  // indexed by id, [0] unused
  std::unordered_map<std::string, TokenId> ids_;
  std::unordered_map<std::uint64_t, std::ptrdiff_t> ranks_;
  bool exhausted_ = false;
};

/// Fixed-length token ids: SOS, body, EOS, then PAD up to the context length.
struct TokenSequence {
  std::vector<TokenId> ids;
  /// Non-pad entries, SOS and EOS included.
  std::size_t length = 0;

  std::size_t context_length() const { return ids.size(); }
  std::size_t eos_position() const { return length - 1; }
  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

std::string lowercase(std::string_view text);

/// Splits lower-cased text into words; every space starts a new word, so
/// merges never cross a word boundary and concatenating the words restores
/// the text.
std::vector<std::string> split_words(std::string_view text);

/// Greedy most-frequent-pair merging until the table holds `vocab_size`
/// entries. Ties go to the lexicographically smallest (left, right) byte
/// strings. Runs out of pairs → smaller table with exhausted() set.
MergeTable train_bpe(const std::vector<std::string>& corpus, std::size_t vocab_size);

/// Lower-cases, applies merges by priority, brackets with SOS/EOS. The body is
/// truncated so that EOS always fits; the remainder is PAD.
TokenSequence encode(std::string_view text, const MergeTable& table,
                     std::size_t context_length = kDefaultContextLength);

/// Body tokens only (no SOS/EOS, no truncation).
std::vector<TokenId> encode_body(std::string_view text, const MergeTable& table);

/// Concatenates the byte strings of non-special ids. Unknown ids throw.
std::string decode(const TokenSequence& seq, const MergeTable& table);

/// Text form: a header naming the byte alphabet and the special ids, then one
/// "left<TAB>right" line per merge with control bytes escaped.
std::string to_text(const MergeTable& table);
MergeTable from_text(std::string_view text);
void save(const std::filesystem::path& path, const MergeTable& table);
MergeTable load(const std::filesystem::path& path);

}  // namespace clip::textproc

#include "clip/textproc/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace clip::textproc {

MergeTable::MergeTable() {
  symbols_.resize(kByteAlphabetSize + 1);
  for (std::size_t b = 0; b < kByteAlphabetSize; ++b) {
    symbols_[b + 1] = std::string(1, static_cast<char>(b));
    ids_.emplace(symbols_[b + 1], static_cast<TokenId>(b + 1));
  }
}

const std::string& MergeTable::symbol(TokenId id) const {
  if (id <= 0 || static_cast<std::size_t>(id) >= symbols_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " is not an ordinary symbol");
  }
  return symbols_[static_cast<std::size_t>(id)];
}

TokenId MergeTable::id_of(std::string_view symbol) const {
  auto it = ids_.find(std::string(symbol));
  return it == ids_.end() ? -1 : it->second;
}

std::ptrdiff_t MergeTable::rank(TokenId left, TokenId right) const {
  auto it = ranks_.find(key(left, right));
  return it == ranks_.end() ? -1 : it->second;
}

TokenId MergeTable::add_merge(TokenId left, TokenId right) {
  const std::string merged = symbol(left) + symbol(right);
  if (ids_.count(merged)) {
    throw std::invalid_argument("merge produces an existing symbol");
  }
  const auto id = static_cast<TokenId>(symbols_.size());
  ranks_.emplace(key(left, right), static_cast<std::ptrdiff_t>(merges_.size()));
  merges_.emplace_back(left, right);
  symbols_.push_back(merged);
  ids_.emplace(merged, id);
  return id;
}

std::string lowercase(std::string_view text) {
  std::string out(text);
  for (auto& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (c == ' ' && !cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
    cur.push_back(c);
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

namespace {

std::vector<TokenId> bytes_of(std::string_view word) {
  std::vector<TokenId> ids;
  ids.reserve(word.size());
  for (unsigned char c : word) ids.push_back(MergeTable::byte_id(c));
  return ids;
}

void apply_merge(std::vector<TokenId>& word, TokenId left, TokenId right, TokenId merged) {
  std::size_t out = 0;
  for (std::size_t i = 0; i < word.size();) {
    if (i + 1 < word.size() && word[i] == left && word[i + 1] == right) {
      word[out++] = merged;
      i += 2;
    } else {
      word[out++] = word[i++];
    }
  }
  word.resize(out);
}

}  // namespace

MergeTable train_bpe(const std::vector<std::string>& corpus, std::size_t vocab_size) {
  if (corpus.empty()) throw std::invalid_argument("train_bpe: corpus is empty");
  if (vocab_size <= kByteAlphabetSize + kSpecialTokenCount) {
    throw std::invalid_argument("train_bpe: vocab_size " + std::to_string(vocab_size) +
                                " must exceed the byte alphabet plus specials (" +
                                std::to_string(kByteAlphabetSize + kSpecialTokenCount) + ")");
  }
  // Distinct words with multiplicities; std::map keeps iteration deterministic.
  std::map<std::string, std::size_t> counts;
  for (const auto& text : corpus)
    for (auto& w : split_words(lowercase(text))) ++counts[w];
  std::vector<std::pair<std::vector<TokenId>, std::size_t>> words;
  words.reserve(counts.size());
  for (const auto& [w, c] : counts) words.emplace_back(bytes_of(w), c);

  MergeTable table;
  const std::size_t target = vocab_size - kByteAlphabetSize - kSpecialTokenCount;
  while (table.merge_count() < target) {
    std::unordered_map<std::uint64_t, std::size_t> pair_counts;
    for (const auto& [ids, c] : words)
      for (std::size_t i = 0; i + 1 < ids.size(); ++i)
        pair_counts[(static_cast<std::uint64_t>(ids[i]) << 32) | static_cast<std::uint32_t>(ids[i + 1])] += c;
    std::uint64_t best = 0;
    std::size_t best_count = 0;
    for (const auto& [k, c] : pair_counts) {
      // A pair spelling an existing symbol (e.g. "a"+"bc" after "ab"+"c") is
      // skipped so every symbol string keeps a single id.
      if (table.id_of(table.symbol(static_cast<TokenId>(k >> 32)) +
                      table.symbol(static_cast<TokenId>(k & 0xFFFFFFFF))) >= 0)
        continue;
      bool better = c > best_count;
      if (!better && c == best_count) {
        const auto& bl = table.symbol(static_cast<TokenId>(best >> 32));
        const auto& br = table.symbol(static_cast<TokenId>(best & 0xFFFFFFFF));
        const auto& kl = table.symbol(static_cast<TokenId>(k >> 32));
        const auto& kr = table.symbol(static_cast<TokenId>(k & 0xFFFFFFFF));
        better = std::tie(kl, kr) < std::tie(bl, br);
      }
      if (better) {
        best = k;
        best_count = c;
      }
    }
    if (best_count == 0) {
      table.set_exhausted(true);
      break;
    }
    const auto left = static_cast<TokenId>(best >> 32);
    const auto right = static_cast<TokenId>(best & 0xFFFFFFFF);
    const TokenId merged = table.add_merge(left, right);
    for (auto& [ids, c] : words) apply_merge(ids, left, right, merged);
  }
  return table;
}

std::vector<TokenId> encode_body(std::string_view text, const MergeTable& table) {
  std::vector<TokenId> body;
  for (const auto& w : split_words(lowercase(text))) {
    auto ids = bytes_of(w);
    while (ids.size() > 1) {
      std::ptrdiff_t best = std::numeric_limits<std::ptrdiff_t>::max();
      for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
        const auto r = table.rank(ids[i], ids[i + 1]);
        if (r >= 0 && r < best) best = r;
      }
      if (best == std::numeric_limits<std::ptrdiff_t>::max()) break;
      const auto [l, r] = table.merges()[static_cast<std::size_t>(best)];
      apply_merge(ids, l, r, static_cast<TokenId>(kByteAlphabetSize + 1 + static_cast<std::size_t>(best)));
    }
    body.insert(body.end(), ids.begin(), ids.end());
  }
  return body;
}

TokenSequence encode(std::string_view text, const MergeTable& table, std::size_t context_length) {
  if (context_length < 2) throw std::invalid_argument("encode: context_length must be at least 2");
  auto body = encode_body(text, table);
  if (body.size() > context_length - 2) body.resize(context_length - 2);
  TokenSequence seq;
  seq.ids.assign(context_length, table.pad_id());
  seq.ids[0] = table.sos_id();
  std::copy(body.begin(), body.end(), seq.ids.begin() + 1);
  seq.ids[body.size() + 1] = table.eos_id();
  seq.length = body.size() + 2;
  return seq;
}

std::string decode(const TokenSequence& seq, const MergeTable& table) {
  std::string out;
  for (TokenId id : seq.ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= table.vocab_size()) {
      throw std::out_of_range("decode: unknown token id " + std::to_string(id));
    }
    if (table.is_special(id)) continue;
    out += table.symbol(id);
  }
  return out;
}

namespace {

std::string escape(const std::string& s) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned char c : s) {
    if (c == '\\') out += "\\\\";
    else if (c == '\t') out += "\\t";
    else if (c == '\n') out += "\\n";
    else if (c < 0x20 || c >= 0x7f) {
      out += "\\x";
      out += kHex[c >> 4];
      out += kHex[c & 0xF];
    } else out += static_cast<char>(c);
  }
  return out;
}

int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  throw std::invalid_argument("bad hex digit in merge table");
}

std::string unescape(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
      continue;
    }
    if (++i >= s.size()) throw std::invalid_argument("dangling escape in merge table");
    switch (s[i]) {
      case '\\': out += '\\'; break;
      case 't': out += '\t'; break;
      case 'n': out += '\n'; break;
      case 'x':
        if (i + 2 >= s.size()) throw std::invalid_argument("short \\x escape");
        out += static_cast<char>(hex_digit(s[i + 1]) * 16 + hex_digit(s[i + 2]));
        i += 2;
        break;
      default: throw std::invalid_argument("unknown escape in merge table");
    }
  }
  return out;
}

}  // namespace

std::string to_text(const MergeTable& table) {
  std::ostringstream os;
  os << "#bpe-merges v1\n";
  os << "alphabet bytes " << kByteAlphabetSize << '\n';
  os << "vocab_size " << table.vocab_size() << '\n';
  os << "pad " << table.pad_id() << '\n';
  os << "sos " << table.sos_id() << '\n';
  os << "eos " << table.eos_id() << '\n';
  os << "exhausted " << (table.exhausted() ? 1 : 0) << '\n';
  os << "merges " << table.merge_count() << '\n';
  for (const auto& [l, r] : table.merges())
    os << escape(table.symbol(l)) << '\t' << escape(table.symbol(r)) << '\n';
  return os.str();
}

MergeTable from_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  auto expect_header = [&](std::string_view key) -> std::string {
    if (!std::getline(in, line) || !line.starts_with(key)) {
      throw std::invalid_argument("merge table: expected '" + std::string(key) + "' line");
    }
    return line.substr(key.size());
  };
  expect_header("#bpe-merges v1");
  if (std::stoul(expect_header("alphabet bytes ")) != kByteAlphabetSize) {
    throw std::invalid_argument("merge table: unsupported alphabet");
  }
  const auto vocab = std::stoul(expect_header("vocab_size "));
  const auto pad = std::stol(expect_header("pad "));
  const auto sos = std::stol(expect_header("sos "));
  const auto eos = std::stol(expect_header("eos "));
  const bool exhausted = std::stoi(expect_header("exhausted ")) != 0;
  const auto n = std::stoul(expect_header("merges "));

  MergeTable table;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw std::invalid_argument("merge table: truncated merge list");
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw std::invalid_argument("merge table: line without TAB");
    const auto l = table.id_of(unescape(std::string_view(line).substr(0, tab)));
    const auto r = table.id_of(unescape(std::string_view(line).substr(tab + 1)));
    if (l < 0 || r < 0) {
      throw std::invalid_argument("merge table: merge " + std::to_string(i) +
                                  " uses a symbol not defined earlier");
    }
    table.add_merge(l, r);
  }
  table.set_exhausted(exhausted);
  if (table.vocab_size() != vocab || pad != table.pad_id() || sos != table.sos_id() ||
      eos != table.eos_id()) {
    throw std::invalid_argument("merge table: header ids disagree with merge list");
  }
  return table;
}

void save(const std::filesystem::path& path, const MergeTable& table) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_text(table);
}

MergeTable load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return from_text(std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()));
}

}  // namespace clip::textproc

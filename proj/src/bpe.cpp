#include "bgmhan/bpe.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "bgmhan/errors.hpp"

namespace bgmhan {

namespace {

bool is_space(char c) {
  switch (c) {
    case ' ':
    case '\t':
    case '\n':
    case '\v':
    case '\f':
    case '\r':
      return true;
    default:
      return false;
  }
}

std::uint64_t pack_pair(int left, int right) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(left)) << 32) |
         static_cast<std::uint32_t>(right);
}

// Splits the corpus into whitespace-delimited words of base-character ids.
std::vector<std::vector<int>> words_as_ids(const std::string& corpus, const BpeVocab& vocab) {
  std::vector<std::vector<int>> words;
  std::size_t i = 0;
  while (i < corpus.size()) {
    if (is_space(corpus[i])) {
      ++i;
      continue;
    }
    std::vector<int> word;
    while (i < corpus.size() && !is_space(corpus[i])) {
      word.push_back(vocab.id_of(std::string(1, corpus[i])));
      ++i;
    }
    words.push_back(std::move(word));
  }
  return words;
}

std::string escape_symbol(const std::string& s) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (c == '%' || c <= 0x20 || c == 0x7F) {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 0xF];
    } else {
      out += static_cast<char>(c);
    }
  }
  return out;
}

int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::string unescape_symbol(const std::string& s, std::size_t line_no) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '%') {
      out += s[i];
      continue;
    }
    if (i + 2 >= s.size()) {
      throw ParseError("vocab file line " + std::to_string(line_no) + ": truncated escape");
    }
    const int hi = hex_digit(s[i + 1]);
    const int lo = hex_digit(s[i + 2]);
    if (hi < 0 || lo < 0) {
      throw ParseError("vocab file line " + std::to_string(line_no) + ": bad escape '" +
                       s.substr(i, 3) + "'");
    }
    out += static_cast<char>(hi * 16 + lo);
    i += 2;
  }
  return out;
}

std::size_t parse_count(const std::string& line, const std::string& key, std::size_t line_no) {
  std::istringstream in(line);
  std::string word;
  long long value = -1;
  if (!(in >> word >> value) || word != key || value < 0) {
    throw ParseError("vocab file line " + std::to_string(line_no) + ": expected '" + key +
                     " <count>', got '" + line + "'");
  }
  return static_cast<std::size_t>(value);
}

std::string next_line(std::istream& in, std::size_t& line_no) {
  std::string line;
  if (!std::getline(in, line)) {
    throw ParseError("vocab file line " + std::to_string(line_no + 1) + ": unexpected end of file");
  }
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

int BpeVocab::id_of(const std::string& symbol) const {
  auto it = ids_.find(symbol);
  return it == ids_.end() ? -1 : it->second;
}

int BpeVocab::intern(const std::string& symbol) {
  auto it = ids_.find(symbol);
  if (it != ids_.end()) return it->second;
  const int id = static_cast<int>(symbols_.size());
  symbols_.push_back(symbol);
  ids_.emplace(symbol, id);
  return id;
}

std::size_t BpeVocab::seed_base(const std::string& corpus) {
  if (corpus.empty()) throw TrainError("bpe: training corpus is empty");
  symbols_.clear();
  merges_.clear();
  merge_rules_.clear();
  ids_.clear();
  intern(kUnkSymbol);
  intern(kNanSymbol);
  bool seen[256] = {};
  for (unsigned char c : corpus) seen[c] = true;
  std::size_t base = 0;
  for (int c = 0; c < 256; ++c) {
    if (!seen[c]) continue;
    intern(std::string(1, static_cast<char>(c)));
    ++base;
  }
  return base;
}

BpeVocab train_bpe(const std::string& corpus, std::size_t target_size) {
  BpeVocab vocab;
  std::size_t algo_size = vocab.seed_base(corpus);
  if (target_size < algo_size) {
    throw ConfigError("bpe: target size " + std::to_string(target_size) + " is below the " +
                      std::to_string(algo_size) + " distinct corpus characters");
  }
  vocab.target_size_ = target_size;

  std::vector<std::vector<int>> words = words_as_ids(corpus, vocab);
  std::unordered_map<std::uint64_t, std::size_t> counts;
  // For each pair, the (word, index) where its last counted occurrence ended;
  // a new occurrence starting there would overlap and is skipped.
  std::unordered_map<std::uint64_t, std::pair<std::size_t, std::size_t>> last_end;

  while (algo_size < target_size) {
    counts.clear();
    last_end.clear();
    for (std::size_t wi = 0; wi < words.size(); ++wi) {
      const std::vector<int>& w = words[wi];
      for (std::size_t i = 0; i + 1 < w.size(); ++i) {
        const std::uint64_t key = pack_pair(w[i], w[i + 1]);
        auto it = last_end.find(key);
        if (it != last_end.end() && it->second == std::make_pair(wi, i)) continue;
        ++counts[key];
        last_end[key] = {wi, i + 1};
      }
    }

    std::uint64_t best_key = 0;
    std::size_t best_freq = 0;
    for (const auto& [key, freq] : counts) {
      if (freq < 2 || freq < best_freq) continue;
      if (freq > best_freq) {
        best_key = key;
        best_freq = freq;
        continue;
      }
      const auto& bl = vocab.symbols_[static_cast<int>(best_key >> 32)];
      const auto& br = vocab.symbols_[static_cast<int>(best_key & 0xFFFFFFFF)];
      const auto& cl = vocab.symbols_[static_cast<int>(key >> 32)];
      const auto& cr = vocab.symbols_[static_cast<int>(key & 0xFFFFFFFF)];
      if (std::tie(cl, cr) < std::tie(bl, br)) best_key = key;
    }
    if (best_freq < 2) break;  // no pair worth merging

    const int left = static_cast<int>(best_key >> 32);
    const int right = static_cast<int>(best_key & 0xFFFFFFFF);
    const std::string merged = vocab.symbols_[left] + vocab.symbols_[right];
    const bool fresh = vocab.ids_.find(merged) == vocab.ids_.end();
    const int merged_id = vocab.intern(merged);
    vocab.merges_.emplace_back(vocab.symbols_[left], vocab.symbols_[right]);
    vocab.merge_rules_.push_back({left, right, merged_id});
    if (fresh) ++algo_size;

    for (std::vector<int>& w : words) {
      if (w.size() < 2) continue;
      std::size_t write = 0;
      std::size_t read = 0;
      while (read < w.size()) {
        if (read + 1 < w.size() && w[read] == left && w[read + 1] == right) {
          w[write++] = merged_id;
          read += 2;
        } else {
          w[write++] = w[read++];
        }
      }
      w.resize(write);
    }
  }
  return vocab;
}

BpeVocab char_vocab(const std::string& corpus) {
  BpeVocab vocab;
  vocab.target_size_ = vocab.seed_base(corpus);
  return vocab;
}

TokenSequence encode(const std::string& text, const BpeVocab& vocab) {
  TokenSequence seq;
  seq.source_len = text.size();
  std::size_t i = 0;
  std::vector<int> word;
  while (i < text.size()) {
    if (is_space(text[i])) {
      const int id = vocab.id_of(std::string(1, text[i]));
      seq.ids.push_back(id < 0 ? BpeVocab::kUnkId : id);
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (text.compare(i, j - i, BpeVocab::kNanSymbol) == 0) {
      seq.ids.push_back(BpeVocab::kNanId);
      i = j;
      continue;
    }
    word.clear();
    for (std::size_t k = i; k < j; ++k) {
      const int id = vocab.id_of(std::string(1, text[k]));
      word.push_back(id < 0 ? BpeVocab::kUnkId : id);
    }
    for (const auto& rule : vocab.merge_rules()) {
      if (word.size() < 2) break;
      std::size_t write = 0;
      std::size_t read = 0;
      while (read < word.size()) {
        if (read + 1 < word.size() && word[read] == rule[0] && word[read + 1] == rule[1]) {
          word[write++] = rule[2];
          read += 2;
        } else {
          word[write++] = word[read++];
        }
      }
      word.resize(write);
    }
    seq.ids.insert(seq.ids.end(), word.begin(), word.end());
    i = j;
  }
  return seq;
}

std::string decode(const TokenSequence& seq, const BpeVocab& vocab) {
  std::string out;
  for (int id : seq.ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab.size()) {
      throw ContractError("decode: token id " + std::to_string(id) + " out of range for vocab of " +
                          std::to_string(vocab.size()) + " symbols");
    }
    out += vocab.symbols()[static_cast<std::size_t>(id)];
  }
  return out;
}

void write_vocab(std::ostream& out, const BpeVocab& vocab) {
  out << "bpe-vocab v1\n";
  out << "target " << vocab.target_size() << "\n";
  out << "symbols " << vocab.size() << "\n";
  for (const std::string& s : vocab.symbols()) out << escape_symbol(s) << "\n";
  out << "merges " << vocab.merges().size() << "\n";
  for (const auto& [l, r] : vocab.merges()) {
    out << escape_symbol(l) << " " << escape_symbol(r) << "\n";
  }
}

void save_vocab(const BpeVocab& vocab, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_vocab(out, vocab);
  if (!out) throw IoError("failed while writing '" + path + "'");
}

BpeVocab read_vocab(std::istream& in, std::size_t& line_no) {
  const std::string header = next_line(in, line_no);
  if (header != "bpe-vocab v1") {
    throw ParseError("vocab file line " + std::to_string(line_no) +
                     ": expected header 'bpe-vocab v1', got '" + header + "'");
  }
  const std::size_t target = parse_count(next_line(in, line_no), "target", line_no);
  const std::size_t n_symbols = parse_count(next_line(in, line_no), "symbols", line_no);

  BpeVocab vocab;
  vocab.target_size_ = target;
  for (std::size_t k = 0; k < n_symbols; ++k) {
    const std::string raw = next_line(in, line_no);
    const std::string symbol = unescape_symbol(raw, line_no);
    if (symbol.empty()) {
      throw ParseError("vocab file line " + std::to_string(line_no) + ": empty symbol");
    }
    vocab.intern(symbol);
  }
  if (vocab.size() < 2 || vocab.symbols()[0] != BpeVocab::kUnkSymbol ||
      vocab.symbols()[1] != BpeVocab::kNanSymbol) {
    throw ParseError("vocab file: symbol table must start with reserved '" +
                     std::string(BpeVocab::kUnkSymbol) + "' and '" +
                     std::string(BpeVocab::kNanSymbol) + "'");
  }
  if (vocab.size() - 2 > target) {
    throw ParseError("vocab file: " + std::to_string(vocab.size() - 2) +
                     " non-reserved symbols exceed target size " + std::to_string(target));
  }

  const std::size_t n_merges = parse_count(next_line(in, line_no), "merges", line_no);
  for (std::size_t k = 0; k < n_merges; ++k) {
    const std::string line = next_line(in, line_no);
    const std::size_t space = line.find(' ');
    if (space == std::string::npos || space == 0 || space + 1 >= line.size()) {
      throw ParseError("vocab file line " + std::to_string(line_no) +
                       ": expected 'left right', got '" + line + "'");
    }
    const std::string left = unescape_symbol(line.substr(0, space), line_no);
    const std::string right = unescape_symbol(line.substr(space + 1), line_no);
    const int lid = vocab.id_of(left);
    const int rid = vocab.id_of(right);
    if (lid < 0 || rid < 0) {
      throw ParseError("vocab file line " + std::to_string(line_no) +
                       ": merge references unknown symbol '" + (lid < 0 ? left : right) + "'");
    }
    const int mid = vocab.id_of(left + right);
    if (mid < 0) {
      throw ParseError("vocab file line " + std::to_string(line_no) + ": merged symbol '" + left +
                       right + "' missing from symbol table");
    }
    vocab.merges_.emplace_back(left, right);
    vocab.merge_rules_.push_back({lid, rid, mid});
  }
  return vocab;
}

BpeVocab load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::size_t line_no = 0;
  return read_vocab(in, line_no);
}

}  // namespace bgmhan

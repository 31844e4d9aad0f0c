#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace bgmhan {

// Subword vocabulary learned by greedy byte-pair merging.
//
// Id layout is fixed: id 0 is the reserved unknown symbol, id 1 is the
// reserved "NaN" symbol used for missing fields, then the corpus base
// characters in ascending byte order, then merged symbols in learned order.
// `target_size` budgets base characters plus merges; the two reserved ids sit
// outside that budget.
class BpeVocab {
 public:
  static constexpr int kUnkId = 0;
  static constexpr int kNanId = 1;
  static constexpr const char* kUnkSymbol = "<unk>";
  static constexpr const char* kNanSymbol = "NaN";

  const std::vector<std::string>& symbols() const { return symbols_; }
  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }
  std::size_t size() const { return symbols_.size(); }
  std::size_t target_size() const { return target_size_; }

  // Returns -1 for symbols not in the vocabulary.
  int id_of(const std::string& symbol) const;

  // Merge rules as (left id, right id, merged id), learned order.
  const std::vector<std::array<int, 3>>& merge_rules() const { return merge_rules_; }

 private:
  friend BpeVocab train_bpe(const std::string& corpus, std::size_t target_size);
  friend BpeVocab char_vocab(const std::string& corpus);
  friend BpeVocab read_vocab(std::istream& in, std::size_t& line_no);

  // Registers `symbol`, returning its canonical id (existing id if the string
  // is already present).
  int intern(const std::string& symbol);

  // Installs the reserved symbols plus the corpus base characters in
  // ascending byte order; returns the distinct base-character count.
  std::size_t seed_base(const std::string& corpus);

  std::vector<std::string> symbols_;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::vector<std::array<int, 3>> merge_rules_;
  std::unordered_map<std::string, int> ids_;
  std::size_t target_size_ = 0;
};

struct TokenSequence {
  std::vector<int> ids;
  std::size_t source_len = 0;
};

// Learns a merge vocabulary: repeatedly count adjacent symbol pairs inside
// whitespace-delimited words (non-overlapping, left to right), merge the most
// frequent pair (ties broken by lexicographically smallest pair), and rewrite,
// until base characters + merges reach `target_size` or no pair occurs at
// least twice.
BpeVocab train_bpe(const std::string& corpus, std::size_t target_size);

// Character-level vocabulary over the same corpus: base characters only, no
// merges.
BpeVocab char_vocab(const std::string& corpus);

// Splits text into characters, then applies merge rules in learned order
// within each whitespace-delimited word. Unknown characters map to the
// reserved unknown id; a word that is exactly "NaN" maps to the reserved NaN
// id. Whitespace characters encode as their own base symbols.
TokenSequence encode(const std::string& text, const BpeVocab& vocab);

// Concatenates the symbol strings for `seq`. Inverse of encode for text over
// the training alphabet.
std::string decode(const TokenSequence& seq, const BpeVocab& vocab);

void save_vocab(const BpeVocab& vocab, const std::string& path);
BpeVocab load_vocab(const std::string& path);

// Stream forms of the same format, so a vocabulary can live inside a larger
// container (e.g. a model checkpoint). `line_no` counts consumed lines for
// error reporting and is advanced by read_vocab.
void write_vocab(std::ostream& out, const BpeVocab& vocab);
BpeVocab read_vocab(std::istream& in, std::size_t& line_no);

}  // namespace bgmhan

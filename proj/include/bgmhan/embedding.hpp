#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "bgmhan/bpe.hpp"
#include "bgmhan/profile.hpp"
#include "bgmhan/tensor.hpp"

namespace bgmhan {

struct EmbeddingTable {
  Tensor matrix;  // {V, d}

  std::size_t vocab_size() const { return matrix.dim(0); }
  std::size_t dim() const { return matrix.dim(1); }
};

// Trainable table, rows uniform in [-1/sqrt(d), +1/sqrt(d)].
EmbeddingTable make_embedding_table(std::size_t vocab_size, std::size_t dim, Rng& rng);

// One text field shaped for the model: a fixed (s, w, d) block where padded
// cells are zero vectors and masks mark real content. Masks are monotone:
// real sentences/tokens always precede padding.
struct FieldTensor {
  Tensor block;                             // {s, w, d}
  std::vector<std::uint8_t> sentence_mask;  // length s
  std::vector<std::uint8_t> word_mask;      // length s*w, row-major
  std::size_t real_sentences = 0;
  std::vector<std::size_t> real_words;      // per sentence; 0 for pad rows
};

// Splits on '.', trims surrounding whitespace, drops empty segments.
std::vector<std::string> split_sentences(const std::string& field);

// Token ids for one sentence as the model sees it: subword encode, then
// whitespace symbols dropped (they carry no content and are not words).
std::vector<int> sentence_token_ids(const std::string& sentence, const BpeVocab& vocab);

// Differentiable lookup: cell (i, j) of the output holds table row
// ids[i*w + j], or zeros where the id is negative (padding).
Tensor embed_block(const Tensor& table, const std::vector<int>& ids, std::size_t s,
                   std::size_t w);

// Tokenization result for one field, independent of embedding parameters.
// Lets callers tokenize once and re-embed cheaply as the table trains.
struct TokenGrid {
  std::vector<int> ids;  // s*w, row-major; -1 marks padding
  std::vector<std::uint8_t> sentence_mask;
  std::vector<std::uint8_t> word_mask;
  std::size_t s = 0;
  std::size_t w = 0;
  std::size_t real_sentences = 0;
  std::vector<std::size_t> real_words;
};

TokenGrid tokenize_field(const std::string& field, const BpeVocab& vocab, std::size_t s,
                         std::size_t w);

// Embedding lookup over a prepared grid.
FieldTensor embed_grid(const TokenGrid& grid, const EmbeddingTable& table);

// Tokenize a field sentence-by-sentence, truncate/pad to (s, w), and look up
// embeddings. Total: an empty field yields an all-padding block.
FieldTensor embed_field(const std::string& field, const BpeVocab& vocab,
                        const EmbeddingTable& table, std::size_t s, std::size_t w);

// The four fields in fixed order (gcea, gceo, leadership, piq).
std::array<FieldTensor, kFieldCount> embed_profile(const Profile& profile, const BpeVocab& vocab,
                                                   const EmbeddingTable& table, std::size_t s,
                                                   std::size_t w);

}  // namespace bgmhan

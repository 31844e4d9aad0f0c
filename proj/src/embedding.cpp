#include "bgmhan/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace bgmhan {

namespace {

bool is_ws(char c) {
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

bool all_whitespace(const std::string& s) {
  for (char c : s) {
    if (!is_ws(c)) return false;
  }
  return true;
}

}  // namespace

EmbeddingTable make_embedding_table(std::size_t vocab_size, std::size_t dim, Rng& rng) {
  if (vocab_size == 0 || dim == 0) {
    throw ConfigError("embedding table needs vocab_size and dim >= 1");
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  Tensor m = Tensor::zeros({vocab_size, dim});
  for (std::size_t i = 0; i < m.size(); ++i) m.at(i) = rng.uniform(-bound, bound);
  m.set_requires_grad(true).set_name("embedding");
  return EmbeddingTable{m};
}

std::vector<std::string> split_sentences(const std::string& field) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= field.size()) {
    std::size_t dot = field.find('.', start);
    if (dot == std::string::npos) dot = field.size();
    std::size_t lo = start;
    std::size_t hi = dot;
    while (lo < hi && is_ws(field[lo])) ++lo;
    while (hi > lo && is_ws(field[hi - 1])) --hi;
    if (hi > lo) out.push_back(field.substr(lo, hi - lo));
    if (dot == field.size()) break;
    start = dot + 1;
  }
  return out;
}

std::vector<int> sentence_token_ids(const std::string& sentence, const BpeVocab& vocab) {
  TokenSequence seq = encode(sentence, vocab);
  std::vector<int> out;
  out.reserve(seq.ids.size());
  for (int id : seq.ids) {
    if (all_whitespace(vocab.symbols()[static_cast<std::size_t>(id)])) continue;
    out.push_back(id);
  }
  return out;
}

Tensor embed_block(const Tensor& table, const std::vector<int>& ids, std::size_t s,
                   std::size_t w) {
  if (table.ndim() != 2) {
    throw ShapeError("embed_block: table must be 2-d, got " + shape_str(table.shape()));
  }
  if (ids.size() != s * w) {
    throw ContractError("embed_block: " + std::to_string(ids.size()) + " ids for a " +
                        std::to_string(s) + "x" + std::to_string(w) + " grid");
  }
  const std::size_t rows = table.dim(0);
  const std::size_t d = table.dim(1);
  for (int id : ids) {
    if (id >= static_cast<int>(rows)) {
      throw ContractError("embed_block: id " + std::to_string(id) + " out of range for " +
                          std::to_string(rows) + " table rows");
    }
  }

  Tensor out = Tensor::zeros({s, w, d});
  auto cells = std::make_shared<std::vector<int>>(ids);
  auto kernel = [cells, d](const Tensor& tab, Tensor& z) {
    for (std::size_t k = 0; k < cells->size(); ++k) {
      const int id = (*cells)[k];
      double* dst = z.data() + k * d;
      if (id >= 0) {
        const double* src = tab.data() + static_cast<std::size_t>(id) * d;
        std::copy(src, src + d, dst);
      } else {
        std::fill(dst, dst + d, 0.0);
      }
    }
  };
  kernel(table, out);

  if (Tape* tape = Tape::active()) {
    Tensor tab = table;
    Tensor o = out;
    tape->record({"embed_block",
                  {table},
                  out,
                  [tab, o, kernel]() mutable { kernel(tab, o); },
                  [tab, o, cells, d]() mutable {
                    auto& gt = tab.grad();
                    const auto& go = o.grad();
                    for (std::size_t k = 0; k < cells->size(); ++k) {
                      const int id = (*cells)[k];
                      if (id < 0) continue;
                      for (std::size_t j = 0; j < d; ++j) {
                        gt[static_cast<std::size_t>(id) * d + j] += go[k * d + j];
                      }
                    }
                  }});
  }
  return out;
}

TokenGrid tokenize_field(const std::string& field, const BpeVocab& vocab, std::size_t s,
                         std::size_t w) {
  if (s == 0 || w == 0) throw ConfigError("tokenize_field: s and w must be >= 1");

  TokenGrid out;
  out.s = s;
  out.w = w;
  out.ids.assign(s * w, -1);
  out.sentence_mask.assign(s, 0);
  out.word_mask.assign(s * w, 0);
  out.real_words.assign(s, 0);

  const std::vector<std::string> sentences = split_sentences(field);
  out.real_sentences = std::min(s, sentences.size());
  for (std::size_t si = 0; si < out.real_sentences; ++si) {
    const std::vector<int> ids = sentence_token_ids(sentences[si], vocab);
    const std::size_t n = std::min(w, ids.size());
    out.real_words[si] = n;
    out.sentence_mask[si] = 1;
    for (std::size_t j = 0; j < n; ++j) {
      out.ids[si * w + j] = ids[j];
      out.word_mask[si * w + j] = 1;
    }
  }
  return out;
}

FieldTensor embed_grid(const TokenGrid& grid, const EmbeddingTable& table) {
  FieldTensor out;
  out.block = embed_block(table.matrix, grid.ids, grid.s, grid.w);
  out.sentence_mask = grid.sentence_mask;
  out.word_mask = grid.word_mask;
  out.real_sentences = grid.real_sentences;
  out.real_words = grid.real_words;
  return out;
}

FieldTensor embed_field(const std::string& field, const BpeVocab& vocab,
                        const EmbeddingTable& table, std::size_t s, std::size_t w) {
  return embed_grid(tokenize_field(field, vocab, s, w), table);
}

std::array<FieldTensor, kFieldCount> embed_profile(const Profile& profile, const BpeVocab& vocab,
                                                   const EmbeddingTable& table, std::size_t s,
                                                   std::size_t w) {
  std::array<FieldTensor, kFieldCount> out;
  for (std::size_t i = 0; i < kFieldCount; ++i) {
    out[i] = embed_field(field_text(profile, i), vocab, table, s, w);
  }
  return out;
}

}  // namespace bgmhan

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bgmhan/bpe.hpp"
#include "bgmhan/embedding.hpp"
#include "bgmhan/tensor.hpp"

namespace bgmhan {

// Shape and ablation knobs of the network itself.
struct ModelConfig {
  std::size_t d = 32;      // feature width at every level
  std::size_t d_ff = 64;   // hidden width of the gated residual FFN
  std::size_t heads = 4;   // attention heads; head width is d / heads
  double dropout = 0.1;    // applied to pooled block outputs while training
  bool use_bpe = true;     // false: character-level tokenizer
  bool use_mha = true;     // false: single head of full width
  bool use_grc = true;     // false: plain residual, no gate
  GeluKind gelu = GeluKind::exact;
};

struct MhaParams {
  std::vector<Tensor> wq, wk, wv;  // per head, {d, d_k}
  Tensor wo;                       // {h*d_k, d}
};

struct GrnParams {
  Tensor gamma;             // {d}; undefined when the gate is ablated
  Tensor w1, b1;            // {d, d_ff}, {d_ff}
  Tensor w2, b2;            // {d_ff, d}, {d}
  Tensor ln_gain, ln_bias;  // {d}
};

struct LevelBlockParams {
  Tensor ln_gain, ln_bias;  // pre-attention LayerNorm, {d}
  MhaParams mha;
  GrnParams grn;
};

// The full network: embedding table, one block per level
// (token -> sentence -> field), and a linear + sigmoid head.
struct BgmHan {
  ModelConfig cfg;
  EmbeddingTable table;
  LevelBlockParams token, sentence, field;
  Tensor w_c;  // {d}
  Tensor b_c;  // {1}

  // Stable name -> tensor listing; defines checkpoint and update order.
  std::vector<std::pair<std::string, Tensor>> named_params() const;
  std::vector<Tensor> parameters() const;
  std::size_t param_count() const;
};

// True for parameters excluded from L2 decay: LayerNorm gains/biases and the
// gamma gate.
bool decay_exempt(const std::string& param_name);

// Fresh model, weights uniform in +/- 1/sqrt(fan_in), biases zero, LayerNorm
// gain 1 / bias 0, gamma 1. Draw order equals named_params order.
BgmHan make_model(const ModelConfig& cfg, std::size_t vocab_size, Rng& rng);

// Scaled dot-product attention over rows of x ({l, d}); mask marks real key
// positions (masked keys get zero attention). Throws if every key is masked.
Tensor multi_head_attention(const Tensor& x, const MhaParams& p,
                            const std::vector<std::uint8_t>& mask);

// use_grc: LayerNorm(gamma ⊙ FFN(x) + x); otherwise LayerNorm(FFN(x) + x).
Tensor gated_residual(const Tensor& x, const GrnParams& p, bool use_grc,
                      GeluKind gelu_kind = GeluKind::exact);

// One level: LayerNorm -> attention -> gated residual -> mean pool over real
// rows. Monotone (prefix) masks are evaluated on the sliced real rows, which
// is bit-identical to the masked computation and skips padding work.
Tensor level_block(const Tensor& x, const LevelBlockParams& p,
                   const std::vector<std::uint8_t>& mask, const ModelConfig& cfg);

// Full forward pass to a probability in (0,1), shape {1}. `rng` drives
// dropout and must be non-null when training with a positive rate.
Tensor forward(const BgmHan& model, const std::array<FieldTensor, kFieldCount>& fields,
               bool training = false, Rng* rng = nullptr);

// Self-contained checkpoint: config, flags, tokenizer, and every parameter
// with exact bit patterns. load(save(m)) gives bit-identical inference.
void save_model(const BgmHan& model, const BpeVocab& vocab, std::uint64_t config_hash,
                const std::string& path);

struct LoadedModel {
  BgmHan model;
  BpeVocab vocab;
  std::uint64_t config_hash = 0;
};

LoadedModel load_model(const std::string& path);

}  // namespace bgmhan

#include "bgmhan/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace bgmhan {

namespace {

Tensor rand_uniform(Shape shape, double bound, Rng& rng, const std::string& name) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = rng.uniform(-bound, bound);
  t.set_requires_grad(true).set_name(name);
  return t;
}

Tensor const_param(Shape shape, double value, const std::string& name) {
  Tensor t = Tensor::full(std::move(shape), value);
  t.set_requires_grad(true).set_name(name);
  return t;
}

std::size_t count_real(const std::vector<std::uint8_t>& mask) {
  std::size_t n = 0;
  for (auto m : mask) n += (m != 0);
  return n;
}

bool is_prefix_mask(const std::vector<std::uint8_t>& mask, std::size_t real) {
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if ((mask[i] != 0) != (i < real)) return false;
  }
  return true;
}

std::string hex_u64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t double_bits(double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, sizeof(v));
  return v;
}

double bits_double(std::uint64_t v) {
  double d;
  std::memcpy(&d, &v, sizeof(d));
  return d;
}

std::uint64_t parse_hex_u64(const std::string& tok, std::size_t line_no) {
  if (tok.empty() || tok.size() > 16 ||
      tok.find_first_not_of("0123456789abcdefABCDEF") != std::string::npos) {
    throw ParseError("checkpoint line " + std::to_string(line_no) + ": bad hex value '" + tok +
                     "'");
  }
  return std::stoull(tok, nullptr, 16);
}

std::string next_line(std::istream& in, std::size_t& line_no) {
  std::string line;
  if (!std::getline(in, line)) {
    throw ParseError("checkpoint line " + std::to_string(line_no + 1) + ": unexpected end of file");
  }
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

std::size_t parse_size(const std::string& tok, std::size_t line_no) {
  if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos) {
    throw ParseError("checkpoint line " + std::to_string(line_no) + ": bad count '" + tok + "'");
  }
  return static_cast<std::size_t>(std::stoull(tok));
}

// Parses "key value" and returns the value token.
std::string keyed_value(const std::string& line, const std::string& key, std::size_t line_no) {
  std::istringstream in(line);
  std::string word, value;
  if (!(in >> word >> value) || word != key) {
    throw ParseError("checkpoint line " + std::to_string(line_no) + ": expected '" + key +
                     " <value>', got '" + line + "'");
  }
  return value;
}

MhaParams make_mha(const std::string& level, std::size_t d, std::size_t heads, Rng& rng) {
  const std::size_t dk = d / heads;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  MhaParams p;
  for (std::size_t i = 0; i < heads; ++i) {
    p.wq.push_back(rand_uniform({d, dk}, bound, rng, level + ".mha.q" + std::to_string(i)));
  }
  for (std::size_t i = 0; i < heads; ++i) {
    p.wk.push_back(rand_uniform({d, dk}, bound, rng, level + ".mha.k" + std::to_string(i)));
  }
  for (std::size_t i = 0; i < heads; ++i) {
    p.wv.push_back(rand_uniform({d, dk}, bound, rng, level + ".mha.v" + std::to_string(i)));
  }
  p.wo = rand_uniform({heads * dk, d}, bound, rng, level + ".mha.wo");
  return p;
}

GrnParams make_grn(const std::string& level, std::size_t d, std::size_t d_ff, bool use_grc,
                   Rng& rng) {
  GrnParams p;
  if (use_grc) p.gamma = const_param({d}, 1.0, level + ".grn.gamma");
  p.w1 = rand_uniform({d, d_ff}, 1.0 / std::sqrt(static_cast<double>(d)), rng, level + ".grn.w1");
  p.b1 = const_param({d_ff}, 0.0, level + ".grn.b1");
  p.w2 =
      rand_uniform({d_ff, d}, 1.0 / std::sqrt(static_cast<double>(d_ff)), rng, level + ".grn.w2");
  p.b2 = const_param({d}, 0.0, level + ".grn.b2");
  p.ln_gain = const_param({d}, 1.0, level + ".grn.ln.gain");
  p.ln_bias = const_param({d}, 0.0, level + ".grn.ln.bias");
  return p;
}

LevelBlockParams make_block(const std::string& level, const ModelConfig& cfg, std::size_t heads,
                            Rng& rng) {
  LevelBlockParams b;
  b.ln_gain = const_param({cfg.d}, 1.0, level + ".ln.gain");
  b.ln_bias = const_param({cfg.d}, 0.0, level + ".ln.bias");
  b.mha = make_mha(level, cfg.d, heads, rng);
  b.grn = make_grn(level, cfg.d, cfg.d_ff, cfg.use_grc, rng);
  return b;
}

void add_block_params(std::vector<std::pair<std::string, Tensor>>& out, const std::string& level,
                      const LevelBlockParams& b) {
  out.emplace_back(level + ".ln.gain", b.ln_gain);
  out.emplace_back(level + ".ln.bias", b.ln_bias);
  for (std::size_t i = 0; i < b.mha.wq.size(); ++i) {
    out.emplace_back(level + ".mha.q" + std::to_string(i), b.mha.wq[i]);
  }
  for (std::size_t i = 0; i < b.mha.wk.size(); ++i) {
    out.emplace_back(level + ".mha.k" + std::to_string(i), b.mha.wk[i]);
  }
  for (std::size_t i = 0; i < b.mha.wv.size(); ++i) {
    out.emplace_back(level + ".mha.v" + std::to_string(i), b.mha.wv[i]);
  }
  out.emplace_back(level + ".mha.wo", b.mha.wo);
  if (b.grn.gamma.defined()) out.emplace_back(level + ".grn.gamma", b.grn.gamma);
  out.emplace_back(level + ".grn.w1", b.grn.w1);
  out.emplace_back(level + ".grn.b1", b.grn.b1);
  out.emplace_back(level + ".grn.w2", b.grn.w2);
  out.emplace_back(level + ".grn.b2", b.grn.b2);
  out.emplace_back(level + ".grn.ln.gain", b.grn.ln_gain);
  out.emplace_back(level + ".grn.ln.bias", b.grn.ln_bias);
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> BgmHan::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("embedding", table.matrix);
  add_block_params(out, "token", token);
  add_block_params(out, "sentence", sentence);
  add_block_params(out, "field", field);
  out.emplace_back("classifier.w", w_c);
  out.emplace_back("classifier.b", b_c);
  return out;
}

std::vector<Tensor> BgmHan::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_params()) out.push_back(t);
  return out;
}

std::size_t BgmHan::param_count() const {
  std::size_t n = 0;
  for (auto& [name, t] : named_params()) n += t.size();
  return n;
}

bool decay_exempt(const std::string& param_name) {
  return param_name.find(".ln.") != std::string::npos || param_name.ends_with(".gamma");
}

BgmHan make_model(const ModelConfig& cfg, std::size_t vocab_size, Rng& rng) {
  if (cfg.d == 0 || cfg.heads == 0) throw ConfigError("model: d and heads must be >= 1");
  if (cfg.d_ff < cfg.d) {
    throw ConfigError("model: d_ff " + std::to_string(cfg.d_ff) + " must be >= d " +
                      std::to_string(cfg.d));
  }
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) {
    throw ConfigError("model: dropout must lie in [0, 1)");
  }
  const std::size_t heads = cfg.use_mha ? cfg.heads : 1;
  if (cfg.d % heads != 0) {
    throw ConfigError("model: d " + std::to_string(cfg.d) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }

  BgmHan m;
  m.cfg = cfg;
  m.table = make_embedding_table(vocab_size, cfg.d, rng);
  m.token = make_block("token", cfg, heads, rng);
  m.sentence = make_block("sentence", cfg, heads, rng);
  m.field = make_block("field", cfg, heads, rng);
  m.w_c = rand_uniform({cfg.d}, 1.0 / std::sqrt(static_cast<double>(cfg.d)), rng, "classifier.w");
  m.b_c = const_param({1}, 0.0, "classifier.b");
  return m;
}

Tensor multi_head_attention(const Tensor& x, const MhaParams& p,
                            const std::vector<std::uint8_t>& mask) {
  if (x.ndim() != 2) {
    throw ShapeError("attention: input must be 2-d, got " + shape_str(x.shape()));
  }
  if (mask.size() != x.dim(0)) {
    throw ContractError("attention: mask length " + std::to_string(mask.size()) + " vs " +
                        std::to_string(x.dim(0)) + " rows");
  }
  const std::size_t real = count_real(mask);
  if (real == 0) throw ContractError("attention: every key position is masked");
  const bool all_real = real == mask.size();

  const std::size_t dk = p.wq.at(0).dim(1);
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

  std::vector<Tensor> heads;
  heads.reserve(p.wq.size());
  for (std::size_t i = 0; i < p.wq.size(); ++i) {
    Tensor q = matmul(x, p.wq[i]);
    Tensor k = matmul(x, p.wk[i]);
    Tensor v = matmul(x, p.wv[i]);
    Tensor scores = scale(matmul(q, transpose(k)), inv_sqrt_dk);
    Tensor attn = all_real ? softmax(scores) : masked_softmax(scores, mask);
    heads.push_back(matmul(attn, v));
  }
  Tensor cat = heads.size() == 1 ? heads[0] : concat_cols(heads);
  return matmul(cat, p.wo);
}

Tensor gated_residual(const Tensor& x, const GrnParams& p, bool use_grc, GeluKind gelu_kind) {
  if (use_grc && !p.gamma.defined()) {
    throw ContractError("gated_residual: gate requested but gamma is absent");
  }
  Tensor hidden = gelu(add_rowwise(matmul(x, p.w1), p.b1), gelu_kind);
  Tensor ffn = add_rowwise(matmul(hidden, p.w2), p.b2);
  Tensor branch = use_grc ? mul_rowwise(ffn, p.gamma) : ffn;
  return layer_norm(add(branch, x), p.ln_gain, p.ln_bias);
}

Tensor level_block(const Tensor& x, const LevelBlockParams& p,
                   const std::vector<std::uint8_t>& mask, const ModelConfig& cfg) {
  if (x.ndim() != 2) {
    throw ShapeError("level_block: input must be 2-d, got " + shape_str(x.shape()));
  }
  if (mask.size() != x.dim(0)) {
    throw ContractError("level_block: mask length " + std::to_string(mask.size()) + " vs " +
                        std::to_string(x.dim(0)) + " rows");
  }
  const std::size_t real = count_real(mask);
  if (real == 0) throw ContractError("level_block: every row is masked");

  // A monotone mask lets us drop the padded suffix up front; every later
  // stage is row-local or key-masked, so results match the masked run bit
  // for bit.
  Tensor in = x;
  std::vector<std::uint8_t> m = mask;
  if (real < mask.size() && is_prefix_mask(mask, real)) {
    in = slice_rows(x, real);
    m.assign(real, 1);
  }

  Tensor normed = layer_norm(in, p.ln_gain, p.ln_bias);
  Tensor attended = multi_head_attention(normed, p.mha, m);
  Tensor resid = gated_residual(attended, p.grn, cfg.use_grc, cfg.gelu);
  return count_real(m) == m.size() ? mean_pool(resid) : masked_mean_pool(resid, m);
}

Tensor forward(const BgmHan& model, const std::array<FieldTensor, kFieldCount>& fields,
               bool training, Rng* rng) {
  const ModelConfig& cfg = model.cfg;
  const bool drop = training && cfg.dropout > 0.0;
  if (drop && rng == nullptr) {
    throw ContractError("forward: dropout while training needs an rng");
  }

  std::vector<Tensor> field_vecs;
  field_vecs.reserve(kFieldCount);
  for (std::size_t fi = 0; fi < kFieldCount; ++fi) {
    const FieldTensor& f = fields[fi];
    if (f.real_sentences == 0) {
      throw ContractError(std::string("forward: field '") + field_name(fi) +
                          "' is empty; substitute missing fields before embedding");
    }
    const std::size_t w = f.block.dim(1);

    std::vector<Tensor> sent_vecs;
    sent_vecs.reserve(f.real_sentences);
    for (std::size_t si = 0; si < f.real_sentences; ++si) {
      Tensor plane = slice_plane(f.block, si);
      std::vector<std::uint8_t> wmask(f.word_mask.begin() + si * w,
                                      f.word_mask.begin() + (si + 1) * w);
      Tensor v = level_block(plane, model.token, wmask, cfg);
      if (drop) v = dropout(v, cfg.dropout, *rng);
      sent_vecs.push_back(v);
    }
    Tensor sentences = stack_rows(sent_vecs);
    std::vector<std::uint8_t> smask(sent_vecs.size(), 1);
    Tensor fv = level_block(sentences, model.sentence, smask, cfg);
    if (drop) fv = dropout(fv, cfg.dropout, *rng);
    field_vecs.push_back(fv);
  }

  Tensor stacked = stack_rows(field_vecs);
  std::vector<std::uint8_t> fmask(kFieldCount, 1);
  Tensor profile_vec = level_block(stacked, model.field, fmask, cfg);
  if (drop) profile_vec = dropout(profile_vec, cfg.dropout, *rng);

  Tensor logit = add(dot(profile_vec, model.w_c), model.b_c);
  return sigmoid(logit);
}

void save_model(const BgmHan& model, const BpeVocab& vocab, std::uint64_t config_hash,
                const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  const ModelConfig& cfg = model.cfg;
  out << "bgmhan-checkpoint v1\n";
  out << "config_hash " << hex_u64(config_hash) << "\n";
  out << "d " << cfg.d << "\n";
  out << "d_ff " << cfg.d_ff << "\n";
  out << "heads " << cfg.heads << "\n";
  out << "dropout " << hex_u64(double_bits(cfg.dropout)) << "\n";
  out << "gelu " << (cfg.gelu == GeluKind::exact ? "exact" : "tanh") << "\n";
  out << "flags " << int(cfg.use_bpe) << " " << int(cfg.use_mha) << " " << int(cfg.use_grc)
      << "\n";
  write_vocab(out, vocab);

  const auto named = model.named_params();
  out << "params " << named.size() << "\n";
  for (const auto& [name, t] : named) {
    out << name << " " << t.ndim();
    for (std::size_t i = 0; i < t.ndim(); ++i) out << " " << t.dim(i);
    out << "\n";
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (i) out << " ";
      out << hex_u64(double_bits(t.at(i)));
    }
    out << "\n";
  }
  if (!out) throw IoError("failed while writing '" + path + "'");
}

LoadedModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::size_t line_no = 0;

  const std::string header = next_line(in, line_no);
  if (header != "bgmhan-checkpoint v1") {
    throw ParseError("checkpoint line 1: expected header 'bgmhan-checkpoint v1', got '" + header +
                     "'");
  }
  LoadedModel loaded;
  loaded.config_hash = parse_hex_u64(keyed_value(next_line(in, line_no), "config_hash", line_no),
                                     line_no);

  ModelConfig cfg;
  cfg.d = parse_size(keyed_value(next_line(in, line_no), "d", line_no), line_no);
  cfg.d_ff = parse_size(keyed_value(next_line(in, line_no), "d_ff", line_no), line_no);
  cfg.heads = parse_size(keyed_value(next_line(in, line_no), "heads", line_no), line_no);
  cfg.dropout = bits_double(parse_hex_u64(keyed_value(next_line(in, line_no), "dropout", line_no),
                                          line_no));
  const std::string gelu = keyed_value(next_line(in, line_no), "gelu", line_no);
  if (gelu == "exact") {
    cfg.gelu = GeluKind::exact;
  } else if (gelu == "tanh") {
    cfg.gelu = GeluKind::tanh_approx;
  } else {
    throw ParseError("checkpoint line " + std::to_string(line_no) + ": unknown gelu kind '" +
                     gelu + "'");
  }
  {
    const std::string line = next_line(in, line_no);
    std::istringstream fl(line);
    std::string word;
    int bpe = -1, mha = -1, grc = -1;
    if (!(fl >> word >> bpe >> mha >> grc) || word != "flags" || bpe < 0 || bpe > 1 || mha < 0 ||
        mha > 1 || grc < 0 || grc > 1) {
      throw ParseError("checkpoint line " + std::to_string(line_no) + ": expected 'flags b m g'");
    }
    cfg.use_bpe = bpe != 0;
    cfg.use_mha = mha != 0;
    cfg.use_grc = grc != 0;
  }

  loaded.vocab = read_vocab(in, line_no);

  Rng scratch(0);
  loaded.model = make_model(cfg, loaded.vocab.size(), scratch);

  auto named = loaded.model.named_params();
  const std::size_t n_params =
      parse_size(keyed_value(next_line(in, line_no), "params", line_no), line_no);
  if (n_params != named.size()) {
    throw ParseError("checkpoint: holds " + std::to_string(n_params) + " parameters, model needs " +
                     std::to_string(named.size()));
  }
  for (auto& [name, t] : named) {
    const std::string head = next_line(in, line_no);
    std::istringstream hs(head);
    std::string got_name;
    std::size_t ndim = 0;
    if (!(hs >> got_name >> ndim)) {
      throw ParseError("checkpoint line " + std::to_string(line_no) + ": bad parameter header '" +
                       head + "'");
    }
    if (got_name != name) {
      throw ParseError("checkpoint line " + std::to_string(line_no) + ": expected parameter '" +
                       name + "', got '" + got_name + "'");
    }
    Shape shape;
    for (std::size_t i = 0; i < ndim; ++i) {
      std::size_t dim = 0;
      if (!(hs >> dim)) {
        throw ParseError("checkpoint line " + std::to_string(line_no) + ": missing dimensions");
      }
      shape.push_back(dim);
    }
    if (shape != t.shape()) {
      throw ParseError("checkpoint line " + std::to_string(line_no) + ": parameter '" + name +
                       "' has shape " + shape_str(shape) + ", expected " + shape_str(t.shape()));
    }
    const std::string data = next_line(in, line_no);
    std::istringstream ds(data);
    std::string tok;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (!(ds >> tok)) {
        throw ParseError("checkpoint line " + std::to_string(line_no) + ": parameter '" + name +
                         "' holds fewer than " + std::to_string(t.size()) + " values");
      }
      t.at(i) = bits_double(parse_hex_u64(tok, line_no));
    }
    if (ds >> tok) {
      throw ParseError("checkpoint line " + std::to_string(line_no) + ": parameter '" + name +
                       "' holds extra values");
    }
  }
  return loaded;
}

}  // namespace bgmhan

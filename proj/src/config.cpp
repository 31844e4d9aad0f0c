#include "bgmhan/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "bgmhan/errors.hpp"
#include "json.hpp"

namespace bgmhan {

namespace {

using nlohmann::json;

[[noreturn]] void bad_field(const std::string& field, const std::string& why) {
  throw ConfigError("config field '" + field + "' " + why);
}

std::size_t as_size(const json& v, const std::string& field) {
  if (!v.is_number_unsigned()) bad_field(field, "must be a non-negative integer");
  return v.get<std::size_t>();
}

std::uint64_t as_u64(const json& v, const std::string& field) {
  if (!v.is_number_unsigned()) bad_field(field, "must be a non-negative integer");
  return v.get<std::uint64_t>();
}

double as_double(const json& v, const std::string& field) {
  if (!v.is_number()) bad_field(field, "must be a number");
  return v.get<double>();
}

bool as_bool(const json& v, const std::string& field) {
  if (!v.is_boolean()) bad_field(field, "must be true or false");
  return v.get<bool>();
}

}  // namespace

RunConfig desk_profile() { return RunConfig{}; }

RunConfig paper_profile() {
  RunConfig cfg;
  cfg.max_sentences = 10;
  cfg.max_words = 50;
  cfg.embed_dim = 768;
  cfg.heads = 8;
  cfg.ffn_dim = 1024;
  cfg.vocab_target = 5000;
  cfg.learning_rate = 1e-5;
  cfg.batch_size = 32;
  cfg.scheduler_patience = 3;
  cfg.scheduler_factor = 0.1;
  cfg.early_stop_patience = 10;
  cfg.dropout = 0.6;
  cfg.gen_n = 3000;
  cfg.split_fractions = {0.90, 0.05, 0.05};
  return cfg;
}

RunConfig profile_by_name(const std::string& name) {
  if (name == "desk") return desk_profile();
  if (name == "paper") return paper_profile();
  throw ConfigError("unknown profile '" + name + "' (expected 'desk' or 'paper')");
}

RunConfig parse_config(const std::string& json_text, RunConfig base) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("config must be a JSON object");

  RunConfig cfg = base;
  for (const auto& [key, value] : doc.items()) {
    if (key == "max_sentences") cfg.max_sentences = as_size(value, key);
    else if (key == "max_words") cfg.max_words = as_size(value, key);
    else if (key == "embed_dim") cfg.embed_dim = as_size(value, key);
    else if (key == "heads") cfg.heads = as_size(value, key);
    else if (key == "ffn_dim") cfg.ffn_dim = as_size(value, key);
    else if (key == "vocab_target") cfg.vocab_target = as_size(value, key);
    else if (key == "use_bpe") cfg.use_bpe = as_bool(value, key);
    else if (key == "use_mha") cfg.use_mha = as_bool(value, key);
    else if (key == "use_grc") cfg.use_grc = as_bool(value, key);
    else if (key == "learning_rate") cfg.learning_rate = as_double(value, key);
    else if (key == "batch_size") cfg.batch_size = as_size(value, key);
    else if (key == "max_epochs") cfg.max_epochs = as_size(value, key);
    else if (key == "scheduler_patience") cfg.scheduler_patience = as_size(value, key);
    else if (key == "scheduler_factor") cfg.scheduler_factor = as_double(value, key);
    else if (key == "min_lr") cfg.min_lr = as_double(value, key);
    else if (key == "early_stop_patience") cfg.early_stop_patience = as_size(value, key);
    else if (key == "clip_max_norm") cfg.clip_max_norm = as_double(value, key);
    else if (key == "weight_decay") cfg.weight_decay = as_double(value, key);
    else if (key == "dropout") cfg.dropout = as_double(value, key);
    else if (key == "seed") cfg.seed = as_u64(value, key);
    else if (key == "gen_n") cfg.gen_n = as_size(value, key);
    else if (key == "signal_strength") cfg.signal_strength = as_double(value, key);
    else if (key == "blank_fraction") cfg.blank_fraction = as_double(value, key);
    else if (key == "positive_fraction") cfg.positive_fraction = as_double(value, key);
    else if (key == "split_fractions") {
      if (!value.is_array() || value.size() != 3) {
        bad_field(key, "must be an array of 3 numbers");
      }
      for (std::size_t i = 0; i < 3; ++i) cfg.split_fractions[i] = as_double(value[i], key);
    } else if (key == "ablation_seeds") {
      if (!value.is_array() || value.empty()) {
        bad_field(key, "must be a non-empty array of non-negative integers");
      }
      cfg.ablation_seeds.clear();
      for (const auto& s : value) cfg.ablation_seeds.push_back(as_u64(s, key));
    } else {
      throw ConfigError("unknown config field '" + key + "'");
    }
  }
  return cfg;
}

RunConfig load_config(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), std::move(base));
}

void validate_config(const RunConfig& cfg) {
  if (cfg.max_sentences == 0) bad_field("max_sentences", "must be positive");
  if (cfg.max_words == 0) bad_field("max_words", "must be positive");
  if (cfg.embed_dim == 0) bad_field("embed_dim", "must be positive");
  if (cfg.heads == 0) bad_field("heads", "must be positive");
  if (cfg.use_mha && cfg.embed_dim % cfg.heads != 0) {
    bad_field("heads", "must divide embed_dim (" + std::to_string(cfg.embed_dim) + " % " +
                           std::to_string(cfg.heads) + " != 0)");
  }
  if (cfg.ffn_dim == 0) bad_field("ffn_dim", "must be positive");
  if (cfg.vocab_target == 0) bad_field("vocab_target", "must be positive");
  if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate)) {
    bad_field("learning_rate", "must be positive and finite");
  }
  if (cfg.batch_size == 0) bad_field("batch_size", "must be positive");
  if (cfg.max_epochs == 0) bad_field("max_epochs", "must be positive");
  if (cfg.scheduler_patience == 0) bad_field("scheduler_patience", "must be positive");
  if (!(cfg.scheduler_factor > 0.0 && cfg.scheduler_factor < 1.0)) {
    bad_field("scheduler_factor", "must lie in (0, 1)");
  }
  if (!(cfg.min_lr > 0.0)) bad_field("min_lr", "must be positive");
  if (cfg.early_stop_patience == 0) bad_field("early_stop_patience", "must be positive");
  if (!(cfg.clip_max_norm > 0.0)) bad_field("clip_max_norm", "must be positive");
  if (cfg.weight_decay < 0.0) bad_field("weight_decay", "must be non-negative");
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) bad_field("dropout", "must lie in [0, 1)");
  if (cfg.gen_n < 4) bad_field("gen_n", "must be at least 4");
  if (!(cfg.signal_strength >= 0.0 && cfg.signal_strength <= 1.0)) {
    bad_field("signal_strength", "must lie in [0, 1]");
  }
  if (!(cfg.blank_fraction >= 0.0 && cfg.blank_fraction <= 1.0)) {
    bad_field("blank_fraction", "must lie in [0, 1]");
  }
  if (!(cfg.positive_fraction > 0.0 && cfg.positive_fraction < 1.0)) {
    bad_field("positive_fraction", "must lie in (0, 1)");
  }
  double sum = 0.0;
  for (double f : cfg.split_fractions) {
    if (!(f > 0.0)) bad_field("split_fractions", "must all be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    bad_field("split_fractions", "must sum to 1, got " + std::to_string(sum));
  }
  if (cfg.ablation_seeds.size() < 3) bad_field("ablation_seeds", "needs at least 3 seeds");
}

ModelConfig model_config(const RunConfig& cfg) {
  ModelConfig m;
  m.d = cfg.embed_dim;
  m.d_ff = cfg.ffn_dim;
  m.heads = cfg.heads;
  m.dropout = cfg.dropout;
  m.use_bpe = cfg.use_bpe;
  m.use_mha = cfg.use_mha;
  m.use_grc = cfg.use_grc;
  return m;
}

TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig t;
  t.learning_rate = cfg.learning_rate;
  t.batch_size = cfg.batch_size;
  t.max_epochs = cfg.max_epochs;
  t.scheduler_patience = cfg.scheduler_patience;
  t.scheduler_factor = cfg.scheduler_factor;
  t.min_lr = cfg.min_lr;
  t.early_stop_patience = cfg.early_stop_patience;
  t.clip_max_norm = cfg.clip_max_norm;
  t.weight_decay = cfg.weight_decay;
  t.dropout = cfg.dropout;
  t.seed = cfg.seed;
  return t;
}

std::string config_fingerprint(const RunConfig& cfg) {
  std::ostringstream out;
  out << "s=" << cfg.max_sentences << ";w=" << cfg.max_words << ";d=" << cfg.embed_dim
      << ";h=" << cfg.heads << ";ffn=" << cfg.ffn_dim << ";vocab=" << cfg.vocab_target
      << ";bpe=" << (cfg.use_bpe ? 1 : 0) << ";mha=" << (cfg.use_mha ? 1 : 0)
      << ";grc=" << (cfg.use_grc ? 1 : 0);
  return out.str();
}

std::uint64_t config_hash(const RunConfig& cfg) {
  // FNV-1a, 64-bit.
  std::uint64_t hash = 14695981039346656037ULL;
  for (unsigned char c : config_fingerprint(cfg)) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

std::string config_json(const RunConfig& cfg) {
  nlohmann::ordered_json doc;
  doc["max_sentences"] = cfg.max_sentences;
  doc["max_words"] = cfg.max_words;
  doc["embed_dim"] = cfg.embed_dim;
  doc["heads"] = cfg.heads;
  doc["ffn_dim"] = cfg.ffn_dim;
  doc["vocab_target"] = cfg.vocab_target;
  doc["use_bpe"] = cfg.use_bpe;
  doc["use_mha"] = cfg.use_mha;
  doc["use_grc"] = cfg.use_grc;
  doc["learning_rate"] = cfg.learning_rate;
  doc["batch_size"] = cfg.batch_size;
  doc["max_epochs"] = cfg.max_epochs;
  doc["scheduler_patience"] = cfg.scheduler_patience;
  doc["scheduler_factor"] = cfg.scheduler_factor;
  doc["min_lr"] = cfg.min_lr;
  doc["early_stop_patience"] = cfg.early_stop_patience;
  doc["clip_max_norm"] = cfg.clip_max_norm;
  doc["weight_decay"] = cfg.weight_decay;
  doc["dropout"] = cfg.dropout;
  doc["seed"] = cfg.seed;
  doc["gen_n"] = cfg.gen_n;
  doc["signal_strength"] = cfg.signal_strength;
  doc["blank_fraction"] = cfg.blank_fraction;
  doc["positive_fraction"] = cfg.positive_fraction;
  doc["split_fractions"] = cfg.split_fractions;
  doc["ablation_seeds"] = cfg.ablation_seeds;
  return doc.dump(2) + "\n";
}

}  // namespace bgmhan

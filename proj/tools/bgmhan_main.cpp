// Command-line front end: data generation, tokenizer training, model
// training, evaluation, the component ablation study, and report rendering.
//
// Configuration resolution order: profile defaults (--profile, default
// "desk"), then values from --config <file>, then individual flags. Every
// artifact goes under the --out directory; inputs are never modified.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bgmhan/config.hpp"
#include "bgmhan/data.hpp"
#include "bgmhan/errors.hpp"
#include "bgmhan/metrics.hpp"
#include "bgmhan/model.hpp"
#include "bgmhan/pipeline.hpp"
#include "bgmhan/report.hpp"

namespace fs = std::filesystem;
using namespace bgmhan;

namespace {

// Deferred config edits collected from flags; applied after profile and file
// values so that flags always win.
struct ConfigCli {
  std::string profile = "desk";
  std::string config_path;
  std::string out_dir = "out";
  std::vector<std::function<void(RunConfig&)>> overrides;

  RunConfig resolve() const {
    RunConfig cfg = profile_by_name(profile);
    if (!config_path.empty()) cfg = load_config(config_path, std::move(cfg));
    for (const auto& apply : overrides) apply(cfg);
    validate_config(cfg);
    return cfg;
  }
};

// Registers the shared --profile/--config/--out flags plus one override flag
// per config field on `cmd`.
void add_config_flags(CLI::App* cmd, ConfigCli* cli) {
  cmd->add_option("--profile", cli->profile, "Base profile: desk (default) or paper");
  cmd->add_option("--config", cli->config_path, "JSON config file applied over the profile")
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", cli->out_dir, "Output directory for all artifacts");

  auto opt = [cmd, cli](const char* flag, auto setter, const char* help) {
    using Value = typename decltype(setter)::value_type;
    cmd->add_option_function<Value>(
        flag,
        [cli, setter](const Value& v) {
          cli->overrides.push_back([setter, v](RunConfig& cfg) { setter.apply(cfg, v); });
        },
        help);
  };

  // Small helper so each flag is one line: a member pointer wrapped with its
  // value type.
  auto set = [](auto member) {
    using Member = decltype(member);
    struct Setter {
      Member member;
      using value_type = std::decay_t<decltype(std::declval<RunConfig>().*member)>;
      void apply(RunConfig& cfg, const value_type& v) const { cfg.*member = v; }
    };
    return Setter{member};
  };

  opt("--seed", set(&RunConfig::seed), "Master random seed");
  opt("--max-sentences", set(&RunConfig::max_sentences), "Sentences kept per field");
  opt("--max-words", set(&RunConfig::max_words), "Words kept per sentence");
  opt("--embed-dim", set(&RunConfig::embed_dim), "Feature width d");
  opt("--heads", set(&RunConfig::heads), "Attention heads");
  opt("--ffn-dim", set(&RunConfig::ffn_dim), "Gated residual FFN hidden width");
  opt("--vocab-target", set(&RunConfig::vocab_target), "Tokenizer size budget");
  opt("--use-bpe", set(&RunConfig::use_bpe), "Subword tokenizer on/off (true/false)");
  opt("--use-mha", set(&RunConfig::use_mha), "Multi-head attention on/off (true/false)");
  opt("--use-grc", set(&RunConfig::use_grc), "Gated residuals on/off (true/false)");
  opt("--learning-rate", set(&RunConfig::learning_rate), "Optimizer learning rate");
  opt("--batch-size", set(&RunConfig::batch_size), "Training batch size");
  opt("--max-epochs", set(&RunConfig::max_epochs), "Training epoch limit");
  opt("--scheduler-patience", set(&RunConfig::scheduler_patience),
      "Epochs without improvement before decaying the learning rate");
  opt("--scheduler-factor", set(&RunConfig::scheduler_factor), "Learning-rate decay factor");
  opt("--min-lr", set(&RunConfig::min_lr), "Learning-rate floor");
  opt("--early-stop-patience", set(&RunConfig::early_stop_patience),
      "Epochs without improvement before stopping");
  opt("--clip-max-norm", set(&RunConfig::clip_max_norm), "Gradient clipping threshold");
  opt("--weight-decay", set(&RunConfig::weight_decay), "L2 regularization strength");
  opt("--dropout", set(&RunConfig::dropout), "Dropout rate on pooled block outputs");
  opt("--gen-n", set(&RunConfig::gen_n), "Synthetic profiles to generate");
  opt("--signal-strength", set(&RunConfig::signal_strength),
      "Fraction of labels kept consistent with the text (0..1)");
  opt("--blank-fraction", set(&RunConfig::blank_fraction), "Fraction of fields blanked out");
  opt("--positive-fraction", set(&RunConfig::positive_fraction),
      "Target share of positive labels");
  opt("--ablation-seeds", set(&RunConfig::ablation_seeds),
      "Seeds for the ablation study (3 or more)");
  cmd->add_option_function<std::vector<double>>(
         "--split-fractions",
         [cli](const std::vector<double>& v) {
           if (v.size() != 3) {
             throw CLI::ValidationError("--split-fractions",
                                        "expected exactly 3 values (train val test)");
           }
           cli->overrides.push_back(
               [v](RunConfig& cfg) { cfg.split_fractions = {v[0], v[1], v[2]}; });
         },
         "Train/validation/test fractions (3 values summing to 1)")
      ->expected(3);
}

fs::path prepare_out(const ConfigCli& cli) {
  fs::path out(cli.out_dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory " + out.string() + ": " + ec.message());
  return out;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << content;
  if (!out) throw IoError("failed while writing " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<Profile> load_dataset(const std::string& path) {
  LoadReport report = load_profiles(path);
  for (const std::string& w : report.warnings) std::cerr << "warning: " << w << '\n';
  if (!report.ok()) {
    std::string msg = "dataset " + path + " has " + std::to_string(report.errors.size()) +
                      " bad record(s); first: " + report.errors.front();
    throw ParseError(msg);
  }
  if (report.profiles.empty()) throw ParseError("dataset " + path + " contains no records");
  return report.profiles;
}

GenConfig gen_config(const RunConfig& cfg) {
  GenConfig gen;
  gen.n = cfg.gen_n;
  gen.seed = cfg.seed;
  gen.signal_strength = cfg.signal_strength;
  gen.blank_fraction = cfg.blank_fraction;
  gen.positive_fraction = cfg.positive_fraction;
  return gen;
}

int cmd_gen_data(const ConfigCli& cli) {
  const RunConfig cfg = cli.resolve();
  const fs::path out = prepare_out(cli);

  const std::vector<Profile> profiles = generate_synthetic(gen_config(cfg));
  std::size_t positives = 0;
  for (const Profile& p : profiles) positives += static_cast<std::size_t>(p.label);

  const fs::path data_path = out / "dataset.records";
  save_profiles(profiles, data_path.string());
  write_file(out / "config.json", config_json(cfg));

  std::cout << "wrote " << data_path.string() << " (" << profiles.size() << " profiles, "
            << positives << " positive)\n";
  return 0;
}

int cmd_tokenize(const ConfigCli& cli, const std::string& data_path,
                 const std::string& text_path) {
  const RunConfig cfg = cli.resolve();
  const fs::path out = prepare_out(cli);

  if (data_path.empty() == text_path.empty()) {
    throw ConfigError("tokenize needs exactly one of --data or --text");
  }
  const std::string corpus =
      data_path.empty() ? read_file(text_path) : corpus_text(load_dataset(data_path));

  const BpeVocab vocab =
      cfg.use_bpe ? train_bpe(corpus, cfg.vocab_target) : char_vocab(corpus);
  const fs::path vocab_path = out / "vocab.txt";
  save_vocab(vocab, vocab_path.string());

  std::cout << "wrote " << vocab_path.string() << " (" << vocab.size() << " symbols, "
            << vocab.merges().size() << " merges)\n";
  return 0;
}

int cmd_train(const ConfigCli& cli, const std::string& data_path) {
  const RunConfig cfg = cli.resolve();
  const fs::path out = prepare_out(cli);

  const std::vector<Profile> profiles = load_dataset(data_path);
  const DatasetSplit split = stratified_split(profiles, cfg.split_fractions, cfg.seed);
  const TrainedRun run = train_run(split, cfg);

  save_model(run.model, run.vocab, config_hash(cfg), (out / "model.ckpt").string());
  write_file(out / "history.jsonl", history_records(run.result.history));
  write_file(out / "history.txt", history_table(run.result.history));
  write_file(out / "curves.txt", history_charts(run.result.history));
  write_file(out / "config.json", config_json(cfg));

  std::cout << history_table(run.result.history);
  std::cout << "best epoch " << run.result.best_epoch << " (validation accuracy "
            << run.result.best_val_accuracy << ")"
            << (run.result.stopped_early ? ", stopped early" : "") << '\n';
  std::cout << "wrote " << (out / "model.ckpt").string() << '\n';
  return 0;
}

int cmd_eval(const ConfigCli& cli, const std::string& checkpoint_path,
             const std::string& data_path, const std::string& subset) {
  const RunConfig cfg = cli.resolve();
  const fs::path out = prepare_out(cli);

  const LoadedModel loaded = load_model(checkpoint_path);
  const std::uint64_t expected = config_hash(cfg);
  if (loaded.config_hash != expected) {
    std::ostringstream msg;
    msg << "checkpoint " << checkpoint_path
        << " was built for a different architecture (checkpoint hash " << std::hex
        << loaded.config_hash << ", active config hash " << expected << std::dec
        << "); pass the config the model was trained with (" << config_fingerprint(cfg)
        << " is active)";
    throw ConfigError(msg.str());
  }

  std::vector<Profile> profiles = load_dataset(data_path);
  if (subset != "all") {
    DatasetSplit split = stratified_split(profiles, cfg.split_fractions, cfg.seed);
    if (subset == "train") profiles = std::move(split.train);
    else if (subset == "val") profiles = std::move(split.validation);
    else if (subset == "test") profiles = std::move(split.test);
    else throw ConfigError("--split must be one of all, train, val, test");
  }

  const MetricReport report =
      evaluate_model(loaded.model, loaded.vocab, profiles, cfg.max_sentences, cfg.max_words);
  write_file(out / "metrics.txt", metric_report_text(report));
  write_file(out / "metrics.json", metric_report_records(report));

  std::cout << metric_report_text(report);
  std::cout << "wrote " << (out / "metrics.json").string() << '\n';
  return 0;
}

int cmd_ablate(const ConfigCli& cli, const std::string& data_path) {
  const RunConfig cfg = cli.resolve();
  const fs::path out = prepare_out(cli);

  const std::vector<Profile> profiles = load_dataset(data_path);
  const DatasetSplit split = stratified_split(profiles, cfg.split_fractions, cfg.seed);
  const AblationResult result = run_ablation(split, cfg);

  write_file(out / "ablation.txt", ablation_table(result));
  write_file(out / "ablation.json", ablation_records(result));
  write_file(out / "config.json", config_json(cfg));

  std::cout << ablation_table(result);
  std::cout << "wrote " << (out / "ablation.json").string() << '\n';
  return 0;
}

int cmd_report(const ConfigCli& cli, const std::vector<std::string>& history_paths) {
  const fs::path out = prepare_out(cli);
  for (const std::string& path : history_paths) {
    const std::vector<EpochRecord> history = parse_history_records(read_file(path));
    if (history.empty()) throw ParseError("history file " + path + " contains no records");
    const std::string stem = fs::path(path).stem().string();
    write_file(out / (stem + ".curves.txt"), history_charts(history));
    write_file(out / (stem + ".table.txt"), history_table(history));
    std::cout << "== " << path << " ==\n" << history_charts(history) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical attention classifier for semi-structured applicant profiles"};
  app.require_subcommand(1);

  ConfigCli cli;
  std::string data_path, text_path, checkpoint_path, subset = "all";
  std::vector<std::string> history_paths;

  CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic labeled dataset");
  add_config_flags(gen, &cli);

  CLI::App* tok = app.add_subcommand("tokenize", "Fit a tokenizer vocabulary on a corpus");
  add_config_flags(tok, &cli);
  tok->add_option("--data", data_path, "Profile records file to use as the corpus")
      ->check(CLI::ExistingFile);
  tok->add_option("--text", text_path, "Plain text file to use as the corpus")
      ->check(CLI::ExistingFile);

  CLI::App* train = app.add_subcommand("train", "Train a model on a dataset");
  add_config_flags(train, &cli);
  train->add_option("--data", data_path, "Profile records file")
      ->required()
      ->check(CLI::ExistingFile);

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  add_config_flags(eval, &cli);
  eval->add_option("--checkpoint", checkpoint_path, "Model checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--data", data_path, "Profile records file")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--split", subset,
                   "Evaluate on all records or on the train/val/test part of the configured "
                   "split (all, train, val, test)");

  CLI::App* ablate = app.add_subcommand(
      "ablate", "Train every component variant and tabulate test metrics");
  add_config_flags(ablate, &cli);
  ablate->add_option("--data", data_path, "Profile records file")
      ->required()
      ->check(CLI::ExistingFile);

  CLI::App* report = app.add_subcommand("report", "Render curves from training history files");
  add_config_flags(report, &cli);
  report->add_option("history", history_paths, "History files (.jsonl) to render")
      ->required()
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cmd_gen_data(cli);
    if (tok->parsed()) return cmd_tokenize(cli, data_path, text_path);
    if (train->parsed()) return cmd_train(cli, data_path);
    if (eval->parsed()) return cmd_eval(cli, checkpoint_path, data_path, subset);
    if (ablate->parsed()) return cmd_ablate(cli, data_path);
    if (report->parsed()) return cmd_report(cli, history_paths);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sstream>
#include <string>
#include <vector>

#include "bgmhan/config.hpp"
#include "bgmhan/data.hpp"
#include "bgmhan/errors.hpp"
#include "bgmhan/pipeline.hpp"
#include "bgmhan/report.hpp"
#include "doctest.h"

using namespace bgmhan;

namespace {

std::vector<EpochRecord> sample_history() {
  std::vector<EpochRecord> h;
  double loss = 1.4;
  for (std::size_t e = 1; e <= 8; ++e) {
    EpochRecord r;
    r.epoch = e;
    r.train_loss = loss;
    r.val_loss = loss * 1.1;
    r.val_accuracy = 0.5 + 0.05 * static_cast<double>(e);
    r.lr = e < 5 ? 1e-3 : 1e-4;
    h.push_back(r);
    loss *= 0.8;
  }
  return h;
}

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

MetricReport fake_report(double base) {
  MetricReport r;
  r.precision = base;
  r.recall = base - 0.01;
  r.f1 = base - 0.005;
  r.accuracy = base + 0.01;
  return r;
}

AblationResult fake_ablation() {
  AblationResult result;
  result.seeds = {11, 23, 47};
  double base = 0.70;
  for (const AblationVariant& v : ablation_variants()) {
    AblationRow row;
    row.variant = v;
    for (int s = 0; s < 3; ++s) row.per_seed.push_back(fake_report(base + 0.01 * s));
    row.precision = {base + 0.01, 0.01};
    row.recall = {base, 0.01};
    row.f1 = {base + 0.005, 0.01};
    row.accuracy = {base + 0.02, 0.01};
    result.rows.push_back(row);
    base += 0.03;
  }
  return result;
}

}  // namespace

TEST_CASE("history records round-trip through the line format") {
  const std::vector<EpochRecord> history = sample_history();
  const std::string text = history_records(history);
  CHECK(count_lines(text) == history.size());

  const std::vector<EpochRecord> parsed = parse_history_records(text);
  REQUIRE(parsed.size() == history.size());
  for (std::size_t i = 0; i < history.size(); ++i) {
    CHECK(parsed[i].epoch == history[i].epoch);
    CHECK(parsed[i].train_loss == doctest::Approx(history[i].train_loss).epsilon(1e-12));
    CHECK(parsed[i].val_loss == doctest::Approx(history[i].val_loss).epsilon(1e-12));
    CHECK(parsed[i].val_accuracy == doctest::Approx(history[i].val_accuracy).epsilon(1e-12));
    CHECK(parsed[i].lr == doctest::Approx(history[i].lr).epsilon(1e-12));
  }
}

TEST_CASE("malformed history lines are rejected with their line number") {
  const std::string good_line = history_records({sample_history()[0]});
  CHECK_THROWS_WITH_AS(parse_history_records(good_line + "not json\n"),
                       doctest::Contains("line 2"), ParseError);
  CHECK_THROWS_WITH_AS(parse_history_records("{\"epoch\":1}\n"),
                       doctest::Contains("line 1"), ParseError);
  CHECK_THROWS_WITH_AS(parse_history_records("{\"epoch\":1,\"train_loss\":\"x\"}\n"),
                       doctest::Contains("train_loss"), ParseError);
  CHECK(parse_history_records("").empty());
}

TEST_CASE("history table lists one aligned row per epoch") {
  const std::string table = history_table(sample_history());
  CHECK(count_lines(table) == 9);  // header + 8 epochs
  CHECK(table.find("train_loss") != std::string::npos);
  CHECK(table.find("val_accuracy") != std::string::npos);
}

TEST_CASE("ascii charts span their data range") {
  const std::string chart = ascii_chart("loss", {1.0, 0.8, 0.6, 0.4, 0.2}, 40, 10);
  CHECK(chart.find("loss") == 0);
  CHECK(chart.find("1.000000") != std::string::npos);
  CHECK(chart.find("0.200000") != std::string::npos);
  CHECK(chart.find('*') != std::string::npos);

  // every column carries exactly one marker
  std::istringstream lines(chart);
  std::string line;
  std::vector<std::size_t> stars_per_col(40, 0);
  while (std::getline(lines, line)) {
    const std::size_t bar = line.find('|');
    if (bar == std::string::npos) continue;
    for (std::size_t c = bar + 1; c < line.size(); ++c) {
      if (line[c] == '*') ++stars_per_col[c - bar - 1];
    }
  }
  for (std::size_t c = 0; c < 40; ++c) CHECK(stars_per_col[c] == 1);

  CHECK_NOTHROW(ascii_chart("flat", {0.5, 0.5, 0.5}));
  CHECK_NOTHROW(ascii_chart("single", {0.5}));
  CHECK_THROWS_AS(ascii_chart("empty", {}), ContractError);
  CHECK_THROWS_AS(ascii_chart("tiny", {1.0}, 1, 1), ConfigError);

  const std::string all = history_charts(sample_history());
  CHECK(all.find("training loss") != std::string::npos);
  CHECK(all.find("validation accuracy") != std::string::npos);
  CHECK(all.find("learning rate") != std::string::npos);
}

TEST_CASE("metric report rendering carries the macro note and all figures") {
  MetricReport r = fake_report(0.8);
  r.per_class[0] = {0.82, 0.78, 0.80, 25};
  r.per_class[1] = {0.78, 0.80, 0.79, 15};
  r.confusion = {12, 3, 22, 3};
  r.warnings = {"class 1 precision is 0/0; reported as 0"};

  const std::string text = metric_report_text(r);
  CHECK(text.find("macro") != std::string::npos);
  CHECK(text.find("macro-averaged") != std::string::npos);
  CHECK(text.find("0.8000") != std::string::npos);
  CHECK(text.find("tp=12") != std::string::npos);
  CHECK(text.find("warning:") != std::string::npos);

  const std::string records = metric_report_records(r);
  CHECK(records.find("\"precision\"") != std::string::npos);
  CHECK(records.find("\"confusion\"") != std::string::npos);
  CHECK(records.find("\"support\": 25") != std::string::npos);
}

TEST_CASE("the ablation study covers the five component configurations") {
  const std::vector<AblationVariant> variants = ablation_variants();
  REQUIRE(variants.size() == 5);
  CHECK(variants[0].name == "base");
  CHECK_FALSE(variants[0].use_bpe);
  CHECK_FALSE(variants[0].use_mha);
  CHECK_FALSE(variants[0].use_grc);
  CHECK(variants[1].name == "no-bpe");
  CHECK_FALSE(variants[1].use_bpe);
  CHECK(variants[1].use_mha);
  CHECK(variants[1].use_grc);
  CHECK(variants[2].name == "no-mha");
  CHECK_FALSE(variants[2].use_mha);
  CHECK(variants[3].name == "no-grc");
  CHECK_FALSE(variants[3].use_grc);
  CHECK(variants[4].name == "full");
  CHECK(variants[4].use_bpe);
  CHECK(variants[4].use_mha);
  CHECK(variants[4].use_grc);
}

TEST_CASE("ablation tables render five variant rows by four metric columns") {
  const AblationResult result = fake_ablation();
  const std::string table = ablation_table(result);

  std::istringstream lines(table);
  std::string line;
  std::getline(lines, line);  // header
  CHECK(line.find("precision") != std::string::npos);
  CHECK(line.find("recall") != std::string::npos);
  CHECK(line.find("f1") != std::string::npos);
  CHECK(line.find("accuracy") != std::string::npos);

  std::size_t variant_rows = 0;
  while (std::getline(lines, line)) {
    if (line.rfind("seeds:", 0) == 0 || line.rfind("note:", 0) == 0) continue;
    ++variant_rows;
    CHECK(count_lines(line + "\n") == 1);
    // four "mean ± spread" cells per row
    std::size_t cells = 0;
    for (std::size_t pos = line.find("±"); pos != std::string::npos;
         pos = line.find("±", pos + 1)) {
      ++cells;
    }
    CHECK(cells == 4);
  }
  CHECK(variant_rows == 5);
  CHECK(table.find("seeds: 11 23 47") != std::string::npos);

  const std::string records = ablation_records(result);
  CHECK(records.find("\"name\": \"base\"") != std::string::npos);
  CHECK(records.find("\"name\": \"full\"") != std::string::npos);
  CHECK(records.find("\"per_seed\"") != std::string::npos);
  CHECK(records.find("\"spread\"") != std::string::npos);
}

TEST_CASE("a small end-to-end run trains, evaluates, and reports") {
  GenConfig gen;
  gen.n = 60;
  gen.seed = 14;
  gen.signal_strength = 1.0;
  const std::vector<Profile> data = generate_synthetic(gen);
  const DatasetSplit split = stratified_split(data, {0.6, 0.2, 0.2}, 3);

  RunConfig cfg = desk_profile();
  cfg.embed_dim = 16;
  cfg.ffn_dim = 32;
  cfg.heads = 2;
  cfg.vocab_target = 120;
  cfg.max_epochs = 3;
  cfg.batch_size = 8;
  cfg.dropout = 0.0;
  cfg.seed = 7;

  const TrainedRun run = train_run(split, cfg);
  CHECK(run.result.history.size() == 3);
  CHECK(run.vocab.size() > 2);

  const MetricReport report = evaluate_model(run.model, run.vocab, split.test,
                                             cfg.max_sentences, cfg.max_words);
  CHECK(report.confusion.total() == split.test.size());
  CHECK(report.accuracy >= 0.0);
  CHECK(report.accuracy <= 1.0);

  const std::string table = metric_report_text(report);
  CHECK(table.find("confusion") != std::string::npos);

  // character-level variant shares the pipeline
  RunConfig char_cfg = cfg;
  char_cfg.use_bpe = false;
  const TrainedRun char_run = train_run(split, char_cfg);
  CHECK(char_run.vocab.merges().empty());
  CHECK(char_run.result.history.size() == 3);

  CHECK_THROWS_AS(train_run(DatasetSplit{}, cfg), ContractError);
}

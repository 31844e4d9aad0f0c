#include "bgmhan/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <sstream>

#include "bgmhan/errors.hpp"
#include "json.hpp"

namespace bgmhan {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string fixed(double v, int places = 4) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", places, v);
  return buf;
}

double as_number(const json& record, const char* key, std::size_t line_no) {
  if (!record.contains(key) || !record[key].is_number()) {
    throw ParseError("history line " + std::to_string(line_no) + ": missing numeric field '" +
                     key + "'");
  }
  return record[key].get<double>();
}

ordered_json metric_json(const MetricReport& r) {
  ordered_json doc;
  doc["precision"] = r.precision;
  doc["recall"] = r.recall;
  doc["f1"] = r.f1;
  doc["accuracy"] = r.accuracy;
  for (std::size_t c = 0; c < 2; ++c) {
    ordered_json cls;
    cls["precision"] = r.per_class[c].precision;
    cls["recall"] = r.per_class[c].recall;
    cls["f1"] = r.per_class[c].f1;
    cls["support"] = r.per_class[c].support;
    doc["class_" + std::to_string(c)] = std::move(cls);
  }
  doc["confusion"] = {{"tp", r.confusion.tp},
                      {"fp", r.confusion.fp},
                      {"tn", r.confusion.tn},
                      {"fn", r.confusion.fn}};
  doc["warnings"] = r.warnings;
  return doc;
}

}  // namespace

std::string history_records(const std::vector<EpochRecord>& history) {
  std::string out;
  for (const EpochRecord& e : history) {
    ordered_json record;
    record["epoch"] = e.epoch;
    record["train_loss"] = e.train_loss;
    record["val_loss"] = e.val_loss;
    record["val_accuracy"] = e.val_accuracy;
    record["lr"] = e.lr;
    out += record.dump();
    out += '\n';
  }
  return out;
}

std::vector<EpochRecord> parse_history_records(const std::string& text) {
  std::vector<EpochRecord> history;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("history line " + std::to_string(line_no) + ": " + e.what());
    }
    EpochRecord entry;
    entry.epoch = static_cast<std::size_t>(as_number(record, "epoch", line_no));
    entry.train_loss = as_number(record, "train_loss", line_no);
    entry.val_loss = as_number(record, "val_loss", line_no);
    entry.val_accuracy = as_number(record, "val_accuracy", line_no);
    entry.lr = as_number(record, "lr", line_no);
    history.push_back(entry);
  }
  return history;
}

std::string history_table(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out << std::left << std::setw(7) << "epoch" << std::right << std::setw(12) << "train_loss"
      << std::setw(12) << "val_loss" << std::setw(14) << "val_accuracy" << std::setw(12) << "lr"
      << '\n';
  for (const EpochRecord& e : history) {
    out << std::left << std::setw(7) << e.epoch << std::right << std::setw(12)
        << fixed(e.train_loss, 6) << std::setw(12) << fixed(e.val_loss, 6) << std::setw(14)
        << fixed(e.val_accuracy, 4) << std::setw(12) << fixed(e.lr, 8) << '\n';
  }
  return out.str();
}

std::string ascii_chart(const std::string& title, const std::vector<double>& values,
                        std::size_t width, std::size_t height) {
  if (values.empty()) throw ContractError("ascii_chart: no values to plot");
  if (width < 2 || height < 2) throw ConfigError("ascii_chart: need width and height >= 2");

  double lo = *std::min_element(values.begin(), values.end());
  double hi = *std::max_element(values.begin(), values.end());
  if (!(std::isfinite(lo) && std::isfinite(hi))) {
    throw ContractError("ascii_chart: values must be finite");
  }
  if (hi - lo < 1e-12) {  // flat series: pad the range so the line sits mid-chart
    hi += 0.5;
    lo -= 0.5;
  }

  std::vector<std::string> grid(height, std::string(width, ' '));
  for (std::size_t col = 0; col < width; ++col) {
    const std::size_t idx =
        values.size() == 1 ? 0 : col * (values.size() - 1) / (width - 1);
    const double frac = (values[idx] - lo) / (hi - lo);
    const auto row = static_cast<std::size_t>(
        std::lround(frac * static_cast<double>(height - 1)));
    grid[height - 1 - row][col] = '*';
  }

  std::ostringstream out;
  out << title << '\n';
  const std::string hi_label = fixed(hi, 6);
  const std::string lo_label = fixed(lo, 6);
  const std::size_t label_w = std::max(hi_label.size(), lo_label.size());
  for (std::size_t r = 0; r < height; ++r) {
    std::string label(label_w, ' ');
    if (r == 0) label = std::string(label_w - hi_label.size(), ' ') + hi_label;
    if (r == height - 1) label = std::string(label_w - lo_label.size(), ' ') + lo_label;
    out << label << " |" << grid[r] << '\n';
  }
  out << std::string(label_w, ' ') << " +" << std::string(width, '-') << '\n';
  out << std::string(label_w, ' ') << "  1" << std::string(width > 20 ? width - 8 : 1, ' ')
      << values.size() << " (epoch)\n";
  return out.str();
}

std::string history_charts(const std::vector<EpochRecord>& history) {
  std::vector<double> train_loss, val_loss, val_acc, lr;
  for (const EpochRecord& e : history) {
    train_loss.push_back(e.train_loss);
    val_loss.push_back(e.val_loss);
    val_acc.push_back(e.val_accuracy);
    lr.push_back(e.lr);
  }
  std::string out;
  out += ascii_chart("training loss", train_loss);
  out += '\n';
  out += ascii_chart("validation loss", val_loss);
  out += '\n';
  out += ascii_chart("validation accuracy", val_acc);
  out += '\n';
  out += ascii_chart("learning rate", lr);
  return out;
}

std::string metric_report_text(const MetricReport& r) {
  std::ostringstream out;
  out << std::left << std::setw(10) << "" << std::right << std::setw(11) << "precision"
      << std::setw(11) << "recall" << std::setw(11) << "f1" << std::setw(11) << "accuracy"
      << '\n';
  out << std::left << std::setw(10) << "macro" << std::right << std::setw(11)
      << fixed(r.precision) << std::setw(11) << fixed(r.recall) << std::setw(11) << fixed(r.f1)
      << std::setw(11) << fixed(r.accuracy) << '\n';
  for (std::size_t c = 0; c < 2; ++c) {
    out << std::left << std::setw(10) << ("class " + std::to_string(c)) << std::right
        << std::setw(11) << fixed(r.per_class[c].precision) << std::setw(11)
        << fixed(r.per_class[c].recall) << std::setw(11) << fixed(r.per_class[c].f1)
        << std::setw(11) << ("n=" + std::to_string(r.per_class[c].support)) << '\n';
  }
  out << "confusion: tp=" << r.confusion.tp << " fp=" << r.confusion.fp
      << " tn=" << r.confusion.tn << " fn=" << r.confusion.fn << '\n';
  out << "note: precision, recall, and f1 are macro-averaged (unweighted mean over both "
         "classes).\n";
  for (const std::string& w : r.warnings) out << "warning: " << w << '\n';
  return out.str();
}

std::string metric_report_records(const MetricReport& r) { return metric_json(r).dump(2) + "\n"; }

std::string ablation_table(const AblationResult& result) {
  auto cell = [](const MetricStat& s) { return fixed(s.mean) + " ± " + fixed(s.spread); };
  std::ostringstream out;
  out << std::left << std::setw(8) << "variant";
  for (const char* head : {"precision", "recall", "f1", "accuracy"}) {
    out << std::right << std::setw(18) << head;
  }
  out << '\n';
  for (const AblationRow& row : result.rows) {
    out << std::left << std::setw(8) << row.variant.name << std::right << std::setw(18)
        << cell(row.precision) << std::setw(18) << cell(row.recall) << std::setw(18)
        << cell(row.f1) << std::setw(18) << cell(row.accuracy) << '\n';
  }
  out << "seeds:";
  for (std::uint64_t s : result.seeds) out << ' ' << s;
  out << '\n';
  out << "note: mean ± sample standard deviation over seeds; precision, recall, and f1 are "
         "macro-averaged (unweighted mean over both classes).\n";
  return out.str();
}

std::string ablation_records(const AblationResult& result) {
  ordered_json doc;
  doc["seeds"] = result.seeds;
  doc["rows"] = ordered_json::array();
  for (const AblationRow& row : result.rows) {
    ordered_json r;
    r["name"] = row.variant.name;
    r["use_bpe"] = row.variant.use_bpe;
    r["use_mha"] = row.variant.use_mha;
    r["use_grc"] = row.variant.use_grc;
    for (const auto& [key, stat] :
         {std::pair<const char*, const MetricStat*>{"precision", &row.precision},
          {"recall", &row.recall},
          {"f1", &row.f1},
          {"accuracy", &row.accuracy}}) {
      r[key] = {{"mean", stat->mean}, {"spread", stat->spread}};
    }
    r["per_seed"] = ordered_json::array();
    for (const MetricReport& m : row.per_seed) r["per_seed"].push_back(metric_json(m));
    doc["rows"].push_back(std::move(r));
  }
  return doc.dump(2) + "\n";
}

}  // namespace bgmhan

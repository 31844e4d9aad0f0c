#pragma once

#include <string>
#include <vector>

#include "bgmhan/metrics.hpp"
#include "bgmhan/pipeline.hpp"
#include "bgmhan/training.hpp"

namespace bgmhan {

// Epoch history as machine-readable records: one JSON object per line.
std::string history_records(const std::vector<EpochRecord>& history);

// Inverse of history_records; raises a parse error naming the bad line.
std::vector<EpochRecord> parse_history_records(const std::string& text);

// Epoch history as an aligned text table.
std::string history_table(const std::vector<EpochRecord>& history);

// Character plot of a series (epochs across, value up), axis labels included.
std::string ascii_chart(const std::string& title, const std::vector<double>& values,
                        std::size_t width = 60, std::size_t height = 12);

// The four standard training curves (train/val loss, val accuracy, lr).
std::string history_charts(const std::vector<EpochRecord>& history);

// Evaluation report as aligned text / as a JSON document.
std::string metric_report_text(const MetricReport& report);
std::string metric_report_records(const MetricReport& report);

// Ablation study as an aligned text table (variants x metrics, mean ± spread)
// / as a JSON document including per-seed figures.
std::string ablation_table(const AblationResult& result);
std::string ablation_records(const AblationResult& result);

}  // namespace bgmhan

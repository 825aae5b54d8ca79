#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cetx/early_exit.hpp"

namespace cetx {

/// phi,macro_f1,accuracy,kappa
std::string fscore_vs_entropy_csv(const std::vector<SweepRow>& rows);
/// phi,average_exit,macro_f1,accuracy,kappa
std::string avgexit_tradeoff_csv(const std::vector<SweepRow>& rows);
/// phi,exit_1..exit_E (fractions)
std::string exit_fractions_csv(const std::vector<SweepRow>& rows);
/// phi,class,exit,count,mean_confidence
std::string per_class_confidence_csv(const std::vector<SweepRow>& rows, const std::vector<std::string>& class_names);
/// exit,accuracy,macro_f1,kappa,macs
std::string per_exit_metrics_csv(const std::vector<ExitMetrics>& rows);
/// phi,macro_f1,accuracy,kappa,average_exit,exit_1..exit_E
std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Writes fscore_vs_entropy.csv, avgexit_tradeoff.csv, exit_fractions.csv,
/// per_class_confidence.csv and per_exit_metrics.csv into `out_dir`
/// (created if missing). Thresholds are on entropy normalized by ln K.
void emit_reports(const EvaluationBundle& bundle, const std::vector<std::string>& class_names,
                  const std::filesystem::path& out_dir);

/// Writes `text` to `path`, throwing Error on failure.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace cetx

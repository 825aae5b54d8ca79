#include "cetx/report.hpp"

#include <fstream>

#include "cetx/text.hpp"

namespace cetx {

namespace {

std::string num(double v) { return format_double(v); }

std::string metric_cols(const ClassificationMetrics& m) {
  return num(m.macro_f1) + "," + num(m.accuracy) + "," + num(m.kappa);
}

std::string exit_header(const std::vector<SweepRow>& rows) {
  std::string h;
  const std::size_t exits = rows.empty() ? 0 : rows.front().stats.fractions.size();
  for (std::size_t e = 1; e <= exits; ++e) h += ",exit_" + std::to_string(e);
  return h;
}

std::string fraction_cols(const SweepRow& r) {
  std::string s;
  for (double f : r.stats.fractions) s += "," + num(f);
  return s;
}

}  // namespace

std::string fscore_vs_entropy_csv(const std::vector<SweepRow>& rows) {
  std::string out = "phi,macro_f1,accuracy,kappa\n";
  for (const auto& r : rows) out += num(r.phi) + "," + metric_cols(r.metrics) + "\n";
  return out;
}

std::string avgexit_tradeoff_csv(const std::vector<SweepRow>& rows) {
  std::string out = "phi,average_exit,macro_f1,accuracy,kappa\n";
  for (const auto& r : rows) out += num(r.phi) + "," + num(r.stats.average_exit) + "," + metric_cols(r.metrics) + "\n";
  return out;
}

std::string exit_fractions_csv(const std::vector<SweepRow>& rows) {
  std::string out = "phi" + exit_header(rows) + "\n";
  for (const auto& r : rows) out += num(r.phi) + fraction_cols(r) + "\n";
  return out;
}

std::string per_class_confidence_csv(const std::vector<SweepRow>& rows, const std::vector<std::string>& class_names) {
  std::string out = "phi,class,exit,count,mean_confidence\n";
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < r.stats.class_counts.size(); ++k) {
      const std::string name = k < class_names.size() ? class_names[k] : std::to_string(k);
      for (std::size_t e = 0; e < r.stats.class_counts[k].size(); ++e) {
        out += num(r.phi) + "," + name + "," + std::to_string(e + 1) + "," +
               std::to_string(r.stats.class_counts[k][e]) + "," + num(r.stats.class_confidence[k][e]) + "\n";
      }
    }
  }
  return out;
}

std::string per_exit_metrics_csv(const std::vector<ExitMetrics>& rows) {
  std::string out = "exit,accuracy,macro_f1,kappa,macs\n";
  for (const auto& r : rows) {
    out += std::to_string(r.exit) + "," + num(r.metrics.accuracy) + "," + num(r.metrics.macro_f1) + "," +
           num(r.metrics.kappa) + "," + std::to_string(r.macs) + "\n";
  }
  return out;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "phi,macro_f1,accuracy,kappa,average_exit" + exit_header(rows) + "\n";
  for (const auto& r : rows) {
    out += num(r.phi) + "," + metric_cols(r.metrics) + "," + num(r.stats.average_exit) + fraction_cols(r) + "\n";
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw Error("failed writing " + path.string());
}

void emit_reports(const EvaluationBundle& bundle, const std::vector<std::string>& class_names,
                  const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error("cannot create report directory " + out_dir.string() + ": " + ec.message());
  write_text_file(out_dir / "fscore_vs_entropy.csv", fscore_vs_entropy_csv(bundle.sweep));
  write_text_file(out_dir / "avgexit_tradeoff.csv", avgexit_tradeoff_csv(bundle.sweep));
  write_text_file(out_dir / "exit_fractions.csv", exit_fractions_csv(bundle.sweep));
  write_text_file(out_dir / "per_class_confidence.csv", per_class_confidence_csv(bundle.sweep, class_names));
  write_text_file(out_dir / "per_exit_metrics.csv", per_exit_metrics_csv(bundle.per_exit));
}

}  // namespace cetx

#include "invo/report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace invo {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

nlohmann::json matrix_json(const ConfusionMatrix& cm) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < cm.classes(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < cm.classes(); ++j) row.push_back(cm.at(i, j));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

std::string format_number(double v) {
  if (std::isfinite(v) && v == std::trunc(v) && std::abs(v) < 1e15) {
    return std::to_string(static_cast<long long>(v));
  }
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_accuracy_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "snr_db,accuracy\n";
  for (const auto& [snr, acc] : report.per_snr_accuracy()) out << format_number(snr) << ',' << format_number(acc) << '\n';
  write_text(path, out.str());
}

void write_confusion_csv(const ConfusionMatrix& cm, const std::vector<std::string>& class_names,
                         const std::filesystem::path& path) {
  if (class_names.size() != cm.classes()) throw std::invalid_argument("confusion csv: class name count mismatch");
  std::ostringstream out;
  out << "true\\predicted";
  for (const std::string& c : class_names) out << ',' << c;
  out << '\n';
  for (std::size_t i = 0; i < cm.classes(); ++i) {
    out << class_names[i];
    for (std::size_t j = 0; j < cm.classes(); ++j) out << ',' << cm.at(i, j);
    out << '\n';
  }
  write_text(path, out.str());
}

void write_training_log(const std::vector<EpochLog>& history, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "epoch,mean_loss,lr\n";
  for (const EpochLog& e : history) out << e.epoch << ',' << format_number(e.mean_loss) << ',' << format_number(e.lr) << '\n';
  write_text(path, out.str());
}

nlohmann::json report_json(const EvalReport& report) {
  nlohmann::json j;
  j["class_names"] = report.class_names;
  nlohmann::json acc = nlohmann::json::array();
  nlohmann::json confusion = nlohmann::json::array();
  for (const auto& [snr, cm] : report.per_snr) {
    acc.push_back({{"snr_db", snr}, {"accuracy", cm.accuracy()}});
    confusion.push_back({{"snr_db", snr}, {"matrix", matrix_json(cm)}});
  }
  j["per_snr_accuracy"] = acc;
  j["confusion"] = confusion;
  j["confusion_pooled"] = matrix_json(report.pooled);
  j["overall_pr_cc"] = report.overall_pr_cc;
  nlohmann::json history = nlohmann::json::array();
  for (const EpochLog& e : report.loss_history) {
    history.push_back({{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"lr", e.lr}});
  }
  j["loss_history"] = history;
  j["param_count"] = report.param_count;
  return j;
}

void write_report(const EvalReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_accuracy_csv(report, dir / "accuracy_vs_snr.csv");
  for (const auto& [snr, cm] : report.per_snr) {
    write_confusion_csv(cm, report.class_names, dir / ("confusion_" + format_number(snr) + ".csv"));
  }
  write_confusion_csv(report.pooled, report.class_names, dir / "confusion_pooled.csv");
  write_text(dir / "report.json", report_json(report).dump(2) + "\n");
}

}  // namespace invo

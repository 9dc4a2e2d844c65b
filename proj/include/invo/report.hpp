#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "invo/metrics.hpp"

namespace invo {

// Shortest decimal that parses back to the same double; integers print
// without a fraction ("10", "-6").
std::string format_number(double v);

// accuracy_vs_snr.csv: `snr_db,accuracy`, one row per SNR ascending.
void write_accuracy_csv(const EvalReport& report, const std::filesystem::path& path);
// Square count matrix; first row and first column hold class names.
void write_confusion_csv(const ConfusionMatrix& cm, const std::vector<std::string>& class_names,
                         const std::filesystem::path& path);
// `epoch,mean_loss,lr`.
void write_training_log(const std::vector<EpochLog>& history, const std::filesystem::path& path);

nlohmann::json report_json(const EvalReport& report);

// accuracy_vs_snr.csv, confusion_<snr>.csv per SNR, confusion_pooled.csv and
// report.json under `dir`.
void write_report(const EvalReport& report, const std::filesystem::path& dir);

}  // namespace invo

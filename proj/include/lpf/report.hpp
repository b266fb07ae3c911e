// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "lpf/dataset.hpp"
#include "lpf/trainer.hpp"

namespace lpf {

inline constexpr const char* kTelemetryHeader =
    "epoch,l_cp,l_qc,l_sp,total,train_plcc,train_srocc,test_plcc,test_srocc,test_acc";

/// One telemetry CSV row (no trailing newline). Undefined values print "nan".
std::string telemetry_row(const EpochRecord& rec);
/// Human-readable one-line epoch summary for stdout.
std::string epoch_summary(const EpochRecord& rec, std::size_t total_epochs);

/// key = value lines.
std::string report_text(const Evaluation& ev, const std::string& dataset_name,
                        std::size_t samples);
/// One JSON document.
std::string report_json(const Evaluation& ev, const std::string& dataset_name,
                        std::size_t samples);

/// id,truth,prediction,weight,true_category,predicted_category
std::string predictions_csv(const Evaluation& ev, const FeatureDataset& ds);

/// Simple comma-separated table reader for the files this tool writes.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);

}  // namespace lpf

// SPDX-License-Identifier: Apache-2.0
#include "lpf/report.hpp"

#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lpf/errors.hpp"

namespace lpf {

namespace {

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::string short_metric(const std::optional<double>& v) {
  if (!v) return "  nan ";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

}  // namespace

std::string telemetry_row(const EpochRecord& r) {
  std::ostringstream os;
  os << r.epoch << ',' << num(r.losses.l_cp) << ',' << num(r.losses.l_qc) << ','
     << num(r.losses.l_sp) << ',' << num(r.losses.total) << ',' << format_metric(r.train_plcc)
     << ',' << format_metric(r.train_srocc) << ',' << format_metric(r.test_plcc) << ','
     << format_metric(r.test_srocc) << ',' << format_metric(r.test_accuracy);
  return os.str();
}

std::string epoch_summary(const EpochRecord& r, std::size_t total_epochs) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "epoch %zu/%zu  loss %.5f (cp %.4f qc %.5f sp %.5f)  train plcc %s srocc %s  "
                "test plcc %s srocc %s acc %s",
                r.epoch + 1, total_epochs, r.losses.total, r.losses.l_cp, r.losses.l_qc,
                r.losses.l_sp, short_metric(r.train_plcc).c_str(),
                short_metric(r.train_srocc).c_str(), short_metric(r.test_plcc).c_str(),
                short_metric(r.test_srocc).c_str(), short_metric(r.test_accuracy).c_str());
  return buf;
}

std::string report_text(const Evaluation& ev, const std::string& dataset_name,
                        std::size_t samples) {
  const ClassificationReport& c = ev.report;
  std::ostringstream os;
  os << "dataset = " << dataset_name << '\n';
  os << "samples = " << samples << '\n';
  os << "plcc = " << format_metric(ev.plcc) << '\n';
  os << "srocc = " << format_metric(ev.srocc) << '\n';
  os << "accuracy = " << num(c.accuracy) << '\n';
  os << "macro_precision = " << num(c.macro_precision) << '\n';
  os << "macro_recall = " << num(c.macro_recall) << '\n';
  os << "macro_f1 = " << num(c.macro_f1) << '\n';
  for (std::size_t t = 0; t < c.confusion.size(); ++t) {
    os << "confusion_row_" << t << " =";
    for (std::size_t p = 0; p < c.confusion[t].size(); ++p) os << ' ' << c.confusion[t][p];
    os << '\n';
  }
  return os.str();
}

std::string report_json(const Evaluation& ev, const std::string& dataset_name,
                        std::size_t samples) {
  const ClassificationReport& c = ev.report;
  nlohmann::ordered_json j;
  j["dataset"] = dataset_name;
  j["samples"] = samples;
  j["plcc"] = opt_json(ev.plcc);
  j["srocc"] = opt_json(ev.srocc);
  j["classification"] = {
      {"accuracy", c.accuracy},
      {"macro_precision", c.macro_precision},
      {"macro_recall", c.macro_recall},
      {"macro_f1", c.macro_f1},
      {"precision", c.precision},
      {"recall", c.recall},
      {"f1", c.f1},
      {"confusion", c.confusion},
  };
  return j.dump(2) + "\n";
}

std::string predictions_csv(const Evaluation& ev, const FeatureDataset& ds) {
  std::ostringstream os;
  os << "id,truth,prediction,weight,true_category,predicted_category\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    os << ds.ids[i] << ',' << num(ds.norm_scores[i]) << ',' << num(ev.predictions[i]) << ','
       << num(ev.stream_weights[i]) << ',' << ds.categories[i] << ',';
    if (i < ev.predicted_categories.size()) os << ev.predicted_categories[i];
    os << '\n';
  }
  return os.str();
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw DataError("csv: missing column '" + name + "'");
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  const auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
  };
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto row = split(line);
    if (row.size() != t.header.size()) {
      throw DataError(path + ": row has " + std::to_string(row.size()) + " cells, header has " +
                      std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace lpf

// SPDX-License-Identifier: Apache-2.0
#include "lpf/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <unistd.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "binary_io.hpp"
#include "lpf/checkpoint.hpp"
#include "lpf/dataset.hpp"
#include "lpf/errors.hpp"
#include "lpf/report.hpp"
#include "lpf/trainer.hpp"

namespace lpf {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Outputs are written into a hidden staging directory and moved into the
/// output directory only by commit(); an abandoned stage is deleted.
class OutputStage {
 public:
  explicit OutputStage(fs::path out_dir) : out_(std::move(out_dir)) {
    created_out_ = !fs::exists(out_);
    fs::create_directories(out_);
    staging_ = out_ / (".lpf-staging-" + std::to_string(::getpid()));
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }
  OutputStage(const OutputStage&) = delete;
  OutputStage& operator=(const OutputStage&) = delete;

  ~OutputStage() {
    if (committed_) return;
    std::error_code ec;
    fs::remove_all(staging_, ec);
    if (created_out_ && fs::is_empty(out_, ec)) fs::remove(out_, ec);
  }

  fs::path path(const std::string& name) {
    names_.push_back(name);
    return staging_ / name;
  }

  const fs::path& out_dir() const { return out_; }
  const std::vector<std::string>& names() const { return names_; }

  void commit() {
    for (const auto& name : names_) fs::rename(staging_ / name, out_ / name);
    fs::remove_all(staging_);
    committed_ = true;
  }

 private:
  fs::path out_;
  fs::path staging_;
  std::vector<std::string> names_;
  bool created_out_ = false;
  bool committed_ = false;
};

struct GlobalOptions {
  std::uint64_t seed = 0;
  bool deterministic = false;
  std::string out = ".";
};

/// Provenance record written next to every command's outputs.
class RunManifest {
 public:
  RunManifest(std::string command, const GlobalOptions& g) {
    doc_["command"] = std::move(command);
    doc_["engine_version"] = kEngineVersion;
    doc_["seed"] = g.seed;
    doc_["deterministic"] = true;
    doc_["started_at"] = utc_now();
    doc_["config"] = json::object();
    doc_["inputs"] = json::object();
  }
  json& config() { return doc_["config"]; }
  json& inputs() { return doc_["inputs"]; }

  void write(OutputStage& stage) {
    const fs::path p = stage.path("run_manifest.json");
    json outputs = json::array();
    for (const auto& n : stage.names()) outputs.push_back((stage.out_dir() / n).string());
    doc_["outputs"] = outputs;
    doc_["finished_at"] = utc_now();
    detail::write_file_text(p, doc_.dump(2) + "\n");
  }

 private:
  json doc_;
};

json model_config_json(const ModelConfig& m) {
  return {{"input_dim", m.input_dim},     {"fen_dim", m.fen_dim},
          {"hidden_dim", m.hidden_dim},   {"num_classes", m.num_classes},
          {"dropout_rate", m.dropout_rate}, {"cpn_enabled", m.cpn_enabled},
          {"qcn_enabled", m.qcn_enabled}, {"ws_enabled", m.ws_enabled}};
}

json train_config_json(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate},
          {"weight_decay", t.weight_decay},
          {"batch_size", t.batch_size},
          {"epochs", t.epochs},
          {"seed", t.seed},
          {"alpha", t.loss_weights.alpha},
          {"beta", t.loss_weights.beta},
          {"deterministic", t.deterministic},
          {"train_fraction", t.train_fraction}};
}

void print_warnings(const std::vector<std::string>& warnings, std::ostream& err) {
  for (const auto& w : warnings) err << "warning: " << w << '\n';
}

// ------------------------------------------------------------------ synth

struct SynthOptions {
  std::size_t n = 512;
  std::size_t dim = 16;
  std::string rule = "linear";
};

int cmd_synth(const SynthOptions& o, const GlobalOptions& g, std::ostream& out) {
  const ScoreRule rule = parse_score_rule(o.rule);
  if (o.n < 8) throw std::invalid_argument("synth: --n must be at least 8");
  const FeatureDataset ds = synthesize_dataset(o.n, o.dim, g.seed, rule);

  OutputStage stage(g.out);
  write_feature_file(stage.path("features.lpff"), ds.features);
  write_manifest(stage.path("manifest.csv"), ds.ids, ds.raw_scores);
  DatasetDescriptor d;
  d.name = ds.name;
  d.features = "features.lpff";
  d.manifest = "manifest.csv";
  d.polarity = ds.polarity;
  write_descriptor(stage.path("dataset.desc"), d);

  RunManifest manifest("synth", g);
  manifest.config() = {{"n", o.n}, {"dim", o.dim}, {"rule", score_rule_name(rule)}};
  manifest.write(stage);
  stage.commit();
  out << "wrote " << o.n << " x " << o.dim << " synthetic dataset to "
      << (fs::path(g.out) / "dataset.desc").string() << '\n';
  return kExitOk;
}

// ------------------------------------------------------------------ train

struct TrainOptions {
  std::string data;
  double split = 0.8;
  ModelConfig model;
  TrainConfig train;
  bool no_cpn = false;
  bool no_qcn = false;
  bool no_ws = false;
  bool quiet = false;
};

int cmd_train(TrainOptions o, const GlobalOptions& g, std::ostream& out, std::ostream& err) {
  const LoadedDataset loaded = load_dataset(o.data);
  print_warnings(loaded.warnings, err);
  const FeatureDataset& ds = loaded.dataset;

  o.model.input_dim = ds.dim();
  o.model.cpn_enabled = !o.no_cpn;
  o.model.qcn_enabled = !o.no_qcn;
  o.model.ws_enabled = !o.no_ws;
  o.model.validate();
  o.train.seed = g.seed;
  o.train.deterministic = true;
  o.train.train_fraction = o.split;
  o.train.validate();

  auto [train_set, test_set] = split_train_test(ds, o.split, g.seed);

  OutputStage stage(g.out);
  RunManifest manifest("train", g);
  manifest.config() = {{"model", model_config_json(o.model)},
                       {"train", train_config_json(o.train)},
                       {"split_fraction", o.split},
                       {"split_seed", g.seed}};
  manifest.inputs() = {{"dataset", o.data},
                       {"samples", ds.size()},
                       {"train_samples", train_set.size()},
                       {"test_samples", test_set.size()}};

  const fs::path telemetry_path = stage.path("telemetry.csv");
  std::ofstream telemetry(telemetry_path, std::ios::app);
  if (!telemetry) throw DataError("cannot open " + telemetry_path.string());
  telemetry << kTelemetryHeader << '\n';

  const TrainResult result = train(
      train_set, test_set, o.model, o.train, [&](const EpochRecord& rec, const Trainer&) {
        telemetry << telemetry_row(rec) << '\n';
        telemetry.flush();
        if (!o.quiet) out << epoch_summary(rec, o.train.epochs) << '\n';
      });
  telemetry.close();

  Checkpoint final_ckpt{o.model, o.train, result.model, result.optimizer, o.train.epochs};
  save_checkpoint(stage.path("final.lpfc"), final_ckpt);
  Checkpoint best_ckpt{o.model, o.train, result.best_model, result.best_optimizer,
                       result.best_epoch + 1};
  save_checkpoint(stage.path("best.lpfc"), best_ckpt);

  manifest.config()["best_epoch"] = result.best_epoch;
  manifest.config()["best_test_srocc"] =
      result.best_srocc ? json(*result.best_srocc) : json(nullptr);
  manifest.write(stage);
  stage.commit();
  if (!o.quiet) {
    out << "wrote final.lpfc, best.lpfc (epoch " << result.best_epoch + 1
        << "), telemetry.csv to " << g.out << '\n';
  }
  return kExitOk;
}

// ------------------------------------------------------------------ eval

struct EvalOptions {
  std::string checkpoint;
  std::string data;
  std::string subset = "all";
};

int cmd_eval(const EvalOptions& o, const GlobalOptions& g, std::ostream& out, std::ostream& err) {
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const LoadedDataset loaded = load_dataset(o.data);
  print_warnings(loaded.warnings, err);
  if (loaded.dataset.dim() != ckpt.model_config.input_dim) {
    throw DataError("incompatible: checkpoint expects " +
                    std::to_string(ckpt.model_config.input_dim) + "-dim features, dataset '" +
                    loaded.dataset.name + "' has " + std::to_string(loaded.dataset.dim()));
  }
  FeatureDataset ds;
  if (o.subset == "all") {
    ds = loaded.dataset;
  } else {
    auto [tr, te] = split_train_test(loaded.dataset, ckpt.train_config.train_fraction,
                                     ckpt.train_config.seed);
    ds = o.subset == "train" ? std::move(tr) : std::move(te);
  }

  const Evaluation ev = evaluate(ckpt.model, ds, true);
  const std::string text = report_text(ev, ds.name, ds.size());

  OutputStage stage(g.out);
  detail::write_file_text(stage.path("report.txt"), text);
  detail::write_file_text(stage.path("report.json"), report_json(ev, ds.name, ds.size()));
  detail::write_file_text(stage.path("predictions.csv"), predictions_csv(ev, ds));
  RunManifest manifest("eval", g);
  manifest.config() = {{"subset", o.subset},
                       {"split_fraction", ckpt.train_config.train_fraction},
                       {"split_seed", ckpt.train_config.seed}};
  manifest.inputs() = {{"checkpoint", o.checkpoint}, {"dataset", o.data}};
  manifest.write(stage);
  stage.commit();
  out << text;
  return kExitOk;
}

// ------------------------------------------------------------------ predict

struct PredictOptions {
  std::string checkpoint;
  std::string features;
  bool explain = false;
};

int cmd_predict(const PredictOptions& o, const GlobalOptions& g, bool write_file,
                std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const Matrix x = read_feature_file(o.features);
  if (x.cols() != ckpt.model_config.input_dim) {
    throw DataError("incompatible: checkpoint expects " +
                    std::to_string(ckpt.model_config.input_dim) + "-dim features, '" +
                    o.features + "' has " + std::to_string(x.cols()));
  }
  const DaqrnOutput pred = ckpt.model.explain(x);
  std::ostringstream lines;
  char buf[80];
  for (std::size_t i = 0; i < pred.q_pred.size(); ++i) {
    if (o.explain) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", pred.q_pred[i], pred.weights[i]);
    } else {
      std::snprintf(buf, sizeof buf, "%.17g\n", pred.q_pred[i]);
    }
    lines << buf;
  }
  out << lines.str();
  if (write_file) {
    OutputStage stage(g.out);
    const std::string header = o.explain ? "score,weight\n" : "score\n";
    detail::write_file_text(stage.path("predictions.csv"), header + lines.str());
    RunManifest manifest("predict", g);
    manifest.config() = {{"explain", o.explain}};
    manifest.inputs() = {{"checkpoint", o.checkpoint}, {"features", o.features}};
    manifest.write(stage);
    stage.commit();
  }
  return kExitOk;
}

// ------------------------------------------------------------------ export-plots

struct ExportOptions {
  std::string telemetry;
  std::string eval_dir;
};

int cmd_export(const ExportOptions& o, const GlobalOptions& g, std::ostream& out) {
  if (o.telemetry.empty() && o.eval_dir.empty()) {
    throw std::invalid_argument("export-plots: give --telemetry and/or --eval-dir");
  }
  OutputStage stage(g.out);
  RunManifest manifest("export-plots", g);
  if (!o.telemetry.empty()) {
    const CsvTable t = read_csv(o.telemetry);
    std::ostringstream os;
    const std::vector<std::string> cols = {"epoch",      "total",      "l_cp",
                                           "l_qc",       "l_sp",       "train_plcc",
                                           "train_srocc", "test_plcc", "test_srocc",
                                           "test_acc"};
    std::vector<std::size_t> idx;
    for (const auto& c : cols) idx.push_back(t.column(c));
    for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
    os << '\n';
    for (const auto& row : t.rows) {
      for (std::size_t i = 0; i < idx.size(); ++i) os << (i ? "," : "") << row[idx[i]];
      os << '\n';
    }
    detail::write_file_text(stage.path("convergence.csv"), os.str());
    manifest.inputs()["telemetry"] = o.telemetry;
  }
  if (!o.eval_dir.empty()) {
    const fs::path dir(o.eval_dir);
    const CsvTable p = read_csv((dir / "predictions.csv").string());
    const std::size_t id = p.column("id"), truth = p.column("truth"),
                      pred = p.column("prediction"), tc = p.column("true_category"),
                      pc = p.column("predicted_category");
    std::ostringstream scatter;
    scatter << "id,truth,prediction\n";
    std::map<std::pair<int, int>, std::size_t> counts;
    for (const auto& row : p.rows) {
      scatter << row[id] << ',' << row[truth] << ',' << row[pred] << '\n';
      if (!row[pc].empty()) ++counts[{std::stoi(row[tc]), std::stoi(row[pc])}];
    }
    detail::write_file_text(stage.path("scatter.csv"), scatter.str());

    std::ostringstream conf;
    conf << "true_category";
    for (int c = 0; c < kNumCategories; ++c) conf << ",pred_" << c;
    conf << '\n';
    for (int t = 0; t < kNumCategories; ++t) {
      conf << t;
      for (int c = 0; c < kNumCategories; ++c) {
        const auto it = counts.find({t, c});
        conf << ',' << (it == counts.end() ? 0 : it->second);
      }
      conf << '\n';
    }
    detail::write_file_text(stage.path("confusion.csv"), conf.str());
    manifest.inputs()["eval_dir"] = o.eval_dir;
  }
  manifest.write(stage);
  const auto names = stage.names();
  stage.commit();
  for (const auto& n : names)
    if (n != "run_manifest.json") out << "wrote " << (fs::path(g.out) / n).string() << '\n';
  return kExitOk;
}

// ------------------------------------------------------------------ inspect

int cmd_inspect(const std::string& path, std::ostream& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  char magic[4] = {};
  in.read(magic, 4);
  in.close();
  if (std::string(magic, 4) == "LPFF") {
    const FeatureFileHeader h = read_feature_header(path);
    out << "format = LPFF\nversion = " << h.version << "\ncount = " << h.count
        << "\ndim = " << h.dim << "\ndtype = f32\n";
  } else if (std::string(magic, 4) == "LPFC") {
    const Checkpoint c = load_checkpoint(path);
    out << "format = LPFC\nversion = " << kCheckpointVersion << "\nepoch = " << c.epoch
        << "\nparameters = " << c.model.parameter_count()
        << "\noptimizer_step = " << c.optimizer.step << '\n';
    out << "model = " << model_config_json(c.model_config).dump() << '\n';
    out << "train = " << train_config_json(c.train_config).dump() << '\n';
  } else {
    const DatasetDescriptor d = read_descriptor(path);
    const FeatureFileHeader h = read_feature_header(d.features);
    out << "format = descriptor\nname = " << d.name << "\nfeatures = " << d.features.string()
        << "\nmanifest = " << d.manifest.string() << "\npolarity = " << polarity_name(d.polarity)
        << "\ncount = " << h.count << "\ndim = " << h.dim << '\n';
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Lightweight parallel BIQA engine: train and run quality regressors on "
               "precomputed image features"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kEngineVersion);

  GlobalOptions g;
  app.add_option("--seed", g.seed, "Seed for splits, initialization, shuffling, and synthesis");
  app.add_flag("--deterministic", g.deterministic,
               "Single-threaded fixed-order arithmetic (always on in this build)");
  app.add_option("--out", g.out, "Output directory");

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic feature dataset");
  synth_cmd->add_option("--n", synth.n, "Sample count (>= 8)")->capture_default_str();
  synth_cmd->add_option("--dim", synth.dim, "Feature dimension")->capture_default_str();
  synth_cmd->add_option("--rule", synth.rule, "Score rule: linear | norm")->capture_default_str();

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "Split a dataset, train, write checkpoints");
  train_cmd->add_option("--data", tr.data, "Dataset descriptor")->required();
  train_cmd->add_option("--split", tr.split, "Training fraction")->capture_default_str();
  train_cmd->add_option("--lr", tr.train.learning_rate, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--weight-decay", tr.train.weight_decay, "Coupled L2 weight decay")
      ->capture_default_str();
  train_cmd->add_option("--batch-size", tr.train.batch_size)->capture_default_str();
  train_cmd->add_option("--epochs", tr.train.epochs)->capture_default_str();
  train_cmd->add_option("--alpha", tr.train.loss_weights.alpha, "Category loss weight")
      ->capture_default_str();
  train_cmd->add_option("--beta", tr.train.loss_weights.beta, "Comparison loss weight")
      ->capture_default_str();
  train_cmd->add_option("--fen-dim", tr.model.fen_dim, "Latent width")->capture_default_str();
  train_cmd->add_option("--hidden-dim", tr.model.hidden_dim, "Head hidden width")
      ->capture_default_str();
  train_cmd->add_option("--dropout", tr.model.dropout_rate)->capture_default_str();
  train_cmd->add_flag("--no-cpn", tr.no_cpn, "Disable the category prediction head");
  train_cmd->add_flag("--no-qcn", tr.no_qcn, "Disable the quality comparison head");
  train_cmd->add_flag("--no-ws", tr.no_ws, "Replace the weight stream with ones");
  train_cmd->add_flag("--quiet", tr.quiet, "No per-epoch output");

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--checkpoint", ev.checkpoint)->required();
  eval_cmd->add_option("--data", ev.data, "Dataset descriptor")->required();
  eval_cmd->add_option("--subset", ev.subset,
                       "all, or the train/test side of the checkpoint's own split")
      ->check(CLI::IsMember({"all", "train", "test"}))
      ->capture_default_str();

  PredictOptions pr;
  auto* predict_cmd = app.add_subcommand("predict", "Score rows of a feature file");
  predict_cmd->add_option("--checkpoint", pr.checkpoint)->required();
  predict_cmd->add_option("--features", pr.features, "LPFF feature file")->required();
  predict_cmd->add_flag("--explain", pr.explain, "Also print the weight-stream output");

  ExportOptions ex;
  auto* export_cmd = app.add_subcommand("export-plots", "Emit plot-ready tables");
  export_cmd->add_option("--telemetry", ex.telemetry, "telemetry.csv from train");
  export_cmd->add_option("--eval-dir", ex.eval_dir, "Output directory of an eval run");

  std::string inspect_path;
  auto* inspect_cmd = app.add_subcommand("inspect", "Print feature/checkpoint/descriptor headers");
  inspect_cmd->add_option("path", inspect_path)->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth_cmd) return cmd_synth(synth, g, out);
    if (*train_cmd) return cmd_train(tr, g, out, err);
    if (*eval_cmd) return cmd_eval(ev, g, out, err);
    if (*predict_cmd) return cmd_predict(pr, g, app.count("--out") > 0, out);
    if (*export_cmd) return cmd_export(ex, g, out);
    if (*inspect_cmd) return cmd_inspect(inspect_path, out);
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const ShapeError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace lpf

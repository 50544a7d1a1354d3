// dpvae/tools/dpvae_main.cpp

// Copyright 2026 The dpvae Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dpvae/config.hpp"
#include "dpvae/dataset.hpp"
#include "dpvae/metrics.hpp"
#include "dpvae/trainer.hpp"

namespace {

using namespace dpvae;

// Command-line overrides on top of the JSON config. Only values the user
// actually passed are applied; the config file stays the primary interface.
struct Overrides {
  std::string config_path;
  std::string output_dir;
  int max_epochs = -1;
  int dpmm_steps = -1;
  std::int64_t seed = -1;
  int checkpoint_interval = -1;
  bool record_timing = false;

  void add_flags(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON experiment config")
        ->required();
    cmd->add_option("--output-dir", output_dir,
                    "Where metrics, logs, and checkpoints go");
    cmd->add_option("--max-epochs", max_epochs, "Total training epochs");
    cmd->add_option("--steps", dpmm_steps, "Mixture update steps per epoch");
    cmd->add_option("--seed", seed, "Random seed for the whole run");
    cmd->add_option("--checkpoint-interval", checkpoint_interval,
                    "Epochs between checkpoints (0 = final only)");
    cmd->add_flag("--record-timing", record_timing,
                  "Fill the seconds column (breaks byte-determinism)");
  }

  ExperimentConfig load(const CLI::App& cmd) const {
    ExperimentConfig cfg = load_config(config_path);
    if (cmd.count("--output-dir")) cfg.output_dir = output_dir;
    if (cmd.count("--max-epochs")) cfg.max_epochs = max_epochs;
    if (cmd.count("--steps")) cfg.dpmm_steps = dpmm_steps;
    if (cmd.count("--seed")) cfg.seed = static_cast<std::uint64_t>(seed);
    if (cmd.count("--checkpoint-interval"))
      cfg.checkpoint_interval = checkpoint_interval;
    if (cmd.count("--record-timing")) cfg.record_timing = true;
    return cfg;
  }
};

Dataset load_dataset(const ExperimentConfig& cfg) {
  if (cfg.dataset_format == "idx") {
    return load_idx(cfg.dataset_path, cfg.labels_path);
  }
  return load_csv(cfg.dataset_path, cfg.label_column);
}

// Everything a finished run leaves behind: the metrics stream, the move
// log, the final mixture model, and (for the full system) the final VAE.
void write_run_outputs(const TrainResult& result, const ExperimentConfig& cfg,
                       bool with_vae) {
  std::filesystem::create_directories(cfg.output_dir);
  const std::filesystem::path dir(cfg.output_dir);
  write_metrics_csv((dir / "metrics.csv").string(), result.history);
  write_move_log((dir / "moves.jsonl").string(), result.state.moves);
  save_model(dir / "final.dpmm.json", result.state.dpmm);
  if (with_vae) {
    save_vae(result.state.vae, (dir / "final.vae.json").string());
  }
}

int require_config_file(const std::string& path) {
  if (!std::filesystem::exists(path)) {
    std::cerr << "dpvae: config file not found: " << path << "\n";
    return 2;
  }
  return 0;
}

void print_summary(const TrainResult& result, const ExperimentConfig& cfg) {
  if (result.history.empty()) {
    std::cout << "no epochs ran; state initialized only\n";
    return;
  }
  const MetricsRecord& last = result.history.back();
  std::cout << "finished " << result.history.size() << " epochs: K=" << last.K
            << " elbo=" << last.elbo;
  if (!std::isnan(last.acc)) std::cout << " acc=" << last.acc;
  std::cout << "\noutputs in " << cfg.output_dir << "\n";
}

int run_fit_dpmm(const CLI::App& cmd, const Overrides& opts) {
  if (int rc = require_config_file(opts.config_path)) return rc;
  const ExperimentConfig cfg = opts.load(cmd);
  const Dataset data = load_dataset(cfg);
  const TrainResult result = fit_dpmm(data, cfg);
  write_run_outputs(result, cfg, /*with_vae=*/false);
  print_summary(result, cfg);
  return 0;
}

int run_train_diva(const CLI::App& cmd, const Overrides& opts) {
  if (int rc = require_config_file(opts.config_path)) return rc;
  const ExperimentConfig cfg = opts.load(cmd);
  const Dataset data = load_dataset(cfg);
  const TrainResult result = train(data, cfg);
  write_run_outputs(result, cfg, /*with_vae=*/true);
  print_summary(result, cfg);
  return 0;
}

// ---------------------------------------------------------------------------
// Latent dumps: CSV with header z0..z{D-1},label,cluster. export-latent
// writes them from a checkpoint; eval reads them back to score a run.

void write_latent_csv(const std::string& path, const Eigen::MatrixXd& z,
                      const std::vector<std::int64_t>& labels,
                      const std::vector<std::int64_t>& clusters) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("export-latent: cannot open " + path);
  }
  for (Eigen::Index d = 0; d < z.cols(); ++d) out << "z" << d << ",";
  out << "label,cluster\n";
  char buf[64];
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    for (Eigen::Index d = 0; d < z.cols(); ++d) {
      std::snprintf(buf, sizeof(buf), "%.17g", z(i, d));
      out << buf << ",";
    }
    const std::int64_t label =
        labels.empty() ? -1 : labels[static_cast<std::size_t>(i)];
    const std::int64_t cluster =
        clusters.empty() ? -1 : clusters[static_cast<std::size_t>(i)];
    out << label << "," << cluster << "\n";
  }
  if (!out) {
    throw std::runtime_error("export-latent: write failed for " + path);
  }
}

struct LatentDump {
  Eigen::MatrixXd z;
  std::vector<std::int64_t> labels;
  std::vector<std::int64_t> clusters;
};

std::vector<std::string> split_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

double parse_cell_double(const std::string& cell, std::size_t row) {
  double v = 0.0;
  const char* b = cell.data();
  const char* e = b + cell.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) {
    throw std::invalid_argument("latent dump: row " + std::to_string(row) +
                                ": bad number '" + cell + "'");
  }
  return v;
}

std::int64_t parse_cell_int(const std::string& cell, std::size_t row) {
  std::int64_t v = 0;
  const char* b = cell.data();
  const char* e = b + cell.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) {
    throw std::invalid_argument("latent dump: row " + std::to_string(row) +
                                ": bad integer '" + cell + "'");
  }
  return v;
}

LatentDump read_latent_dump(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("eval: cannot open " + path);
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw std::invalid_argument("eval: " + path + " is empty");
  }
  const std::vector<std::string> header = split_line(line);
  int label_col = -1;
  int cluster_col = -1;
  std::vector<int> z_cols;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    if (header[c] == "label") {
      label_col = c;
    } else if (header[c] == "cluster") {
      cluster_col = c;
    } else {
      z_cols.push_back(c);
    }
  }
  if (label_col < 0 || cluster_col < 0 || z_cols.empty()) {
    throw std::invalid_argument(
        "eval: expected header z0..z{D-1},label,cluster in " + path);
  }

  std::vector<std::vector<double>> zs;
  LatentDump dump;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != header.size()) {
      throw std::invalid_argument(
          "latent dump: row " + std::to_string(row) + ": expected " +
          std::to_string(header.size()) + " cells, got " +
          std::to_string(cells.size()));
    }
    std::vector<double> z(z_cols.size());
    for (std::size_t d = 0; d < z_cols.size(); ++d) {
      z[d] = parse_cell_double(cells[static_cast<std::size_t>(z_cols[d])], row);
    }
    zs.push_back(std::move(z));
    dump.labels.push_back(
        parse_cell_int(cells[static_cast<std::size_t>(label_col)], row));
    dump.clusters.push_back(
        parse_cell_int(cells[static_cast<std::size_t>(cluster_col)], row));
  }
  dump.z.resize(static_cast<Eigen::Index>(zs.size()),
                static_cast<Eigen::Index>(z_cols.size()));
  for (std::size_t i = 0; i < zs.size(); ++i) {
    for (std::size_t d = 0; d < zs[i].size(); ++d) {
      dump.z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) =
          zs[i][d];
    }
  }
  return dump;
}

int run_export_latent(const std::string& config_path,
                      const std::string& vae_path,
                      const std::string& dpmm_path,
                      const std::string& output_path) {
  if (int rc = require_config_file(config_path)) return rc;
  const ExperimentConfig cfg = load_config(config_path);
  const Dataset data = load_dataset(cfg);
  const MlpVae vae = load_vae(vae_path);
  if (data.features.cols() != vae.config.input_dim) {
    throw std::invalid_argument(
        "export-latent: dataset width " + std::to_string(data.features.cols()) +
        " does not match checkpoint input_dim " +
        std::to_string(vae.config.input_dim));
  }
  const EncodeResult enc = vae_encode(vae, data.features);
  std::vector<std::int64_t> clusters;
  if (!dpmm_path.empty()) {
    const DpmmModel model = load_model(dpmm_path);
    clusters = assign_clusters(vae, model, data.features);
  }
  write_latent_csv(output_path, enc.mu, data.labels, clusters);
  std::cout << "wrote " << enc.mu.rows() << " rows to " << output_path << "\n";
  return 0;
}

int run_eval(const std::string& latents_path, const std::string& test_path,
             int knn_k, const std::string& report_path) {
  const LatentDump dump = read_latent_dump(latents_path);
  if (dump.z.rows() == 0) {
    throw std::invalid_argument("eval: " + latents_path + " has no data rows");
  }
  bool labeled = false;
  for (std::int64_t v : dump.labels) {
    if (v >= 0) {
      labeled = true;
      break;
    }
  }
  if (!labeled) {
    throw std::invalid_argument("eval: " + latents_path +
                                " carries no labels, nothing to score");
  }

  nlohmann::json report;
  report["rows"] = dump.z.rows();
  report["clusters"] = std::set<std::int64_t>(dump.clusters.begin(),
                                              dump.clusters.end())
                           .size();
  report["acc"] = clustering_accuracy({dump.clusters, dump.labels});
  if (!test_path.empty()) {
    const LatentDump test = read_latent_dump(test_path);
    report["knn_k"] = knn_k;
    report["knn_error"] =
        knn_error(dump.z, dump.labels, test.z, test.labels, knn_k);
  }

  const std::string text = report.dump(2);
  if (report_path.empty()) {
    std::cout << text << "\n";
  } else {
    std::ofstream out(report_path);
    if (!out) {
      throw std::runtime_error("eval: cannot open " + report_path);
    }
    out << text << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonparametric deep clustering: DPMM + VAE experiments"};
  app.require_subcommand(1);

  Overrides fit_opts;
  CLI::App* fit = app.add_subcommand(
      "fit-dpmm", "Fit the mixture directly on the feature rows");
  fit_opts.add_flags(fit);

  Overrides train_opts;
  CLI::App* train_cmd = app.add_subcommand(
      "train-diva", "Train the full VAE + mixture system");
  train_opts.add_flags(train_cmd);

  std::string export_config, export_vae, export_dpmm, export_out;
  CLI::App* exp = app.add_subcommand(
      "export-latent", "Encode a dataset with a checkpoint and dump latents");
  exp->add_option("--config", export_config, "JSON experiment config")
      ->required();
  exp->add_option("--vae", export_vae, "VAE checkpoint manifest")->required();
  exp->add_option("--dpmm", export_dpmm,
                  "Mixture model JSON for the cluster column");
  exp->add_option("--output", export_out, "Latent CSV to write")->required();

  std::string eval_latents, eval_test, eval_report;
  int eval_knn = 3;
  CLI::App* ev = app.add_subcommand(
      "eval", "Score a latent dump: clustering accuracy and kNN error");
  ev->add_option("--latents", eval_latents, "Latent dump CSV")->required();
  ev->add_option("--test", eval_test,
                 "Second dump scored by kNN against --latents");
  ev->add_option("--knn", eval_knn, "Neighbor count for the kNN error");
  ev->add_option("--report", eval_report,
                 "Write the JSON report here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (fit->parsed()) return run_fit_dpmm(*fit, fit_opts);
    if (train_cmd->parsed()) return run_train_diva(*train_cmd, train_opts);
    if (exp->parsed()) {
      return run_export_latent(export_config, export_vae, export_dpmm,
                               export_out);
    }
    if (ev->parsed()) {
      return run_eval(eval_latents, eval_test, eval_knn, eval_report);
    }
  } catch (const std::exception& e) {
    std::cerr << "dpvae: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

// Command-line front end: dataset generation, training, evaluation,
// parameter counting and gradient checks.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "invo/checkpoint.hpp"
#include "invo/config_io.hpp"
#include "invo/gradcheck.hpp"
#include "invo/report.hpp"
#include "invo/train.hpp"

namespace {

using namespace invo;

RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return {};
  return read_json(path).get<RunConfig>();
}

Dataset load_filtered(const std::string& dir, const std::vector<double>& snr) {
  Dataset data = load_dataset(dir);
  return snr.empty() ? data : select_snr(data, snr);
}

std::vector<EpochLog> read_training_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line != "epoch,mean_loss,lr") throw std::runtime_error(path + ": not a training log");
  std::vector<EpochLog> out;
  while (std::getline(in, line)) {
    EpochLog e;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf", &e.epoch, &e.mean_loss, &e.lr) != 3) {
      throw std::runtime_error(path + ": malformed row '" + line + "'");
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Involution residual network for modulation classification"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic I/Q dataset");
  std::string spec_path, out_dir;
  gen->add_option("--spec", spec_path, "Dataset spec JSON (defaults apply when omitted)")->check(CLI::ExistingFile);
  gen->add_option("--out", out_dir, "Output directory")->required();
  gen->add_option("--seed", seed, "Override the spec seed");

  // train
  auto* tr = app.add_subcommand("train", "Train a model on a dataset");
  std::string data_dir, config_path, ckpt_out, log_path, precision = "f32";
  std::vector<double> snr_filter;
  tr->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--config", config_path, "Run config JSON {model, sgd}")->check(CLI::ExistingFile);
  tr->add_option("--out", ckpt_out, "Checkpoint path")->required();
  tr->add_option("--log", log_path, "Training log CSV");
  tr->add_option("--seed", seed, "Override the sgd seed (also seeds initialization)");
  tr->add_option("--snr", snr_filter, "Train only on these SNRs (dB)");
  tr->add_option("--precision", precision, "Checkpoint storage precision")->check(CLI::IsMember({"f32", "f64"}));
  bool quiet = false;
  tr->add_flag("--quiet", quiet, "No per-epoch progress on stderr");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset's test split");
  std::string ckpt_in, report_dir, eval_log;
  ev->add_option("--ckpt", ckpt_in, "Checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--report", report_dir, "Report output directory")->required();
  ev->add_option("--log", eval_log, "Training log CSV to include as loss history")->check(CLI::ExistingFile);
  ev->add_option("--snr", snr_filter, "Evaluate only these SNRs (dB)");
  ev->add_option("--seed", seed, "Accepted for uniformity; evaluation is deterministic");

  // params
  auto* pa = app.add_subcommand("params", "Compare involution and convolution parameter counts");
  pa->add_option("--config", config_path, "Run config JSON (model section is used)")->check(CLI::ExistingFile);
  pa->add_option("--seed", seed, "Accepted for uniformity; counts do not depend on it");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  std::string layer;
  gc->add_option("--layer", layer, "Check one layer only")->check(CLI::IsMember(gradcheck_layers()));
  gc->add_option("--seed", seed, "Seed for inputs and parameters");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      DatasetSpec spec = spec_path.empty() ? DatasetSpec{} : read_json(spec_path).get<DatasetSpec>();
      if (seed) spec.seed = *seed;
      const Dataset data = generate_dataset(spec);
      save_dataset(data, out_dir);
      std::cout << "wrote " << data.train.size() << " train and " << data.test.size() << " test frames to "
                << out_dir << '\n';
    } else if (*tr) {
      RunConfig run = load_run_config(config_path);
      if (seed) run.sgd.seed = *seed;
      const Dataset data = load_filtered(data_dir, snr_filter);
      if (run.model.num_classes != data.class_names.size()) {
        throw ConfigError("model has " + std::to_string(run.model.num_classes) + " classes, dataset has " +
                          std::to_string(data.class_names.size()));
      }
      Rng init(run.sgd.seed);
      Model model = Model::build(run.model, init);
      const auto history = train(model, data.train, run.sgd, [&](const EpochLog& e) {
        if (!quiet) std::cerr << "epoch " << e.epoch << " loss " << e.mean_loss << " lr " << e.lr << '\n';
      });
      save_checkpoint(model, {run.sgd.seed, run.sgd.epochs, parse_precision(precision)}, ckpt_out);
      if (!log_path.empty()) write_training_log(history, log_path);
      std::cout << "trained " << history.size() << " epochs, " << model.parameter_count() << " parameters\n";
    } else if (*ev) {
      const LoadedCheckpoint ckpt = load_checkpoint(ckpt_in);
      const Dataset data = load_filtered(data_dir, snr_filter);
      EvalReport report = evaluate(ckpt.model, data.test, data.class_names);
      if (!eval_log.empty()) report.loss_history = read_training_log(eval_log);
      write_report(report, report_dir);
      std::cout << "snr_db,accuracy\n";
      for (const auto& [snr, acc] : report.per_snr_accuracy()) {
        std::cout << format_number(snr) << ',' << format_number(acc) << '\n';
      }
      std::cout << "overall Pr_cc " << report.overall_pr_cc << '\n';
    } else if (*pa) {
      const RunConfig run = load_run_config(config_path);
      const ParameterComparison cmp = compare(run.model);
      std::cout << "involution " << cmp.involution << '\n'
                << "convolution " << cmp.convolution << '\n'
                << "reduction_fraction " << format_number(cmp.reduction_fraction) << '\n';
    } else if (*gc) {
      GradcheckOptions opts;
      if (seed) opts.seed = *seed;
      const std::vector<std::string> layers = layer.empty() ? gradcheck_layers() : std::vector<std::string>{layer};
      bool ok = true;
      for (const std::string& name : layers) {
        const GradcheckResult r = gradcheck(name, opts);
        std::printf("%-22s %s checked=%zu refined=%zu skipped=%zu max=%.3e mean=%.3e worst=%s\n", name.c_str(), r.passed ? "ok  " : "FAIL",
                    r.checked, r.refined, r.skipped, r.max_error, r.mean_error, r.worst.c_str());
        ok = ok && r.passed;
      }
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

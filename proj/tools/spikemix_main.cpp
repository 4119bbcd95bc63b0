#include <filesystem>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "spikemix/analysis.hpp"
#include "spikemix/checkpoint.hpp"
#include "spikemix/data.hpp"
#include "spikemix/infer.hpp"
#include "spikemix/training.hpp"

namespace fs = std::filesystem;
using namespace spikemix;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitAudit = 4;
constexpr int kExitNumeric = 5;

Tensor take_samples(const Dataset& ds, int64_t n) {
  const int64_t take = std::min<int64_t>(n, ds.count());
  if (take <= 0) throw ConfigError("dataset has no samples");
  const int64_t per = ds.images.size() / ds.images.dim(0);
  Tensor out({take, ds.images.dim(1), ds.images.dim(2), ds.images.dim(3)});
  std::copy(ds.images.data(), ds.images.data() + take * per, out.data());
  return out;
}

int run_train(const std::string& config_path) {
  RunConfig cfg = RunConfig::parse_file(config_path);
  DatasetPair data = load_source(cfg.dataset);
  data.train.validate(cfg.net.num_classes);
  if (data.train.images.dim(2) != cfg.net.img_h || data.train.images.dim(3) != cfg.net.img_w)
    throw ConfigError("dataset image size does not match img_h/img_w in the config");
  fs::create_directories(cfg.out_dir);

  Network net(cfg.net);
  const std::string metrics_path = (fs::path(cfg.out_dir) / "metrics.txt").string();
  TrainResult result = train_network(net, data.train, data.eval, cfg, metrics_path);
  for (const auto& rec : result.history) std::cout << format_metrics_line(rec) << "\n";

  const std::string ckpt_path = (fs::path(cfg.out_dir) / "checkpoint.smlx").string();
  save_checkpoint(net, cfg, ckpt_path, &result.optimizer);
  std::cout << "checkpoint=" << ckpt_path << "\n";
  std::cout << "metrics=" << metrics_path << "\n";
  return 0;
}

int run_eval(const std::string& ckpt_path, const std::string& data_src) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  auto net = restore_network(ckpt);
  DatasetPair data = load_source(data_src);
  const double acc = evaluate(*net, data.eval.count() ? data.eval : data.train);
  std::cout << "top1_accuracy=" << fmt_double(acc) << "\n";
  return 0;
}

int run_tit(const std::string& ckpt_path, int t_steps, int epochs, const std::string& data_override,
            const std::string& out_override) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  RunConfig cfg = ckpt.config;
  cfg.net.t_steps = t_steps;
  cfg.epochs = epochs;
  if (!data_override.empty()) cfg.dataset = data_override;
  if (!out_override.empty()) cfg.out_dir = out_override;
  auto net = restore_network_with_t(ckpt, t_steps);

  DatasetPair data = load_source(cfg.dataset);
  fs::create_directories(cfg.out_dir);
  const std::string metrics_path = (fs::path(cfg.out_dir) / ("metrics_t" + std::to_string(t_steps) + ".txt")).string();
  TrainResult result = train_network(*net, data.train, data.eval, cfg, metrics_path);
  for (const auto& rec : result.history) std::cout << format_metrics_line(rec) << "\n";

  const std::string out_ckpt =
      (fs::path(cfg.out_dir) / ("checkpoint_t" + std::to_string(t_steps) + ".smlx")).string();
  save_checkpoint(*net, cfg, out_ckpt, &result.optimizer);
  std::cout << "checkpoint=" << out_ckpt << "\n";
  return 0;
}

int run_fold(const std::string& ckpt_path, const std::string& out_path) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  auto net = restore_network(ckpt);
  infer::ModelF model = infer::lower(*net, ckpt.config, /*folded=*/true);
  infer::save_model(model, out_path);
  std::cout << "folded_model=" << out_path << "\n";
  return 0;
}

int run_audit(const std::string& model_path, const std::string& data_src, int64_t samples) {
  infer::ModelF model = infer::load_model(model_path);
  if (!model.folded) throw ConfigError("audit: model is not folded: fold first");
  DatasetPair data = load_source(data_src);
  AuditReport report = audit_mfi(model, take_samples(data.train, samples));
  std::cout << report.text();
  return report.ok() ? 0 : kExitAudit;
}

int run_cost(const std::string& ckpt_path, const std::string& data_src, int64_t samples) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  auto net = restore_network(ckpt);
  infer::ModelF model = infer::lower(*net, ckpt.config, /*folded=*/true);
  DatasetPair data = load_source(data_src);
  CostReport report = build_cost_report(model, take_samples(data.train, samples));
  std::cout << report.text();
  return 0;
}

int run_params(const std::string& config_path) {
  RunConfig cfg = RunConfig::parse_file(config_path);
  std::cout << "params=" << count_params(cfg.net) << "\n";
  return 0;
}

int run_export(const std::string& ckpt_path, const std::string& block, const std::string& out_path,
               const std::string& format, int rf_row) {
  if (format != "csv" && format != "pgm") throw ConfigError("export: format must be csv or pgm");
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  auto net = restore_network(ckpt);
  export_token_weights(*net, block, out_path, format == "csv" ? ExportFormat::csv : ExportFormat::pgm, rf_row);
  std::cout << "exported=" << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spikemix: spiking MLP-Mixer training, BN folding, and multiplication-free inference auditing"};
  app.require_subcommand(1);

  std::string config_path, ckpt_path, data_src, out_path, block, format = "csv", model_path;
  std::string data_override, out_override;
  int t_steps = 6, epochs = 2, rf_row = -1;
  int64_t samples = 64;

  auto* train = app.add_subcommand("train", "train a network from a run config");
  train->add_option("--config", config_path, "run config file")->required();

  auto* eval = app.add_subcommand("eval", "top-1 accuracy of a checkpoint on a dataset");
  eval->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  eval->add_option("--data", data_src, "dataset source")->required();

  auto* tit = app.add_subcommand("tit", "time-inheritance fine-tune: reload at a new T and train");
  tit->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  tit->add_option("--t", t_steps, "new simulation step count")->required();
  tit->add_option("--epochs", epochs, "fine-tune epochs")->required();
  tit->add_option("--data", data_override, "dataset source override");
  tit->add_option("--out", out_override, "output directory override");

  auto* fold = app.add_subcommand("fold", "fold batch norms into weights and write the inference model");
  fold->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  fold->add_option("--out", out_path, "folded model output path")->required();

  auto* audit = app.add_subcommand("audit", "classify every multiply of a folded model on sample data");
  audit->add_option("--folded", model_path, "folded model file")->required();
  audit->add_option("--data", data_src, "dataset source")->required();
  audit->add_option("--samples", samples, "sample count");

  auto* cost = app.add_subcommand("cost", "spike rates, s*T*A additions, and energy estimate");
  cost->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  cost->add_option("--data", data_src, "dataset source")->required();
  cost->add_option("--samples", samples, "sample count");

  auto* params = app.add_subcommand("params", "parameter count for a config");
  params->add_option("--config", config_path, "run config file")->required();

  auto* exp = app.add_subcommand("export-weights", "export token weights as CSV or PGM");
  exp->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  exp->add_option("--block", block, "parameter path, e.g. stage1.mixer0.token.w_h")->required();
  exp->add_option("--out", out_path, "output file")->required();
  exp->add_option("--format", format, "csv|pgm");
  exp->add_option("--rf-row", rf_row, "export this output row's receptive field (outer product)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return run_train(config_path);
    if (*eval) return run_eval(ckpt_path, data_src);
    if (*tit) return run_tit(ckpt_path, t_steps, epochs, data_override, out_override);
    if (*fold) return run_fold(ckpt_path, out_path);
    if (*audit) return run_audit(model_path, data_src, samples);
    if (*cost) return run_cost(ckpt_path, data_src, samples);
    if (*params) return run_params(config_path);
    if (*exp) return run_export(ckpt_path, block, out_path, format, rf_row);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

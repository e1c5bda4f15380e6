// tdntc command-line tool. One subcommand per run; `tdntc --help` lists them.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "tdntc/checkpoint.hpp"
#include "tdntc/flowcap.hpp"
#include "tdntc/trainer.hpp"

namespace fs = std::filesystem;
using namespace tdntc;

namespace {

// Pipeline step currently running; error messages are prefixed with it.
std::string g_stage = "setup";

struct Options {
  std::string pcap, label, out_csv;
  std::size_t pad = flowcap::kFeatureCount;
  double idle_timeout = 60.0;

  std::string csv, checkpoint;
  std::string variant = "m3-td";
  std::string label_column = "label";
  std::uint64_t seed = 1;
  std::string factor_pair;
  std::string out_dir = "tdntc-out";
  std::size_t units = 128;
  std::size_t kernel = 3;
  TrainConfig train;
  std::string optimizer = "adam";

  std::size_t n_features = 48, n_classes = 141;

  std::size_t synth_classes = 3, synth_per_class = 1000;
};

std::optional<FactorPair> parse_factor_pair(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const auto comma = s.find(',');
  std::size_t r = 0, c = 0;
  try {
    if (comma == std::string::npos) throw std::invalid_argument(s);
    std::size_t used = 0;
    r = std::stoul(s.substr(0, comma), &used);
    if (used != comma) throw std::invalid_argument(s);
    c = std::stoul(s.substr(comma + 1), &used);
    if (used != s.size() - comma - 1) throw std::invalid_argument(s);
  } catch (const std::logic_error&) {
    throw ConfigError("--factor-pair expects R,C (got '" + s + "')");
  }
  return FactorPair{r, c};
}

ModelConfig model_config(const Options& o, std::size_t n, std::size_t classes) {
  ModelConfig cfg;
  cfg.variant = parse_variant(o.variant);
  cfg.n_features = n;
  cfg.n_classes = classes;
  cfg.units = o.units;
  cfg.td_units = o.units;
  cfg.kernel_rows = cfg.kernel_cols = o.kernel;
  cfg.factors = parse_factor_pair(o.factor_pair);
  cfg.seed = o.seed;
  return cfg;
}

void print_config(const std::string& command, const nlohmann::json& cfg) {
  std::cout << "tdntc " << command << "\n";
  for (const auto& [key, value] : cfg.items()) std::cout << "  " << key << " = " << value.dump() << "\n";
  std::cout << "  threads = " << thread_budget() << "\n";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw DataError("failed while writing '" + path.string() + "'");
}

std::string report_header(const nlohmann::json& cfg) {
  std::string out;
  for (const auto& [key, value] : cfg.items()) out += "# " + key + " = " + value.dump() + "\n";
  return out;
}

int cmd_featurize(const Options& o) {
  print_config("featurize", {{"pcap", o.pcap}, {"label", o.label}, {"out", o.out_csv},
                             {"pad", o.pad}, {"idle_timeout", o.idle_timeout}});
  g_stage = "parse";
  auto cap = flowcap::parse_pcap(o.pcap);
  g_stage = "assemble";
  const auto flows = flowcap::assemble_flows(std::move(cap.packets), o.idle_timeout);
  g_stage = "write";
  std::ostringstream csv;
  flowcap::write_feature_csv(csv, flows, o.label, o.pad);
  write_text(o.out_csv, csv.str());

  const auto& c = cap.counters;
  std::cout << "records " << c.records << ", packets used " << c.emitted << ", skipped " << c.skipped()
            << " (non-ip " << c.non_ip << ", ipv6 " << c.ipv6 << ", fragments " << c.fragments
            << ", non-tcp/udp " << c.non_tcp_udp << ", truncated " << c.truncated << ")\n";
  std::cout << "flows " << flows.size() << " -> " << o.out_csv << "\n";
  return 0;
}

// Report text, JSON and the confusion matrix for one evaluation.
void write_reports(const fs::path& dir, const Evaluation& ev, const std::vector<std::string>& names,
                   const nlohmann::json& header) {
  write_text(dir / "report.txt", report_header(header) + per_class_report(ev.report, names));
  nlohmann::json j = report_json(ev.report, names);
  j["config"] = header;
  nlohmann::json cm = nlohmann::json::array();
  for (std::size_t r = 0; r < names.size(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t c = 0; c < names.size(); ++c) row.push_back(ev.confusion(r, c));
    cm.push_back(std::move(row));
  }
  j["confusion_matrix"] = std::move(cm);
  write_text(dir / "report.json", j.dump(2) + "\n");
}

int cmd_train(Options o) {
  g_stage = "config";
  o.train.optimizer = parse_optimizer(o.optimizer);
  o.train.seed = o.seed;
  o.train.validate();
  g_stage = "load";
  const Dataset ds = load_csv_dataset(o.csv, o.label_column);
  ds.validate();
  g_stage = "build";
  const ModelConfig cfg = model_config(o, ds.n_features(), ds.n_classes());
  build_model(cfg);  // geometry errors surface before any data work

  nlohmann::json header = {{"csv", o.csv}, {"out", o.out_dir}, {"label_column", o.label_column},
                           {"model", config_to_json(cfg)}, {"train", train_config_to_json(o.train)},
                           {"samples", ds.size()}};
  print_config("train", header);

  g_stage = "prepare";
  const PreparedData data = prepare_data(ds, cfg, o.seed);
  std::cout << "split train " << data.train.size() << " / val " << data.val.size() << " / test "
            << data.test.size() << "\n";
  fs::create_directories(o.out_dir);
  const fs::path dir = o.out_dir;

  g_stage = "train";
  auto on_trial = [&](std::size_t k, const TrialRow& row, const TrainHistory& hist, ModelGraph& g) {
    std::printf("trial %zu: %zu epochs (best %zu), test accuracy %.4f, %.2f min\n", k + 1, hist.epochs.size(),
                hist.best_epoch, row.accuracy, row.minutes);
    if (k != 0) return;
    // artifacts come from the first trial, which uses the requested seed
    std::ostringstream hcsv;
    write_history_csv(hcsv, hist);
    write_text(dir / "history.csv", hcsv.str());
    CheckpointExtras extras{data.scaler, data.class_names, data.feature_names,
                            {{"train", train_config_to_json(o.train)},
                             {"epochs_run", hist.epochs.size()},
                             {"best_epoch", hist.best_epoch}}};
    save_checkpoint(g, extras, (dir / "model.ckpt").string());
    const auto ev = evaluate(g, data.test);
    write_reports(dir, ev, data.class_names, header);
    std::cout << per_class_report(ev.report, data.class_names);
  };
  const auto table = run_trials(cfg, data, o.train, on_trial);
  if (o.train.trials > 1) {
    const std::string text = trial_table_text(table);
    write_text(dir / "trials.txt", text);
    std::cout << text;
  }
  std::printf("accuracy %.4f\n", table.rows.front().accuracy);
  std::cout << "artifacts in " << o.out_dir << "\n";
  return 0;
}

int cmd_evaluate(const Options& o) {
  g_stage = "load checkpoint";
  auto loaded = load_checkpoint(o.checkpoint);
  const ModelConfig& cfg = loaded.graph.config();
  nlohmann::json header = {{"checkpoint", o.checkpoint}, {"csv", o.csv}, {"label_column", o.label_column},
                           {"model", config_to_json(cfg)}};
  if (!o.out_dir.empty()) header["out"] = o.out_dir;
  print_config("evaluate", header);

  g_stage = "load";
  Dataset ds = load_csv_dataset(o.csv, o.label_column);
  if (ds.n_features() != cfg.n_features) {
    throw ShapeError("checkpoint expects N=" + std::to_string(cfg.n_features) + " features, '" + o.csv +
                     "' has N=" + std::to_string(ds.n_features()));
  }
  if (!loaded.extras.scaler) throw IntegrityError(o.checkpoint + ": checkpoint carries no scaler state");
  std::vector<std::string> names = loaded.extras.class_names;
  if (names.empty()) {
    for (std::size_t c = 0; c < cfg.n_classes; ++c) names.push_back(std::to_string(c));
  }
  ds = remap_labels(ds, names);

  g_stage = "evaluate";
  const auto split = prepare_eval(ds, cfg, *loaded.extras.scaler);
  const auto ev = evaluate(loaded.graph, split);
  std::cout << per_class_report(ev.report, names);
  std::printf("accuracy %.4f\n", ev.report.accuracy);
  if (!o.out_dir.empty()) {
    fs::create_directories(o.out_dir);
    write_reports(o.out_dir, ev, names, header);
  }
  return 0;
}

int cmd_audit(const Options& o) {
  g_stage = "build";
  const ModelConfig cfg = model_config(o, o.n_features, o.n_classes);
  print_config("audit-params", config_to_json(cfg));
  const auto g = build_model(cfg);
  std::cout << stage_table_text(g);
  return 0;
}

int cmd_synth(const Options& o) {
  print_config("synth", {{"out", o.out_csv}, {"classes", o.synth_classes}, {"per_class", o.synth_per_class},
                         {"features", o.n_features}, {"seed", o.seed}});
  const Dataset ds = generate_synthetic(o.synth_classes, o.synth_per_class, o.n_features, o.seed);
  std::ostringstream csv;
  write_csv_dataset(csv, ds, o.label_column);
  write_text(o.out_csv, csv.str());
  std::cout << "rows " << ds.size() << " -> " << o.out_csv << "\n";
  return 0;
}

void add_model_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--units", o.units, "recurrent / dense width U")->capture_default_str();
  cmd->add_option("--kernel", o.kernel, "square convolution kernel size")->capture_default_str();
  cmd->add_option("--factor-pair", o.factor_pair, "frame shape override R,C (M1/M3)");
  cmd->add_option("--seed", o.seed, "initialisation, split and shuffle seed")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"time-distributed network traffic classifier toolkit"};
  app.require_subcommand(1);

  auto* feat = app.add_subcommand("featurize", "pcap -> per-flow feature CSV");
  feat->add_option("pcap", o.pcap, "classic pcap capture")->required();
  feat->add_option("label", o.label, "label written to every row")->required();
  feat->add_option("out_csv", o.out_csv, "output CSV")->required();
  feat->add_option("--pad", o.pad, "zero-pad the feature columns to this count")->capture_default_str();
  feat->add_option("--idle-timeout", o.idle_timeout, "seconds of silence that end a flow")->capture_default_str();

  auto* tr = app.add_subcommand("train", "train a variant on a CSV and write artifacts");
  tr->add_option("csv", o.csv, "flow CSV with a header row")->required();
  tr->add_option("--variant", o.variant, "{m1,m2,m3}-{td,van}")->capture_default_str();
  tr->add_option("--label-column", o.label_column)->capture_default_str();
  add_model_flags(tr, o);
  o.train.trials = 1;
  tr->add_option("--epochs", o.train.epochs)->capture_default_str();
  tr->add_option("--batch", o.train.batch)->capture_default_str();
  tr->add_option("--lr", o.train.learning_rate)->capture_default_str();
  tr->add_option("--optimizer", o.optimizer, "adam or sgd")->capture_default_str();
  tr->add_option("--patience", o.train.patience, "0 disables early stopping")->capture_default_str();
  tr->add_option("--trials", o.train.trials)->capture_default_str();
  tr->add_option("--lr-jitter", o.train.lr_jitter, "per-trial learning-rate spread")->capture_default_str();
  tr->add_option("--out", o.out_dir, "artifact directory")->capture_default_str();

  auto* ev = app.add_subcommand("evaluate", "score a checkpoint on a CSV");
  ev->add_option("checkpoint", o.checkpoint)->required();
  ev->add_option("csv", o.csv)->required();
  ev->add_option("--label-column", o.label_column)->capture_default_str();
  std::string eval_out;
  ev->add_option("--out", eval_out, "write report.txt / report.json here");

  auto* audit = app.add_subcommand("audit-params", "print the stage table of an untrained model");
  audit->add_option("variant", o.variant)->required();
  audit->add_option("n_features", o.n_features)->required();
  audit->add_option("classes", o.n_classes)->required();
  add_model_flags(audit, o);

  auto* synth = app.add_subcommand("synth", "write a seeded synthetic flow CSV");
  synth->add_option("out_csv", o.out_csv)->required();
  synth->add_option("--classes", o.synth_classes)->capture_default_str();
  synth->add_option("--per-class", o.synth_per_class)->capture_default_str();
  synth->add_option("--features", o.n_features)->capture_default_str();
  synth->add_option("--seed", o.seed)->capture_default_str();
  synth->add_option("--label-column", o.label_column)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (feat->parsed()) return cmd_featurize(o);
    if (tr->parsed()) return cmd_train(o);
    if (ev->parsed()) {
      o.out_dir = eval_out;
      return cmd_evaluate(o);
    }
    if (audit->parsed()) return cmd_audit(o);
    if (synth->parsed()) return cmd_synth(o);
  } catch (const std::exception& e) {
    std::cerr << "tdntc: error [" << g_stage << "]: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "quantifair/config.hpp"
#include "quantifair/dataset.hpp"
#include "quantifair/error.hpp"
#include "quantifair/protocols.hpp"
#include "quantifair/report.hpp"

namespace fs = std::filesystem;
using namespace quantifair;

namespace {

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 1;
    case ErrorKind::data: return 2;
    case ErrorKind::runtime: return 3;
  }
  return 3;
}

struct RunFlags {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int jobs = 0;
  bool desk_scale = false;
  bool paper_scale = false;
};

RunConfig load_with_overrides(const RunFlags& flags) {
  RunConfig cfg = load_run_config(flags.config_path);
  if (flags.seed_set) cfg.base_seed = flags.seed;
  if (flags.jobs > 0) cfg.jobs = flags.jobs;
  if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
  if (flags.desk_scale) {
    cfg.scale.splits = 2;
    cfg.scale.repeats = 3;
  }
  if (flags.paper_scale) {
    cfg.scale.splits = 5;
    cfg.scale.repeats = 10;
  }
  return cfg;
}

void add_run_flags(CLI::App* cmd, RunFlags& flags) {
  cmd->add_option("--config", flags.config_path, "JSON run configuration")->required();
  cmd->add_option("--out", flags.out_dir, "output directory (overrides config)");
  cmd->add_option("--seed", flags.seed, "base seed (overrides config)")
      ->each([&flags](const std::string&) { flags.seed_set = true; });
  cmd->add_option("--jobs", flags.jobs, "worker threads (overrides config)");
  auto* desk = cmd->add_flag("--desk-scale", flags.desk_scale,
                             "2 splits x 3 repeats");
  cmd->add_flag("--paper-scale", flags.paper_scale, "5 splits x 10 repeats")
      ->excludes(desk);
}

int cmd_prepare(const std::string& schema_path, const std::string& csv_path,
                const std::string& out_path) {
  const DatasetSchema schema = load_schema(resolve_data_path(schema_path));
  LoadSummary summary;
  const LabeledSample data = load_dataset(resolve_data_path(csv_path), schema, &summary);
  save_prepared(data, out_path);
  std::cout << schema.name << ": " << summary.rows << " rows ("
            << summary.raw_rows << " raw), " << summary.features
            << " features, Pr(S=1)=" << format_g17(summary.sensitive_prevalence)
            << ", Pr(Y=+)=" << format_g17(summary.target_prevalence) << "\n";
  if (!summary.dropped_constant.empty()) {
    std::cout << "dropped constant columns:";
    for (const auto& c : summary.dropped_constant) std::cout << ' ' << c;
    std::cout << "\n";
  }
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_run(const RunFlags& flags) {
  const RunConfig cfg = load_with_overrides(flags);
  const LabeledSample data = load_config_dataset(cfg.dataset);
  const RunOptions opts = options_for(cfg);
  fs::create_directories(cfg.out_dir);
  for (Protocol protocol : cfg.protocols) {
    const ProtocolSpec spec = spec_for(cfg, protocol);
    const std::vector<ErrorRecord> records = run_protocol(data, spec, opts);
    std::size_t failed = 0;
    for (const auto& r : records)
      if (r.status == RecordStatus::failed) ++failed;
    const std::string stem =
        (fs::path(cfg.out_dir) / protocol_name(protocol)).string();
    write_records_csv(stem + ".records.csv", records);
    write_records_jsonl(stem + ".records.jsonl", records);
    const std::vector<AggregateRow> rows = aggregate(records, cfg.dataset.name);
    write_aggregate_csv(stem + ".aggregate.csv", rows);
    std::cout << protocol_name(protocol) << ": " << records.size() << " records, "
              << failed << " failed\n"
              << format_aggregate_table(rows) << "\n";
  }
  return 0;
}

int cmd_report(const std::string& records_path, const std::string& out_path,
               const std::string& dataset_name) {
  const std::vector<ErrorRecord> records = read_records_csv(records_path);
  const std::vector<AggregateRow> rows = aggregate(records, dataset_name);
  if (rows.empty()) throw_data("empty-records", "no usable records in " + records_path);
  std::cout << format_aggregate_table(rows);
  if (!out_path.empty()) {
    write_boxplot_csv(out_path, boxplot_rows(records));
    std::cout << "wrote " << out_path << "\n";
  }
  return 0;
}

int cmd_decouple(const RunFlags& flags, const std::string& out_path) {
  RunConfig cfg = load_with_overrides(flags);
  std::vector<Method> kept;
  for (Method m : cfg.methods)
    if (m == Method::CC || m == Method::PACC || m == Method::SLD) kept.push_back(m);
  if (kept.empty())
    throw_config("invalid-config",
                 "decoupling needs at least one of CC, PACC, SLD");
  cfg.methods = kept;
  const LabeledSample data = load_config_dataset(cfg.dataset);
  const RunOptions opts = options_for(cfg);
  fs::create_directories(cfg.out_dir);
  std::vector<DecouplingRow> all;
  for (Protocol protocol : cfg.protocols) {
    const ProtocolSpec spec = spec_for(cfg, protocol);
    std::vector<DecouplingRow> rows = run_decoupling(data, spec, opts);
    all.insert(all.end(), rows.begin(), rows.end());
  }
  const std::string path =
      out_path.empty() ? (fs::path(cfg.out_dir) / "decoupling.csv").string()
                       : out_path;
  write_decoupling_csv(path, all);
  std::cout << "wrote " << path << " (" << all.size() << " rows)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disparity estimation for group-blind deployments"};
  app.require_subcommand(1);

  std::string schema_path, csv_path, prepared_out;
  auto* prepare = app.add_subcommand("prepare", "encode a raw CSV for later runs");
  prepare->add_option("--schema", schema_path, "dataset schema JSON")->required();
  prepare->add_option("--csv", csv_path, "raw CSV file")->required();
  prepare->add_option("--out", prepared_out, "prepared output path")->required();

  RunFlags run_flags;
  auto* run = app.add_subcommand("run", "run the configured benchmark protocols");
  add_run_flags(run, run_flags);

  std::string records_path, boxplot_out, report_dataset = "dataset";
  auto* report = app.add_subcommand("report", "summarize an existing records file");
  report->add_option("--records", records_path, "records CSV from a run")->required();
  report->add_option("--out", boxplot_out, "boxplot CSV to write");
  report->add_option("--dataset", report_dataset, "dataset label for the table");

  RunFlags dec_flags;
  std::string dec_out;
  auto* decouple = app.add_subcommand(
      "decouple", "compare group-share error with per-row assignment quality");
  add_run_flags(decouple, dec_flags);
  decouple->add_option("--out-file", dec_out, "decoupling CSV to write");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (prepare->parsed()) return cmd_prepare(schema_path, csv_path, prepared_out);
    if (run->parsed()) return cmd_run(run_flags);
    if (report->parsed()) return cmd_report(records_path, boxplot_out, report_dataset);
    if (decouple->parsed()) return cmd_decouple(dec_flags, dec_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

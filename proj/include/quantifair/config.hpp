#pragma once

#include <optional>
#include <string>
#include <vector>

#include "quantifair/dataset.hpp"
#include "quantifair/protocols.hpp"

namespace quantifair {

enum class DatasetKind { csv, prepared, synthetic };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::prepared;
  std::string name;
  std::string path;         // csv and prepared kinds
  std::string schema_path;  // csv kind
  SyntheticSpec synthetic;  // synthetic kind
};

struct ScaleConfig {
  int splits = 2;
  int repeats = 3;
  int sample_size = 500;
};

struct RunConfig {
  DatasetConfig dataset;
  std::vector<Protocol> protocols;
  std::vector<Method> methods;
  TrainerConfig audited_trainer;       // model under audit
  TrainerConfig quantifier_trainer;    // models inside the quantifiers
  bool split_by_prediction = true;
  double pseudocount = 0.5;
  QuantifierConfig quantifier;
  ScaleConfig scale;
  std::vector<std::pair<Protocol, std::vector<double>>> grids;
  std::uint64_t base_seed = 20260818;
  int jobs = 1;
  std::string out_dir = "out";
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Resolves a data path against QF_DATA_DIR when the file is not found as given.
std::string resolve_data_path(const std::string& path);

LabeledSample load_config_dataset(const DatasetConfig& cfg, LoadSummary* summary = nullptr);

ProtocolSpec spec_for(const RunConfig& cfg, Protocol protocol);
RunOptions options_for(const RunConfig& cfg);

}  // namespace quantifair

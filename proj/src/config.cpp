#include "quantifair/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "quantifair/error.hpp"

namespace quantifair {

namespace {

using nlohmann::json;

const json* find(const json& j, const char* key) {
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

double number_at(const json& j, const char* key, double fallback) {
  const json* v = find(j, key);
  if (!v) return fallback;
  if (!v->is_number()) throw_config("invalid-config", std::string(key) + " must be a number");
  return v->get<double>();
}

int int_at(const json& j, const char* key, int fallback) {
  const json* v = find(j, key);
  if (!v) return fallback;
  if (!v->is_number_integer())
    throw_config("invalid-config", std::string(key) + " must be an integer");
  return v->get<int>();
}

bool bool_at(const json& j, const char* key, bool fallback) {
  const json* v = find(j, key);
  if (!v) return fallback;
  if (!v->is_boolean()) throw_config("invalid-config", std::string(key) + " must be a boolean");
  return v->get<bool>();
}

std::string string_at(const json& j, const char* key, const std::string& fallback) {
  const json* v = find(j, key);
  if (!v) return fallback;
  if (!v->is_string()) throw_config("invalid-config", std::string(key) + " must be a string");
  return v->get<std::string>();
}

TrainerConfig parse_trainer(const json& j, const TrainerConfig& base) {
  TrainerConfig cfg = base;
  const std::string kind = string_at(j, "kind", "");
  if (kind == "logistic")
    cfg.kind = TrainerKind::logistic;
  else if (kind == "svm-platt")
    cfg.kind = TrainerKind::svm_platt;
  else if (!kind.empty())
    throw_config("invalid-config", "unknown trainer kind " + kind);
  const std::string weighting = string_at(j, "weighting", "");
  if (weighting == "balanced")
    cfg.weighting = ClassWeighting::balanced;
  else if (weighting == "none")
    cfg.weighting = ClassWeighting::none;
  else if (!weighting.empty())
    throw_config("invalid-config", "unknown weighting " + weighting);
  cfg.l2 = number_at(j, "l2", cfg.l2);
  if (cfg.l2 < 0.0) throw_config("invalid-config", "l2 must be non-negative");
  cfg.tol = number_at(j, "tol", cfg.tol);
  cfg.max_iter = int_at(j, "max_iter", cfg.max_iter);
  cfg.cv_folds = int_at(j, "cv_folds", cfg.cv_folds);
  if (cfg.cv_folds < 2) throw_config("invalid-config", "cv_folds must be at least 2");
  return cfg;
}

SyntheticSpec parse_synthetic(const json& j) {
  SyntheticSpec spec;
  spec.n = int_at(j, "n", 4000);
  spec.dim = int_at(j, "dim", 2);
  if (spec.n < 4 || spec.dim < 1)
    throw_config("invalid-config", "synthetic dataset too small");
  const json* cells = find(j, "cell_probs");
  if (cells) {
    if (!cells->is_array() || cells->size() != 2)
      throw_config("invalid-config", "cell_probs must be a 2x2 array");
    for (int s = 0; s < 2; ++s) {
      const json& row = (*cells)[static_cast<std::size_t>(s)];
      if (!row.is_array() || row.size() != 2)
        throw_config("invalid-config", "cell_probs must be a 2x2 array");
      for (int y = 0; y < 2; ++y) spec.cell_prob[s][y] = row[static_cast<std::size_t>(y)].get<double>();
    }
  }
  const json* shifts = find(j, "mean_shifts");
  if (shifts) {
    if (!shifts->is_array() || shifts->size() != 2)
      throw_config("invalid-config", "mean_shifts must be a 2x2 array");
    for (int s = 0; s < 2; ++s) {
      const json& row = (*shifts)[static_cast<std::size_t>(s)];
      if (!row.is_array() || row.size() != 2)
        throw_config("invalid-config", "mean_shifts must be a 2x2 array");
      for (int y = 0; y < 2; ++y)
        spec.mean_shift[s][y] = row[static_cast<std::size_t>(y)].get<double>();
    }
  }
  spec.seed = static_cast<std::uint64_t>(number_at(j, "seed", 1.0));
  return spec;
}

Protocol protocol_or_throw(const std::string& name) {
  const std::optional<Protocol> p = protocol_from_name(name);
  if (!p) throw_config("invalid-config", "unknown protocol " + name);
  return *p;
}

Method method_or_throw(const std::string& name) {
  const std::optional<Method> m = method_from_name(name);
  if (!m) throw_config("invalid-config", "unknown method " + name);
  return *m;
}

}  // namespace

std::string resolve_data_path(const std::string& path) {
  namespace fs = std::filesystem;
  if (fs::exists(path)) return path;
  if (!fs::path(path).is_absolute()) {
    if (const char* base = std::getenv("QF_DATA_DIR")) {
      const fs::path joined = fs::path(base) / path;
      if (fs::exists(joined)) return joined.string();
    }
  }
  return path;
}

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw_config("invalid-json", e.what());
  }
  if (!j.is_object()) throw_config("invalid-config", "top level must be an object");

  RunConfig cfg;
  const json* ds = find(j, "dataset");
  if (!ds || !ds->is_object())
    throw_config("invalid-config", "dataset section is required");
  const std::string kind = string_at(*ds, "kind", "");
  if (kind == "csv") {
    cfg.dataset.kind = DatasetKind::csv;
    cfg.dataset.path = string_at(*ds, "path", "");
    cfg.dataset.schema_path = string_at(*ds, "schema", "");
    if (cfg.dataset.path.empty() || cfg.dataset.schema_path.empty())
      throw_config("invalid-config", "csv dataset needs path and schema");
  } else if (kind == "prepared") {
    cfg.dataset.kind = DatasetKind::prepared;
    cfg.dataset.path = string_at(*ds, "path", "");
    if (cfg.dataset.path.empty())
      throw_config("invalid-config", "prepared dataset needs path");
  } else if (kind == "synthetic") {
    cfg.dataset.kind = DatasetKind::synthetic;
    cfg.dataset.synthetic = parse_synthetic(*ds);
  } else {
    throw_config("invalid-config", "dataset kind must be csv, prepared, or synthetic");
  }
  cfg.dataset.name = string_at(*ds, "name", kind);

  const json* protos = find(j, "protocols");
  if (!protos || !protos->is_array() || protos->empty())
    throw_config("invalid-config", "protocols must be a non-empty list");
  for (const auto& p : *protos) {
    if (!p.is_string()) throw_config("invalid-config", "protocol names must be strings");
    cfg.protocols.push_back(protocol_or_throw(p.get<std::string>()));
  }

  const json* methods = find(j, "methods");
  if (methods) {
    if (!methods->is_array() || methods->empty())
      throw_config("invalid-config", "methods must be a non-empty list");
    for (const auto& m : *methods) {
      if (!m.is_string()) throw_config("invalid-config", "method names must be strings");
      cfg.methods.push_back(method_or_throw(m.get<std::string>()));
    }
  } else {
    cfg.methods = {Method::CC,  Method::PCC, Method::ACC, Method::PACC,
                   Method::SLD, Method::HDy, Method::MLPE};
  }

  cfg.audited_trainer.weighting = ClassWeighting::balanced;
  if (const json* t = find(j, "audited_trainer")) cfg.audited_trainer = parse_trainer(*t, cfg.audited_trainer);
  if (const json* t = find(j, "quantifier_trainer"))
    cfg.quantifier_trainer = parse_trainer(*t, cfg.quantifier_trainer);

  if (const json* p = find(j, "pipeline")) {
    cfg.split_by_prediction = bool_at(*p, "split_by_prediction", cfg.split_by_prediction);
    cfg.pseudocount = number_at(*p, "pseudocount", cfg.pseudocount);
    if (cfg.pseudocount < 0.0)
      throw_config("invalid-config", "pseudocount must be non-negative");
  }

  if (const json* q = find(j, "quantifier")) {
    cfg.quantifier.sld_epsilon = number_at(*q, "sld_epsilon", cfg.quantifier.sld_epsilon);
    cfg.quantifier.sld_max_iter = int_at(*q, "sld_max_iter", cfg.quantifier.sld_max_iter);
    cfg.quantifier.hdy_alpha_step =
        number_at(*q, "hdy_alpha_step", cfg.quantifier.hdy_alpha_step);
    cfg.quantifier.hdy_train_share =
        number_at(*q, "hdy_train_share", cfg.quantifier.hdy_train_share);
  }

  if (const json* s = find(j, "scale")) {
    cfg.scale.splits = int_at(*s, "splits", cfg.scale.splits);
    cfg.scale.repeats = int_at(*s, "repeats", cfg.scale.repeats);
    cfg.scale.sample_size = int_at(*s, "sample_size", cfg.scale.sample_size);
  }

  if (const json* g = find(j, "grids")) {
    if (!g->is_object()) throw_config("invalid-config", "grids must map protocol to list");
    for (auto it = g->begin(); it != g->end(); ++it) {
      const Protocol p = protocol_or_throw(it.key());
      if (!it.value().is_array())
        throw_config("invalid-config", "grid for " + it.key() + " must be a list");
      std::vector<double> grid;
      for (const auto& v : it.value()) grid.push_back(v.get<double>());
      cfg.grids.emplace_back(p, std::move(grid));
    }
  }

  cfg.base_seed = static_cast<std::uint64_t>(number_at(j, "seed", static_cast<double>(cfg.base_seed)));
  cfg.jobs = int_at(j, "jobs", cfg.jobs);
  if (cfg.jobs < 1) throw_config("invalid-config", "jobs must be at least 1");
  cfg.out_dir = string_at(j, "out", cfg.out_dir);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_config("missing-config", path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

LabeledSample load_config_dataset(const DatasetConfig& cfg, LoadSummary* summary) {
  switch (cfg.kind) {
    case DatasetKind::csv: {
      const DatasetSchema schema = load_schema(resolve_data_path(cfg.schema_path));
      return load_dataset(resolve_data_path(cfg.path), schema, summary);
    }
    case DatasetKind::prepared:
      return load_prepared(resolve_data_path(cfg.path));
    case DatasetKind::synthetic:
      return generate_synthetic(cfg.synthetic);
  }
  throw_config("invalid-config", "unknown dataset kind");
}

ProtocolSpec spec_for(const RunConfig& cfg, Protocol protocol) {
  ProtocolSpec spec;
  spec.protocol = protocol;
  spec.n_splits = cfg.scale.splits;
  spec.n_repeats = cfg.scale.repeats;
  spec.sample_size = cfg.scale.sample_size;
  spec.methods = cfg.methods;
  spec.base_seed = cfg.base_seed;
  for (const auto& [p, grid] : cfg.grids)
    if (p == protocol) spec.parameter_grid = grid;
  return spec;
}

RunOptions options_for(const RunConfig& cfg) {
  RunOptions opts;
  opts.audited_trainer = cfg.audited_trainer;
  opts.audited_trainer.weighting = ClassWeighting::balanced;
  opts.pipeline.split_by_prediction = cfg.split_by_prediction;
  opts.pipeline.pseudocount = cfg.pseudocount;
  opts.pipeline.trainer = cfg.quantifier_trainer;
  opts.pipeline.quantifier = cfg.quantifier;
  opts.jobs = cfg.jobs;
  return opts;
}

}  // namespace quantifair

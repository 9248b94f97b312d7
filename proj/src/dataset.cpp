#include "quantifair/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "quantifair/error.hpp"
#include "quantifair/rng.hpp"

namespace quantifair {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n')) --e;
  return s.substr(b, e - b);
}

bool parse_double(const std::string& s, double* out) {
  if (s.empty()) return false;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return false;
  *out = v;
  return true;
}

std::vector<std::string> string_or_list(const nlohmann::json& j) {
  if (j.is_string()) return {j.get<std::string>()};
  std::vector<std::string> out;
  for (const auto& v : j) out.push_back(v.get<std::string>());
  return out;
}

}  // namespace

std::vector<std::vector<std::string>> read_csv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cell;
  bool in_quotes = false;
  bool cell_started = false;
  auto end_cell = [&]() {
    row.push_back(trim(cell));
    cell.clear();
    cell_started = false;
  };
  auto end_row = [&]() {
    end_cell();
    const bool blank = row.size() == 1 && row[0].empty();
    if (!blank) rows.push_back(std::move(row));
    row = {};
  };
  char c;
  while (in.get(c)) {
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          cell.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        cell.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        cell_started = true;
        break;
      case ',':
        end_cell();
        break;
      case '\n':
        end_row();
        break;
      case '\r':
        break;
      default:
        cell.push_back(c);
        cell_started = true;
        break;
    }
  }
  if (cell_started || !cell.empty() || !row.empty()) end_row();
  return rows;
}

DatasetSchema parse_schema_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const std::exception& e) {
    throw_config("schema-parse", e.what());
  }
  DatasetSchema s;
  try {
    s.name = j.at("name").get<std::string>();
    s.has_header = j.value("header", true);
    if (j.contains("columns"))
      s.columns = j["columns"].get<std::vector<std::string>>();
    s.target_column = j.at("target").at("column").get<std::string>();
    s.positive_values = string_or_list(j.at("target").at("positive"));
    s.sensitive_column = j.at("sensitive").at("column").get<std::string>();
    s.sensitive_one_values = string_or_list(j.at("sensitive").at("one"));
    if (j.contains("numeric"))
      s.numeric_columns = j["numeric"].get<std::vector<std::string>>();
    if (j.contains("categorical"))
      s.categorical_columns = j["categorical"].get<std::vector<std::string>>();
    if (j.contains("drop"))
      s.drop_columns = j["drop"].get<std::vector<std::string>>();
    if (j.contains("missing"))
      s.missing_tokens = j["missing"].get<std::vector<std::string>>();
    if (j.contains("filters")) {
      for (const auto& f : j["filters"]) {
        RowFilter rf;
        rf.column = f.at("column").get<std::string>();
        rf.op = f.at("op").get<std::string>();
        if (f.contains("value"))
          rf.values.push_back(f["value"].is_string() ? f["value"].get<std::string>()
                                                     : f["value"].dump());
        if (f.contains("values")) {
          for (const auto& v : f["values"])
            rf.values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
        }
        if (rf.values.empty())
          throw_config("schema-invalid", "filter on " + rf.column + " has no values");
        if (rf.op != "eq" && rf.op != "ne" && rf.op != "in" && rf.op != "not-in" &&
            rf.op != "ge" && rf.op != "le")
          throw_config("schema-invalid", "unknown filter op " + rf.op);
        s.filters.push_back(std::move(rf));
      }
    }
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw_config("schema-invalid", e.what());
  }
  if (!s.has_header && s.columns.empty())
    throw_config("schema-invalid", "headerless schema must list columns");
  return s;
}

DatasetSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_config("schema-missing", "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_schema_json(ss.str());
}

namespace {

struct ColumnIndex {
  std::map<std::string, std::size_t> by_name;
  std::size_t require(const std::string& name) const {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw_data("missing-column", name);
    return it->second;
  }
};

bool filter_keeps(const RowFilter& f, const std::string& cell) {
  if (f.op == "eq") return cell == f.values[0];
  if (f.op == "ne") return cell != f.values[0];
  if (f.op == "in")
    return std::find(f.values.begin(), f.values.end(), cell) != f.values.end();
  if (f.op == "not-in")
    return std::find(f.values.begin(), f.values.end(), cell) == f.values.end();
  double v = 0.0, bound = 0.0;
  if (!parse_double(cell, &v)) return false;
  if (!parse_double(f.values[0], &bound))
    throw_config("schema-invalid", "non-numeric bound in filter on " + f.column);
  return f.op == "ge" ? v >= bound : v <= bound;
}

}  // namespace

LabeledSample load_dataset(const std::string& csv_path, const DatasetSchema& schema,
                           LoadSummary* summary) {
  std::ifstream in(csv_path);
  if (!in) throw_data("dataset-missing", "cannot open " + csv_path);
  auto rows = read_csv(in);
  if (rows.empty()) throw_data("empty-after-filtering", csv_path + " has no rows");

  std::vector<std::string> header;
  std::size_t first_data = 0;
  if (schema.has_header) {
    header = rows[0];
    first_data = 1;
  } else {
    header = schema.columns;
  }
  ColumnIndex cols;
  for (std::size_t i = 0; i < header.size(); ++i) cols.by_name.emplace(header[i], i);

  const std::size_t target_ix = cols.require(schema.target_column);
  const std::size_t sens_ix = cols.require(schema.sensitive_column);
  std::vector<std::size_t> numeric_ix, cat_ix, filter_ix;
  for (const auto& c : schema.numeric_columns) numeric_ix.push_back(cols.require(c));
  for (const auto& c : schema.categorical_columns) cat_ix.push_back(cols.require(c));
  for (const auto& f : schema.filters) filter_ix.push_back(cols.require(f.column));

  auto is_missing = [&](const std::string& cell) {
    return std::find(schema.missing_tokens.begin(), schema.missing_tokens.end(),
                     cell) != schema.missing_tokens.end();
  };

  // Pass 1: keep rows passing filters with no missing value in a used column.
  std::vector<const std::vector<std::string>*> kept;
  std::size_t raw = 0;
  for (std::size_t r = first_data; r < rows.size(); ++r) {
    const auto& row = rows[r];
    ++raw;
    if (row.size() != header.size())
      throw_data("unparseable-cell", csv_path + " row " + std::to_string(r + 1) +
                                         " has " + std::to_string(row.size()) +
                                         " cells, expected " +
                                         std::to_string(header.size()));
    bool keep = true;
    for (std::size_t fi = 0; fi < schema.filters.size() && keep; ++fi)
      keep = filter_keeps(schema.filters[fi], row[filter_ix[fi]]);
    if (!keep) continue;
    if (is_missing(row[target_ix]) || is_missing(row[sens_ix])) continue;
    for (std::size_t ix : numeric_ix)
      if (is_missing(row[ix])) { keep = false; break; }
    if (keep)
      for (std::size_t ix : cat_ix)
        if (is_missing(row[ix])) { keep = false; break; }
    if (keep) kept.push_back(&row);
  }
  if (kept.empty()) throw_data("empty-after-filtering", csv_path);

  // Category vocabularies, sorted for a stable column order.
  std::vector<std::vector<std::string>> vocab(cat_ix.size());
  for (std::size_t c = 0; c < cat_ix.size(); ++c) {
    std::set<std::string> seen;
    for (const auto* row : kept) seen.insert((*row)[cat_ix[c]]);
    vocab[c].assign(seen.begin(), seen.end());
  }

  std::vector<std::string> feature_names = schema.numeric_columns;
  for (std::size_t c = 0; c < cat_ix.size(); ++c)
    for (const auto& v : vocab[c])
      feature_names.push_back(schema.categorical_columns[c] + "=" + v);

  const Index n = static_cast<Index>(kept.size());
  Index d = static_cast<Index>(feature_names.size());
  Matrix X = Matrix::Zero(n, d);
  IntVector sens(n), targ(n);
  for (Index i = 0; i < n; ++i) {
    const auto& row = *kept[static_cast<std::size_t>(i)];
    Index j = 0;
    for (std::size_t c = 0; c < numeric_ix.size(); ++c, ++j) {
      double v = 0.0;
      if (!parse_double(row[numeric_ix[c]], &v))
        throw_data("unparseable-cell", schema.numeric_columns[c] + " value '" +
                                           row[numeric_ix[c]] + "'");
      X(i, j) = v;
    }
    for (std::size_t c = 0; c < cat_ix.size(); ++c) {
      const auto& word = row[cat_ix[c]];
      const auto it = std::lower_bound(vocab[c].begin(), vocab[c].end(), word);
      X(i, j + (it - vocab[c].begin())) = 1.0;
      j += static_cast<Index>(vocab[c].size());
    }
    const auto& tv = row[target_ix];
    targ(i) = std::find(schema.positive_values.begin(), schema.positive_values.end(),
                        tv) != schema.positive_values.end()
                  ? 1
                  : 0;
    const auto& sv = row[sens_ix];
    sens(i) = std::find(schema.sensitive_one_values.begin(),
                        schema.sensitive_one_values.end(),
                        sv) != schema.sensitive_one_values.end()
                  ? 1
                  : 0;
  }

  // Standardize, dropping constant columns.
  std::vector<Index> keep_cols;
  std::vector<std::string> dropped;
  Vector mean = X.colwise().mean();
  for (Index j = 0; j < d; ++j) {
    const double var = (X.col(j).array() - mean(j)).square().mean();
    if (var < 1e-12) {
      dropped.push_back(feature_names[static_cast<std::size_t>(j)]);
    } else {
      X.col(j) = (X.col(j).array() - mean(j)) / std::sqrt(var);
      keep_cols.push_back(j);
    }
  }
  if (!dropped.empty()) {
    Matrix Xk(n, static_cast<Index>(keep_cols.size()));
    std::vector<std::string> names;
    for (std::size_t j = 0; j < keep_cols.size(); ++j) {
      Xk.col(static_cast<Index>(j)) = X.col(keep_cols[j]);
      names.push_back(feature_names[static_cast<std::size_t>(keep_cols[j])]);
    }
    X = std::move(Xk);
    feature_names = std::move(names);
  }

  LabeledSample out;
  out.features = std::move(X);
  out.sensitive = std::move(sens);
  out.target = std::move(targ);
  if (summary) {
    summary->raw_rows = raw;
    summary->rows = static_cast<std::size_t>(n);
    summary->features = static_cast<std::size_t>(out.features.cols());
    summary->sensitive_prevalence = label_prevalence(*out.sensitive);
    summary->target_prevalence = label_prevalence(*out.target);
    summary->feature_names = feature_names;
    summary->dropped_constant = dropped;
  }
  return out;
}

void save_prepared(const LabeledSample& s, const std::string& path) {
  if (!s.sensitive || !s.target)
    throw_runtime("missing-labels", "prepared datasets need sensitive and target labels");
  if (auto issue = validate_sample(s))
    throw_data(issue->code, issue->detail);
  std::ofstream out(path);
  if (!out) throw_runtime("io", "cannot write " + path);
  out << "s,y";
  for (Index j = 0; j < s.cols(); ++j) out << ",f" << j;
  out << "\n";
  char buf[40];
  for (Index i = 0; i < s.rows(); ++i) {
    out << (*s.sensitive)(i) << ',' << (*s.target)(i);
    for (Index j = 0; j < s.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", s.features(i, j));
      out << ',' << buf;
    }
    out << "\n";
  }
  if (!out) throw_runtime("io", "short write to " + path);
}

LabeledSample load_prepared(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_data("dataset-missing", "cannot open " + path);
  auto rows = read_csv(in);
  if (rows.size() < 2) throw_data("empty-after-filtering", path);
  const auto& header = rows[0];
  if (header.size() < 2 || header[0] != "s" || header[1] != "y")
    throw_data("unparseable-cell", path + ": expected s,y,f... header");
  const Index d = static_cast<Index>(header.size()) - 2;
  const Index n = static_cast<Index>(rows.size()) - 1;
  LabeledSample s;
  s.features.resize(n, d);
  IntVector sens(n), targ(n);
  for (Index i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i) + 1];
    if (static_cast<Index>(row.size()) != d + 2)
      throw_data("unparseable-cell", path + " row " + std::to_string(i + 2));
    double v = 0.0;
    if (!parse_double(row[0], &v)) throw_data("unparseable-cell", path + ": s column");
    sens(i) = static_cast<int>(v);
    if (!parse_double(row[1], &v)) throw_data("unparseable-cell", path + ": y column");
    targ(i) = static_cast<int>(v);
    for (Index j = 0; j < d; ++j) {
      if (!parse_double(row[static_cast<std::size_t>(j) + 2], &v))
        throw_data("unparseable-cell", path + " row " + std::to_string(i + 2));
      s.features(i, j) = v;
    }
  }
  s.sensitive = std::move(sens);
  s.target = std::move(targ);
  if (auto issue = validate_sample(s)) throw_data(issue->code, issue->detail);
  return s;
}

LabeledSample generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n == 0 || spec.dim == 0)
    throw_config("invalid-spec", "synthetic n and dim must be positive");
  double total = 0.0;
  for (int s = 0; s < 2; ++s)
    for (int y = 0; y < 2; ++y) {
      if (spec.cell_prob[s][y] < 0.0)
        throw_config("invalid-spec", "negative cell probability");
      total += spec.cell_prob[s][y];
    }
  if (std::abs(total - 1.0) > 1e-9)
    throw_config("invalid-spec", "cell probabilities must sum to 1");

  Rng rng(spec.seed);
  const Index n = static_cast<Index>(spec.n);
  const Index d = static_cast<Index>(spec.dim);
  LabeledSample out;
  out.features.resize(n, d);
  IntVector sens(n), targ(n);
  for (Index i = 0; i < n; ++i) {
    const double u = rng.uniform();
    double acc = 0.0;
    int s = 1, y = 1;
    bool picked = false;
    for (int cs = 0; cs < 2 && !picked; ++cs)
      for (int cy = 0; cy < 2 && !picked; ++cy) {
        acc += spec.cell_prob[cs][cy];
        if (u < acc) { s = cs; y = cy; picked = true; }
      }
    sens(i) = s;
    targ(i) = y;
    const double shift = spec.mean_shift[s][y];
    for (Index j = 0; j < d; ++j) out.features(i, j) = shift + rng.normal();
  }
  out.sensitive = std::move(sens);
  out.target = std::move(targ);
  return out;
}

}  // namespace quantifair

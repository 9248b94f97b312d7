#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "quantifair/types.hpp"

namespace quantifair {

// One row filter. Rows failing the predicate are dropped before encoding.
// op is one of: eq, ne, in, not-in, ge, le. ge/le parse the cell as a number
// and drop rows whose cell is missing or unparseable.
struct RowFilter {
  std::string column;
  std::string op;
  std::vector<std::string> values;  // single entry for eq/ne/ge/le
};

// Declarative mapping from a raw CSV to a LabeledSample. Loaded from JSON;
// the shipped schemas/ directory has one file per supported dataset.
struct DatasetSchema {
  std::string name;
  bool has_header = true;
  std::vector<std::string> columns;  // required when has_header is false
  std::string target_column;
  std::vector<std::string> positive_values;  // raw values mapped to target 1
  std::string sensitive_column;
  std::vector<std::string> sensitive_one_values;  // raw values mapped to s=1
  std::vector<std::string> numeric_columns;
  std::vector<std::string> categorical_columns;
  std::vector<std::string> drop_columns;
  std::vector<RowFilter> filters;
  std::vector<std::string> missing_tokens = {"?", ""};
};

DatasetSchema parse_schema_json(const std::string& json_text);
DatasetSchema load_schema(const std::string& path);

struct LoadSummary {
  std::size_t raw_rows = 0;
  std::size_t rows = 0;        // after filters and missing-value removal
  std::size_t features = 0;    // after dummy encoding
  double sensitive_prevalence = 0.0;
  double target_prevalence = 0.0;
  std::vector<std::string> feature_names;
  std::vector<std::string> dropped_constant;  // zero-variance columns removed
};

// Reads a raw CSV per schema: filters rows, removes rows with missing values
// in any used column, dummy-encodes categoricals (one indicator per observed
// category), standardizes every feature column to mean 0 / unit variance over
// the loaded set, extracts labels.
LabeledSample load_dataset(const std::string& csv_path, const DatasetSchema& schema,
                           LoadSummary* summary = nullptr);

// Preprocessed on-disk form (output of the prepare command). Plain CSV with
// an s,y,f0..fk header; floats carry 17 significant digits so values
// round-trip exactly.
void save_prepared(const LabeledSample& s, const std::string& path);
LabeledSample load_prepared(const std::string& path);

// Synthetic task: instances fall in one of four (s, y) cells; features are
// unit-variance Gaussians whose mean is the cell's shift on every coordinate.
struct SyntheticSpec {
  std::size_t n = 0;
  std::size_t dim = 1;
  // Indexed [s][y].
  double cell_prob[2][2] = {{0.25, 0.25}, {0.25, 0.25}};
  double mean_shift[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
  std::uint64_t seed = 0;
};

LabeledSample generate_synthetic(const SyntheticSpec& spec);

// Minimal RFC-4180-style reader used by load_dataset; exposed for tests.
// Cells are trimmed of surrounding whitespace.
std::vector<std::vector<std::string>> read_csv(std::istream& in);

}  // namespace quantifair

#pragma once

#include <string>
#include <vector>

#include "quantifair/protocols.hpp"
#include "quantifair/types.hpp"

namespace quantifair {

std::string format_g17(double v);

void write_records_csv(const std::string& path, const std::vector<ErrorRecord>& records);
std::vector<ErrorRecord> read_records_csv(const std::string& path);
void write_records_jsonl(const std::string& path, const std::vector<ErrorRecord>& records);

void write_aggregate_csv(const std::string& path, const std::vector<AggregateRow>& rows);
std::string format_aggregate_table(const std::vector<AggregateRow>& rows);

struct BoxplotRow {
  Protocol protocol;
  Method method;
  double parameter = 0.0;
  std::size_t count = 0;
  double lo_whisker = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double hi_whisker = 0.0;
  std::vector<double> outliers;
};

std::vector<BoxplotRow> boxplot_rows(const std::vector<ErrorRecord>& records);
void write_boxplot_csv(const std::string& path, const std::vector<BoxplotRow>& rows);

void write_decoupling_csv(const std::string& path, const std::vector<DecouplingRow>& rows);

}  // namespace quantifair

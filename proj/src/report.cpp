#include "quantifair/report.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "quantifair/dataset.hpp"
#include "quantifair/error.hpp"
#include "quantifair/stats.hpp"

namespace quantifair {

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw_runtime("write-failed", path);
  return out;
}

}  // namespace

void write_records_csv(const std::string& path,
                       const std::vector<ErrorRecord>& records) {
  std::ofstream out = open_out(path);
  out << "protocol,parameter,split_id,permutation_id,repeat_id,method,"
         "signed_error,true_dd,estimated_dd,seed,status,note\n";
  for (const auto& r : records) {
    const bool failed = r.status == RecordStatus::failed;
    out << protocol_name(r.protocol) << ',' << format_g17(r.parameter) << ','
        << r.split_id << ',' << r.permutation_id << ',' << r.repeat_id << ','
        << method_name(r.method) << ','
        << (failed ? "" : format_g17(r.signed_error)) << ','
        << (failed ? "" : format_g17(r.true_dd)) << ','
        << (failed ? "" : format_g17(r.estimated_dd)) << ',' << r.seed << ','
        << status_name(r.status) << ',' << csv_escape(r.note) << '\n';
  }
  if (!out) throw_runtime("write-failed", path);
}

std::vector<ErrorRecord> read_records_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_data("missing-file", path);
  const std::vector<std::vector<std::string>> rows = read_csv(in);
  if (rows.empty()) throw_data("empty-records", path);
  const std::vector<std::string> header = rows.front();
  if (header.size() != 12 || header[0] != "protocol")
    throw_data("bad-header", path);
  std::vector<ErrorRecord> records;
  records.reserve(rows.size() - 1);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != 12)
      throw_data("bad-row", path + ":" + std::to_string(i + 1));
    ErrorRecord r;
    try {
      const auto protocol = protocol_from_name(row[0]);
      const auto method = method_from_name(row[5]);
      const auto status = status_from_name(row[10]);
      if (!protocol || !method || !status)
        throw_data("bad-row", path + ":" + std::to_string(i + 1));
      r.protocol = *protocol;
      r.parameter = std::stod(row[1]);
      r.split_id = std::stoi(row[2]);
      r.permutation_id = std::stoi(row[3]);
      r.repeat_id = std::stoi(row[4]);
      r.method = *method;
      r.status = *status;
      const bool failed = r.status == RecordStatus::failed;
      r.signed_error = failed && row[6].empty() ? 0.0 : std::stod(row[6]);
      r.true_dd = failed && row[7].empty() ? 0.0 : std::stod(row[7]);
      r.estimated_dd = failed && row[8].empty() ? 0.0 : std::stod(row[8]);
      r.seed = std::stoull(row[9]);
      r.note = row[11];
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      throw_data("bad-row", path + ":" + std::to_string(i + 1));
    }
    records.push_back(std::move(r));
  }
  return records;
}

void write_records_jsonl(const std::string& path,
                         const std::vector<ErrorRecord>& records) {
  std::ofstream out = open_out(path);
  for (const auto& r : records) {
    nlohmann::json j;
    j["protocol"] = protocol_name(r.protocol);
    j["parameter"] = r.parameter;
    j["split_id"] = r.split_id;
    j["permutation_id"] = r.permutation_id;
    j["repeat_id"] = r.repeat_id;
    j["method"] = method_name(r.method);
    if (r.status == RecordStatus::failed) {
      j["signed_error"] = nullptr;
      j["true_dd"] = nullptr;
      j["estimated_dd"] = nullptr;
    } else {
      j["signed_error"] = r.signed_error;
      j["true_dd"] = r.true_dd;
      j["estimated_dd"] = r.estimated_dd;
    }
    j["seed"] = r.seed;
    j["status"] = status_name(r.status);
    j["note"] = r.note;
    out << j.dump() << '\n';
  }
  if (!out) throw_runtime("write-failed", path);
}

void write_aggregate_csv(const std::string& path,
                         const std::vector<AggregateRow>& rows) {
  std::ofstream out = open_out(path);
  out << "dataset,method,count,mae,mae_std,mse,mse_std,p_ae_lt_0.1,p_ae_lt_0.2,"
         "significance\n";
  for (const auto& r : rows) {
    out << csv_escape(r.dataset) << ',' << method_name(r.method) << ',' << r.count
        << ',' << format_g17(r.mae) << ',' << format_g17(r.mae_std) << ','
        << format_g17(r.mse) << ',' << format_g17(r.mse_std) << ','
        << format_g17(r.p_ae_lt_01) << ',' << format_g17(r.p_ae_lt_02) << ','
        << significance_name(r.significance) << '\n';
  }
  if (!out) throw_runtime("write-failed", path);
}

std::string format_aggregate_table(const std::vector<AggregateRow>& rows) {
  auto fmt3 = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return std::string(buf);
  };
  std::ostringstream os;
  os << "method  count  MAE              MSE              P(AE<0.1)  P(AE<0.2)\n";
  for (const auto& r : rows) {
    std::string mark;
    switch (r.significance) {
      case Significance::best: mark = " *"; break;
      case Significance::plain: mark = ""; break;
      case Significance::dagger: mark = " †"; break;
      case Significance::ddagger: mark = " ‡"; break;
    }
    std::string method = method_name(r.method);
    method.resize(6, ' ');
    std::string count = std::to_string(r.count);
    if (count.size() < 5) count.resize(5, ' ');
    std::string mae = fmt3(r.mae) + "+-" + fmt3(r.mae_std) + mark;
    // The marks are multibyte; pad generously rather than exactly.
    while (mae.size() < 17) mae += ' ';
    std::string mse = fmt3(r.mse) + "+-" + fmt3(r.mse_std);
    while (mse.size() < 17) mse += ' ';
    std::string p1 = fmt3(r.p_ae_lt_01);
    p1.resize(9, ' ');
    os << method << "  " << count << "  " << mae << "  " << mse << "  " << p1
       << "  " << fmt3(r.p_ae_lt_02) << '\n';
  }
  os << "*: lowest MAE;  no mark: p <= 0.001 against it;  †: 0.001 < p < "
        "0.05;  ‡: p >= 0.05\n";
  return os.str();
}

std::vector<BoxplotRow> boxplot_rows(const std::vector<ErrorRecord>& records) {
  std::map<std::tuple<int, int, double>, std::vector<double>> groups;
  for (const auto& r : records) {
    if (r.status == RecordStatus::failed) continue;
    groups[{static_cast<int>(r.protocol), static_cast<int>(r.method), r.parameter}]
        .push_back(r.signed_error);
  }
  std::vector<BoxplotRow> rows;
  rows.reserve(groups.size());
  for (auto& [key, values] : groups) {
    BoxplotRow row;
    row.protocol = static_cast<Protocol>(std::get<0>(key));
    row.method = static_cast<Method>(std::get<1>(key));
    row.parameter = std::get<2>(key);
    row.count = values.size();
    const BoxplotStats bs = boxplot_stats(values);
    row.lo_whisker = bs.whisker_lo;
    row.q1 = bs.q1;
    row.median = bs.median;
    row.q3 = bs.q3;
    row.hi_whisker = bs.whisker_hi;
    row.outliers = bs.outliers;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_boxplot_csv(const std::string& path, const std::vector<BoxplotRow>& rows) {
  std::ofstream out = open_out(path);
  out << "protocol,method,parameter,count,lo_whisker,q1,median,q3,hi_whisker,"
         "outliers\n";
  for (const auto& r : rows) {
    std::string outliers;
    for (double v : r.outliers) {
      if (!outliers.empty()) outliers += ';';
      outliers += format_g17(v);
    }
    out << protocol_name(r.protocol) << ',' << method_name(r.method) << ','
        << format_g17(r.parameter) << ',' << r.count << ','
        << format_g17(r.lo_whisker) << ',' << format_g17(r.q1) << ','
        << format_g17(r.median) << ',' << format_g17(r.q3) << ','
        << format_g17(r.hi_whisker) << ',' << csv_escape(outliers) << '\n';
  }
  if (!out) throw_runtime("write-failed", path);
}

void write_decoupling_csv(const std::string& path,
                          const std::vector<DecouplingRow>& rows) {
  std::ofstream out = open_out(path);
  out << "protocol,method,parameter,count,prevalence_mae,accuracy,f1\n";
  for (const auto& r : rows) {
    out << protocol_name(r.protocol) << ',' << method_name(r.method) << ','
        << format_g17(r.parameter) << ',' << r.count << ',' << format_g17(r.mae)
        << ',' << format_g17(r.accuracy) << ',' << format_g17(r.f1) << '\n';
  }
  if (!out) throw_runtime("write-failed", path);
}

}  // namespace quantifair

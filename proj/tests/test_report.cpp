#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "doctest.h"
#include "quantifair/error.hpp"
#include "quantifair/report.hpp"
#include "quantifair/stats.hpp"

using namespace quantifair;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path(temp_path(name)) {}
  ~TempFile() { std::remove(path.c_str()); }
};

ErrorRecord make_record(Method m, int rep, double err) {
  ErrorRecord r;
  r.protocol = Protocol::sample_prev_d3_neg;
  r.parameter = 0.3;
  r.split_id = 1;
  r.permutation_id = 4;
  r.repeat_id = rep;
  r.method = m;
  r.signed_error = err;
  r.true_dd = 0.25;
  r.estimated_dd = 0.25 + err;
  r.seed = 0xDEADBEEFULL;
  return r;
}

}  // namespace

TEST_CASE("seventeen digits round-trip doubles exactly") {
  for (const double v : {1.0 / 3.0, 0.1, 1e-17, -2.5e300, 0.0, 123456789.123456789}) {
    CHECK(std::stod(format_g17(v)) == v);
    CHECK(std::stod(format_g17(-v)) == -v);
  }
}

TEST_CASE("record csv round-trips every field") {
  std::vector<ErrorRecord> records;
  records.push_back(make_record(Method::CC, 0, 0.125));
  records.back().status = RecordStatus::flagged;
  records.back().note = "empty-pos-branch;with-replacement";
  records.push_back(make_record(Method::SLD, 1, -1.0 / 3.0));
  ErrorRecord failed = make_record(Method::HDy, 2, 0.0);
  failed.status = RecordStatus::failed;
  failed.note = "empty-pool: no rows, \"quoted\"\nsecond line";
  failed.signed_error = 42.0;  // must not survive the round trip
  failed.true_dd = 42.0;
  failed.estimated_dd = 42.0;
  records.push_back(failed);

  TempFile f("qf_records.csv");
  write_records_csv(f.path, records);
  const std::vector<ErrorRecord> back = read_records_csv(f.path);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].protocol == records[i].protocol);
    CHECK(back[i].parameter == records[i].parameter);
    CHECK(back[i].split_id == records[i].split_id);
    CHECK(back[i].permutation_id == records[i].permutation_id);
    CHECK(back[i].repeat_id == records[i].repeat_id);
    CHECK(back[i].method == records[i].method);
    CHECK(back[i].seed == records[i].seed);
    CHECK(back[i].status == records[i].status);
    CHECK(back[i].note == records[i].note);
  }
  CHECK(back[0].signed_error == 0.125);
  CHECK(back[1].signed_error == -1.0 / 3.0);
  CHECK(back[1].true_dd == 0.25);
  // failed rows write blank numerics and read back as zero
  CHECK(back[2].signed_error == 0.0);
  CHECK(back[2].true_dd == 0.0);
  CHECK(back[2].estimated_dd == 0.0);
}

TEST_CASE("record csv rejects malformed input") {
  CHECK_THROWS_AS((void)read_records_csv(temp_path("qf_no_such.csv")), Error);

  TempFile empty("qf_empty.csv");
  std::ofstream(empty.path).close();
  CHECK_THROWS_AS((void)read_records_csv(empty.path), Error);

  TempFile badhdr("qf_badhdr.csv");
  std::ofstream(badhdr.path) << "a,b,c\n1,2,3\n";
  CHECK_THROWS_AS((void)read_records_csv(badhdr.path), Error);

  const std::string header =
      "protocol,parameter,split_id,permutation_id,repeat_id,method,"
      "signed_error,true_dd,estimated_dd,seed,status,note\n";

  TempFile shortrow("qf_shortrow.csv");
  std::ofstream(shortrow.path) << header << "sample-prev-d3-neg,0.5,0,0\n";
  CHECK_THROWS_AS((void)read_records_csv(shortrow.path), Error);

  TempFile badmethod("qf_badmethod.csv");
  std::ofstream(badmethod.path)
      << header << "sample-prev-d3-neg,0.5,0,0,0,XXX,0,0,0,1,ok,\n";
  CHECK_THROWS_AS((void)read_records_csv(badmethod.path), Error);

  TempFile badnum("qf_badnum.csv");
  std::ofstream(badnum.path)
      << header << "sample-prev-d3-neg,zzz,0,0,0,CC,0,0,0,1,ok,\n";
  CHECK_THROWS_AS((void)read_records_csv(badnum.path), Error);
}

TEST_CASE("jsonl mirrors the records with nulls for failures") {
  std::vector<ErrorRecord> records;
  records.push_back(make_record(Method::PACC, 0, 0.5));
  ErrorRecord failed = make_record(Method::PCC, 1, 0.0);
  failed.status = RecordStatus::failed;
  failed.note = "whatever went wrong";
  records.push_back(failed);

  TempFile f("qf_records.jsonl");
  write_records_jsonl(f.path, records);
  std::ifstream in(f.path);
  std::string line;
  std::vector<nlohmann::json> lines;
  while (std::getline(in, line)) lines.push_back(nlohmann::json::parse(line));
  REQUIRE(lines.size() == 2);
  CHECK(lines[0]["method"] == "PACC");
  CHECK(lines[0]["signed_error"] == 0.5);
  CHECK(lines[0]["status"] == "ok");
  CHECK(lines[0]["seed"] == 0xDEADBEEFULL);
  CHECK(lines[1]["signed_error"].is_null());
  CHECK(lines[1]["true_dd"].is_null());
  CHECK(lines[1]["status"] == "failed");
  CHECK(lines[1]["note"] == "whatever went wrong");
}

TEST_CASE("aggregate csv and table formatting") {
  AggregateRow a;
  a.dataset = "toy";
  a.method = Method::SLD;
  a.count = 100;
  a.mae = 0.0525;
  a.mae_std = 0.01;
  a.mse = 0.004;
  a.mse_std = 0.002;
  a.p_ae_lt_01 = 0.9;
  a.p_ae_lt_02 = 1.0;
  a.significance = Significance::best;
  AggregateRow b = a;
  b.method = Method::CC;
  b.mae = 0.31;
  b.significance = Significance::dagger;
  AggregateRow c = a;
  c.method = Method::MLPE;
  c.mae = 0.35;
  c.significance = Significance::ddagger;

  TempFile f("qf_aggregate.csv");
  write_aggregate_csv(f.path, {a, b, c});
  std::ifstream in(f.path);
  std::string line;
  std::getline(in, line);
  CHECK(line ==
        "dataset,method,count,mae,mae_std,mse,mse_std,p_ae_lt_0.1,p_ae_lt_0.2,"
        "significance");
  std::getline(in, line);
  CHECK(line.find("toy,SLD,100,") == 0);
  CHECK(line.find(",best") != std::string::npos);

  const std::string table = format_aggregate_table({a, b, c});
  CHECK(table.find("SLD") != std::string::npos);
  CHECK(table.find("0.052+-0.010 *") != std::string::npos);
  CHECK(table.find("0.310+-0.010 †") != std::string::npos);
  CHECK(table.find("0.350+-0.010 ‡") != std::string::npos);
  CHECK(table.find("lowest MAE") != std::string::npos);
}

TEST_CASE("boxplot rows group records and match the direct computation") {
  std::vector<ErrorRecord> records;
  const std::vector<double> errs = {0.01, 0.02, 0.03, 0.04, 0.9};
  for (std::size_t i = 0; i < errs.size(); ++i)
    records.push_back(make_record(Method::CC, static_cast<int>(i), errs[i]));
  records.push_back(make_record(Method::PCC, 0, 0.5));
  ErrorRecord failed = make_record(Method::CC, 9, 123.0);
  failed.status = RecordStatus::failed;
  records.push_back(failed);

  const std::vector<BoxplotRow> rows = boxplot_rows(records);
  REQUIRE(rows.size() == 2);
  const BoxplotRow& cc =
      rows[0].method == Method::CC ? rows[0] : rows[1];
  CHECK(cc.count == 5);
  const BoxplotStats direct = boxplot_stats(errs);
  CHECK(cc.q1 == direct.q1);
  CHECK(cc.median == direct.median);
  CHECK(cc.q3 == direct.q3);
  CHECK(cc.lo_whisker == direct.whisker_lo);
  CHECK(cc.hi_whisker == direct.whisker_hi);
  CHECK(cc.outliers == direct.outliers);

  TempFile f("qf_boxplot.csv");
  write_boxplot_csv(f.path, rows);
  std::ifstream in(f.path);
  std::string line;
  std::getline(in, line);
  CHECK(line ==
        "protocol,method,parameter,count,lo_whisker,q1,median,q3,hi_whisker,"
        "outliers");
  int data_lines = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++data_lines;
  CHECK(data_lines == 2);
}

TEST_CASE("decoupling csv shape") {
  DecouplingRow r;
  r.protocol = Protocol::sample_prev_d2_neg;
  r.method = Method::PACC;
  r.parameter = 0.4;
  r.mae = 0.05;
  r.accuracy = 0.81;
  r.f1 = 0.76;
  r.count = 36;
  TempFile f("qf_decoupling.csv");
  write_decoupling_csv(f.path, {r});
  std::ifstream in(f.path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "protocol,method,parameter,count,prevalence_mae,accuracy,f1");
  std::getline(in, line);
  CHECK(line.find("sample-prev-d2-neg,PACC,") == 0);
  CHECK(line.find(",36,") != std::string::npos);
}

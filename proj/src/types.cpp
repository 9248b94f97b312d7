#include "quantifair/types.hpp"

#include <cassert>

namespace quantifair {

namespace {

std::optional<ValidationIssue> check_labels(const std::optional<IntVector>& v,
                                            const char* which, Index n) {
  if (!v) return std::nullopt;
  if (v->size() != n) {
    return ValidationIssue{"length-mismatch",
                           std::string(which) + " has " + std::to_string(v->size()) +
                               " entries for " + std::to_string(n) + " rows"};
  }
  for (Index i = 0; i < v->size(); ++i) {
    const int val = (*v)(i);
    if (val != 0 && val != 1) {
      return ValidationIssue{"invalid-label", std::string(which) + "[" +
                                                  std::to_string(i) + "] = " +
                                                  std::to_string(val)};
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<ValidationIssue> validate_sample(const LabeledSample& s) {
  if (!s.features.allFinite()) {
    for (Index i = 0; i < s.features.rows(); ++i) {
      for (Index j = 0; j < s.features.cols(); ++j) {
        if (!std::isfinite(s.features(i, j))) {
          return ValidationIssue{"non-finite-value",
                                 "features(" + std::to_string(i) + "," +
                                     std::to_string(j) + ")"};
        }
      }
    }
  }
  if (auto issue = check_labels(s.sensitive, "sensitive", s.rows())) return issue;
  if (auto issue = check_labels(s.target, "target", s.rows())) return issue;
  if (auto issue = check_labels(s.predicted, "predicted", s.rows())) return issue;
  return std::nullopt;
}

LabeledSample subset(const LabeledSample& s, const std::vector<Index>& idx) {
  LabeledSample out;
  out.features.resize(static_cast<Index>(idx.size()), s.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.features.row(static_cast<Index>(i)) = s.features.row(idx[i]);
  }
  auto pick = [&](const std::optional<IntVector>& v) -> std::optional<IntVector> {
    if (!v) return std::nullopt;
    IntVector r(static_cast<Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) r(static_cast<Index>(i)) = (*v)(idx[i]);
    return r;
  };
  out.sensitive = pick(s.sensitive);
  out.target = pick(s.target);
  out.predicted = pick(s.predicted);
  return out;
}

LabeledSample concat(const LabeledSample& a, const LabeledSample& b) {
  LabeledSample out;
  if (a.cols() != b.cols() && a.rows() > 0 && b.rows() > 0)
    assert(false && "concat of mismatched widths");
  out.features.resize(a.rows() + b.rows(), a.rows() > 0 ? a.cols() : b.cols());
  if (a.rows() > 0) out.features.topRows(a.rows()) = a.features;
  if (b.rows() > 0) out.features.bottomRows(b.rows()) = b.features;
  auto join = [&](const std::optional<IntVector>& x,
                  const std::optional<IntVector>& y) -> std::optional<IntVector> {
    if (!x || !y) return std::nullopt;
    IntVector r(x->size() + y->size());
    r.head(x->size()) = *x;
    r.tail(y->size()) = *y;
    return r;
  };
  out.sensitive = join(a.sensitive, b.sensitive);
  out.target = join(a.target, b.target);
  out.predicted = join(a.predicted, b.predicted);
  return out;
}

double label_prevalence(const IntVector& labels) {
  assert(labels.size() > 0);
  long long ones = 0;
  for (Index i = 0; i < labels.size(); ++i) ones += labels(i);
  return static_cast<double>(ones) / static_cast<double>(labels.size());
}

const char* method_name(Method m) {
  switch (m) {
    case Method::CC: return "CC";
    case Method::PCC: return "PCC";
    case Method::ACC: return "ACC";
    case Method::PACC: return "PACC";
    case Method::SLD: return "SLD";
    case Method::HDy: return "HDy";
    case Method::MLPE: return "MLPE";
  }
  return "?";
}

std::optional<Method> method_from_name(const std::string& name) {
  if (name == "CC") return Method::CC;
  if (name == "PCC") return Method::PCC;
  if (name == "ACC") return Method::ACC;
  if (name == "PACC") return Method::PACC;
  if (name == "SLD") return Method::SLD;
  if (name == "HDy") return Method::HDy;
  if (name == "MLPE") return Method::MLPE;
  return std::nullopt;
}

const char* protocol_name(Protocol p) {
  switch (p) {
    case Protocol::sample_prev_d3_neg: return "sample-prev-d3-neg";
    case Protocol::sample_prev_d3_pos: return "sample-prev-d3-pos";
    case Protocol::sample_prev_d2_neg: return "sample-prev-d2-neg";
    case Protocol::sample_prev_d2_pos: return "sample-prev-d2-pos";
    case Protocol::sample_size_d2: return "sample-size-d2";
    case Protocol::sample_prev_d1: return "sample-prev-d1";
    case Protocol::flip_prev_d1: return "flip-prev-d1";
  }
  return "?";
}

std::optional<Protocol> protocol_from_name(const std::string& name) {
  if (name == "sample-prev-d3-neg") return Protocol::sample_prev_d3_neg;
  if (name == "sample-prev-d3-pos") return Protocol::sample_prev_d3_pos;
  if (name == "sample-prev-d2-neg") return Protocol::sample_prev_d2_neg;
  if (name == "sample-prev-d2-pos") return Protocol::sample_prev_d2_pos;
  if (name == "sample-size-d2") return Protocol::sample_size_d2;
  if (name == "sample-prev-d1") return Protocol::sample_prev_d1;
  if (name == "flip-prev-d1") return Protocol::flip_prev_d1;
  return std::nullopt;
}

const char* status_name(RecordStatus s) {
  switch (s) {
    case RecordStatus::ok: return "ok";
    case RecordStatus::flagged: return "flagged";
    case RecordStatus::failed: return "failed";
  }
  return "?";
}

std::optional<RecordStatus> status_from_name(const std::string& name) {
  if (name == "ok") return RecordStatus::ok;
  if (name == "flagged") return RecordStatus::flagged;
  if (name == "failed") return RecordStatus::failed;
  return std::nullopt;
}

}  // namespace quantifair

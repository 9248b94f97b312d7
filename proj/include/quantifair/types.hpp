#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "quantifair/core.hpp"

namespace quantifair {

// A feature matrix (rows are instances) plus optional per-row labels.
// Convention throughout: the favorable decision and the sensitive group of
// interest are encoded as 1, their complements as 0. A label vector that is
// absent is absent; there is no sentinel encoding.
struct LabeledSample {
  Matrix features;
  std::optional<IntVector> sensitive;
  std::optional<IntVector> target;
  std::optional<IntVector> predicted;

  Index rows() const { return features.rows(); }
  Index cols() const { return features.cols(); }
};

struct ValidationIssue {
  std::string code;  // length-mismatch | non-finite-value | invalid-label
  std::string detail;
};

// Returns the first violation found, or nothing if the sample is well formed.
std::optional<ValidationIssue> validate_sample(const LabeledSample& s);

// Row subset preserving feature/label association. Indices may repeat
// (sampling with replacement builds on this).
LabeledSample subset(const LabeledSample& s, const std::vector<Index>& idx);

// Row-wise concatenation. A label vector survives only if both sides have it.
LabeledSample concat(const LabeledSample& a, const LabeledSample& b);

// Fraction of ones. Empty vector is the caller's bug; asserted.
double label_prevalence(const IntVector& labels);

struct Prevalence {
  double value = 0.0;        // estimated share of class 1
  std::size_t support = 0;   // number of instances behind the estimate
};

struct DDEstimate {
  double mu1 = 0.0;          // estimated acceptance rate for group 1
  double mu0 = 0.0;
  double delta = 0.0;        // mu1 - mu0
  double prev_pos_s1 = 0.0;  // smoothed prevalence of s=1 among predicted-positive
  double prev_pos_s0 = 0.0;
  double prev_neg_s1 = 0.0;
  double prev_neg_s0 = 0.0;
  double pr_pos = 0.0;       // share of predicted-positive in the evaluated set
  bool pos_branch_empty = false;
  bool neg_branch_empty = false;
  bool degenerate = false;   // a mu denominator vanished and was pinned to 0
  bool pos_quantifier_degenerate = false;  // rate collapse / prior pinning
  bool neg_quantifier_degenerate = false;
};

enum class Method { CC, PCC, ACC, PACC, SLD, HDy, MLPE };

enum class Protocol {
  sample_prev_d3_neg,
  sample_prev_d3_pos,
  sample_prev_d2_neg,
  sample_prev_d2_pos,
  sample_size_d2,
  sample_prev_d1,
  flip_prev_d1,
};

enum class RecordStatus { ok, flagged, failed };

// One protocol evaluation: one method on one sampled configuration.
struct ErrorRecord {
  Protocol protocol{};
  double parameter = 0.0;  // x-axis value: prevalence, size, Pr(Y=S), or true-DD bucket
  int split_id = 0;
  int permutation_id = 0;
  int repeat_id = 0;
  Method method{};
  double signed_error = 0.0;  // estimated_dd - true_dd
  double true_dd = 0.0;
  double estimated_dd = 0.0;
  std::uint64_t seed = 0;
  RecordStatus status = RecordStatus::ok;
  std::string note;  // flag or failure reason, empty when ok
};

const char* method_name(Method m);
std::optional<Method> method_from_name(const std::string& name);
const char* protocol_name(Protocol p);
std::optional<Protocol> protocol_from_name(const std::string& name);
const char* status_name(RecordStatus s);
std::optional<RecordStatus> status_from_name(const std::string& name);

}  // namespace quantifair

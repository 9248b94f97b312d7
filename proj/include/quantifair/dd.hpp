#pragma once

#include <cstdint>

#include "quantifair/quantify.hpp"
#include "quantifair/types.hpp"

namespace quantifair {

// Demographic disparity pipeline settings. By default the auxiliary set is
// partitioned by the audited model's predictions and each branch gets its own
// quantifier; turning split_by_prediction off fits a single quantifier on the
// whole auxiliary set and applies it to both branches (with the whole-set
// prevalence as smoothing control).
struct PipelineOptions {
  bool split_by_prediction = true;
  double pseudocount = 0.5;  // Laplace term; the smoothing adds pseudocount*2 virtual rows
  TrainerConfig trainer;     // for quantifier-internal models
  QuantifierConfig quantifier;
};

struct DDPipelineConfig {
  Method method = Method::PCC;
  PipelineOptions options;
  std::uint64_t seed = 0;
};

// Additive smoothing toward a control prevalence:
//   (p_hat * n + control * pseudocount * n_classes) / (n + pseudocount * n_classes)
// With the default pseudocount 1/2 and two classes this is
// (p_hat*n + control) / (n + 1). n = 0 returns the control exactly.
double laplace_smooth(double p_hat, std::size_t n, double control,
                      double pseudocount = 0.5, int n_classes = 2);

// Group acceptance rates from smoothed per-branch prevalences of s=1 and the
// predicted-positive share. Denominators that vanish pin the rate to 0 and
// set the degenerate flag on the estimate.
struct MuPair {
  double mu1 = 0.0;
  double mu0 = 0.0;
  bool degenerate = false;
};
MuPair acceptance_from_prevalences(double prev_pos_s1, double prev_neg_s1,
                                   double pr_pos);

struct BranchParts {
  LabeledSample pos;  // rows the model accepts
  LabeledSample neg;
};
BranchParts partition_by_prediction(const LinearModel& h, const LabeledSample& s);

// Branch quantifiers plus smoothing controls, fit once and reused across any
// number of test draws. Construction from parts is exposed so tests can
// inject quantifiers directly.
class DDPipeline {
 public:
  DDPipeline(Quantifier q_pos, Quantifier q_neg, double control_pos,
             double control_neg, double pseudocount, bool shared);

  static DDPipeline fit(const LinearModel& h, const LabeledSample& d2,
                        const DDPipelineConfig& cfg, FitCache* cache_pos = nullptr,
                        FitCache* cache_neg = nullptr);

  // Fit from auxiliary branches that were materialized by the caller (the
  // sweeps that sample the auxiliary set need this). The ablated variant
  // pools the two branches back together.
  static DDPipeline fit_branches(const LabeledSample& d2_pos,
                                 const LabeledSample& d2_neg,
                                 const DDPipelineConfig& cfg,
                                 FitCache* cache_pos = nullptr,
                                 FitCache* cache_neg = nullptr);

  // Test branches are feature-only: the pipeline never sees test sensitive
  // labels. Branch membership is the audited model's decision.
  DDEstimate estimate(const Matrix& pos_features, const Matrix& neg_features) const;

  const Quantifier& positive_quantifier() const { return q_pos_; }
  const Quantifier& negative_quantifier() const { return q_neg_; }
  bool shared_quantifier() const { return shared_; }
  double control_pos() const { return control_pos_; }
  double control_neg() const { return control_neg_; }

 private:
  Quantifier q_pos_;
  Quantifier q_neg_;
  double control_pos_;
  double control_neg_;
  double pseudocount_;
  bool shared_;
};

// One-shot convenience: fit on the auxiliary set, partition the test features
// by the audited model's predictions, estimate.
DDEstimate estimate_dd(const LinearModel& h, const LabeledSample& d2,
                       const Matrix& d3_features, const DDPipelineConfig& cfg);

// Ground truth from labeled data: acceptance rate of group 1 minus group 0
// under the model's predictions. Errors if a group is absent.
double true_dd(const LinearModel& h, const LabeledSample& d3);
// Same, for material already split into an accepted and a rejected part.
double true_dd_from_branches(const IntVector& sens_pos, const IntVector& sens_neg);

struct DecouplingMetrics {
  double mae = 0.0;       // |estimated - true| branch prevalence
  double accuracy = 0.0;  // of individual sensitive-attribute assignments
  double f1 = 0.0;        // positive class s=1; 1 when TP=FP=FN=0
};

// How well the quantifier's underlying classifier labels individuals versus
// how well the method quantifies, on one labeled test branch. Supported for
// CC/ACC (hard predictions), PCC/PACC (posterior at 0.5, identical to hard),
// and SLD (EM-adjusted posteriors at 0.5). HDy and MLPE have no per-instance
// reading and are rejected.
DecouplingMetrics decoupling_metrics(const Quantifier& q, const LabeledSample& branch);

}  // namespace quantifair

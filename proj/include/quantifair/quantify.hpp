#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "quantifair/linear_model.hpp"
#include "quantifair/types.hpp"

namespace quantifair {

struct QuantifierConfig {
  double sld_epsilon = 1e-4;
  int sld_max_iter = 1000;
  double hdy_train_share = 0.6;
  int hdy_bins_lo = 10, hdy_bins_hi = 110, hdy_bins_step = 10;
  double hdy_alpha_step = 0.01;
  double acc_rate_epsilon = 1e-6;  // |tpr-fpr| below this falls back to CC
};

// A fitted prevalence estimator for the class-1 share of an unlabeled sample.
// Which pieces are populated depends on the method.
struct Quantifier {
  Method method = Method::CC;
  std::optional<LinearModel> model;
  std::optional<RateEstimates> rates;      // ACC (hard) / PACC (soft)
  Prevalence train_prevalence;
  std::optional<Vector> validation_pos;    // HDy: held-out posteriors, class 1
  std::optional<Vector> validation_neg;
  QuantifierConfig config;
};

// Reusable pieces shared by several fits on the same training sample with
// the same trainer configuration: the base model and the out-of-fold
// posterior pool. Purely an optimization; results are identical with or
// without it because training is deterministic.
struct FitCache {
  std::optional<LinearModel> base_model;
  std::optional<CrossvalPool> cv_pool;
};

// Trains whatever the method needs on `train`, labeled by `label`.
// CC/PCC/SLD: one model on all rows. ACC/PACC: model plus k-fold rate
// estimates. HDy: model on a 60% stratified split, posteriors of the held-out
// 40% kept per class. MLPE: the training prevalence alone.
Quantifier fit_quantifier(Method method, const LabeledSample& train,
                          LabelSelector label, const TrainerConfig& trainer,
                          std::uint64_t seed, FitCache* cache = nullptr,
                          const QuantifierConfig& qcfg = {});

struct SldTrace {
  int iterations = 0;
  double final_shift = 0.0;               // last |p(t) - p(t-1)|
  std::vector<double> prevalence_path;    // p(0) .. p(final)
  bool degenerate_prior = false;          // train prevalence not in (0,1)
};

struct SldResult {
  Prevalence prevalence;
  SldTrace trace;
  Vector posteriors;  // EM-adjusted class-1 posteriors at the fixed point
};

struct QuantifyOutcome {
  Prevalence prevalence;
  bool degenerate = false;  // ACC/PACC rate collapse or SLD prior pinning
};

Prevalence quantify_cc(const Quantifier& q, const Matrix& sample, int s = 1);
Prevalence quantify_pcc(const Quantifier& q, const Matrix& sample, int s = 1);
Prevalence quantify_acc(const Quantifier& q, const Matrix& sample,
                        bool* degenerate = nullptr);
Prevalence quantify_pacc(const Quantifier& q, const Matrix& sample,
                         bool* degenerate = nullptr);
SldResult quantify_sld(const Quantifier& q, const Matrix& sample);
Prevalence quantify_hdy(const Quantifier& q, const Matrix& sample);
Prevalence quantify_mlpe(const Quantifier& q, const Matrix& sample);

QuantifyOutcome quantify(const Quantifier& q, const Matrix& sample);

// Prior-shift EM on fixed posteriors; the core of SLD, exposed so it can be
// driven without a model. Starts from the training prevalence, rescales the
// given class-1 posteriors by the current prior ratio, renormalizes, and
// averages until the prevalence moves less than epsilon.
SldResult sld_em(const Vector& initial_posteriors, double train_prevalence,
                 double epsilon, int max_iter);

// Distance between two normalized histograms.
double hellinger_distance(const std::vector<double>& p, const std::vector<double>& q);

// Equal-width histogram of values in [0,1], normalized to sum 1. Values at
// 1.0 land in the last bin.
std::vector<double> unit_histogram(const Vector& values, int bins);

// Mixture share that minimizes the Hellinger distance between
// (1-alpha)*neg + alpha*pos and the test histogram, searched over a fixed
// alpha grid for one bin count. Ties resolve to the smallest alpha.
double hdy_alpha_for_bins(const Vector& val_pos, const Vector& val_neg,
                          const Vector& test, int bins, double alpha_step = 0.01);

// Median of the per-bin-count minimizers over bins {10,20,...,110}.
double hdy_mixture_alpha(const Vector& val_pos, const Vector& val_neg,
                         const Vector& test, const QuantifierConfig& cfg = {});

}  // namespace quantifair

#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "quantifair/types.hpp"

namespace quantifair {

enum class Link { logistic, calibrated_margin };
enum class ClassWeighting { none, balanced };
enum class TrainerKind { logistic, svm_platt };
enum class LabelSelector { sensitive, target };

struct TrainerConfig {
  TrainerKind kind = TrainerKind::logistic;
  ClassWeighting weighting = ClassWeighting::none;
  double l2 = 1.0;       // coefficient on 0.5*||w||^2; bias is not penalized
  double tol = 1e-6;     // gradient norm stopping threshold (logistic)
  int max_iter = 10000;
  int cv_folds = 10;     // folds for crossval_rates
  std::uint64_t seed = 0;
};

struct LinearModel {
  Vector weights;
  double bias = 0.0;
  Link link = Link::logistic;
  // Calibration (a, b): posterior = sigmoid(a * margin + b).
  std::optional<std::pair<double, double>> calibration;
  bool converged = true;
  int iterations = 0;
};

const IntVector& labels_of(const LabeledSample& s, LabelSelector sel);

Vector decision_values(const LinearModel& m, const Matrix& X);
Vector posterior(const LinearModel& m, const Matrix& X);
// Threshold convention: posterior >= threshold predicts 1.
IntVector predict(const LinearModel& m, const Matrix& X, double threshold = 0.5);

// Weighted L2-regularized logistic loss and its gradient; the trainer's
// objective, exposed so tests can difference it numerically.
double logistic_loss(const Matrix& X, const IntVector& y, const Vector& inst_weight,
                     double l2, const Vector& w, double bias,
                     Vector* grad_w = nullptr, double* grad_b = nullptr);

// Damped Newton on the objective above. Deterministic; no data-dependent
// randomness. Hitting max_iter leaves converged=false, it is not an error.
LinearModel train_logistic(const LabeledSample& train, LabelSelector label,
                           const TrainerConfig& cfg);

// Linear hinge-loss model fit by deterministic full-batch subgradient
// descent, calibrated with a sigmoid fit on 5-fold cross-validated margins.
LinearModel train_svm_platt(const LabeledSample& train, LabelSelector label,
                            const TrainerConfig& cfg);

LinearModel train_linear(const LabeledSample& train, LabelSelector label,
                         const TrainerConfig& cfg);

struct RateEstimates {
  double tpr = 0.0;
  double fpr = 0.0;
  bool soft = false;
  int folds_used = 0;
  bool degenerate = false;  // stratified folding was infeasible; see below
};

// Out-of-fold posteriors from seeded stratified k-fold cross-validation.
// Order matches the training set. When a class has fewer than 2 members no
// folding keeps every training part two-class; the fallback scores the whole
// set with a model trained on all of it and reports degenerate=true.
struct CrossvalPool {
  Vector posteriors;
  int folds_used = 0;
  bool degenerate = false;
};
CrossvalPool crossval_posteriors(const LabeledSample& train, LabelSelector label,
                                 const TrainerConfig& cfg, int k_folds);

// True/false positive rates of the induced classifier, estimated from pooled
// out-of-fold predictions (hard) or posteriors (soft).
RateEstimates crossval_rates(const LabeledSample& train, LabelSelector label,
                             const TrainerConfig& cfg, int k_folds, bool soft,
                             const CrossvalPool* pool = nullptr);

}  // namespace quantifair

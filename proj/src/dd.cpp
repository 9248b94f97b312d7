#include "quantifair/dd.hpp"

#include <cmath>

#include "quantifair/error.hpp"

namespace quantifair {

double laplace_smooth(double p_hat, std::size_t n, double control,
                      double pseudocount, int n_classes) {
  const double virtual_rows = pseudocount * static_cast<double>(n_classes);
  if (n == 0) return control;
  if (virtual_rows <= 0.0) return p_hat;
  return (p_hat * static_cast<double>(n) + control * virtual_rows) /
         (static_cast<double>(n) + virtual_rows);
}

MuPair acceptance_from_prevalences(double prev_pos_s1, double prev_neg_s1,
                                   double pr_pos) {
  MuPair mu;
  const double pos1 = prev_pos_s1 * pr_pos;
  const double neg1 = prev_neg_s1 * (1.0 - pr_pos);
  const double pos0 = (1.0 - prev_pos_s1) * pr_pos;
  const double neg0 = (1.0 - prev_neg_s1) * (1.0 - pr_pos);
  if (pos1 + neg1 > 0.0) {
    mu.mu1 = pos1 / (pos1 + neg1);
  } else {
    mu.mu1 = 0.0;
    mu.degenerate = true;
  }
  if (pos0 + neg0 > 0.0) {
    mu.mu0 = pos0 / (pos0 + neg0);
  } else {
    mu.mu0 = 0.0;
    mu.degenerate = true;
  }
  return mu;
}

BranchParts partition_by_prediction(const LinearModel& h, const LabeledSample& s) {
  const IntVector pred = predict(h, s.features);
  std::vector<Index> pos, neg;
  for (Index i = 0; i < pred.size(); ++i) (pred(i) ? pos : neg).push_back(i);
  BranchParts parts{subset(s, pos), subset(s, neg)};
  parts.pos.predicted = IntVector::Ones(static_cast<Index>(pos.size()));
  parts.neg.predicted = IntVector::Zero(static_cast<Index>(neg.size()));
  return parts;
}

DDPipeline::DDPipeline(Quantifier q_pos, Quantifier q_neg, double control_pos,
                       double control_neg, double pseudocount, bool shared)
    : q_pos_(std::move(q_pos)),
      q_neg_(std::move(q_neg)),
      control_pos_(control_pos),
      control_neg_(control_neg),
      pseudocount_(pseudocount),
      shared_(shared) {}

DDPipeline DDPipeline::fit(const LinearModel& h, const LabeledSample& d2,
                           const DDPipelineConfig& cfg, FitCache* cache_pos,
                           FitCache* cache_neg) {
  if (!d2.sensitive)
    throw_data("missing-labels", "auxiliary set needs sensitive labels");
  if (cfg.options.split_by_prediction) {
    const BranchParts parts = partition_by_prediction(h, d2);
    if (parts.pos.rows() == 0 || parts.neg.rows() == 0)
      throw_data("empty-branch", "auxiliary set has an empty prediction branch");
    Quantifier qp = fit_quantifier(cfg.method, parts.pos, LabelSelector::sensitive,
                                   cfg.options.trainer, cfg.seed, cache_pos,
                                   cfg.options.quantifier);
    Quantifier qn = fit_quantifier(cfg.method, parts.neg, LabelSelector::sensitive,
                                   cfg.options.trainer, cfg.seed, cache_neg,
                                   cfg.options.quantifier);
    const double cp = label_prevalence(*parts.pos.sensitive);
    const double cn = label_prevalence(*parts.neg.sensitive);
    return DDPipeline(std::move(qp), std::move(qn), cp, cn,
                      cfg.options.pseudocount, false);
  }
  Quantifier q = fit_quantifier(cfg.method, d2, LabelSelector::sensitive,
                                cfg.options.trainer, cfg.seed, cache_pos,
                                cfg.options.quantifier);
  const double c = label_prevalence(*d2.sensitive);
  return DDPipeline(q, q, c, c, cfg.options.pseudocount, true);
}

DDPipeline DDPipeline::fit_branches(const LabeledSample& d2_pos,
                                    const LabeledSample& d2_neg,
                                    const DDPipelineConfig& cfg, FitCache* cache_pos,
                                    FitCache* cache_neg) {
  if (!d2_pos.sensitive || !d2_neg.sensitive)
    throw_data("missing-labels", "auxiliary branches need sensitive labels");
  if (cfg.options.split_by_prediction) {
    if (d2_pos.rows() == 0 || d2_neg.rows() == 0)
      throw_data("empty-branch", "an auxiliary branch is empty");
    Quantifier qp = fit_quantifier(cfg.method, d2_pos, LabelSelector::sensitive,
                                   cfg.options.trainer, cfg.seed, cache_pos,
                                   cfg.options.quantifier);
    Quantifier qn = fit_quantifier(cfg.method, d2_neg, LabelSelector::sensitive,
                                   cfg.options.trainer, cfg.seed, cache_neg,
                                   cfg.options.quantifier);
    return DDPipeline(std::move(qp), std::move(qn),
                      label_prevalence(*d2_pos.sensitive),
                      label_prevalence(*d2_neg.sensitive),
                      cfg.options.pseudocount, false);
  }
  const LabeledSample pooled = concat(d2_pos, d2_neg);
  Quantifier q = fit_quantifier(cfg.method, pooled, LabelSelector::sensitive,
                                cfg.options.trainer, cfg.seed, cache_pos,
                                cfg.options.quantifier);
  const double c = label_prevalence(*pooled.sensitive);
  return DDPipeline(q, q, c, c, cfg.options.pseudocount, true);
}

DDEstimate DDPipeline::estimate(const Matrix& pos_features,
                                const Matrix& neg_features) const {
  const std::size_t n_pos = static_cast<std::size_t>(pos_features.rows());
  const std::size_t n_neg = static_cast<std::size_t>(neg_features.rows());
  if (n_pos + n_neg == 0)
    throw_data("empty-sample", "both test branches are empty");

  DDEstimate est;
  est.pr_pos = static_cast<double>(n_pos) / static_cast<double>(n_pos + n_neg);

  double raw_pos = control_pos_;
  if (n_pos == 0) {
    est.pos_branch_empty = true;
  } else {
    const QuantifyOutcome o = quantify(q_pos_, pos_features);
    raw_pos = o.prevalence.value;
    est.pos_quantifier_degenerate = o.degenerate;
  }
  double raw_neg = control_neg_;
  if (n_neg == 0) {
    est.neg_branch_empty = true;
  } else {
    const QuantifyOutcome o = quantify(q_neg_, neg_features);
    raw_neg = o.prevalence.value;
    est.neg_quantifier_degenerate = o.degenerate;
  }

  est.prev_pos_s1 = laplace_smooth(raw_pos, n_pos, control_pos_, pseudocount_);
  est.prev_neg_s1 = laplace_smooth(raw_neg, n_neg, control_neg_, pseudocount_);
  est.prev_pos_s0 = 1.0 - est.prev_pos_s1;
  est.prev_neg_s0 = 1.0 - est.prev_neg_s1;

  const MuPair mu =
      acceptance_from_prevalences(est.prev_pos_s1, est.prev_neg_s1, est.pr_pos);
  est.mu1 = mu.mu1;
  est.mu0 = mu.mu0;
  est.degenerate = mu.degenerate;
  est.delta = est.mu1 - est.mu0;
  return est;
}

DDEstimate estimate_dd(const LinearModel& h, const LabeledSample& d2,
                       const Matrix& d3_features, const DDPipelineConfig& cfg) {
  const DDPipeline pipe = DDPipeline::fit(h, d2, cfg);
  LabeledSample d3;
  d3.features = d3_features;
  const BranchParts parts = partition_by_prediction(h, d3);
  return pipe.estimate(parts.pos.features, parts.neg.features);
}

double true_dd_from_branches(const IntVector& sens_pos, const IntVector& sens_neg) {
  long long n1 = 0, n0 = 0, acc1 = 0, acc0 = 0;
  for (Index i = 0; i < sens_pos.size(); ++i) {
    if (sens_pos(i)) { ++n1; ++acc1; } else { ++n0; ++acc0; }
  }
  for (Index i = 0; i < sens_neg.size(); ++i) {
    if (sens_neg(i)) ++n1; else ++n0;
  }
  if (n1 == 0 || n0 == 0)
    throw_data("empty-group", "a sensitive group is absent from the evaluated set");
  return static_cast<double>(acc1) / static_cast<double>(n1) -
         static_cast<double>(acc0) / static_cast<double>(n0);
}

double true_dd(const LinearModel& h, const LabeledSample& d3) {
  if (!d3.sensitive) throw_data("missing-labels", "need sensitive labels for ground truth");
  const IntVector pred = predict(h, d3.features);
  long long n1 = 0, n0 = 0, acc1 = 0, acc0 = 0;
  for (Index i = 0; i < pred.size(); ++i) {
    if ((*d3.sensitive)(i)) {
      ++n1;
      acc1 += pred(i);
    } else {
      ++n0;
      acc0 += pred(i);
    }
  }
  if (n1 == 0 || n0 == 0)
    throw_data("empty-group", "a sensitive group is absent from the evaluated set");
  return static_cast<double>(acc1) / static_cast<double>(n1) -
         static_cast<double>(acc0) / static_cast<double>(n0);
}

DecouplingMetrics decoupling_metrics(const Quantifier& q, const LabeledSample& branch) {
  if (!branch.sensitive)
    throw_data("missing-labels", "decoupling metrics need sensitive labels");
  if (branch.rows() == 0) throw_data("empty-sample", "empty branch");
  const IntVector& truth = *branch.sensitive;

  IntVector assigned;
  switch (q.method) {
    case Method::CC:
    case Method::ACC:
      assigned = predict(*q.model, branch.features);
      break;
    case Method::PCC:
    case Method::PACC: {
      const Vector p = posterior(*q.model, branch.features);
      assigned.resize(p.size());
      for (Index i = 0; i < p.size(); ++i) assigned(i) = p(i) >= 0.5 ? 1 : 0;
      break;
    }
    case Method::SLD: {
      const SldResult r = quantify_sld(q, branch.features);
      assigned.resize(r.posteriors.size());
      for (Index i = 0; i < r.posteriors.size(); ++i)
        assigned(i) = r.posteriors(i) >= 0.5 ? 1 : 0;
      break;
    }
    default:
      throw_config("not-applicable-method",
                   std::string(method_name(q.method)) +
                       " has no per-instance sensitive-attribute reading");
  }

  const double est = quantify(q, branch.features).prevalence.value;
  DecouplingMetrics m;
  m.mae = std::abs(est - label_prevalence(truth));

  long long tp = 0, tn = 0, fp = 0, fn = 0;
  for (Index i = 0; i < truth.size(); ++i) {
    if (assigned(i) == 1 && truth(i) == 1) ++tp;
    else if (assigned(i) == 0 && truth(i) == 0) ++tn;
    else if (assigned(i) == 1) ++fp;
    else ++fn;
  }
  m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(truth.size());
  m.f1 = (tp + fp + fn == 0)
             ? 1.0
             : 2.0 * static_cast<double>(tp) /
                   (2.0 * static_cast<double>(tp) + static_cast<double>(fp) +
                    static_cast<double>(fn));
  return m;
}

}  // namespace quantifair

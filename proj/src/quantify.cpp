#include "quantifair/quantify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "quantifair/error.hpp"
#include "quantifair/rng.hpp"

namespace quantifair {

namespace {

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

const LinearModel& require_model(const Quantifier& q) {
  if (!q.model) throw_runtime("missing-model", "quantifier has no fitted model");
  return *q.model;
}

void require_rows(const Matrix& sample) {
  if (sample.rows() == 0) throw_data("empty-sample", "cannot quantify zero rows");
}

}  // namespace

Quantifier fit_quantifier(Method method, const LabeledSample& train,
                          LabelSelector label, const TrainerConfig& trainer,
                          std::uint64_t seed, FitCache* cache,
                          const QuantifierConfig& qcfg) {
  if (train.rows() == 0) throw_data("empty-sample", "cannot fit on zero rows");
  const IntVector& y = labels_of(train, label);

  Quantifier q;
  q.method = method;
  q.config = qcfg;
  q.train_prevalence = {label_prevalence(y), static_cast<std::size_t>(train.rows())};
  if (method == Method::MLPE) return q;

  TrainerConfig cfg = trainer;
  cfg.seed = seed;

  auto base_model = [&]() -> LinearModel {
    if (cache && cache->base_model) return *cache->base_model;
    LinearModel m = train_linear(train, label, cfg);
    if (cache) cache->base_model = m;
    return m;
  };

  switch (method) {
    case Method::CC:
    case Method::PCC:
    case Method::SLD:
      q.model = base_model();
      break;
    case Method::ACC:
    case Method::PACC: {
      q.model = base_model();
      const CrossvalPool* pool = nullptr;
      CrossvalPool local;
      if (cache) {
        if (!cache->cv_pool)
          cache->cv_pool = crossval_posteriors(train, label, cfg, cfg.cv_folds);
        pool = &*cache->cv_pool;
      } else {
        local = crossval_posteriors(train, label, cfg, cfg.cv_folds);
        pool = &local;
      }
      q.rates = crossval_rates(train, label, cfg, cfg.cv_folds,
                               method == Method::PACC, pool);
      break;
    }
    case Method::HDy: {
      // Stratified 60/40 split: the model sees the 60%, the held-out
      // posteriors become the per-class validation distributions.
      std::vector<Index> pos, neg;
      for (Index i = 0; i < y.size(); ++i) (y(i) ? pos : neg).push_back(i);
      if (pos.empty() || neg.empty())
        throw_data("single-class-input", "HDy needs both classes");
      Rng rng(seed_chain({seed, 0x4d791ULL}));
      rng.shuffle(pos);
      rng.shuffle(neg);
      const auto cut = [&](std::vector<Index>& v) {
        const std::size_t k = static_cast<std::size_t>(
            round_half_up(qcfg.hdy_train_share * static_cast<double>(v.size())));
        return std::min(std::max<std::size_t>(k, 1), v.size() - (v.size() > 1 ? 1 : 0));
      };
      const std::size_t cp = cut(pos), cn = cut(neg);
      std::vector<Index> tr(pos.begin(), pos.begin() + static_cast<long>(cp));
      tr.insert(tr.end(), neg.begin(), neg.begin() + static_cast<long>(cn));
      std::sort(tr.begin(), tr.end());
      const LabeledSample train_part = subset(train, tr);
      q.model = train_linear(train_part, label, cfg);
      std::vector<Index> vp(pos.begin() + static_cast<long>(cp), pos.end());
      std::vector<Index> vn(neg.begin() + static_cast<long>(cn), neg.end());
      if (vp.empty() || vn.empty())
        throw_data("missing-validation", "HDy validation split is empty");
      const LabeledSample sp = subset(train, vp);
      const LabeledSample sn = subset(train, vn);
      q.validation_pos = posterior(*q.model, sp.features);
      q.validation_neg = posterior(*q.model, sn.features);
      break;
    }
    default:
      break;
  }
  return q;
}

Prevalence quantify_cc(const Quantifier& q, const Matrix& sample, int s) {
  require_rows(sample);
  const IntVector pred = predict(require_model(q), sample);
  long long ones = 0;
  for (Index i = 0; i < pred.size(); ++i) ones += pred(i);
  const auto n = static_cast<std::size_t>(sample.rows());
  const double share = static_cast<double>(ones) / static_cast<double>(n);
  return {s == 1 ? share : 1.0 - share, n};
}

Prevalence quantify_pcc(const Quantifier& q, const Matrix& sample, int s) {
  require_rows(sample);
  const Vector p = posterior(require_model(q), sample);
  const double mean = s == 1 ? p.mean() : (1.0 - p.array()).mean();
  return {mean, static_cast<std::size_t>(sample.rows())};
}

namespace {

Prevalence adjust_rates(const Quantifier& q, double raw, std::size_t n,
                        bool* degenerate) {
  if (!q.rates) throw_runtime("missing-rates", "quantifier has no rate estimates");
  const double span = q.rates->tpr - q.rates->fpr;
  if (std::abs(span) < q.config.acc_rate_epsilon) {
    if (degenerate) *degenerate = true;
    return {clamp01(raw), n};
  }
  if (degenerate) *degenerate = false;
  return {clamp01((raw - q.rates->fpr) / span), n};
}

}  // namespace

Prevalence quantify_acc(const Quantifier& q, const Matrix& sample, bool* degenerate) {
  const Prevalence cc = quantify_cc(q, sample);
  return adjust_rates(q, cc.value, cc.support, degenerate);
}

Prevalence quantify_pacc(const Quantifier& q, const Matrix& sample, bool* degenerate) {
  const Prevalence pcc = quantify_pcc(q, sample);
  return adjust_rates(q, pcc.value, pcc.support, degenerate);
}

SldResult sld_em(const Vector& initial_posteriors, double train_prevalence,
                 double epsilon, int max_iter) {
  if (initial_posteriors.size() == 0)
    throw_data("empty-sample", "no posteriors to adjust");
  SldResult res;
  res.trace.prevalence_path.push_back(train_prevalence);
  if (!(train_prevalence > 0.0 && train_prevalence < 1.0)) {
    res.trace.degenerate_prior = true;
    res.trace.iterations = 0;
    res.trace.final_shift = 0.0;
    res.prevalence = {train_prevalence,
                      static_cast<std::size_t>(initial_posteriors.size())};
    res.posteriors = initial_posteriors;
    return res;
  }

  const double p0 = train_prevalence;
  double prev = p0;
  Vector post = initial_posteriors;
  int iter = 0;
  double shift = 0.0;
  while (iter < max_iter) {
    ++iter;
    const double r1 = prev / p0;
    const double r0 = (1.0 - prev) / (1.0 - p0);
    double sum = 0.0;
    for (Index i = 0; i < post.size(); ++i) {
      const double n1 = r1 * initial_posteriors(i);
      const double n0 = r0 * (1.0 - initial_posteriors(i));
      const double denom = n1 + n0;
      post(i) = denom > 0.0 ? n1 / denom : prev;
      sum += post(i);
    }
    const double next = sum / static_cast<double>(post.size());
    shift = std::abs(next - prev);
    prev = next;
    res.trace.prevalence_path.push_back(next);
    if (shift < epsilon) break;
  }
  res.trace.iterations = iter;
  res.trace.final_shift = shift;
  res.prevalence = {prev, static_cast<std::size_t>(post.size())};
  res.posteriors = std::move(post);
  return res;
}

SldResult quantify_sld(const Quantifier& q, const Matrix& sample) {
  require_rows(sample);
  const Vector p = posterior(require_model(q), sample);
  return sld_em(p, q.train_prevalence.value, q.config.sld_epsilon,
                q.config.sld_max_iter);
}

double hellinger_distance(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size())
    throw_runtime("dimension-mismatch", "histograms differ in size");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = std::sqrt(p[i]) - std::sqrt(q[i]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

std::vector<double> unit_histogram(const Vector& values, int bins) {
  std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
  for (Index i = 0; i < values.size(); ++i) {
    int b = static_cast<int>(values(i) * bins);
    b = std::min(std::max(b, 0), bins - 1);
    h[static_cast<std::size_t>(b)] += 1.0;
  }
  const double n = static_cast<double>(values.size());
  for (double& v : h) v /= n;
  return h;
}

double hdy_alpha_for_bins(const Vector& val_pos, const Vector& val_neg,
                          const Vector& test, int bins, double alpha_step) {
  const auto hp = unit_histogram(val_pos, bins);
  const auto hn = unit_histogram(val_neg, bins);
  const auto ht = unit_histogram(test, bins);
  double best_alpha = 0.0;
  double best_dist = std::numeric_limits<double>::infinity();
  const int steps = static_cast<int>(round_half_up(1.0 / alpha_step));
  std::vector<double> mix(hp.size());
  for (int k = 0; k <= steps; ++k) {
    const double alpha = static_cast<double>(k) * alpha_step;
    for (std::size_t i = 0; i < mix.size(); ++i)
      mix[i] = (1.0 - alpha) * hn[i] + alpha * hp[i];
    const double dist = hellinger_distance(mix, ht);
    if (dist < best_dist) {
      best_dist = dist;
      best_alpha = alpha;
    }
  }
  return best_alpha;
}

double hdy_mixture_alpha(const Vector& val_pos, const Vector& val_neg,
                         const Vector& test, const QuantifierConfig& cfg) {
  std::vector<double> minimizers;
  for (int b = cfg.hdy_bins_lo; b <= cfg.hdy_bins_hi; b += cfg.hdy_bins_step)
    minimizers.push_back(
        hdy_alpha_for_bins(val_pos, val_neg, test, b, cfg.hdy_alpha_step));
  std::sort(minimizers.begin(), minimizers.end());
  const std::size_t n = minimizers.size();
  return n % 2 == 1 ? minimizers[n / 2]
                    : 0.5 * (minimizers[n / 2 - 1] + minimizers[n / 2]);
}

Prevalence quantify_hdy(const Quantifier& q, const Matrix& sample) {
  require_rows(sample);
  if (!q.validation_pos || !q.validation_neg)
    throw_runtime("missing-validation", "HDy quantifier lacks validation posteriors");
  const Vector p = posterior(require_model(q), sample);
  const double alpha = hdy_mixture_alpha(*q.validation_pos, *q.validation_neg, p, q.config);
  return {alpha, static_cast<std::size_t>(sample.rows())};
}

Prevalence quantify_mlpe(const Quantifier& q, const Matrix& sample) {
  require_rows(sample);
  return {q.train_prevalence.value, static_cast<std::size_t>(sample.rows())};
}

QuantifyOutcome quantify(const Quantifier& q, const Matrix& sample) {
  QuantifyOutcome out;
  switch (q.method) {
    case Method::CC: out.prevalence = quantify_cc(q, sample); break;
    case Method::PCC: out.prevalence = quantify_pcc(q, sample); break;
    case Method::ACC: out.prevalence = quantify_acc(q, sample, &out.degenerate); break;
    case Method::PACC: out.prevalence = quantify_pacc(q, sample, &out.degenerate); break;
    case Method::SLD: {
      const SldResult r = quantify_sld(q, sample);
      out.prevalence = r.prevalence;
      out.degenerate = r.trace.degenerate_prior;
      break;
    }
    case Method::HDy: out.prevalence = quantify_hdy(q, sample); break;
    case Method::MLPE: out.prevalence = quantify_mlpe(q, sample); break;
  }
  return out;
}

}  // namespace quantifair

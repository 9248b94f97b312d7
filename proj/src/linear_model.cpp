#include "quantifair/linear_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "quantifair/error.hpp"
#include "quantifair/rng.hpp"

namespace quantifair {

const IntVector& labels_of(const LabeledSample& s, LabelSelector sel) {
  const auto& v = sel == LabelSelector::sensitive ? s.sensitive : s.target;
  if (!v) throw_data("missing-labels", "sample lacks the requested label vector");
  return *v;
}

Vector decision_values(const LinearModel& m, const Matrix& X) {
  if (X.cols() != m.weights.size())
    throw_runtime("dimension-mismatch",
                  "model has " + std::to_string(m.weights.size()) + " weights, data has " +
                      std::to_string(X.cols()) + " columns");
  return (X * m.weights).array() + m.bias;
}

Vector posterior(const LinearModel& m, const Matrix& X) {
  Vector z = decision_values(m, X);
  if (m.link == Link::calibrated_margin) {
    if (!m.calibration)
      throw_runtime("missing-calibration", "calibrated-margin model without (a, b)");
    z = (z.array() * m.calibration->first + m.calibration->second).matrix();
  }
  return sigmoid(z);
}

IntVector predict(const LinearModel& m, const Matrix& X, double threshold) {
  const Vector p = posterior(m, X);
  IntVector out(p.size());
  for (Index i = 0; i < p.size(); ++i) out(i) = p(i) >= threshold ? 1 : 0;
  return out;
}

double logistic_loss(const Matrix& X, const IntVector& y, const Vector& inst_weight,
                     double l2, const Vector& w, double bias, Vector* grad_w,
                     double* grad_b) {
  const Vector m = (X * w).array() + bias;
  double loss = 0.5 * l2 * w.squaredNorm();
  for (Index i = 0; i < m.size(); ++i)
    loss += inst_weight(i) * (log1pexp(m(i)) - y(i) * m(i));
  if (grad_w) {
    Vector r(m.size());
    for (Index i = 0; i < m.size(); ++i)
      r(i) = inst_weight(i) * (sigmoid(m(i)) - y(i));
    *grad_w = X.transpose() * r + l2 * w;
    if (grad_b) *grad_b = r.sum();
  }
  return loss;
}

namespace {

Vector instance_weights(const IntVector& y, ClassWeighting weighting) {
  const Index n = y.size();
  Index n1 = 0;
  for (Index i = 0; i < n; ++i) n1 += y(i);
  const Index n0 = n - n1;
  if (n0 == 0 || n1 == 0)
    throw_data("single-class-input", "training labels contain a single class");
  Vector c = Vector::Ones(n);
  if (weighting == ClassWeighting::balanced) {
    const double w1 = static_cast<double>(n) / (2.0 * static_cast<double>(n1));
    const double w0 = static_cast<double>(n) / (2.0 * static_cast<double>(n0));
    for (Index i = 0; i < n; ++i) c(i) = y(i) ? w1 : w0;
  }
  return c;
}

}  // namespace

LinearModel train_logistic(const LabeledSample& train, LabelSelector label,
                           const TrainerConfig& cfg) {
  const IntVector& y = labels_of(train, label);
  const Matrix& X = train.features;
  if (y.size() != X.rows())
    throw_data("length-mismatch", "labels do not match feature rows");
  const Vector c = instance_weights(y, cfg.weighting);
  const Index d = X.cols();

  LinearModel model;
  model.weights = Vector::Zero(d);
  model.bias = 0.0;
  model.link = Link::logistic;

  const Index n = X.rows();
  Vector m = Vector::Zero(n);
  auto loss_at = [&](const Vector& margins, const Vector& w) {
    double v = 0.5 * cfg.l2 * w.squaredNorm();
    for (Index i = 0; i < n; ++i)
      v += c(i) * (log1pexp(margins(i)) - y(i) * margins(i));
    return v;
  };
  double loss = loss_at(m, model.weights);

  // Newton with Levenberg-Marquardt damping. Saturated sigmoids can make the
  // bias block of the Hessian nearly singular; when the resulting step is not
  // a usable descent direction we regrow mu and re-solve rather than limp
  // along a garbage direction.
  double mu = 0.0;
  bool reached_tol = false;
  bool prev_unresolvable = false;
  int iter = 0;
  for (; iter < cfg.max_iter; ++iter) {
    Vector r(n), hw(n);
    for (Index i = 0; i < n; ++i) {
      const double p = sigmoid(m(i));
      r(i) = c(i) * (p - y(i));
      hw(i) = c(i) * p * (1.0 - p);
    }
    Vector g(d + 1);
    g.head(d) = X.transpose() * r + cfg.l2 * model.weights;
    g(d) = r.sum();
    if (g.norm() < cfg.tol) {
      reached_tol = true;
      break;
    }

    Matrix H(d + 1, d + 1);
    const Matrix WX = hw.asDiagonal() * X;
    H.topLeftCorner(d, d) = X.transpose() * WX;
    H.topLeftCorner(d, d).diagonal().array() += cfg.l2;
    const Vector xw = WX.colwise().sum();
    H.block(0, d, d, 1) = xw;
    H.block(d, 0, 1, d) = xw.transpose();
    H(d, d) = hw.sum();

    bool accepted = false;
    bool unresolvable = false;
    for (int attempt = 0; attempt < 40 && !accepted; ++attempt) {
      Matrix Hd = H;
      Hd.diagonal().array() += mu + 1e-12;
      const Vector step = Hd.ldlt().solve(g);
      const double slope = g.dot(step);
      if (!step.allFinite() || slope <= 0.0) {
        mu = mu == 0.0 ? 1e-8 : mu * 10.0;
        continue;
      }
      const Vector dm = (X * step.head(d)).array() + step(d);
      // Predicted decrease below the rounding resolution of the loss cannot
      // be certified by a sufficient-decrease test. Take the full step and
      // let the next gradient evaluation decide; this is what completes the
      // final bit of quadratic convergence near the optimum.
      if (slope <= 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(loss))) {
        model.weights -= step.head(d);
        model.bias -= step(d);
        m -= dm;
        loss = loss_at(m, model.weights);
        accepted = true;
        unresolvable = true;
        break;
      }
      double t = 1.0;
      for (int ls = 0; ls < 30; ++ls) {
        const Vector w_new = model.weights - t * step.head(d);
        const Vector m_new = m - t * dm;
        const double loss_new = loss_at(m_new, w_new);
        if (loss_new <= loss - 1e-4 * t * slope) {
          model.weights = w_new;
          model.bias -= t * step(d);
          m = m_new;
          loss = loss_new;
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted) mu = mu == 0.0 ? 1e-8 : mu * 10.0;
    }
    if (!accepted) break;
    if (unresolvable && prev_unresolvable) {
      ++iter;
      break;
    }
    prev_unresolvable = unresolvable;
    mu *= 0.25;
    if (mu < 1e-14) mu = 0.0;
  }
  model.iterations = iter;
  model.converged = reached_tol;
  return model;
}

namespace {

// Full-batch hinge-loss subgradient descent with the classic 1/(lambda*t)
// step size. Deterministic by construction.
LinearModel svm_core(const Matrix& X, const IntVector& y, const Vector& c,
                     double l2, int max_iter) {
  const Index n = X.rows();
  const Index d = X.cols();
  const double lambda = l2 / static_cast<double>(n);
  LinearModel model;
  model.weights = Vector::Zero(d);
  model.bias = 0.0;
  model.link = Link::calibrated_margin;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int t = 1; t <= max_iter; ++t) {
    const Vector m = (X * model.weights).array() + model.bias;
    Vector sub = Vector::Zero(d);
    double sub_b = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double yi = y(i) ? 1.0 : -1.0;
      if (yi * m(i) < 1.0) {
        sub.noalias() -= (c(i) * yi * inv_n) * X.row(i).transpose();
        sub_b -= c(i) * yi * inv_n;
      }
    }
    const double eta = 1.0 / (lambda * static_cast<double>(t));
    model.weights = model.weights - eta * (lambda * model.weights + sub);
    model.bias -= eta * sub_b;
  }
  model.iterations = max_iter;
  return model;
}

// Sigmoid fit on margins with the usual smoothed targets; Newton in (a, b).
std::pair<double, double> platt_fit(const Vector& margins, const IntVector& y) {
  const Index n = margins.size();
  Index n1 = 0;
  for (Index i = 0; i < n; ++i) n1 += y(i);
  const Index n0 = n - n1;
  const double t1 = (static_cast<double>(n1) + 1.0) / (static_cast<double>(n1) + 2.0);
  const double t0 = 1.0 / (static_cast<double>(n0) + 2.0);
  double a = 0.0;
  double b = std::log((static_cast<double>(n0) + 1.0) / (static_cast<double>(n1) + 1.0));
  // Our link is sigmoid(a*m + b); the decision value should raise the
  // posterior, so the b init above is negated relative to the 1/(1+e^z) form.
  b = -b;
  for (int iter = 0; iter < 200; ++iter) {
    double ga = 0.0, gb = 0.0, haa = 0.0, hab = 0.0, hbb = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double p = sigmoid(a * margins(i) + b);
      const double t = y(i) ? t1 : t0;
      const double r = p - t;
      const double w = std::max(p * (1.0 - p), 1e-12);
      ga += r * margins(i);
      gb += r;
      haa += w * margins(i) * margins(i);
      hab += w * margins(i);
      hbb += w;
    }
    haa += 1e-12;
    hbb += 1e-12;
    if (std::sqrt(ga * ga + gb * gb) < 1e-10) break;
    const double det = haa * hbb - hab * hab;
    if (std::abs(det) < 1e-300) break;
    a -= (hbb * ga - hab * gb) / det;
    b -= (haa * gb - hab * ga) / det;
  }
  return {a, b};
}

}  // namespace

LinearModel train_svm_platt(const LabeledSample& train, LabelSelector label,
                            const TrainerConfig& cfg) {
  const IntVector& y = labels_of(train, label);
  const Matrix& X = train.features;
  if (y.size() != X.rows())
    throw_data("length-mismatch", "labels do not match feature rows");
  const Vector c = instance_weights(y, cfg.weighting);
  const Index n = X.rows();
  const int iters = std::min(cfg.max_iter, 2000);

  LinearModel model = svm_core(X, y, c, cfg.l2, iters);

  // Calibration margins come from 5-fold cross-validation. Folds are dealt
  // per class in row order (no shuffling) so that relabeling symmetries of
  // the data carry over to the calibrated posteriors.
  const int k = 5;
  std::vector<Index> fold(n, -1);
  Index seen0 = 0, seen1 = 0;
  for (Index i = 0; i < n; ++i) {
    Index& seen = y(i) ? seen1 : seen0;
    fold[static_cast<std::size_t>(i)] = seen % k;
    ++seen;
  }
  Vector margins(n);
  Vector full_margins = decision_values(model, X);
  for (int f = 0; f < k; ++f) {
    std::vector<Index> tr, te;
    for (Index i = 0; i < n; ++i)
      (fold[static_cast<std::size_t>(i)] == f ? te : tr).push_back(i);
    if (te.empty()) continue;
    Index tr1 = 0;
    for (Index i : tr) tr1 += y(i);
    if (tr.empty() || tr1 == 0 || tr1 == static_cast<Index>(tr.size())) {
      for (Index i : te) margins(i) = full_margins(i);
      continue;
    }
    Matrix Xf(static_cast<Index>(tr.size()), X.cols());
    IntVector yf(static_cast<Index>(tr.size()));
    Vector cf(static_cast<Index>(tr.size()));
    for (std::size_t j = 0; j < tr.size(); ++j) {
      Xf.row(static_cast<Index>(j)) = X.row(tr[j]);
      yf(static_cast<Index>(j)) = y(tr[j]);
      cf(static_cast<Index>(j)) = c(tr[j]);
    }
    const LinearModel fm = svm_core(Xf, yf, cf, cfg.l2, iters);
    for (Index i : te)
      margins(i) = X.row(i).dot(fm.weights) + fm.bias;
  }
  model.calibration = platt_fit(margins, y);
  return model;
}

LinearModel train_linear(const LabeledSample& train, LabelSelector label,
                         const TrainerConfig& cfg) {
  return cfg.kind == TrainerKind::logistic ? train_logistic(train, label, cfg)
                                           : train_svm_platt(train, label, cfg);
}

CrossvalPool crossval_posteriors(const LabeledSample& train, LabelSelector label,
                                 const TrainerConfig& cfg, int k_folds) {
  const IntVector& y = labels_of(train, label);
  const Index n = train.rows();
  std::vector<Index> pos, neg;
  for (Index i = 0; i < n; ++i) (y(i) ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty())
    throw_data("single-class-input", "cross-validation needs both classes");

  CrossvalPool pool;
  if (pos.size() < 2 || neg.size() < 2) {
    const LinearModel m = train_linear(train, label, cfg);
    pool.posteriors = posterior(m, train.features);
    pool.folds_used = 0;
    pool.degenerate = true;
    return pool;
  }

  int k = std::max(2, std::min<int>(k_folds, static_cast<int>(n)));
  Rng rng(seed_chain({cfg.seed, 0x5f0c9d1bULL}));
  rng.shuffle(pos);
  rng.shuffle(neg);
  std::vector<int> fold(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < pos.size(); ++i)
    fold[static_cast<std::size_t>(pos[i])] = static_cast<int>(i % k);
  for (std::size_t i = 0; i < neg.size(); ++i)
    fold[static_cast<std::size_t>(neg[i])] = static_cast<int>(i % k);

  pool.posteriors.resize(n);
  for (int f = 0; f < k; ++f) {
    std::vector<Index> tr, te;
    for (Index i = 0; i < n; ++i)
      (fold[static_cast<std::size_t>(i)] == f ? te : tr).push_back(i);
    if (te.empty()) continue;
    const LabeledSample part = subset(train, tr);
    const LinearModel m = train_linear(part, label, cfg);
    const LabeledSample held = subset(train, te);
    const Vector p = posterior(m, held.features);
    for (std::size_t j = 0; j < te.size(); ++j) pool.posteriors(te[j]) = p(static_cast<Index>(j));
  }
  pool.folds_used = k;
  return pool;
}

RateEstimates crossval_rates(const LabeledSample& train, LabelSelector label,
                             const TrainerConfig& cfg, int k_folds, bool soft,
                             const CrossvalPool* pool) {
  CrossvalPool local;
  if (!pool) {
    local = crossval_posteriors(train, label, cfg, k_folds);
    pool = &local;
  }
  const IntVector& y = labels_of(train, label);
  double sum1 = 0.0, sum0 = 0.0;
  Index n1 = 0, n0 = 0;
  for (Index i = 0; i < y.size(); ++i) {
    const double p = pool->posteriors(i);
    const double v = soft ? p : (p >= 0.5 ? 1.0 : 0.0);
    if (y(i)) {
      sum1 += v;
      ++n1;
    } else {
      sum0 += v;
      ++n0;
    }
  }
  if (n1 == 0 || n0 == 0)
    throw_data("single-class-input", "rate estimation needs both classes");
  RateEstimates r;
  r.tpr = sum1 / static_cast<double>(n1);
  r.fpr = sum0 / static_cast<double>(n0);
  r.soft = soft;
  r.folds_used = pool->folds_used;
  r.degenerate = pool->degenerate;
  return r;
}

}  // namespace quantifair

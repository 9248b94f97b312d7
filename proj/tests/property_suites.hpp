#pragma once

// Fuzzed invariant checks shared by the unit suite and the acceptance gate.
// Each check runs `cases` independently seeded scenarios and returns
// std::nullopt when every one holds, or a description of the first violation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <tuple>
#include <string>
#include <vector>

#include "quantifair/dd.hpp"
#include "quantifair/dataset.hpp"
#include "quantifair/error.hpp"
#include "quantifair/linear_model.hpp"
#include "quantifair/protocols.hpp"
#include "quantifair/quantify.hpp"
#include "quantifair/rng.hpp"

namespace props {

using namespace quantifair;

constexpr Method kAllMethods[] = {Method::CC,  Method::PCC, Method::ACC,
                                  Method::PACC, Method::SLD, Method::HDy,
                                  Method::MLPE};

// Random two-group, two-label Gaussian sample with every (s, y) cell
// guaranteed at least 3 rows, so splits and per-class fits stay feasible.
inline LabeledSample fuzz_labeled(Rng& rng, Index n, Index dim) {
  n = std::max<Index>(n, 12);
  Index cells[4] = {3, 3, 3, 3};
  for (Index i = 12; i < n; ++i) ++cells[rng.uniform_int(4)];
  double mu[4][8];
  for (int c = 0; c < 4; ++c)
    for (Index d = 0; d < dim; ++d) mu[c][d] = 3.0 * (rng.uniform() - 0.5);

  LabeledSample out;
  out.features = Matrix(n, dim);
  IntVector sens(n), targ(n);
  Index row = 0;
  for (int c = 0; c < 4; ++c)
    for (Index k = 0; k < cells[c]; ++k, ++row) {
      sens(row) = c / 2;
      targ(row) = c % 2;
      for (Index d = 0; d < dim; ++d)
        out.features(row, d) = mu[c][d] + rng.normal();
    }
  out.sensitive = sens;
  out.target = targ;
  return out;
}

inline std::optional<std::string> violation(std::size_t case_id,
                                            const std::string& what) {
  std::ostringstream out;
  out << "case " << case_id << ": " << what;
  return out.str();
}

inline bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

// Every prevalence estimate, group acceptance rate, and interim SLD value
// stays inside [0,1]; the disparity equals the rate difference and stays in
// [-1,1].
inline std::optional<std::string> check_range(std::size_t cases) {
  for (std::size_t i = 0; i < cases; ++i) {
    Rng rng(seed_chain({0x9A46EULL, i}));
    const Index dim = 1 + static_cast<Index>(rng.uniform_int(3));
    const LabeledSample train =
        fuzz_labeled(rng, 40 + static_cast<Index>(rng.uniform_int(120)), dim);
    const LabeledSample test =
        fuzz_labeled(rng, 20 + static_cast<Index>(rng.uniform_int(80)), dim);

    TrainerConfig trainer;
    trainer.cv_folds = 5;
    FitCache cache;
    for (Method m : kAllMethods) {
      const Quantifier q = fit_quantifier(m, train, LabelSelector::sensitive,
                                          trainer, seed_chain({0xF17ULL, i}),
                                          &cache);
      const QuantifyOutcome o = quantify(q, test.features);
      if (!in_unit(o.prevalence.value))
        return violation(i, std::string(method_name(m)) + " estimate " +
                                std::to_string(o.prevalence.value));
      if (m == Method::SLD) {
        const SldResult r = quantify_sld(q, test.features);
        if (!in_unit(r.prevalence.value))
          return violation(i, "SLD estimate out of range");
        for (double p : r.trace.prevalence_path)
          if (!in_unit(p))
            return violation(i, "SLD path value " + std::to_string(p));
        for (Index k = 0; k < r.posteriors.size(); ++k)
          if (!in_unit(r.posteriors(k)))
            return violation(i, "SLD adjusted posterior out of range");
      }
    }

    RunOptions defaults;
    DDPipelineConfig cfg;
    cfg.method = kAllMethods[i % 5];
    cfg.seed = seed_chain({0xDDULL, i});
    cfg.options.trainer = trainer;
    const LinearModel h =
        train_linear(train, LabelSelector::target, defaults.audited_trainer);
    try {
      const DDEstimate e = estimate_dd(h, train, test.features, cfg);
      if (!in_unit(e.mu1) || !in_unit(e.mu0))
        return violation(i, "acceptance rate out of range");
      if (e.delta < -1.0 || e.delta > 1.0)
        return violation(i, "disparity out of range");
      if (e.delta != e.mu1 - e.mu0)
        return violation(i, "disparity is not the rate difference");
      if (!in_unit(e.prev_pos_s1) || !in_unit(e.prev_neg_s1) || !in_unit(e.pr_pos))
        return violation(i, "branch prevalence out of range");
    } catch (const Error&) {
      // An empty auxiliary branch makes the pipeline unfittable; the sweep
      // harness records that as a failure, not an estimate.
    }
  }
  return std::nullopt;
}

// Asking the counting estimators for the two class shares of the same sample
// must give values summing to exactly 1.
inline std::optional<std::string> check_complement(std::size_t cases) {
  for (std::size_t i = 0; i < cases; ++i) {
    Rng rng(seed_chain({0xC0117ULL, i}));
    const Index dim = 1 + static_cast<Index>(rng.uniform_int(3));
    const LabeledSample train =
        fuzz_labeled(rng, 30 + static_cast<Index>(rng.uniform_int(90)), dim);
    const LabeledSample test =
        fuzz_labeled(rng, 10 + static_cast<Index>(rng.uniform_int(60)), dim);

    TrainerConfig trainer;
    trainer.cv_folds = 5;
    FitCache cache;
    const Quantifier cc = fit_quantifier(Method::CC, train, LabelSelector::sensitive,
                                         trainer, seed_chain({1ULL, i}), &cache);
    const Quantifier pcc = fit_quantifier(Method::PCC, train,
                                          LabelSelector::sensitive, trainer,
                                          seed_chain({1ULL, i}), &cache);
    const double cc_sum = quantify_cc(cc, test.features, 1).value +
                          quantify_cc(cc, test.features, 0).value;
    if (std::abs(cc_sum - 1.0) > 1e-12)
      return violation(i, "CC shares sum to " + std::to_string(cc_sum));
    const double pcc_sum = quantify_pcc(pcc, test.features, 1).value +
                           quantify_pcc(pcc, test.features, 0).value;
    if (std::abs(pcc_sum - 1.0) > 1e-12)
      return violation(i, "PCC shares sum to " + std::to_string(pcc_sum));
  }
  return std::nullopt;
}

// Smoothing keeps its fixed points: matching estimate and control is inert,
// zero support returns the control, zero pseudocount returns the estimate,
// and the output never leaves the segment between the two inputs.
inline std::optional<std::string> check_smoothing(std::size_t cases) {
  const double counts[] = {0.0, 0.25, 0.5, 1.0, 2.0, 10.0};
  for (std::size_t i = 0; i < cases; ++i) {
    Rng rng(seed_chain({0x50071ULL, i}));
    const double p = rng.uniform();
    const double control = rng.uniform();
    const std::size_t n = rng.uniform_int(10001);
    const double pc = counts[rng.uniform_int(6)];
    const int ncls = 2 + static_cast<int>(rng.uniform_int(3));

    if (std::abs(laplace_smooth(control, n, control, pc, ncls) - control) > 1e-12)
      return violation(i, "matching control moved");
    if (laplace_smooth(p, 0, control, pc, ncls) != control)
      return violation(i, "zero support did not return the control");
    if (laplace_smooth(p, n > 0 ? n : 1, control, 0.0, ncls) != p)
      return violation(i, "zero pseudocount changed the estimate");
    const double s = laplace_smooth(p, n, control, pc, ncls);
    if (s < std::min(p, control) - 1e-12 || s > std::max(p, control) + 1e-12)
      return violation(i, "smoothed value left the input segment");
  }
  return std::nullopt;
}

constexpr Protocol kAllProtocols[] = {
    Protocol::sample_prev_d3_neg, Protocol::sample_prev_d3_pos,
    Protocol::sample_prev_d2_neg, Protocol::sample_prev_d2_pos,
    Protocol::sample_size_d2,     Protocol::sample_prev_d1,
    Protocol::flip_prev_d1};

inline ProtocolSpec fuzz_spec(Rng& rng, std::uint64_t base_seed, bool small) {
  ProtocolSpec spec;
  spec.protocol = kAllProtocols[rng.uniform_int(7)];
  const std::size_t grid_n = 1 + rng.uniform_int(small ? 2 : 3);
  if (spec.protocol == Protocol::sample_size_d2) {
    const double sizes[] = {12.0, 20.0, 33.0};
    for (std::size_t g = 0; g < grid_n; ++g) spec.parameter_grid.push_back(sizes[g]);
  } else {
    std::vector<double> pool = {0.1, 0.3, 0.5, 0.7, 0.9};
    rng.shuffle(pool);
    spec.parameter_grid.assign(pool.begin(),
                               pool.begin() + static_cast<long>(grid_n));
  }
  spec.n_splits = small ? 1 : 1 + static_cast<int>(rng.uniform_int(2));
  spec.n_repeats = small ? 1 : 1 + static_cast<int>(rng.uniform_int(2));
  spec.sample_size = 20 + static_cast<int>(rng.uniform_int(40));
  std::vector<Method> methods(kAllMethods, kAllMethods + 7);
  rng.shuffle(methods);
  methods.resize(1 + rng.uniform_int(small ? 2 : 3));
  spec.methods = methods;
  spec.base_seed = base_seed;
  return spec;
}

// The sweep always emits exactly grid x splits x 6 x repeats x methods
// records; failures are flagged rows, never silent gaps; and every method
// sees the same draw seed for the same loop cell.
inline std::optional<std::string> check_loop_counts(std::size_t cases) {
  for (std::size_t i = 0; i < cases; ++i) {
    Rng rng(seed_chain({0x10C0ULL, i}));
    const LabeledSample data =
        fuzz_labeled(rng, 140 + static_cast<Index>(rng.uniform_int(160)),
                     1 + static_cast<Index>(rng.uniform_int(2)));
    const ProtocolSpec spec = fuzz_spec(rng, seed_chain({0xBA5EULL, i}), false);
    RunOptions opts;
    opts.jobs = 1 + static_cast<int>(rng.uniform_int(3));
    opts.pipeline.trainer.cv_folds = 3;

    const std::vector<ErrorRecord> records = run_protocol(data, spec, opts);
    const std::size_t expected = spec.parameter_grid.size() *
                                 static_cast<std::size_t>(spec.n_splits) * 6 *
                                 static_cast<std::size_t>(spec.n_repeats) *
                                 spec.methods.size();
    if (records.size() != expected)
      return violation(i, "got " + std::to_string(records.size()) +
                              " records, expected " + std::to_string(expected));

    std::size_t tallied = 0;
    std::map<std::tuple<int, int, int, std::uint64_t>, std::multiset<Method>> cells;
    for (const ErrorRecord& r : records) {
      if (r.status == RecordStatus::ok || r.status == RecordStatus::flagged ||
          r.status == RecordStatus::failed)
        ++tallied;
      if (r.status == RecordStatus::failed && r.note.empty())
        return violation(i, "failed record without a reason");
      if (r.status == RecordStatus::flagged && r.note.empty())
        return violation(i, "flagged record without a flag");
      cells[{r.split_id, r.permutation_id, r.repeat_id, r.seed}].insert(r.method);
    }
    if (tallied != expected) return violation(i, "unknown record status");
    // One draw seed marks one loop cell, holding one record per method.
    if (cells.size() != expected / spec.methods.size())
      return violation(i, "draw seeds do not partition the loop cells");
    for (const auto& [cell, cell_methods] : cells) {
      if (cell_methods.size() != spec.methods.size())
        return violation(i, "methods saw different draws in one loop cell");
      for (Method m : spec.methods)
        if (cell_methods.count(m) != 1)
          return violation(i, "a method is missing from a loop cell");
    }
  }
  return std::nullopt;
}

inline bool same_record(const ErrorRecord& a, const ErrorRecord& b) {
  return a.protocol == b.protocol && a.parameter == b.parameter &&
         a.split_id == b.split_id && a.permutation_id == b.permutation_id &&
         a.repeat_id == b.repeat_id && a.method == b.method &&
         a.signed_error == b.signed_error && a.true_dd == b.true_dd &&
         a.estimated_dd == b.estimated_dd && a.seed == b.seed &&
         a.status == b.status && a.note == b.note;
}

// Identical spec and seed give bitwise-identical records no matter how many
// workers execute the loop.
inline std::optional<std::string> check_determinism(std::size_t cases) {
  for (std::size_t i = 0; i < cases; ++i) {
    Rng rng(seed_chain({0xDE7ULL, i}));
    const LabeledSample data =
        fuzz_labeled(rng, 140 + static_cast<Index>(rng.uniform_int(100)),
                     1 + static_cast<Index>(rng.uniform_int(2)));
    const ProtocolSpec spec = fuzz_spec(rng, seed_chain({0xBEEFULL, i}), true);
    RunOptions serial;
    serial.pipeline.trainer.cv_folds = 3;
    RunOptions parallel = serial;
    parallel.jobs = 2 + static_cast<int>(rng.uniform_int(6));

    const std::vector<ErrorRecord> a = run_protocol(data, spec, serial);
    const std::vector<ErrorRecord> b = run_protocol(data, spec, parallel);
    if (a.size() != b.size()) return violation(i, "record counts differ");
    for (std::size_t k = 0; k < a.size(); ++k)
      if (!same_record(a[k], b[k]))
        return violation(i, "record " + std::to_string(k) +
                                " differs between 1 and " +
                                std::to_string(parallel.jobs) + " workers");
  }
  return std::nullopt;
}

// The analytic gradient of the training objective matches central
// differences at random points, weights, and regularization strengths.
inline std::optional<std::string> check_gradients(std::size_t cases) {
  for (std::size_t i = 0; i < cases; ++i) {
    Rng rng(seed_chain({0x96ADULL, i}));
    const Index n = 10 + static_cast<Index>(rng.uniform_int(31));
    const Index dim = 1 + static_cast<Index>(rng.uniform_int(5));
    Matrix X(n, dim);
    for (Index r = 0; r < n; ++r)
      for (Index c = 0; c < dim; ++c) X(r, c) = 1.6 * rng.normal();
    IntVector y(n);
    const Index n1 = 1 + static_cast<Index>(rng.uniform_int(static_cast<std::uint64_t>(n - 1)));
    for (Index r = 0; r < n; ++r) y(r) = r < n1 ? 1 : 0;
    Vector cw(n);
    for (Index r = 0; r < n; ++r) cw(r) = 0.25 + 1.75 * rng.uniform();
    const double l2 = rng.uniform() < 0.2 ? 0.0 : 2.0 * rng.uniform();
    Vector w(dim);
    for (Index c = 0; c < dim; ++c) w(c) = 0.8 * rng.normal();
    const double bias = 0.5 * rng.normal();

    Vector grad_w(dim);
    double grad_b = 0.0;
    logistic_loss(X, y, cw, l2, w, bias, &grad_w, &grad_b);

    const Index j = static_cast<Index>(rng.uniform_int(dim + 1));
    const double h = 1e-6;
    double analytic = 0.0, lo = 0.0, hi = 0.0;
    if (j == dim) {
      analytic = grad_b;
      hi = logistic_loss(X, y, cw, l2, w, bias + h);
      lo = logistic_loss(X, y, cw, l2, w, bias - h);
    } else {
      analytic = grad_w(j);
      Vector wj = w;
      wj(j) = w(j) + h;
      hi = logistic_loss(X, y, cw, l2, wj, bias);
      wj(j) = w(j) - h;
      lo = logistic_loss(X, y, cw, l2, wj, bias);
    }
    const double numeric = (hi - lo) / (2.0 * h);
    if (std::abs(numeric - analytic) > 1e-5 * (1.0 + std::abs(analytic)))
      return violation(i, "gradient mismatch " + std::to_string(numeric) +
                              " vs " + std::to_string(analytic));
  }
  return std::nullopt;
}

}  // namespace props

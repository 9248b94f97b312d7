#include "quantifair/protocols.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <thread>
#include <tuple>

#include "quantifair/error.hpp"
#include "quantifair/rng.hpp"
#include "quantifair/stats.hpp"

namespace quantifair {

namespace {

constexpr int kPerms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                              {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};

bool is_prevalence_protocol(Protocol p) {
  return p != Protocol::sample_size_d2;
}

}  // namespace

std::vector<double> default_grid(Protocol p, Index d2_max_size) {
  std::vector<double> g;
  switch (p) {
    case Protocol::sample_prev_d3_neg:
    case Protocol::sample_prev_d3_pos:
    case Protocol::sample_prev_d1:
    case Protocol::flip_prev_d1:
      for (int i = 0; i <= 10; ++i) g.push_back(i / 10.0);
      break;
    case Protocol::sample_prev_d2_neg:
    case Protocol::sample_prev_d2_pos:
      for (int i = 1; i <= 9; ++i) g.push_back(i / 10.0);
      break;
    case Protocol::sample_size_d2: {
      const double hi = static_cast<double>(std::max<Index>(d2_max_size, 2));
      const double lo = std::max(2.0, std::min(1000.0, hi));
      for (int i = 0; i < 5; ++i) {
        const double t = static_cast<double>(i) / 4.0;
        g.push_back(static_cast<double>(
            round_half_up(std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo))))));
      }
      break;
    }
  }
  return g;
}

SplitTriple stratified_three_split(const LabeledSample& data, std::uint64_t seed) {
  if (!data.sensitive || !data.target)
    throw_data("missing-labels", "stratified split needs sensitive and target labels");
  std::vector<Index> cells[2][2];
  for (Index i = 0; i < data.rows(); ++i)
    cells[(*data.sensitive)(i)][(*data.target)(i)].push_back(i);
  Rng rng(seed);
  std::vector<Index> parts[3];
  for (int s = 0; s < 2; ++s)
    for (int y = 0; y < 2; ++y) {
      auto& cell = cells[s][y];
      if (cell.size() < 3)
        throw_data("cell-too-small", "(s=" + std::to_string(s) + ", y=" +
                                         std::to_string(y) + ") has " +
                                         std::to_string(cell.size()) + " rows");
      rng.shuffle(cell);
      for (std::size_t i = 0; i < cell.size(); ++i) parts[i % 3].push_back(cell[i]);
    }
  return {subset(data, parts[0]), subset(data, parts[1]), subset(data, parts[2])};
}

namespace {

std::vector<Index> draw(const std::vector<Index>& pool, std::size_t k, Rng& rng,
                        bool* with_replacement) {
  std::vector<Index> out;
  if (k == 0) return out;
  if (pool.empty())
    throw_data("empty-pool", "no rows to draw from");
  if (pool.size() >= k) {
    std::vector<Index> copy = pool;
    rng.shuffle(copy);
    out.assign(copy.begin(), copy.begin() + static_cast<long>(k));
  } else {
    if (with_replacement) *with_replacement = true;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i)
      out.push_back(pool[static_cast<std::size_t>(rng.uniform_int(pool.size()))]);
  }
  return out;
}

}  // namespace

LabeledSample sample_at_prevalence(const LabeledSample& source, LabelSelector label,
                                   double prev, int size, std::uint64_t seed,
                                   bool* with_replacement) {
  if (prev < 0.0 || prev > 1.0)
    throw_config("invalid-prevalence", std::to_string(prev));
  if (size <= 0) throw_config("invalid-size", std::to_string(size));
  if (with_replacement) *with_replacement = false;
  const IntVector& y = labels_of(source, label);
  std::vector<Index> pool1, pool0;
  for (Index i = 0; i < y.size(); ++i) (y(i) ? pool1 : pool0).push_back(i);
  const std::size_t n1 = static_cast<std::size_t>(
      round_half_up(prev * static_cast<double>(size)));
  const std::size_t n0 = static_cast<std::size_t>(size) - n1;
  Rng rng(seed);
  std::vector<Index> idx = draw(pool1, n1, rng, with_replacement);
  const std::vector<Index> zeros = draw(pool0, n0, rng, with_replacement);
  idx.insert(idx.end(), zeros.begin(), zeros.end());
  return subset(source, idx);
}

LabeledSample sample_uniform(const LabeledSample& source, int size,
                             std::uint64_t seed, bool* with_replacement) {
  if (size <= 0) throw_config("invalid-size", std::to_string(size));
  if (with_replacement) *with_replacement = false;
  std::vector<Index> pool(static_cast<std::size_t>(source.rows()));
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<Index>(i);
  Rng rng(seed);
  const std::vector<Index> idx =
      draw(pool, static_cast<std::size_t>(size), rng, with_replacement);
  return subset(source, idx);
}

LabeledSample sample_joint_ys(const LabeledSample& source, double p_equal, int size,
                              std::uint64_t seed, bool* with_replacement) {
  if (p_equal < 0.0 || p_equal > 1.0)
    throw_config("invalid-prevalence", std::to_string(p_equal));
  if (size <= 0) throw_config("invalid-size", std::to_string(size));
  if (with_replacement) *with_replacement = false;
  if (!source.sensitive || !source.target)
    throw_data("missing-labels", "joint sampling needs sensitive and target labels");
  std::vector<Index> eq, ne;
  for (Index i = 0; i < source.rows(); ++i)
    ((*source.sensitive)(i) == (*source.target)(i) ? eq : ne).push_back(i);
  const std::size_t n_eq = static_cast<std::size_t>(
      round_half_up(p_equal * static_cast<double>(size)));
  const std::size_t n_ne = static_cast<std::size_t>(size) - n_eq;
  Rng rng(seed);
  std::vector<Index> idx = draw(eq, n_eq, rng, with_replacement);
  const std::vector<Index> rest = draw(ne, n_ne, rng, with_replacement);
  idx.insert(idx.end(), rest.begin(), rest.end());
  return subset(source, idx);
}

LabeledSample flip_to_target(const LabeledSample& source, double p, int size,
                             std::uint64_t seed, bool* with_replacement,
                             int* flips_group1, int* flips_group0) {
  if (p < 0.0 || p > 1.0) throw_config("invalid-prevalence", std::to_string(p));
  if (with_replacement) *with_replacement = false;
  if (!source.sensitive || !source.target)
    throw_data("missing-labels", "flipping needs sensitive and target labels");
  Rng rng(seed);
  std::vector<Index> pool(static_cast<std::size_t>(source.rows()));
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<Index>(i);
  const std::vector<Index> idx =
      draw(pool, static_cast<std::size_t>(size), rng, with_replacement);
  LabeledSample out = subset(source, idx);

  IntVector& y = *out.target;
  const IntVector& s = *out.sensitive;
  // Within a group, move Pr(Y=1) to its target by flipping uniformly chosen
  // rows of the overrepresented label. Group 1 targets Pr(Y=1)=p, group 0
  // targets Pr(Y=0)=p.
  auto adjust = [&](int group, double target_pos_rate, int* flips_out) {
    std::vector<Index> members_pos, members_neg;
    for (Index i = 0; i < y.size(); ++i) {
      if (s(i) != group) continue;
      (y(i) ? members_pos : members_neg).push_back(i);
    }
    const std::size_t g = members_pos.size() + members_neg.size();
    if (g == 0) throw_data("empty-group", "group " + std::to_string(group) +
                                              " absent from the subsample");
    const long long want = round_half_up(target_pos_rate * static_cast<double>(g));
    long long have = static_cast<long long>(members_pos.size());
    int flips = 0;
    if (have < want) {
      rng.shuffle(members_neg);
      for (long long i = 0; i < want - have; ++i) {
        y(members_neg[static_cast<std::size_t>(i)]) = 1;
        ++flips;
      }
    } else if (have > want) {
      rng.shuffle(members_pos);
      for (long long i = 0; i < have - want; ++i) {
        y(members_pos[static_cast<std::size_t>(i)]) = 0;
        ++flips;
      }
    }
    if (flips_out) *flips_out = flips;
  };
  adjust(1, p, flips_group1);
  adjust(0, 1.0 - p, flips_group0);
  return out;
}

namespace {

struct MethodPipelines {
  std::vector<std::optional<DDPipeline>> pipes;
  std::vector<std::string> errors;
};

// Fit one pipeline per method over shared caches so identical underlying
// models are trained once.
MethodPipelines fit_all(const std::vector<Method>& methods,
                        const std::function<DDPipeline(const DDPipelineConfig&,
                                                       FitCache*, FitCache*)>& fit,
                        const PipelineOptions& options, std::uint64_t seed) {
  MethodPipelines mp;
  mp.pipes.resize(methods.size());
  mp.errors.resize(methods.size());
  FitCache cache_pos, cache_neg;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    DDPipelineConfig cfg;
    cfg.method = methods[m];
    cfg.options = options;
    cfg.seed = seed;
    try {
      mp.pipes[m].emplace(fit(cfg, &cache_pos, &cache_neg));
    } catch (const Error& e) {
      mp.errors[m] = e.what();
    }
  }
  return mp;
}

std::string join_flags(const std::vector<std::string>& flags) {
  std::string out;
  for (const auto& f : flags) {
    if (!out.empty()) out += ';';
    out += f;
  }
  return out;
}

std::vector<std::string> estimate_flags(const DDEstimate& est) {
  std::vector<std::string> flags;
  if (est.pos_branch_empty) flags.push_back("empty-pos-branch");
  if (est.neg_branch_empty) flags.push_back("empty-neg-branch");
  if (est.pos_quantifier_degenerate) flags.push_back("degenerate-pos-quantifier");
  if (est.neg_quantifier_degenerate) flags.push_back("degenerate-neg-quantifier");
  if (est.degenerate) flags.push_back("degenerate-acceptance");
  return flags;
}

struct ItemContext {
  const ProtocolSpec* spec;
  const RunOptions* opts;
  const std::vector<double>* grid;
  const SplitTriple* split;
  int split_id;
  int perm_id;
};

std::vector<ErrorRecord> run_item(const ItemContext& ctx) {
  const ProtocolSpec& spec = *ctx.spec;
  const RunOptions& opts = *ctx.opts;
  const std::vector<double>& grid = *ctx.grid;
  const LabeledSample* parts[3] = {&ctx.split->a, &ctx.split->b, &ctx.split->c};
  const LabeledSample& d1 = *parts[kPerms[ctx.perm_id][0]];
  const LabeledSample& d2 = *parts[kPerms[ctx.perm_id][1]];
  const LabeledSample& d3 = *parts[kPerms[ctx.perm_id][2]];

  std::vector<ErrorRecord> records;
  records.reserve(static_cast<std::size_t>(spec.n_repeats) * grid.size() *
                  spec.methods.size());

  auto base_record = [&](double param, int repeat, Method m, std::uint64_t seed) {
    ErrorRecord r;
    r.protocol = spec.protocol;
    r.parameter = param;
    r.split_id = ctx.split_id;
    r.permutation_id = ctx.perm_id;
    r.repeat_id = repeat;
    r.method = m;
    r.seed = seed;
    return r;
  };
  auto emit_ok = [&](double param, int repeat, Method m, std::uint64_t seed,
                     double est, double truth, std::vector<std::string> flags) {
    ErrorRecord r = base_record(param, repeat, m, seed);
    r.estimated_dd = est;
    r.true_dd = truth;
    r.signed_error = est - truth;
    r.status = flags.empty() ? RecordStatus::ok : RecordStatus::flagged;
    r.note = join_flags(flags);
    records.push_back(std::move(r));
  };
  auto emit_fail = [&](double param, int repeat, Method m, std::uint64_t seed,
                       const std::string& reason) {
    ErrorRecord r = base_record(param, repeat, m, seed);
    r.status = RecordStatus::failed;
    r.note = reason;
    records.push_back(std::move(r));
  };

  TrainerConfig audited = opts.audited_trainer;
  audited.seed = seed_chain({spec.base_seed, 0xAD17ULL,
                             static_cast<std::uint64_t>(ctx.split_id),
                             static_cast<std::uint64_t>(ctx.perm_id)});

  const Protocol proto = spec.protocol;
  const bool d3_protocol = proto == Protocol::sample_prev_d3_neg ||
                           proto == Protocol::sample_prev_d3_pos;
  const bool d2_prev_protocol = proto == Protocol::sample_prev_d2_neg ||
                                proto == Protocol::sample_prev_d2_pos;
  const bool d1_protocol =
      proto == Protocol::sample_prev_d1 || proto == Protocol::flip_prev_d1;

  if (d3_protocol || d2_prev_protocol || proto == Protocol::sample_size_d2) {
    const LinearModel h = train_linear(d1, LabelSelector::target, audited);
    const BranchParts parts2 = partition_by_prediction(h, d2);
    const BranchParts parts3 = partition_by_prediction(h, d3);
    const std::uint64_t fit_seed =
        seed_chain({spec.base_seed, 0xF17ULL, static_cast<std::uint64_t>(ctx.split_id),
                    static_cast<std::uint64_t>(ctx.perm_id)});

    if (d3_protocol) {
      // Quantifiers depend only on the permutation; fit them once.
      MethodPipelines mp = fit_all(
          spec.methods,
          [&](const DDPipelineConfig& cfg, FitCache* cp, FitCache* cn) {
            return DDPipeline::fit_branches(parts2.pos, parts2.neg, cfg, cp, cn);
          },
          opts.pipeline, fit_seed);
      const bool vary_neg = proto == Protocol::sample_prev_d3_neg;
      for (int rep = 0; rep < spec.n_repeats; ++rep) {
        for (std::size_t gi = 0; gi < grid.size(); ++gi) {
          const double p = grid[gi];
          const std::uint64_t rec_seed = seed_chain(
              {spec.base_seed, static_cast<std::uint64_t>(ctx.split_id),
               static_cast<std::uint64_t>(ctx.perm_id),
               static_cast<std::uint64_t>(rep), static_cast<std::uint64_t>(gi)});
          LabeledSample varied, other;
          bool wr_varied = false, wr_other = false;
          double truth = 0.0;
          std::string draw_error;
          try {
            varied = sample_at_prevalence(vary_neg ? parts3.neg : parts3.pos,
                                          LabelSelector::sensitive, p,
                                          spec.sample_size,
                                          seed_chain({rec_seed, 1}), &wr_varied);
            other = sample_uniform(vary_neg ? parts3.pos : parts3.neg,
                                   spec.sample_size, seed_chain({rec_seed, 2}),
                                   &wr_other);
            const LabeledSample& pos_s = vary_neg ? other : varied;
            const LabeledSample& neg_s = vary_neg ? varied : other;
            truth = true_dd_from_branches(*pos_s.sensitive, *neg_s.sensitive);
          } catch (const Error& e) {
            draw_error = e.what();
          }
          for (std::size_t m = 0; m < spec.methods.size(); ++m) {
            if (!draw_error.empty()) {
              emit_fail(p, rep, spec.methods[m], rec_seed, draw_error);
              continue;
            }
            if (!mp.pipes[m]) {
              emit_fail(p, rep, spec.methods[m], rec_seed, mp.errors[m]);
              continue;
            }
            const LabeledSample& pos_s = vary_neg ? other : varied;
            const LabeledSample& neg_s = vary_neg ? varied : other;
            try {
              const DDEstimate est =
                  mp.pipes[m]->estimate(pos_s.features, neg_s.features);
              std::vector<std::string> flags = estimate_flags(est);
              if (wr_varied || wr_other) flags.push_back("with-replacement");
              emit_ok(p, rep, spec.methods[m], rec_seed, est.delta, truth,
                      std::move(flags));
            } catch (const Error& e) {
              emit_fail(p, rep, spec.methods[m], rec_seed, e.what());
            }
          }
        }
      }
      return records;
    }

    // The remaining sweeps evaluate the full test branches against a truth
    // that is fixed for the permutation.
    std::string truth_error;
    double truth = 0.0;
    try {
      truth = true_dd(h, d3);
    } catch (const Error& e) {
      truth_error = e.what();
    }
    const bool vary_neg = proto == Protocol::sample_prev_d2_neg;
    for (int rep = 0; rep < spec.n_repeats; ++rep) {
      for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        const double p = grid[gi];
        const std::uint64_t rec_seed = seed_chain(
            {spec.base_seed, static_cast<std::uint64_t>(ctx.split_id),
             static_cast<std::uint64_t>(ctx.perm_id),
             static_cast<std::uint64_t>(rep), static_cast<std::uint64_t>(gi)});
        if (!truth_error.empty()) {
          for (Method m : spec.methods) emit_fail(p, rep, m, rec_seed, truth_error);
          continue;
        }
        bool wr_a = false, wr_b = false;
        std::string draw_error;
        MethodPipelines mp;
        if (d2_prev_protocol) {
          LabeledSample varied2, other2;
          try {
            varied2 = sample_at_prevalence(vary_neg ? parts2.neg : parts2.pos,
                                           LabelSelector::sensitive, p,
                                           spec.sample_size,
                                           seed_chain({rec_seed, 1}), &wr_a);
            other2 = sample_uniform(vary_neg ? parts2.pos : parts2.neg,
                                    spec.sample_size, seed_chain({rec_seed, 2}),
                                    &wr_b);
          } catch (const Error& e) {
            draw_error = e.what();
          }
          if (draw_error.empty()) {
            const LabeledSample& pos_s = vary_neg ? other2 : varied2;
            const LabeledSample& neg_s = vary_neg ? varied2 : other2;
            mp = fit_all(
                spec.methods,
                [&](const DDPipelineConfig& cfg, FitCache* cp, FitCache* cn) {
                  return DDPipeline::fit_branches(pos_s, neg_s, cfg, cp, cn);
                },
                opts.pipeline, seed_chain({rec_seed, 3}));
          }
        } else {  // sample_size_d2
          LabeledSample d2s;
          try {
            d2s = sample_uniform(d2, static_cast<int>(p),
                                 seed_chain({rec_seed, 1}), &wr_a);
          } catch (const Error& e) {
            draw_error = e.what();
          }
          if (draw_error.empty()) {
            mp = fit_all(
                spec.methods,
                [&](const DDPipelineConfig& cfg, FitCache* cp, FitCache* cn) {
                  return DDPipeline::fit(h, d2s, cfg, cp, cn);
                },
                opts.pipeline, seed_chain({rec_seed, 3}));
          }
        }
        for (std::size_t m = 0; m < spec.methods.size(); ++m) {
          if (!draw_error.empty()) {
            emit_fail(p, rep, spec.methods[m], rec_seed, draw_error);
            continue;
          }
          if (!mp.pipes[m]) {
            emit_fail(p, rep, spec.methods[m], rec_seed, mp.errors[m]);
            continue;
          }
          try {
            const DDEstimate est =
                mp.pipes[m]->estimate(parts3.pos.features, parts3.neg.features);
            std::vector<std::string> flags = estimate_flags(est);
            if (wr_a || wr_b) flags.push_back("with-replacement");
            emit_ok(p, rep, spec.methods[m], rec_seed, est.delta, truth,
                    std::move(flags));
          } catch (const Error& e) {
            emit_fail(p, rep, spec.methods[m], rec_seed, e.what());
          }
        }
      }
    }
    return records;
  }

  // Training-set sweeps: the audited model itself is refit at every cell.
  if (d1_protocol) {
    for (int rep = 0; rep < spec.n_repeats; ++rep) {
      for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        const double p = grid[gi];
        const std::uint64_t rec_seed = seed_chain(
            {spec.base_seed, static_cast<std::uint64_t>(ctx.split_id),
             static_cast<std::uint64_t>(ctx.perm_id),
             static_cast<std::uint64_t>(rep), static_cast<std::uint64_t>(gi)});
        bool wr = false;
        std::string cell_error;
        double truth = 0.0;
        double param = p;
        MethodPipelines mp;
        BranchParts parts3;
        try {
          LabeledSample d1s;
          if (proto == Protocol::sample_prev_d1) {
            d1s = sample_joint_ys(d1, p, spec.sample_size,
                                  seed_chain({rec_seed, 1}), &wr);
          } else {
            d1s = flip_to_target(d1, p, spec.sample_size,
                                 seed_chain({rec_seed, 1}), &wr);
          }
          TrainerConfig cell_trainer = audited;
          cell_trainer.seed = seed_chain({rec_seed, 2});
          const LinearModel h = train_linear(d1s, LabelSelector::target, cell_trainer);
          parts3 = partition_by_prediction(h, d3);
          truth = true_dd(h, d3);
          if (proto == Protocol::flip_prev_d1) {
            // The x axis for this sweep is the realized disparity, binned.
            param = static_cast<double>(round_half_up(truth * 10.0)) / 10.0;
          }
          mp = fit_all(
              spec.methods,
              [&](const DDPipelineConfig& cfg, FitCache* cp, FitCache* cn) {
                return DDPipeline::fit(h, d2, cfg, cp, cn);
              },
              opts.pipeline, seed_chain({rec_seed, 3}));
        } catch (const Error& e) {
          cell_error = e.what();
        }
        for (std::size_t m = 0; m < spec.methods.size(); ++m) {
          if (!cell_error.empty()) {
            emit_fail(param, rep, spec.methods[m], rec_seed, cell_error);
            continue;
          }
          if (!mp.pipes[m]) {
            emit_fail(param, rep, spec.methods[m], rec_seed, mp.errors[m]);
            continue;
          }
          try {
            const DDEstimate est =
                mp.pipes[m]->estimate(parts3.pos.features, parts3.neg.features);
            std::vector<std::string> flags = estimate_flags(est);
            if (wr) flags.push_back("with-replacement");
            emit_ok(param, rep, spec.methods[m], rec_seed, est.delta, truth,
                    std::move(flags));
          } catch (const Error& e) {
            emit_fail(param, rep, spec.methods[m], rec_seed, e.what());
          }
        }
      }
    }
    return records;
  }

  throw_runtime("unhandled-protocol", protocol_name(proto));
}

void validate_spec(const ProtocolSpec& spec, const LabeledSample& dataset) {
  if (spec.methods.empty()) throw_config("invalid-spec", "no methods listed");
  if (spec.n_splits < 1 || spec.n_repeats < 1)
    throw_config("invalid-spec", "splits and repeats must be positive");
  if (spec.sample_size < 1) throw_config("invalid-spec", "sample size must be positive");
  if (auto issue = validate_sample(dataset)) throw_data(issue->code, issue->detail);
  if (!dataset.sensitive || !dataset.target)
    throw_data("missing-labels", "protocol runs need sensitive and target labels");
  const bool d2_prev = spec.protocol == Protocol::sample_prev_d2_neg ||
                       spec.protocol == Protocol::sample_prev_d2_pos;
  for (double v : spec.parameter_grid) {
    if (is_prevalence_protocol(spec.protocol)) {
      if (v < 0.0 || v > 1.0)
        throw_config("invalid-spec", "prevalence grid value " + std::to_string(v));
      if (d2_prev && (v <= 0.0 || v >= 1.0))
        throw_config("invalid-spec",
                     "auxiliary-set prevalence grid excludes the endpoints");
    } else if (v < 2.0) {
      throw_config("invalid-spec", "size grid value " + std::to_string(v));
    }
  }
}

std::vector<SplitTriple> make_splits(const LabeledSample& dataset,
                                     const ProtocolSpec& spec) {
  std::vector<SplitTriple> splits;
  splits.reserve(static_cast<std::size_t>(spec.n_splits));
  for (int s = 0; s < spec.n_splits; ++s)
    splits.push_back(stratified_three_split(
        dataset,
        seed_chain({spec.base_seed, 0x5317ULL, static_cast<std::uint64_t>(s)})));
  return splits;
}

std::vector<double> resolve_grid(const ProtocolSpec& spec,
                                 const std::vector<SplitTriple>& splits) {
  if (!spec.parameter_grid.empty()) return spec.parameter_grid;
  Index min_part = std::numeric_limits<Index>::max();
  for (const auto& t : splits)
    min_part = std::min({min_part, t.a.rows(), t.b.rows(), t.c.rows()});
  return default_grid(spec.protocol, min_part);
}

template <typename Fn>
void run_items_parallel(int n_items, int jobs, Fn&& fn) {
  if (jobs <= 1) {
    for (int i = 0; i < n_items; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(
      static_cast<std::size_t>(std::min(jobs, n_items)));
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < errors.size(); ++t) {
    pool.emplace_back([&, t]() {
      try {
        int i;
        while ((i = next.fetch_add(1)) < n_items) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

std::vector<ErrorRecord> run_protocol(const LabeledSample& dataset,
                                      const ProtocolSpec& spec,
                                      const RunOptions& opts) {
  validate_spec(spec, dataset);
  const std::vector<SplitTriple> splits = make_splits(dataset, spec);
  const std::vector<double> grid = resolve_grid(spec, splits);
  if (grid.empty()) throw_config("invalid-spec", "empty parameter grid");

  const int n_items = spec.n_splits * 6;
  std::vector<std::vector<ErrorRecord>> chunks(static_cast<std::size_t>(n_items));
  run_items_parallel(n_items, opts.jobs, [&](int i) {
    ItemContext ctx;
    ctx.spec = &spec;
    ctx.opts = &opts;
    ctx.grid = &grid;
    ctx.split_id = i / 6;
    ctx.perm_id = i % 6;
    ctx.split = &splits[static_cast<std::size_t>(ctx.split_id)];
    chunks[static_cast<std::size_t>(i)] = run_item(ctx);
  });

  std::vector<ErrorRecord> records;
  for (auto& c : chunks)
    records.insert(records.end(), std::make_move_iterator(c.begin()),
                   std::make_move_iterator(c.end()));
  return records;
}

const char* significance_name(Significance s) {
  switch (s) {
    case Significance::best: return "best";
    case Significance::plain: return "plain";
    case Significance::dagger: return "dagger";
    case Significance::ddagger: return "ddagger";
  }
  return "?";
}

std::vector<AggregateRow> aggregate(const std::vector<ErrorRecord>& records,
                                    const std::string& dataset_name) {
  using Key = std::tuple<int, int, int, double>;
  struct Acc {
    std::map<Key, double> abs_by_key;
    std::vector<double> abs_err, sq_err;
  };
  std::map<Method, Acc> by_method;
  for (const auto& r : records) {
    if (r.status == RecordStatus::failed) continue;
    Acc& a = by_method[r.method];
    const double ae = std::abs(r.signed_error);
    a.abs_by_key[{r.split_id, r.permutation_id, r.repeat_id, r.parameter}] = ae;
    a.abs_err.push_back(ae);
    a.sq_err.push_back(r.signed_error * r.signed_error);
  }
  if (by_method.empty()) return {};

  static constexpr Method kOrder[] = {Method::CC,  Method::PCC, Method::ACC,
                                      Method::PACC, Method::SLD, Method::HDy,
                                      Method::MLPE};
  std::vector<AggregateRow> rows;
  for (Method m : kOrder) {
    auto it = by_method.find(m);
    if (it == by_method.end()) continue;
    AggregateRow row;
    row.dataset = dataset_name;
    row.method = m;
    row.count = it->second.abs_err.size();
    row.mae = mean_of(it->second.abs_err);
    row.mae_std = stddev_of(it->second.abs_err);
    row.mse = mean_of(it->second.sq_err);
    row.mse_std = stddev_of(it->second.sq_err);
    std::size_t lt01 = 0, lt02 = 0;
    for (double ae : it->second.abs_err) {
      if (ae < 0.1) ++lt01;
      if (ae < 0.2) ++lt02;
    }
    row.p_ae_lt_01 = static_cast<double>(lt01) / static_cast<double>(row.count);
    row.p_ae_lt_02 = static_cast<double>(lt02) / static_cast<double>(row.count);
    rows.push_back(std::move(row));
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].mae < rows[best].mae) best = i;
  rows[best].significance = Significance::best;
  const Acc& best_acc = by_method.at(rows[best].method);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i == best) continue;
    const Acc& acc = by_method.at(rows[i].method);
    std::vector<double> a, b;
    for (const auto& [key, ae] : acc.abs_by_key) {
      auto jt = best_acc.abs_by_key.find(key);
      if (jt == best_acc.abs_by_key.end()) continue;
      a.push_back(ae);
      b.push_back(jt->second);
    }
    double p = 1.0;
    if (a.size() >= 2) p = paired_ttest(a, b);
    rows[i].significance = p <= 0.001 ? Significance::plain
                           : p < 0.05 ? Significance::dagger
                                      : Significance::ddagger;
  }
  return rows;
}

std::vector<DecouplingRow> run_decoupling(const LabeledSample& dataset,
                                          const ProtocolSpec& spec,
                                          const RunOptions& opts) {
  const Protocol proto = spec.protocol;
  const bool d3_sweep = proto == Protocol::sample_prev_d3_neg ||
                        proto == Protocol::sample_prev_d3_pos;
  const bool d2_sweep = proto == Protocol::sample_prev_d2_neg ||
                        proto == Protocol::sample_prev_d2_pos;
  if (!d3_sweep && !d2_sweep)
    throw_config("invalid-spec",
                 "decoupling applies to the prevalence sweeps of the auxiliary or "
                 "test set only");
  for (Method m : spec.methods)
    if (m == Method::HDy || m == Method::MLPE)
      throw_config("not-applicable-method",
                   std::string(method_name(m)) + " has no per-instance reading");
  validate_spec(spec, dataset);
  const std::vector<SplitTriple> splits = make_splits(dataset, spec);
  const std::vector<double> grid = resolve_grid(spec, splits);

  const bool vary_neg = proto == Protocol::sample_prev_d3_neg ||
                        proto == Protocol::sample_prev_d2_neg;
  struct Cell {
    double mae = 0.0, acc = 0.0, f1 = 0.0;
    std::size_t count = 0;
  };
  const int n_items = spec.n_splits * 6;
  std::vector<std::vector<Cell>> chunk(
      static_cast<std::size_t>(n_items),
      std::vector<Cell>(spec.methods.size() * grid.size()));

  run_items_parallel(n_items, opts.jobs, [&](int item) {
    const int split_id = item / 6;
    const int perm_id = item % 6;
    const SplitTriple& tri = splits[static_cast<std::size_t>(split_id)];
    const LabeledSample* parts[3] = {&tri.a, &tri.b, &tri.c};
    const LabeledSample& d1 = *parts[kPerms[perm_id][0]];
    const LabeledSample& d2 = *parts[kPerms[perm_id][1]];
    const LabeledSample& d3 = *parts[kPerms[perm_id][2]];

    TrainerConfig audited = opts.audited_trainer;
    audited.seed = seed_chain({spec.base_seed, 0xAD17ULL,
                               static_cast<std::uint64_t>(split_id),
                               static_cast<std::uint64_t>(perm_id)});
    const LinearModel h = train_linear(d1, LabelSelector::target, audited);
    const BranchParts parts2 = partition_by_prediction(h, d2);
    const BranchParts parts3 = partition_by_prediction(h, d3);
    const LabeledSample& aux_branch = vary_neg ? parts2.neg : parts2.pos;
    const LabeledSample& test_branch = vary_neg ? parts3.neg : parts3.pos;

    auto cell_at = [&](std::size_t m, std::size_t gi) -> Cell& {
      return chunk[static_cast<std::size_t>(item)][m * grid.size() + gi];
    };

    if (d3_sweep) {
      // One quantifier per method, evaluated on varied test draws.
      std::vector<std::optional<Quantifier>> qs(spec.methods.size());
      FitCache cache;
      for (std::size_t m = 0; m < spec.methods.size(); ++m) {
        try {
          const LabeledSample& train = opts.pipeline.split_by_prediction
                                           ? aux_branch
                                           : d2;
          qs[m] = fit_quantifier(spec.methods[m], train, LabelSelector::sensitive,
                                 opts.pipeline.trainer,
                                 seed_chain({spec.base_seed, 0xF17ULL,
                                             static_cast<std::uint64_t>(split_id),
                                             static_cast<std::uint64_t>(perm_id)}),
                                 &cache, opts.pipeline.quantifier);
        } catch (const Error&) {
        }
      }
      for (int rep = 0; rep < spec.n_repeats; ++rep)
        for (std::size_t gi = 0; gi < grid.size(); ++gi) {
          const std::uint64_t rec_seed = seed_chain(
              {spec.base_seed, static_cast<std::uint64_t>(split_id),
               static_cast<std::uint64_t>(perm_id), static_cast<std::uint64_t>(rep),
               static_cast<std::uint64_t>(gi)});
          bool wr = false;
          LabeledSample drawn;
          try {
            drawn = sample_at_prevalence(test_branch, LabelSelector::sensitive,
                                         grid[gi], spec.sample_size,
                                         seed_chain({rec_seed, 1}), &wr);
          } catch (const Error&) {
            continue;
          }
          for (std::size_t m = 0; m < spec.methods.size(); ++m) {
            if (!qs[m]) continue;
            try {
              const DecouplingMetrics dm = decoupling_metrics(*qs[m], drawn);
              Cell& c = cell_at(m, gi);
              c.mae += dm.mae;
              c.acc += dm.accuracy;
              c.f1 += dm.f1;
              ++c.count;
            } catch (const Error&) {
            }
          }
        }
      return;
    }

    // Auxiliary sweep: refit on each varied auxiliary draw, evaluate on the
    // full matching test branch.
    for (int rep = 0; rep < spec.n_repeats; ++rep)
      for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        const std::uint64_t rec_seed = seed_chain(
            {spec.base_seed, static_cast<std::uint64_t>(split_id),
             static_cast<std::uint64_t>(perm_id), static_cast<std::uint64_t>(rep),
             static_cast<std::uint64_t>(gi)});
        bool wr = false;
        LabeledSample drawn;
        try {
          drawn = sample_at_prevalence(aux_branch, LabelSelector::sensitive,
                                       grid[gi], spec.sample_size,
                                       seed_chain({rec_seed, 1}), &wr);
        } catch (const Error&) {
          continue;
        }
        LabeledSample pooled;
        const LabeledSample* train = &drawn;
        if (!opts.pipeline.split_by_prediction) {
          bool wr2 = false;
          try {
            const LabeledSample other =
                sample_uniform(vary_neg ? parts2.pos : parts2.neg,
                               spec.sample_size, seed_chain({rec_seed, 2}), &wr2);
            pooled = concat(drawn, other);
            train = &pooled;
          } catch (const Error&) {
            continue;
          }
        }
        FitCache cache;
        for (std::size_t m = 0; m < spec.methods.size(); ++m) {
          try {
            const Quantifier q = fit_quantifier(
                spec.methods[m], *train, LabelSelector::sensitive,
                opts.pipeline.trainer, seed_chain({rec_seed, 3}), &cache,
                opts.pipeline.quantifier);
            const DecouplingMetrics dm = decoupling_metrics(q, test_branch);
            Cell& c = cell_at(m, gi);
            c.mae += dm.mae;
            c.acc += dm.accuracy;
            c.f1 += dm.f1;
            ++c.count;
          } catch (const Error&) {
          }
        }
      }
  });

  std::vector<DecouplingRow> rows;
  for (std::size_t m = 0; m < spec.methods.size(); ++m)
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
      DecouplingRow row;
      row.protocol = proto;
      row.method = spec.methods[m];
      row.parameter = grid[gi];
      double mae = 0.0, acc = 0.0, f1 = 0.0;
      std::size_t count = 0;
      for (int item = 0; item < n_items; ++item) {
        const Cell& c = chunk[static_cast<std::size_t>(item)][m * grid.size() + gi];
        mae += c.mae;
        acc += c.acc;
        f1 += c.f1;
        count += c.count;
      }
      if (count > 0) {
        row.mae = mae / static_cast<double>(count);
        row.accuracy = acc / static_cast<double>(count);
        row.f1 = f1 / static_cast<double>(count);
      }
      row.count = count;
      rows.push_back(row);
    }
  return rows;
}

}  // namespace quantifair

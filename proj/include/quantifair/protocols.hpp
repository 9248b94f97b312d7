#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "quantifair/dd.hpp"
#include "quantifair/types.hpp"

namespace quantifair {

struct ProtocolSpec {
  Protocol protocol = Protocol::sample_prev_d3_neg;
  std::vector<double> parameter_grid;  // empty selects the protocol default
  int n_splits = 2;
  int n_repeats = 3;
  int sample_size = 500;
  std::vector<Method> methods;
  std::uint64_t base_seed = 0;
};

// Default x-axis grids: prevalence sweeps over {0.0,...,1.0} (the auxiliary
// sweep avoids the degenerate extremes and uses {0.1,...,0.9}); the size
// sweep is five geometrically spaced sizes from min(1000, max) to max.
std::vector<double> default_grid(Protocol p, Index d2_max_size);

struct SplitTriple {
  LabeledSample a, b, c;
};

// Deals every (sensitive, target) cell round-robin into three parts after a
// seeded shuffle, so the parts have near-identical joint label statistics.
// Each cell must have at least 3 members.
SplitTriple stratified_three_split(const LabeledSample& data, std::uint64_t seed);

// Draws round(size*prev) rows from the class-1 pool of the chosen label and
// the rest from the class-0 pool, each uniformly without replacement. A pool
// smaller than its quota is drawn with replacement instead and
// *with_replacement is set. An empty-but-needed pool is an error.
LabeledSample sample_at_prevalence(const LabeledSample& source, LabelSelector label,
                                   double prev, int size, std::uint64_t seed,
                                   bool* with_replacement);

LabeledSample sample_uniform(const LabeledSample& source, int size,
                             std::uint64_t seed, bool* with_replacement);

// Controls Pr(target == sensitive): round(size*p_equal) rows come from the
// agreeing pool, the rest from the disagreeing pool.
LabeledSample sample_joint_ys(const LabeledSample& source, double p_equal, int size,
                              std::uint64_t seed, bool* with_replacement);

// Uniform subsample of `size`, then target labels are flipped (uniformly
// chosen within the group) until Pr(Y=1|S=1) = p and Pr(Y=0|S=0) = p hold
// exactly under round-half-up counting.
LabeledSample flip_to_target(const LabeledSample& source, double p, int size,
                             std::uint64_t seed, bool* with_replacement,
                             int* flips_group1 = nullptr, int* flips_group0 = nullptr);

struct RunOptions {
  PipelineOptions pipeline;
  TrainerConfig audited_trainer;  // the model under audit; balanced by default
  int jobs = 1;
  RunOptions() { audited_trainer.weighting = ClassWeighting::balanced; }
};

// Executes the protocol's full loop nest (splits x 6 permutations x repeats x
// grid x methods) and returns one record per cell. Sampling seeds derive only
// from (base_seed, split, permutation, repeat, grid index), so all methods see
// the same draws and reruns reproduce records exactly regardless of jobs.
// Failures of one method on one draw become failed records, not aborts.
std::vector<ErrorRecord> run_protocol(const LabeledSample& dataset,
                                      const ProtocolSpec& spec,
                                      const RunOptions& opts);

enum class Significance { best, plain, dagger, ddagger };
const char* significance_name(Significance s);

struct AggregateRow {
  std::string dataset;
  Method method{};
  std::size_t count = 0;
  double mae = 0.0, mae_std = 0.0;
  double mse = 0.0, mse_std = 0.0;
  double p_ae_lt_01 = 0.0, p_ae_lt_02 = 0.0;
  Significance significance = Significance::plain;
};

// Per-method summary of non-failed records. Significance compares each
// method's absolute errors with the lowest-MAE method's by paired two-tailed
// t-test over records matched on (split, permutation, repeat, parameter):
// dagger for 0.001 < p < 0.05, ddagger for p >= 0.05, plain for p <= 0.001.
std::vector<AggregateRow> aggregate(const std::vector<ErrorRecord>& records,
                                    const std::string& dataset_name);

struct DecouplingRow {
  Protocol protocol{};
  Method method{};
  double parameter = 0.0;
  double mae = 0.0;
  double accuracy = 0.0;
  double f1 = 0.0;
  std::size_t count = 0;
};

// Branch-level quantification error versus individual classification quality
// along a prevalence sweep. Only the sweeps with a varied branch make sense
// here: sample-prev-d2-neg/pos (quantifier trained on the varied branch,
// evaluated on the full matching test branch) and sample-prev-d3-neg/pos
// (quantifier trained once, evaluated on the varied test branch). Rows are
// averages over splits, permutations, and repeats.
std::vector<DecouplingRow> run_decoupling(const LabeledSample& dataset,
                                          const ProtocolSpec& spec,
                                          const RunOptions& opts);

}  // namespace quantifair

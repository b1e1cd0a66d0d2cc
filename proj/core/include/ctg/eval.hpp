#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctg/strategies.hpp"

namespace ctg::eval {

/// Binary error flags per gap (1 = filled incorrectly), r responses per gap.
struct ResponseSet {
  std::vector<std::vector<int>> gaps;

  std::string to_json() const;
  static ResponseSet from_json(const std::string& text);
};

/// Fraction of incorrect responses over m * r. By default every gap must have
/// the same response count; `allow_ragged` switches to a response-weighted
/// mean instead.
double observed_difficulty(const ResponseSet& responses, std::size_t m,
                           bool allow_ragged = false);

/// One scored C-test: the distance is |tau - tau*| against human responses or
/// |tau - tau_hat| in simulation mode.
struct EvalRecord {
  std::string strategy;
  double tau = 0.0;
  double distance = 0.0;
};

struct StrategyCell {
  std::string strategy;
  std::string tau;  // formatted value or "all"
  double mu = 0.0;
  double sigma = 0.0;  // sample standard deviation, 0 when fewer than 2 records
  std::size_t count = 0;
};

struct BenchRow {
  std::string encoding;
  double mu = 0.0;
  double sigma = 0.0;
  double max = 0.0;
  double min = 0.0;
  std::size_t n_limit = 0;  // runs that hit a limit, excluded from the stats
};

struct EvaluationReport {
  std::vector<StrategyCell> strategy_cells;
  std::vector<BenchRow> bench_rows;

  /// "strategy,tau,mu,sigma"
  std::string strategy_csv() const;
  /// "encoding,mu,sigma,max,min,n_limit"
  std::string bench_csv() const;
};

/// Per-(strategy, tau) mean and sample deviation of the distances, plus an
/// "all" row per strategy.
EvaluationReport compare_strategies(const std::vector<EvalRecord>& records);

struct BenchInstance {
  const feat::Instance* instance = nullptr;
  const feat::FeatureTables* tables = nullptr;
};

struct BenchOptions {
  std::vector<mip::ObjectiveEncoding> encodings = {
      mip::ObjectiveEncoding::Epigraph, mip::ObjectiveEncoding::MinMax,
      mip::ObjectiveEncoding::Indicator, mip::ObjectiveEncoding::Pwl};
  std::size_t m = 0;  // 0: min(n/2, 20)
  solver::SolveOptions solve;
  double pwl_kink_shift = 0.0;  // fault-injection hook, see mip::BuildOptions
};

/// Solves every instance under every encoding, timing only the solve call.
/// Optimal objectives must agree across encodings within 1e-6 per instance,
/// otherwise the run aborts with an Error.
EvaluationReport bench_objectives(const std::vector<BenchInstance>& instances,
                                  const model::TreeEnsemble& ensemble,
                                  const std::vector<double>& taus,
                                  const BenchOptions& opts = {});

struct VariabilityRow {
  std::string strategy;
  double tau = 0.0;
  double mean_edit_distance = 0.0;
};

/// Mean edit distance per strategy over a grid of target difficulties,
/// averaged across texts; emitted as "strategy,tau,mean_edit_distance".
std::vector<VariabilityRow> variability_report(const std::vector<BenchInstance>& texts,
                                               const model::TreeEnsemble& ensemble,
                                               const std::vector<double>& tau_grid,
                                               const std::vector<std::string>& strategies,
                                               std::size_t m,
                                               const solver::SolveOptions& solve = {});
std::string variability_csv(const std::vector<VariabilityRow>& rows);

/// Synthetic stand-in for human responses: a separate learner model scores
/// each gap and error flags are drawn by thresholding uniform deviates
/// against the clamped prediction. Clearly synthetic, but reproducible.
ResponseSet simulate_responses(const feat::Instance& instance,
                               const feat::FeatureTables& tables,
                               const model::TreeEnsemble& learner,
                               const strat::GenerationResult& result, std::size_t r,
                               std::uint64_t seed);

}  // namespace ctg::eval

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ctg/corpus.hpp"
#include "ctg/features.hpp"
#include "ctg/mip.hpp"
#include "ctg/model.hpp"
#include "ctg/solver.hpp"

namespace ctg::strat {

enum class SizeRule { CeilHalf, FloorHalf };

/// Default gap size: the second half of the word, rounded up (or down).
int default_gap_size(int word_length, SizeRule rule = SizeRule::CeilHalf);

struct GenerationRequest {
  std::string strategy = "mip";  // stat | sel | size | mip | external
  double tau = 0.5;
  std::size_t m = 20;
  SizeRule size_rule = SizeRule::CeilHalf;
  /// SIZE stops on the step that crosses the target; setting this false keeps
  /// the last step before the crossing instead.
  bool size_keep_crossing = true;
  mip::BuildOptions build;
  solver::SolveOptions solve;
  std::string external_path;  // for strategy "external"
};

struct SolverSummary {
  std::string status;
  double bound = 0.0;
  std::uint64_t nodes = 0;
  double time_s = 0.0;
};

struct GenerationResult {
  corpus::CTest ctest;
  std::vector<double> per_gap_pred;  // aligned with ctest.gaps
  double tau = 0.0;
  double tau_hat = 0.0;
  double objective = 0.0;  // |tau - tau_hat|
  std::string strategy;
  bool proven_optimal = false;
  std::optional<SolverSummary> solver;
};

/// Gaps at every second candidate at the default size.
corpus::CTest generate_static(const feat::Instance& instance, std::size_t m,
                              SizeRule rule = SizeRule::CeilHalf);

/// Placement-only baseline: scores every candidate at the default size (in a
/// layout where all candidates are gaps), then alternates between the easier
/// and harder sides of the target, closest first.
GenerationResult generate_sel(const feat::Instance& instance,
                              const feat::FeatureTables& tables,
                              const model::TreeEnsemble& ensemble,
                              const GenerationRequest& req);

/// Size-only baseline: static placement, then per-gap size steps toward the
/// target until it is reached or the size range is exhausted.
GenerationResult generate_size(const feat::Instance& instance,
                               const feat::FeatureTables& tables,
                               const model::TreeEnsemble& ensemble,
                               const GenerationRequest& req);

/// Joint placement+size optimization through the embedded-model program.
GenerationResult generate_mip(const feat::Instance& instance,
                              const feat::FeatureTables& tables,
                              const model::TreeEnsemble& ensemble,
                              const GenerationRequest& req);

/// Evaluation-only wrapper for externally produced C-test JSON files.
GenerationResult evaluate_external(const feat::Instance& instance,
                                   const feat::FeatureTables& tables,
                                   const model::TreeEnsemble& ensemble,
                                   const GenerationRequest& req);

/// Dispatch by request.strategy.
GenerationResult generate(const feat::Instance& instance, const feat::FeatureTables& tables,
                          const model::TreeEnsemble& ensemble, const GenerationRequest& req);

/// Total number of characters turned into gaps.
int edit_distance(const corpus::CTest& ctest);

/// Per-gap predictions (ordered by candidate) and their mean for an explicit
/// selection, evaluated by direct assembly against the original ensemble.
std::pair<std::vector<double>, double> evaluate_selection(
    const feat::Instance& instance, const feat::FeatureTables& tables,
    const model::TreeEnsemble& ensemble, const std::vector<std::uint8_t>& selected,
    const std::vector<int>& sizes, std::size_t m);

/// C-test JSON extended with tau / tau_hat / objective / strategy /
/// per_gap_pred and, for the solver-backed strategy, solver statistics
/// (wall time excluded; it is reported on the console instead).
std::string result_to_json(const GenerationResult& result);
GenerationResult result_from_json(const std::string& text,
                                  const corpus::CandidatePolicy& policy = {});

}  // namespace ctg::strat

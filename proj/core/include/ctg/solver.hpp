#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "ctg/mip.hpp"

namespace ctg::solver {

struct SolveOptions {
  double time_limit_s = 0.0;        // 0 = unlimited
  double gap_tolerance = 1e-9;      // absolute optimality gap
  std::uint64_t node_limit = 0;     // 0 = unlimited
  std::string branching = "widest"; // "widest" | "lex"
  int threads = 1;
  std::ostream* log = nullptr;
  std::uint64_t log_every = 0;      // nodes between log lines, 0 = silent
};

enum class SolveStatus { Optimal, Feasible, Infeasible, Limit };

const char* to_string(SolveStatus s);

struct SolveStats {
  std::uint64_t nodes = 0;
  double wall_s = 0.0;
};

struct Solution {
  SolveStatus status = SolveStatus::Infeasible;
  double objective = std::numeric_limits<double>::infinity();
  double bound = 0.0;
  double tau_hat = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::uint8_t> selected;  // per candidate
  std::vector<int> sizes;              // valid where selected
  std::vector<double> assignment;      // full model assignment (solve only)
  SolveStats stats;

  /// {"status", "objective", "bound", "nodes", "time_s"}
  std::string stats_json() const;
};

/// Branch-and-bound over placement and size decisions. Bounds come from
/// interval predictions of the reduced per-(i, j) ensembles under placement
/// count ranges implied by the partial assignment; nodes whose bound cannot
/// beat the incumbent are cut off. Single-threaded runs are deterministic;
/// multi-threaded runs return the same objective value.
Solution solve(const mip::MipModel& model, const mip::VarMap& map,
               const feat::Instance& instance, const model::TreeEnsemble& ensemble,
               double tau, const SolveOptions& opts = {});

/// Admissible lower bound on the objective over all completions of a partial
/// assignment. `state[i]` is -1 (undecided), 0 (excluded) or a chosen gap
/// size. This is the bound the search uses at its nodes; it never exceeds
/// the best completion's objective.
double partial_bound(const mip::MipModel& model, const mip::VarMap& map,
                     const feat::Instance& instance, const std::vector<int>& state,
                     double tau);

/// Exhaustive oracle: enumerates every placement of m gaps and every size
/// combination, evaluating estimated difficulty by direct feature assembly
/// and prediction. Ties resolve to the lexicographically first witness.
/// Throws TooLargeError when the evaluation count exceeds `eval_cap`.
Solution brute_force(const feat::Instance& instance, const feat::FeatureTables& tables,
                     const model::TreeEnsemble& ensemble, double tau, std::size_t m,
                     std::uint64_t eval_cap = 10'000'000,
                     const feat::FeatureSchema& schema = feat::FeatureSchema::standard());

/// Unsigned arbitrary-precision integer, just enough for combinatorics.
class BigUint {
 public:
  BigUint() : limbs_{0} {}
  explicit BigUint(std::uint64_t v);

  static BigUint binomial(unsigned n, unsigned k);

  void multiply(std::uint32_t f);
  void divide_exact(std::uint32_t d);

  bool fits_uint64() const;
  std::uint64_t as_uint64() const;  // valid when fits_uint64()
  std::string to_string() const;

  friend bool operator==(const BigUint& a, const BigUint& b) { return a.limbs_ == b.limbs_; }

 private:
  std::vector<std::uint32_t> limbs_;  // little-endian base 2^32
};

/// Exact binomial coefficient C(n, m); DomainError when m > n.
BigUint count_placements(unsigned n, unsigned m);

struct Violation {
  std::string where;
  std::string kind;  // "row" | "bound" | "integrality" | "indicator"
  double amount = 0.0;
};

struct VerificationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

/// Checks every linear row, variable bound, integrality requirement and
/// indicator implication of `model` against a full assignment.
VerificationReport verify(const mip::MipModel& model, const std::vector<double>& assignment,
                          double tolerance = 1e-9);

}  // namespace ctg::solver

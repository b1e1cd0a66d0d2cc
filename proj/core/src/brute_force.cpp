#include <chrono>
#include <cmath>
#include <numeric>

#include "ctg/solver.hpp"

// Exhaustive reference for small instances. Evaluation goes through
// assemble_vector + predict on the original ensemble, independent of the
// reduced per-(i, j) ensembles the branch-and-bound search uses.

namespace ctg::solver {

namespace {

// elementary symmetric sum e_m over the per-candidate size counts, i.e. the
// exact number of (placement, sizes) combinations; computed in double, which
// is exact below 2^53 and only compared against the cap
double total_evaluations(const std::vector<int>& size_counts, std::size_t m) {
  std::vector<double> e(m + 1, 0.0);
  e[0] = 1.0;
  for (int c : size_counts) {
    for (std::size_t k = e.size() - 1; k >= 1; --k)
      e[k] += e[k - 1] * static_cast<double>(c);
  }
  return e[m];
}

}  // namespace

Solution brute_force(const feat::Instance& instance, const feat::FeatureTables& tables,
                     const model::TreeEnsemble& ensemble, double tau, std::size_t m,
                     std::uint64_t eval_cap, const feat::FeatureSchema& schema) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n = instance.n();
  if (m < 1 || m > n) throw DomainError("gap count out of range");

  std::vector<int> size_counts(n);
  for (std::size_t i = 0; i < n; ++i) size_counts[i] = instance.word_length(i) - 1;
  const double total = total_evaluations(size_counts, m);
  if (!(total <= static_cast<double>(eval_cap))) {
    BigUint placements = count_placements(static_cast<unsigned>(n), static_cast<unsigned>(m));
    throw TooLargeError(placements.to_string(),
                        "exhaustive search over " + placements.to_string() +
                            " placements exceeds the evaluation cap of " +
                            std::to_string(eval_cap));
  }

  Solution best;
  best.status = SolveStatus::Optimal;
  std::uint64_t evals = 0;

  std::vector<std::size_t> comb(m);
  std::iota(comb.begin(), comb.end(), 0);
  std::vector<std::uint8_t> sel(n, 0);
  std::vector<int> sizes(m, 1);
  std::vector<std::vector<double>> pred(m);

  auto evaluate_placement = [&]() {
    for (std::size_t p = 0; p < m; ++p) sel[comb[p]] = 1;
    for (std::size_t p = 0; p < m; ++p) {
      const std::size_t i = comb[p];
      pred[p].assign(static_cast<std::size_t>(size_counts[i]), 0.0);
      for (int j = 1; j <= size_counts[i]; ++j) {
        feat::FeatureVector x = feat::assemble_vector(instance, tables, i, j, sel, schema);
        pred[p][static_cast<std::size_t>(j - 1)] = model::predict(ensemble, x);
      }
    }
    // odometer over the size tuple, rightmost digit fastest
    std::fill(sizes.begin(), sizes.end(), 1);
    bool more = true;
    while (more) {
      double acc = 0.0;
      for (std::size_t p = 0; p < m; ++p)
        acc += pred[p][static_cast<std::size_t>(sizes[p] - 1)];
      const double that = acc / static_cast<double>(m);
      const double obj = std::fabs(tau - that);
      ++evals;
      if (obj < best.objective) {
        best.objective = obj;
        best.tau_hat = that;
        best.selected = sel;
        best.sizes.assign(n, 0);
        for (std::size_t p = 0; p < m; ++p) best.sizes[comb[p]] = sizes[p];
      }
      more = false;
      for (std::size_t d = m; d-- > 0;) {
        if (sizes[d] < size_counts[comb[d]]) {
          ++sizes[d];
          std::fill(sizes.begin() + static_cast<long>(d) + 1, sizes.end(), 1);
          more = true;
          break;
        }
      }
    }
    for (std::size_t p = 0; p < m; ++p) sel[comb[p]] = 0;
  };

  // lexicographic enumeration of index combinations
  while (true) {
    evaluate_placement();
    bool advanced = false;
    for (std::size_t d = m; d-- > 0;) {
      if (comb[d] < n - m + d) {
        ++comb[d];
        for (std::size_t p = d + 1; p < m; ++p) comb[p] = comb[p - 1] + 1;
        advanced = true;
        break;
      }
    }
    if (!advanced) break;
  }

  best.stats.nodes = evals;
  best.stats.wall_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  best.bound = best.objective;
  return best;
}

}  // namespace ctg::solver

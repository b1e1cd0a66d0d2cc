#include "ctg/eval.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "json.hpp"

namespace ctg::eval {

namespace {

std::string num(double v) {
  std::array<char, 64> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

std::pair<double, double> mean_sd(const std::vector<double>& xs) {
  if (std::all_of(xs.begin(), xs.end(), [&](double v) { return v == xs.front(); }))
    return {xs.front(), 0.0};
  const double n = static_cast<double>(xs.size());
  double mu = 0.0;
  for (double x : xs) mu += x;
  mu /= n;
  if (xs.size() < 2) return {mu, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mu) * (x - mu);
  return {mu, std::sqrt(ss / (n - 1.0))};
}

}  // namespace

std::string ResponseSet::to_json() const {
  nlohmann::ordered_json j;
  j["gaps"] = gaps;
  return j.dump();
}

ResponseSet ResponseSet::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("/", e.what());
  }
  if (!j.contains("gaps") || !j["gaps"].is_array())
    throw SchemaError("/gaps", "missing or non-array");
  ResponseSet out;
  out.gaps = j["gaps"].get<std::vector<std::vector<int>>>();
  for (std::size_t g = 0; g < out.gaps.size(); ++g) {
    for (int v : out.gaps[g]) {
      if (v != 0 && v != 1)
        throw SchemaError("/gaps/" + std::to_string(g), "flags must be 0 or 1");
    }
  }
  return out;
}

double observed_difficulty(const ResponseSet& responses, std::size_t m, bool allow_ragged) {
  if (responses.gaps.empty() || responses.gaps.size() != m)
    throw DomainError("responses must cover exactly m gaps");
  std::size_t r = responses.gaps.front().size();
  std::size_t total = 0, errors = 0;
  for (const auto& gap : responses.gaps) {
    if (gap.empty()) throw EmptyInputError("gap without responses");
    if (!allow_ragged && gap.size() != r)
      throw DomainError("ragged response counts (enable the weighted mean to allow)");
    total += gap.size();
    for (int v : gap) errors += static_cast<std::size_t>(v);
  }
  return static_cast<double>(errors) / static_cast<double>(total);
}

std::string EvaluationReport::strategy_csv() const {
  std::ostringstream out;
  out << "strategy,tau,mu,sigma\n";
  for (const StrategyCell& c : strategy_cells)
    out << c.strategy << ',' << c.tau << ',' << num(c.mu) << ',' << num(c.sigma) << "\n";
  return out.str();
}

std::string EvaluationReport::bench_csv() const {
  std::ostringstream out;
  out << "encoding,mu,sigma,max,min,n_limit\n";
  for (const BenchRow& r : bench_rows)
    out << r.encoding << ',' << num(r.mu) << ',' << num(r.sigma) << ',' << num(r.max) << ','
        << num(r.min) << ',' << r.n_limit << "\n";
  return out.str();
}

EvaluationReport compare_strategies(const std::vector<EvalRecord>& records) {
  std::map<std::pair<std::string, double>, std::vector<double>> cells;
  std::map<std::string, std::vector<double>> totals;
  for (const EvalRecord& r : records) {
    cells[{r.strategy, r.tau}].push_back(r.distance);
    totals[r.strategy].push_back(r.distance);
  }
  EvaluationReport report;
  for (const auto& [key, xs] : cells) {
    auto [mu, sd] = mean_sd(xs);
    report.strategy_cells.push_back({key.first, num(key.second), mu, sd, xs.size()});
  }
  for (const auto& [strategy, xs] : totals) {
    auto [mu, sd] = mean_sd(xs);
    report.strategy_cells.push_back({strategy, "all", mu, sd, xs.size()});
  }
  return report;
}

EvaluationReport bench_objectives(const std::vector<BenchInstance>& instances,
                                  const model::TreeEnsemble& ensemble,
                                  const std::vector<double>& taus,
                                  const BenchOptions& opts) {
  EvaluationReport report;
  std::map<std::string, std::vector<double>> seconds;
  std::map<std::string, std::size_t> limits;

  for (const BenchInstance& bi : instances) {
    const std::size_t n = bi.instance->n();
    const std::size_t m = opts.m > 0 ? opts.m : std::min<std::size_t>(n / 2, 20);
    for (double tau : taus) {
      std::vector<std::pair<std::string, double>> optima;
      for (mip::ObjectiveEncoding enc : opts.encodings) {
        mip::BuildOptions build;
        build.encoding = enc;
        build.pwl_kink_shift = opts.pwl_kink_shift;
        auto [model_, map] = mip::build(*bi.instance, *bi.tables, ensemble, tau, m, build);
        const auto t0 = std::chrono::steady_clock::now();
        solver::Solution sol =
            solver::solve(model_, map, *bi.instance, ensemble, tau, opts.solve);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (sol.status == solver::SolveStatus::Optimal) {
          seconds[to_string(enc)].push_back(secs);
          optima.emplace_back(to_string(enc), sol.objective);
        } else {
          ++limits[to_string(enc)];
        }
      }
      if (optima.size() > 1) {
        auto [lo, hi] = std::minmax_element(
            optima.begin(), optima.end(),
            [](const auto& a, const auto& b) { return a.second < b.second; });
        if (hi->second - lo->second > 1e-6) {
          throw Error("objective encodings disagree: " + lo->first + "=" + num(lo->second) +
                      " vs " + hi->first + "=" + num(hi->second));
        }
      }
    }
  }
  for (mip::ObjectiveEncoding enc : opts.encodings) {
    const std::string name = to_string(enc);
    BenchRow row;
    row.encoding = name;
    row.n_limit = limits.count(name) ? limits[name] : 0;
    auto it = seconds.find(name);
    if (it != seconds.end() && !it->second.empty()) {
      auto [mu, sd] = mean_sd(it->second);
      row.mu = mu;
      row.sigma = sd;
      row.max = *std::max_element(it->second.begin(), it->second.end());
      row.min = *std::min_element(it->second.begin(), it->second.end());
    }
    report.bench_rows.push_back(row);
  }
  return report;
}

std::vector<VariabilityRow> variability_report(const std::vector<BenchInstance>& texts,
                                               const model::TreeEnsemble& ensemble,
                                               const std::vector<double>& tau_grid,
                                               const std::vector<std::string>& strategies,
                                               std::size_t m,
                                               const solver::SolveOptions& solve) {
  if (texts.empty()) throw DomainError("variability report needs at least one text");
  std::vector<VariabilityRow> rows;
  for (const std::string& strategy : strategies) {
    for (double tau : tau_grid) {
      double acc = 0.0;
      for (const BenchInstance& bi : texts) {
        strat::GenerationRequest req;
        req.strategy = strategy;
        req.tau = tau;
        req.m = m;
        req.solve = solve;
        strat::GenerationResult res = strat::generate(*bi.instance, *bi.tables, ensemble, req);
        acc += static_cast<double>(strat::edit_distance(res.ctest));
      }
      rows.push_back({strategy, tau, acc / static_cast<double>(texts.size())});
    }
  }
  return rows;
}

std::string variability_csv(const std::vector<VariabilityRow>& rows) {
  std::ostringstream out;
  out << "strategy,tau,mean_edit_distance\n";
  for (const VariabilityRow& r : rows)
    out << r.strategy << ',' << num(r.tau) << ',' << num(r.mean_edit_distance) << "\n";
  return out.str();
}

ResponseSet simulate_responses(const feat::Instance& instance,
                               const feat::FeatureTables& tables,
                               const model::TreeEnsemble& learner,
                               const strat::GenerationResult& result, std::size_t r,
                               std::uint64_t seed) {
  if (r < 1) throw DomainError("need at least one response per gap");
  std::vector<std::uint8_t> selected(instance.n(), 0);
  std::vector<int> sizes(instance.n(), 0);
  for (const corpus::Gap& g : result.ctest.gaps) {
    selected[g.candidate_index] = 1;
    sizes[g.candidate_index] = g.size;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  ResponseSet out;
  for (const corpus::Gap& g : result.ctest.gaps) {
    feat::FeatureVector x =
        feat::assemble_vector(instance, tables, g.candidate_index, g.size, selected);
    const double p = model::predict_clamped(learner, x);
    std::vector<int> flags(r);
    for (std::size_t k = 0; k < r; ++k) flags[k] = uniform(rng) < p ? 1 : 0;
    out.gaps.push_back(std::move(flags));
  }
  (void)sizes;
  return out;
}

}  // namespace ctg::eval

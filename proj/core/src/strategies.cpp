#include "ctg/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace ctg::strat {

int default_gap_size(int word_length, SizeRule rule) {
  if (word_length < 2) throw DomainError("word too short for a gap");
  int j = rule == SizeRule::CeilHalf ? (word_length + 1) / 2 : word_length / 2;
  return std::clamp(j, 1, word_length - 1);
}

std::pair<std::vector<double>, double> evaluate_selection(
    const feat::Instance& instance, const feat::FeatureTables& tables,
    const model::TreeEnsemble& ensemble, const std::vector<std::uint8_t>& selected,
    const std::vector<int>& sizes, std::size_t m) {
  std::vector<double> preds;
  double acc = 0.0;
  for (std::size_t i = 0; i < instance.n(); ++i) {
    if (!selected[i]) continue;
    feat::FeatureVector x = feat::assemble_vector(instance, tables, i, sizes[i], selected);
    double p = model::predict(ensemble, x);
    preds.push_back(p);
    acc += p;
  }
  return {std::move(preds), acc / static_cast<double>(m)};
}

namespace {

corpus::CTest to_ctest(const feat::Instance& instance,
                       const std::vector<std::uint8_t>& selected,
                       const std::vector<int>& sizes) {
  corpus::CTest ct;
  ct.document = instance.doc;
  ct.candidates = instance.candidates;
  for (std::size_t i = 0; i < instance.n(); ++i) {
    if (selected[i]) ct.gaps.push_back(corpus::make_gap(instance.candidates, i, sizes[i]));
  }
  return ct;
}

GenerationResult finish(const feat::Instance& instance, const feat::FeatureTables& tables,
                        const model::TreeEnsemble& ensemble, const GenerationRequest& req,
                        const std::vector<std::uint8_t>& selected,
                        const std::vector<int>& sizes, const std::string& strategy) {
  GenerationResult out;
  out.ctest = to_ctest(instance, selected, sizes);
  auto [preds, that] = evaluate_selection(instance, tables, ensemble, selected, sizes, req.m);
  out.per_gap_pred = std::move(preds);
  out.tau = req.tau;
  out.tau_hat = that;
  out.objective = std::fabs(req.tau - that);
  out.strategy = strategy;
  return out;
}

std::vector<std::size_t> static_positions(const feat::Instance& instance, std::size_t m) {
  if (instance.n() < 2 * m)
    throw NotEnoughCandidatesError("need at least " + std::to_string(2 * m) +
                                   " candidates for the static layout, have " +
                                   std::to_string(instance.n()));
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i < instance.n() && out.size() < m; i += 2) out.push_back(i);
  return out;
}

}  // namespace

corpus::CTest generate_static(const feat::Instance& instance, std::size_t m, SizeRule rule) {
  std::vector<std::uint8_t> selected(instance.n(), 0);
  std::vector<int> sizes(instance.n(), 0);
  for (std::size_t i : static_positions(instance, m)) {
    selected[i] = 1;
    sizes[i] = default_gap_size(instance.word_length(i), rule);
  }
  return to_ctest(instance, selected, sizes);
}

GenerationResult generate_sel(const feat::Instance& instance,
                              const feat::FeatureTables& tables,
                              const model::TreeEnsemble& ensemble,
                              const GenerationRequest& req) {
  const std::size_t n = instance.n();
  if (req.m > n)
    throw NotEnoughCandidatesError("cannot place " + std::to_string(req.m) + " gaps among " +
                                   std::to_string(n) + " candidates");

  // score every candidate at the default size, all candidates gapped
  std::vector<std::uint8_t> all(n, 1);
  std::vector<double> score(n);
  for (std::size_t i = 0; i < n; ++i) {
    int j = default_gap_size(instance.word_length(i), req.size_rule);
    feat::FeatureVector x = feat::assemble_vector(instance, tables, i, j, all);
    score[i] = model::predict(ensemble, x);
  }

  std::vector<std::size_t> easier, harder;  // ties count as easier
  for (std::size_t i = 0; i < n; ++i) (score[i] <= req.tau ? easier : harder).push_back(i);
  auto by_distance = [&](std::size_t a, std::size_t b) {
    double da = std::fabs(score[a] - req.tau), db = std::fabs(score[b] - req.tau);
    if (da != db) return da < db;
    return a < b;
  };
  std::sort(easier.begin(), easier.end(), by_distance);
  std::sort(harder.begin(), harder.end(), by_distance);

  std::vector<std::uint8_t> selected(n, 0);
  std::vector<int> sizes(n, 0);
  std::size_t ei = 0, hi = 0;
  bool pick_easier = true;
  for (std::size_t picked = 0; picked < req.m; ++picked) {
    std::size_t i;
    if (pick_easier && ei < easier.size())
      i = easier[ei++];
    else if (hi < harder.size())
      i = harder[hi++];
    else
      i = easier[ei++];  // the other set ran dry
    selected[i] = 1;
    sizes[i] = default_gap_size(instance.word_length(i), req.size_rule);
    pick_easier = !pick_easier;
  }
  return finish(instance, tables, ensemble, req, selected, sizes, "sel");
}

GenerationResult generate_size(const feat::Instance& instance,
                               const feat::FeatureTables& tables,
                               const model::TreeEnsemble& ensemble,
                               const GenerationRequest& req) {
  const std::size_t n = instance.n();
  std::vector<std::uint8_t> selected(n, 0);
  std::vector<int> sizes(n, 0);
  std::vector<std::size_t> placed = static_positions(instance, req.m);
  for (std::size_t i : placed) {
    selected[i] = 1;
    sizes[i] = default_gap_size(instance.word_length(i), req.size_rule);
  }

  auto predict_at = [&](std::size_t i, int j) {
    feat::FeatureVector x = feat::assemble_vector(instance, tables, i, j, selected);
    return model::predict(ensemble, x);
  };

  for (std::size_t i : placed) {
    const int jm = instance.word_length(i) - 1;
    int j = sizes[i];
    double p = predict_at(i, j);
    if (p < req.tau) {
      bool crossed = false;
      while (p < req.tau && j < jm) {
        p = predict_at(i, ++j);
        crossed = p >= req.tau;
      }
      if (crossed && !req.size_keep_crossing && j > 1) --j;
    } else if (p > req.tau) {
      bool crossed = false;
      while (p > req.tau && j > 1) {
        p = predict_at(i, --j);
        crossed = p <= req.tau;
      }
      if (crossed && !req.size_keep_crossing && j < jm) ++j;
    }
    sizes[i] = j;
  }
  return finish(instance, tables, ensemble, req, selected, sizes, "size");
}

GenerationResult generate_mip(const feat::Instance& instance,
                              const feat::FeatureTables& tables,
                              const model::TreeEnsemble& ensemble,
                              const GenerationRequest& req) {
  if (req.m > instance.n())
    throw NotEnoughCandidatesError("cannot place " + std::to_string(req.m) + " gaps among " +
                                   std::to_string(instance.n()) + " candidates");
  auto [model_, map] = mip::build(instance, tables, ensemble, req.tau, req.m, req.build);
  solver::Solution sol =
      solver::solve(model_, map, instance, ensemble, req.tau, req.solve);
  if (sol.status == solver::SolveStatus::Infeasible)
    throw DomainError("the requested constraints admit no feasible placement");

  GenerationResult out =
      finish(instance, tables, ensemble, req, sol.selected, sol.sizes, "mip");
  out.proven_optimal = sol.status == solver::SolveStatus::Optimal;
  SolverSummary s;
  s.status = solver::to_string(sol.status);
  s.bound = sol.bound;
  s.nodes = sol.stats.nodes;
  s.time_s = sol.stats.wall_s;
  out.solver = s;
  return out;
}

GenerationResult evaluate_external(const feat::Instance& instance,
                                   const feat::FeatureTables& tables,
                                   const model::TreeEnsemble& ensemble,
                                   const GenerationRequest& req) {
  std::ifstream in(req.external_path, std::ios::binary);
  if (!in) throw IoError("cannot open external C-test: " + req.external_path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  corpus::CTest ct = corpus::parse_ctest(text);

  std::vector<std::uint8_t> selected(instance.n(), 0);
  std::vector<int> sizes(instance.n(), 0);
  for (const corpus::Gap& g : ct.gaps) {
    selected[g.candidate_index] = 1;
    sizes[g.candidate_index] = g.size;
  }
  GenerationRequest local = req;
  local.m = ct.gaps.size();
  GenerationResult out =
      finish(instance, tables, ensemble, local, selected, sizes, "external");
  return out;
}

GenerationResult generate(const feat::Instance& instance, const feat::FeatureTables& tables,
                          const model::TreeEnsemble& ensemble,
                          const GenerationRequest& req) {
  if (req.strategy == "stat") {
    corpus::CTest ct = generate_static(instance, req.m, req.size_rule);
    std::vector<std::uint8_t> selected(instance.n(), 0);
    std::vector<int> sizes(instance.n(), 0);
    for (const corpus::Gap& g : ct.gaps) {
      selected[g.candidate_index] = 1;
      sizes[g.candidate_index] = g.size;
    }
    return finish(instance, tables, ensemble, req, selected, sizes, "stat");
  }
  if (req.strategy == "sel") return generate_sel(instance, tables, ensemble, req);
  if (req.strategy == "size") return generate_size(instance, tables, ensemble, req);
  if (req.strategy == "mip") return generate_mip(instance, tables, ensemble, req);
  if (req.strategy == "external") return evaluate_external(instance, tables, ensemble, req);
  throw DomainError("unknown strategy: " + req.strategy);
}

int edit_distance(const corpus::CTest& ctest) {
  int total = 0;
  for (const corpus::Gap& g : ctest.gaps) total += g.size;
  return total;
}

std::string result_to_json(const GenerationResult& result) {
  nlohmann::ordered_json j =
      nlohmann::ordered_json::parse(corpus::serialize_ctest(result.ctest, result.strategy,
                                                            result.tau));
  j["tau"] = result.tau;
  j["tau_hat"] = result.tau_hat;
  j["objective"] = result.objective;
  j["strategy"] = result.strategy;
  j["per_gap_pred"] = result.per_gap_pred;
  if (result.solver) {
    // wall time is deliberately left out so identical runs write identical bytes
    j["solver"] = {{"status", result.solver->status},
                   {"bound", result.solver->bound},
                   {"nodes", result.solver->nodes},
                   {"proven_optimal", result.proven_optimal}};
  }
  return j.dump(2);
}

GenerationResult result_from_json(const std::string& text,
                                  const corpus::CandidatePolicy& policy) {
  GenerationResult out;
  out.ctest = corpus::parse_ctest(text, policy);
  nlohmann::json j = nlohmann::json::parse(text);
  out.tau = j.value("tau", 0.0);
  out.tau_hat = j.value("tau_hat", 0.0);
  out.objective = j.value("objective", std::fabs(out.tau - out.tau_hat));
  out.strategy = j.value("strategy", std::string{});
  if (j.contains("per_gap_pred"))
    out.per_gap_pred = j["per_gap_pred"].get<std::vector<double>>();
  if (j.contains("solver")) {
    SolverSummary s;
    s.status = j["solver"].value("status", std::string{});
    s.bound = j["solver"].value("bound", 0.0);
    s.nodes = j["solver"].value("nodes", std::uint64_t{0});
    out.solver = s;
    out.proven_optimal = j["solver"].value("proven_optimal", false);
  }
  return out;
}

}  // namespace ctg::strat

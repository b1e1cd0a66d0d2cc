#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "doctest.h"

#include "ctg/mip.hpp"
#include "ctg/solver.hpp"
#include "testutil.hpp"

using namespace ctg;
using namespace ctg::mip;

namespace {

struct Fixture {
  feat::Instance instance;
  feat::FeatureTables tables;
};

Fixture fixture_from_text(const std::string& text) {
  Fixture f;
  f.instance = feat::make_instance(corpus::tokenize(text));
  f.tables = feat::compute_features(f.instance, feat::ProviderConfig::defaults());
  return f;
}

Fixture random_fixture(testutil::Rng& rng, std::size_t n, int max_len) {
  Fixture f;
  f.instance = testutil::make_random_instance(rng, n, max_len);
  f.tables = feat::compute_features(f.instance, feat::ProviderConfig::defaults());
  return f;
}

// stump on the in-sentence gap count
model::TreeEnsemble sentence_stump() {
  model::TreeEnsemble e;
  e.base_score = 0.0;
  e.shrinkage = 1.0;
  model::Tree t;
  t.nodes.push_back({false, 0.0, 51, 0.5, 1, 2});
  t.nodes.push_back({true, 0.2, -1, 0.0, -1, -1});
  t.nodes.push_back({true, 0.7, -1, 0.0, -1, -1});
  e.trees = {t};
  e.feature_names = feat::FeatureSchema::standard().names();
  return e;
}

model::TreeEnsemble constant_ensemble(double value) {
  model::TreeEnsemble e;
  e.base_score = 0.0;
  e.shrinkage = 1.0;
  model::Tree t;
  t.nodes.push_back({true, value, -1, 0.0, -1, -1});
  e.trees = {t};
  e.feature_names = feat::FeatureSchema::standard().names();
  return e;
}

std::vector<std::uint8_t> random_selection(testutil::Rng& rng, std::size_t n, std::size_t m) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::uint8_t> sel(n, 0);
  for (std::size_t k = 0; k < m; ++k) sel[order[k]] = 1;
  return sel;
}

}  // namespace

TEST_CASE("hand-counted model shape for two candidates and a stump") {
  // interior sentence "Cat is." gives candidates of lengths 3 and 2
  Fixture f = fixture_from_text("Go on. Cat is. The end.");
  REQUIRE(f.instance.n() == 2);
  REQUIRE(f.instance.word_length(0) == 3);
  REQUIRE(f.instance.word_length(1) == 2);

  auto [m, map] = build(f.instance, f.tables, sentence_stump(), 0.4, 1);

  // 2 b + 3 s + 8 f + 3 e + 6 z + tau_hat + u
  ModelStats stats = m.stats();
  CHECK(stats.columns == 24);
  CHECK(stats.binaries == 13);   // b, s, z and the two occurs-as-gap flags
  CHECK(stats.integers == 19);   // binaries plus 6 count features
  CHECK(stats.continuous == 5);  // 3 e, tau_hat, u
  // 1 gap count + 2 coupling + 6 count defs + 3 leaf picks + 6 leaf links
  // + 3 contribution defs + tau_hat def + 2 epigraph rows
  CHECK(m.constraints.size() == 24);
  CHECK(m.indicators.empty());
  CHECK(stats.rows == 24);

  CHECK(map.b.size() == 2);
  CHECK(map.s[0].size() == 2);
  CHECK(map.s[1].size() == 1);
  CHECK(map.pe[0].size() == 2);
  CHECK(m.variables[static_cast<std::size_t>(map.tau_hat)].name == "tau_hat");

  std::string json = stats_to_json(stats);
  CHECK(json.find("\"rows\":24") != std::string::npos);
  CHECK(json.find("\"columns\":24") != std::string::npos);
  CHECK(json.find("\"nonzeros\"") != std::string::npos);
}

TEST_CASE("build validates gap count and constraint extras") {
  Fixture f = fixture_from_text("Go on. Cat is. The end.");
  model::TreeEnsemble e = sentence_stump();
  CHECK_THROWS_AS(build(f.instance, f.tables, e, 0.4, 3), DomainError);
  CHECK_THROWS_AS(build(f.instance, f.tables, e, 1.4, 1), DomainError);

  BuildOptions bad_pin;
  bad_pin.pins.push_back({0, 5});
  CHECK_THROWS_AS(build(f.instance, f.tables, e, 0.4, 1, bad_pin), DomainError);
  BuildOptions conflict;
  conflict.pins.push_back({0, 1});
  conflict.excludes.push_back(0);
  CHECK_THROWS_AS(build(f.instance, f.tables, e, 0.4, 1, conflict), DomainError);

  // m = n forces every candidate to be selected and stays feasible
  auto [m2, map2] = build(f.instance, f.tables, e, 0.4, 2);
  std::vector<double> x = complete_assignment(m2, map2, f.instance, {1, 1}, {1, 1});
  CHECK(solver::verify(m2, x).ok());
}

TEST_CASE("encoding objective helper") {
  for (ObjectiveEncoding enc : {ObjectiveEncoding::Epigraph, ObjectiveEncoding::MinMax,
                                ObjectiveEncoding::Indicator, ObjectiveEncoding::Pwl}) {
    CHECK(encoding_objective(enc, 0.3, 0.3) == 0.0);
    CHECK(encoding_objective(enc, 0.1, 0.36) == doctest::Approx(0.26).epsilon(1e-12));
  }
  // the piecewise form saturates outside [0, 1] and equals tau at zero
  CHECK(encoding_objective(ObjectiveEncoding::Pwl, 0.3, 0.0) == doctest::Approx(0.3));
  CHECK(encoding_objective(ObjectiveEncoding::Pwl, 0.3, -2.0) == doctest::Approx(0.3));
  CHECK(encoding_objective(ObjectiveEncoding::Pwl, 0.3, 1.5) == doctest::Approx(0.7));
  CHECK(encoding_objective(ObjectiveEncoding::Epigraph, 0.3, -2.0) == doctest::Approx(2.3));
}

TEST_CASE("all four encodings price a fixed estimate identically") {
  // single candidate of length 2: tau_hat is forced to the constant 0.36
  Fixture f = fixture_from_text("Go on. It. The end.");
  REQUIRE(f.instance.n() == 1);
  model::TreeEnsemble e = constant_ensemble(0.36);
  for (ObjectiveEncoding enc : {ObjectiveEncoding::Epigraph, ObjectiveEncoding::MinMax,
                                ObjectiveEncoding::Indicator, ObjectiveEncoding::Pwl}) {
    BuildOptions opts;
    opts.encoding = enc;
    auto [m, map] = build(f.instance, f.tables, e, 0.1, 1, opts);
    solver::Solution sol = solver::solve(m, map, f.instance, e, 0.1);
    REQUIRE(sol.status == solver::SolveStatus::Optimal);
    CHECK(sol.objective == doctest::Approx(0.26).epsilon(1e-9));
    CHECK(sol.tau_hat == doctest::Approx(0.36).epsilon(1e-12));
    CHECK(solver::verify(m, sol.assignment).ok());
  }
}

TEST_CASE("feature linking and contribution soundness on random assignments") {
  testutil::Rng rng(42);
  for (int round = 0; round < 6; ++round) {
    std::uniform_int_distribution<std::size_t> n_dist(4, 9);
    std::size_t n = n_dist(rng);
    Fixture f = random_fixture(rng, n, 6);
    model::TreeEnsemble ens = testutil::random_ensemble(rng, 4, 3);
    std::uniform_int_distribution<std::size_t> m_dist(1, n >= 2 ? n / 2 + 1 : 1);
    std::size_t m = std::max<std::size_t>(1, m_dist(rng));
    auto [mdl, map] = build(f.instance, f.tables, ens, 0.5, m);

    for (int it = 0; it < 10; ++it) {
      std::vector<std::uint8_t> sel = random_selection(rng, n, m);
      std::vector<int> sizes(n, 0);
      for (std::size_t i = 0; i < n; ++i) {
        if (!sel[i]) continue;
        std::uniform_int_distribution<int> j_dist(1, f.instance.word_length(i) - 1);
        sizes[i] = j_dist(rng);
      }
      std::vector<double> x = complete_assignment(mdl, map, f.instance, sel, sizes);
      solver::VerificationReport report = solver::verify(mdl, x);
      if (!report.ok()) {
        for (const auto& v : report.violations)
          MESSAGE(v.where << " " << v.kind << " " << v.amount);
      }
      CHECK(report.ok());

      for (std::size_t i = 0; i < n; ++i) {
        feat::PlacementFeatures pf = feat::placement_features(f.instance, sel, i);
        CHECK(x[static_cast<std::size_t>(map.f[i].gaps_in_cover_sentence)] ==
              pf.gaps_in_cover_sentence);
        CHECK(x[static_cast<std::size_t>(map.f[i].preceding_gaps)] == pf.preceding_gaps);
        CHECK(x[static_cast<std::size_t>(map.f[i].preceding_in_cover_sentence)] ==
              pf.preceding_in_cover_sentence);
        CHECK(x[static_cast<std::size_t>(map.f[i].occurs_as_gap)] == pf.occurs_as_gap);
        for (int j = 1; j < f.instance.word_length(i); ++j) {
          const double e_val = x[static_cast<std::size_t>(map.e[i][static_cast<std::size_t>(j - 1)])];
          if (sel[i] && j == sizes[i]) {
            feat::FeatureVector fv = feat::assemble_vector(f.instance, f.tables, i, j, sel);
            CHECK(e_val == doctest::Approx(model::predict(ens, fv)).epsilon(1e-9));
          } else {
            CHECK(e_val == 0.0);
          }
        }
      }
    }
  }
}

TEST_CASE("coupled size rows match the literal one-hot formulation") {
  // literal form: sizes are chosen for every candidate, selected or not; the
  // objective only sees the selected ones, so both optima must coincide
  testutil::Rng rng(43);
  for (int round = 0; round < 5; ++round) {
    std::uniform_int_distribution<std::size_t> n_dist(3, 5);
    std::size_t n = n_dist(rng);
    Fixture f = random_fixture(rng, n, 4);
    model::TreeEnsemble ens = testutil::random_ensemble(rng, 3, 2);
    std::size_t m = 2;
    double tau = 0.35;

    solver::Solution coupled = solver::brute_force(f.instance, f.tables, ens, tau, m);

    // literal enumeration: b-combination x full size odometer over all words
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> comb(m);
    std::iota(comb.begin(), comb.end(), 0);
    while (true) {
      std::vector<std::uint8_t> sel(n, 0);
      for (std::size_t p : comb) sel[p] = 1;
      std::vector<int> sizes(n, 1);
      while (true) {
        double acc = 0.0;
        for (std::size_t p : comb) {
          feat::FeatureVector fv =
              feat::assemble_vector(f.instance, f.tables, p, sizes[p], sel);
          acc += model::predict(ens, fv);
        }
        best = std::min(best, std::fabs(tau - acc / static_cast<double>(m)));
        std::size_t d = n;
        bool more = false;
        while (d-- > 0) {
          if (sizes[d] < f.instance.word_length(d) - 1) {
            ++sizes[d];
            std::fill(sizes.begin() + static_cast<long>(d) + 1, sizes.end(), 1);
            more = true;
            break;
          }
        }
        if (!more) break;
      }
      std::size_t d = m;
      bool advanced = false;
      while (d-- > 0) {
        if (comb[d] < n - m + d) {
          ++comb[d];
          for (std::size_t p = d + 1; p < m; ++p) comb[p] = comb[p - 1] + 1;
          advanced = true;
          break;
        }
      }
      if (!advanced) break;
    }
    CHECK(coupled.objective == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("golden LP file for a one-variable model") {
  MipModel m;
  int x = m.add_variable("x", VarKind::Continuous, 0, kInf);
  LinearConstraint c;
  c.name = "c0";
  c.terms = {{x, 1.0}};
  c.op = RowOp::GE;
  c.rhs = 1.0;
  m.add_constraint(c);
  m.objective = {{x, 1.0}};
  std::ostringstream out;
  write_lp(m, out);
  CHECK(out.str() ==
        "\\ generated model\n"
        "Minimize\n"
        " obj: + 1 x\n"
        "Subject To\n"
        " c0: + 1 x >= 1\n"
        "End\n");
}

namespace {

void check_same_model(const MipModel& a, const MipModel& b) {
  REQUIRE(a.variables.size() == b.variables.size());
  std::map<std::string, const Variable*> bv;
  for (const Variable& v : b.variables) bv[v.name] = &v;
  for (const Variable& v : a.variables) {
    REQUIRE_MESSAGE(bv.count(v.name), v.name);
    const Variable& w = *bv[v.name];
    CHECK(v.kind == w.kind);
    CHECK(v.lb == w.lb);
    CHECK(v.ub == w.ub);
  }
  auto row_key = [&](const MipModel& mm, const LinearConstraint& c) {
    std::ostringstream key;
    std::map<std::string, double> terms;
    for (const LinearTerm& t : c.terms)
      terms[mm.variables[static_cast<std::size_t>(t.var)].name] += t.coef;
    for (const auto& [name, coef] : terms) key << name << '*' << coef << ' ';
    key << static_cast<int>(c.op) << ' ' << c.rhs;
    return key.str();
  };
  REQUIRE(a.constraints.size() == b.constraints.size());
  std::multiset<std::string> ra, rb;
  for (const auto& c : a.constraints) ra.insert(row_key(a, c));
  for (const auto& c : b.constraints) rb.insert(row_key(b, c));
  CHECK(ra == rb);
  REQUIRE(a.indicators.size() == b.indicators.size());
  std::multiset<std::string> ia, ib;
  for (const auto& c : a.indicators)
    ia.insert(a.variables[static_cast<std::size_t>(c.bin_var)].name + "=" +
              std::to_string(c.bin_value) + "->" + row_key(a, c.row));
  for (const auto& c : b.indicators)
    ib.insert(b.variables[static_cast<std::size_t>(c.bin_var)].name + "=" +
              std::to_string(c.bin_value) + "->" + row_key(b, c.row));
  CHECK(ia == ib);
  // objective
  std::map<std::string, double> oa, ob;
  for (const LinearTerm& t : a.objective)
    oa[a.variables[static_cast<std::size_t>(t.var)].name] += t.coef;
  for (const LinearTerm& t : b.objective)
    ob[b.variables[static_cast<std::size_t>(t.var)].name] += t.coef;
  CHECK(oa == ob);
}

}  // namespace

TEST_CASE("exported LP parses back to the same model") {
  testutil::Rng rng(44);
  Fixture f = random_fixture(rng, 5, 5);
  model::TreeEnsemble ens = testutil::random_ensemble(rng, 3, 3);
  for (ObjectiveEncoding enc : {ObjectiveEncoding::Epigraph, ObjectiveEncoding::MinMax,
                                ObjectiveEncoding::Indicator, ObjectiveEncoding::Pwl}) {
    BuildOptions opts;
    opts.encoding = enc;
    auto [m, map] = build(f.instance, f.tables, ens, 0.4, 2, opts);
    std::ostringstream out;
    write_lp(m, out);
    std::istringstream in(out.str());
    MipModel back = parse_lp(in);
    check_same_model(m, back);
  }
}

TEST_CASE("MPS writer emits all sections") {
  Fixture f = fixture_from_text("Go on. Cat is. The end.");
  BuildOptions opts;
  opts.encoding = ObjectiveEncoding::Indicator;
  auto [m, map] = build(f.instance, f.tables, sentence_stump(), 0.4, 1, opts);
  std::ostringstream out;
  write_mps(m, out);
  const std::string text = out.str();
  for (const char* section :
       {"NAME", "ROWS", "COLUMNS", "RHS", "BOUNDS", "INDICATORS", "ENDATA"})
    CHECK_MESSAGE(text.find(section) != std::string::npos, section);
  CHECK(text.find(" IC ") != std::string::npos);
  CHECK(text.find("'INTORG'") != std::string::npos);
}

namespace {

// Minimal reference solver over a parsed LP: enumerates the binaries, derives
// the continuous/integer variables by unit propagation over the equality
// rows, pushes epigraph-style slack variables to their tightest lower bound,
// and keeps the best feasible objective.
double enumerate_lp_optimum(const MipModel& m) {
  std::vector<int> binaries;
  for (std::size_t v = 0; v < m.variables.size(); ++v) {
    if (m.variables[v].kind == VarKind::Binary && m.variables[v].lb != m.variables[v].ub)
      binaries.push_back(static_cast<int>(v));
  }
  REQUIRE(binaries.size() <= 18);
  double best = std::numeric_limits<double>::infinity();
  const double tol = 1e-6;

  std::vector<double> x(m.variables.size());
  std::vector<char> assigned(m.variables.size());
  for (std::uint64_t mask = 0; mask < (1ull << binaries.size()); ++mask) {
    std::fill(x.begin(), x.end(), 0.0);
    std::fill(assigned.begin(), assigned.end(), 0);
    for (std::size_t v = 0; v < m.variables.size(); ++v) {
      if (m.variables[v].kind == VarKind::Binary && m.variables[v].lb == m.variables[v].ub) {
        x[v] = m.variables[v].lb;
        assigned[v] = 1;
      }
    }
    for (std::size_t b = 0; b < binaries.size(); ++b) {
      x[static_cast<std::size_t>(binaries[b])] = (mask >> b) & 1 ? 1.0 : 0.0;
      assigned[static_cast<std::size_t>(binaries[b])] = 1;
    }

    // collect the active rows: plain rows plus triggered indicator rows
    std::vector<const LinearConstraint*> rows;
    for (const auto& c : m.constraints) rows.push_back(&c);
    for (const auto& ic : m.indicators) {
      if (x[static_cast<std::size_t>(ic.bin_var)] == ic.bin_value) rows.push_back(&ic.row);
    }

    bool progress = true;
    while (progress) {
      progress = false;
      for (const LinearConstraint* c : rows) {
        if (c->op != RowOp::EQ) continue;
        int open = -1;
        double rest = 0.0, coef = 0.0;
        bool multiple = false;
        for (const LinearTerm& t : c->terms) {
          if (assigned[static_cast<std::size_t>(t.var)]) {
            rest += t.coef * x[static_cast<std::size_t>(t.var)];
          } else if (open == -1) {
            open = t.var;
            coef = t.coef;
          } else if (open != t.var) {
            multiple = true;
          }
        }
        if (open >= 0 && !multiple) {
          x[static_cast<std::size_t>(open)] = (c->rhs - rest) / coef;
          assigned[static_cast<std::size_t>(open)] = 1;
          progress = true;
        }
      }
    }

    // anything still open shows up only in inequalities and the objective:
    // push it to the smallest feasible value
    for (std::size_t v = 0; v < m.variables.size(); ++v) {
      if (assigned[v]) continue;
      double lo = m.variables[v].lb;
      for (const LinearConstraint* c : rows) {
        double rest = 0.0, coef = 0.0;
        bool involved = false, all_assigned = true;
        for (const LinearTerm& t : c->terms) {
          if (t.var == static_cast<int>(v)) {
            involved = true;
            coef = t.coef;
          } else if (assigned[static_cast<std::size_t>(t.var)]) {
            rest += t.coef * x[static_cast<std::size_t>(t.var)];
          } else {
            all_assigned = false;
          }
        }
        if (!involved || !all_assigned) continue;
        if (c->op == RowOp::GE && coef > 0) lo = std::max(lo, (c->rhs - rest) / coef);
        if (c->op == RowOp::LE && coef < 0) lo = std::max(lo, (c->rhs - rest) / coef);
      }
      x[v] = lo;
      assigned[v] = 1;
    }

    // feasibility
    bool ok = true;
    for (std::size_t v = 0; v < m.variables.size() && ok; ++v) {
      if (x[v] < m.variables[v].lb - tol || x[v] > m.variables[v].ub + tol) ok = false;
      if (m.variables[v].kind != VarKind::Continuous &&
          std::fabs(x[v] - std::round(x[v])) > tol)
        ok = false;
    }
    for (const LinearConstraint* c : rows) {
      if (!ok) break;
      double lhs = 0.0;
      for (const LinearTerm& t : c->terms) lhs += t.coef * x[static_cast<std::size_t>(t.var)];
      switch (c->op) {
        case RowOp::LE: ok = lhs <= c->rhs + tol; break;
        case RowOp::GE: ok = lhs >= c->rhs - tol; break;
        case RowOp::EQ: ok = std::fabs(lhs - c->rhs) <= tol; break;
      }
    }
    if (!ok) continue;
    double obj = m.objective_constant;
    for (const LinearTerm& t : m.objective) obj += t.coef * x[static_cast<std::size_t>(t.var)];
    best = std::min(best, obj);
  }
  return best;
}

}  // namespace

TEST_CASE("exported LP solved by exhaustive enumeration matches the solver") {
  Fixture f = fixture_from_text("Go on. Cat is. The end.");
  model::TreeEnsemble ens = sentence_stump();
  auto [m, map] = build(f.instance, f.tables, ens, 0.4, 1);

  const std::string path = "test_mip_export.lp";
  export_lp(m, path);
  MipModel parsed = parse_lp_file(path);
  std::remove(path.c_str());

  double reference = enumerate_lp_optimum(parsed);
  solver::Solution sol = solver::solve(m, map, f.instance, ens, 0.4);
  REQUIRE(sol.status == solver::SolveStatus::Optimal);
  CHECK(sol.objective == doctest::Approx(reference).epsilon(1e-9));
}

TEST_CASE("frozen resource features change the embedding, not its coherence") {
  testutil::Rng rng(45);
  Fixture f = random_fixture(rng, 6, 5);
  model::TreeEnsemble ens = testutil::random_ensemble(rng, 4, 3);
  BuildOptions opts;
  opts.vary_resource_features = false;
  auto [m, map] = build(f.instance, f.tables, ens, 0.5, 2, opts);
  std::vector<std::uint8_t> sel = random_selection(rng, 6, 2);
  std::vector<int> sizes(6, 0);
  for (std::size_t i = 0; i < 6; ++i)
    if (sel[i]) sizes[i] = 1;
  std::vector<double> x = complete_assignment(m, map, f.instance, sel, sizes);
  CHECK(solver::verify(m, x).ok());
}

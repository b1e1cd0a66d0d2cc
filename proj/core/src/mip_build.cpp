#include <algorithm>
#include <cmath>
#include <sstream>

#include "ctg/mip.hpp"

#include "json.hpp"

namespace ctg::mip {

int MipModel::add_variable(std::string name, VarKind kind, double lb, double ub) {
  if (kind == VarKind::Binary) {
    lb = std::max(lb, 0.0);
    ub = std::min(ub, 1.0);
  }
  variables.push_back({std::move(name), kind, lb, ub});
  return static_cast<int>(variables.size()) - 1;
}

int MipModel::add_constraint(LinearConstraint c) {
  constraints.push_back(std::move(c));
  return static_cast<int>(constraints.size()) - 1;
}

void MipModel::add_indicator(IndicatorConstraint c) { indicators.push_back(std::move(c)); }

ModelStats MipModel::stats() const {
  ModelStats s;
  s.rows = constraints.size() + indicators.size();
  s.columns = variables.size();
  for (const auto& c : constraints) s.nonzeros += c.terms.size();
  for (const auto& c : indicators) s.nonzeros += c.row.terms.size() + 1;
  for (const auto& v : variables) {
    switch (v.kind) {
      case VarKind::Binary:
        ++s.binaries;
        ++s.integers;
        break;
      case VarKind::Integer:
        ++s.integers;
        break;
      case VarKind::Continuous:
        ++s.continuous;
        break;
    }
  }
  return s;
}

std::string stats_to_json(const ModelStats& s) {
  nlohmann::ordered_json j;
  j["rows"] = s.rows;
  j["columns"] = s.columns;
  j["nonzeros"] = s.nonzeros;
  j["binaries"] = s.binaries;
  j["integers"] = s.integers;
  j["continuous"] = s.continuous;
  return j.dump();
}

const char* to_string(ObjectiveEncoding e) {
  switch (e) {
    case ObjectiveEncoding::Epigraph:
      return "epigraph";
    case ObjectiveEncoding::MinMax:
      return "minmax";
    case ObjectiveEncoding::Indicator:
      return "indicator";
    case ObjectiveEncoding::Pwl:
      return "pwl";
  }
  return "?";
}

ObjectiveEncoding encoding_from_string(const std::string& name) {
  if (name == "epigraph") return ObjectiveEncoding::Epigraph;
  if (name == "minmax") return ObjectiveEncoding::MinMax;
  if (name == "indicator") return ObjectiveEncoding::Indicator;
  if (name == "pwl") return ObjectiveEncoding::Pwl;
  throw DomainError("unknown objective encoding: " + name);
}

double encoding_objective(ObjectiveEncoding e, double tau, double tau_hat,
                          double pwl_kink_shift) {
  if (e != ObjectiveEncoding::Pwl) return std::fabs(tau - tau_hat);
  const double kink = std::clamp(tau + pwl_kink_shift, 0.0, 1.0);
  if (tau_hat <= 0.0) return kink;
  if (tau_hat <= kink) return kink - tau_hat;
  if (tau_hat <= 1.0) return tau_hat - kink;
  return 1.0 - kink;
}

namespace {

// Integer routing bounds for a split x < t on an integer-valued feature.
long left_upper(double t) {
  return t == std::floor(t) ? static_cast<long>(t) - 1 : static_cast<long>(std::floor(t));
}
long right_lower(double t) {
  return t == std::floor(t) ? static_cast<long>(t) : static_cast<long>(std::ceil(t));
}

struct RoleBounds {
  std::array<long, 4> lo{0, 0, 0, 0};
  std::array<long, 4> hi{0, 0, 0, 0};
};

struct Builder {
  const feat::Instance& instance;
  const feat::FeatureTables& tables;
  const model::TreeEnsemble& ensemble;
  const double tau;
  const std::size_t m;
  const BuildOptions& opts;
  const feat::FeatureSchema& schema;

  MipModel model;
  VarMap map;
  std::array<int, 4> role_index;  // feature index per role slot

  // role order used throughout: 0 gaps-in-cover-sentence, 1 preceding gaps,
  // 2 preceding in cover sentence, 3 occurs-as-gap
  static constexpr int kSent = 0, kPrec = 1, kPrecSent = 2, kOcc = 3;

  void run() {
    const std::size_t n = instance.n();
    if (m < 1) throw DomainError("gap count must be >= 1");
    if (m > n)
      throw DomainError("gap count " + std::to_string(m) + " exceeds candidate count " +
                        std::to_string(n));
    if (!(tau >= 0.0 && tau <= 1.0)) throw DomainError("target difficulty must lie in [0, 1]");
    if (!ensemble.valid()) throw DomainError("invalid ensemble");
    if (tables.statics.candidate_count() != n || tables.size_features.size() != n)
      throw DomainError("feature tables do not cover the instance");
    for (const auto& pin : opts.pins) {
      if (pin.candidate >= n) throw DomainError("pin candidate out of range");
      int l = instance.word_length(pin.candidate);
      if (pin.size < 1 || pin.size > l - 1) throw DomainError("pin size out of range");
      if (opts.max_size > 0 && pin.size > opts.max_size)
        throw DomainError("pin size exceeds the size cap");
    }
    for (std::size_t ex : opts.excludes) {
      if (ex >= n) throw DomainError("exclude candidate out of range");
    }

    const auto& binding = schema.placement();
    role_index = {binding.gaps_in_cover_sentence, binding.preceding_gaps,
                  binding.preceding_in_cover_sentence, binding.occurs_as_gap};

    map.encoding = opts.encoding;
    map.tau = tau;
    map.pwl_kink = std::clamp(tau + opts.pwl_kink_shift, 0.0, 1.0);
    map.m = m;
    map.pinned_size.assign(n, -1);
    map.excluded.assign(n, 0);
    map.max_size = opts.max_size;
    for (const auto& pin : opts.pins) {
      if (map.pinned_size[pin.candidate] != -1 && map.pinned_size[pin.candidate] != pin.size)
        throw DomainError("conflicting pins for candidate " + std::to_string(pin.candidate));
      map.pinned_size[pin.candidate] = pin.size;
    }
    for (std::size_t ex : opts.excludes) {
      if (map.pinned_size[ex] != -1)
        throw DomainError("candidate " + std::to_string(ex) + " both pinned and excluded");
      map.excluded[ex] = 1;
    }

    add_decision_variables();
    add_placement_links();
    double tl = kInf, th = -kInf;  // bounds over all per-gap contributions
    add_embeddings(tl, th);
    add_tau_hat(tl, th);
    add_objective(tl, th);
  }

  void add_decision_variables() {
    const std::size_t n = instance.n();
    map.b.resize(n);
    map.s.resize(n);
    map.e.resize(n);
    map.f.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      map.b[i] = model.add_variable("b_" + std::to_string(i), VarKind::Binary, 0, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const int l = instance.word_length(i);
      map.s[i].resize(static_cast<std::size_t>(l - 1));
      for (int j = 1; j < l; ++j) {
        double ub = (opts.max_size > 0 && j > opts.max_size) ? 0.0 : 1.0;
        map.s[i][static_cast<std::size_t>(j - 1)] = model.add_variable(
            "s_" + std::to_string(i) + "_" + std::to_string(j), VarKind::Binary, 0, ub);
      }
    }

    LinearConstraint total;
    total.name = "gap_count";
    total.op = RowOp::EQ;
    total.rhs = static_cast<double>(m);
    for (std::size_t i = 0; i < n; ++i) total.terms.push_back({map.b[i], 1.0});
    model.add_constraint(std::move(total));

    for (std::size_t i = 0; i < n; ++i) {
      LinearConstraint couple;
      couple.name = "size_of_" + std::to_string(i);
      couple.op = RowOp::EQ;
      couple.rhs = 0.0;
      for (int sv : map.s[i]) couple.terms.push_back({sv, 1.0});
      couple.terms.push_back({map.b[i], -1.0});
      model.add_constraint(std::move(couple));
    }

    for (const auto& pin : opts.pins) {
      LinearConstraint c;
      c.name = "pin_" + std::to_string(pin.candidate) + "_" + std::to_string(pin.size);
      c.op = RowOp::EQ;
      c.rhs = 1.0;
      c.terms.push_back({map.s[pin.candidate][static_cast<std::size_t>(pin.size - 1)], 1.0});
      model.add_constraint(std::move(c));
    }
    for (std::size_t ex : opts.excludes) {
      LinearConstraint c;
      c.name = "exclude_" + std::to_string(ex);
      c.op = RowOp::EQ;
      c.rhs = 0.0;
      c.terms.push_back({map.b[ex], 1.0});
      model.add_constraint(std::move(c));
    }
  }

  RoleBounds role_bounds(std::size_t i) const {
    RoleBounds rb;
    auto [sb, se] = instance.sentence_range[i];
    rb.hi[kSent] = std::min<long>(static_cast<long>(se - sb), static_cast<long>(m));
    rb.hi[kPrec] = std::min<long>(static_cast<long>(i), static_cast<long>(m));
    rb.hi[kPrecSent] = std::min<long>(static_cast<long>(i - sb), static_cast<long>(m));
    bool partner = false;
    for (std::size_t h = 0; h < instance.n() && !partner; ++h)
      partner = instance.same_word.at(i, h) != 0;
    rb.hi[kOcc] = partner ? 1 : 0;
    return rb;
  }

  void add_placement_links() {
    const std::size_t n = instance.n();
    for (std::size_t i = 0; i < n; ++i) {
      RoleBounds rb = role_bounds(i);
      auto& fv = map.f[i];
      fv.gaps_in_cover_sentence =
          model.add_variable("fsent_" + std::to_string(i), VarKind::Integer, 0,
                             static_cast<double>(rb.hi[kSent]));
      fv.preceding_gaps = model.add_variable("fprec_" + std::to_string(i), VarKind::Integer,
                                             0, static_cast<double>(rb.hi[kPrec]));
      fv.preceding_in_cover_sentence =
          model.add_variable("fps_" + std::to_string(i), VarKind::Integer, 0,
                             static_cast<double>(rb.hi[kPrecSent]));
      fv.occurs_as_gap = model.add_variable("focc_" + std::to_string(i), VarKind::Binary, 0,
                                            static_cast<double>(rb.hi[kOcc]));

      auto [sb, se] = instance.sentence_range[i];
      LinearConstraint sent;
      sent.name = "def_fsent_" + std::to_string(i);
      sent.op = RowOp::EQ;
      sent.rhs = 0.0;
      sent.terms.push_back({fv.gaps_in_cover_sentence, 1.0});
      for (std::size_t h = sb; h < se; ++h) sent.terms.push_back({map.b[h], -1.0});
      model.add_constraint(std::move(sent));

      LinearConstraint prec;
      prec.name = "def_fprec_" + std::to_string(i);
      prec.op = RowOp::EQ;
      prec.rhs = 0.0;
      prec.terms.push_back({fv.preceding_gaps, 1.0});
      for (std::size_t h = 0; h < i; ++h) prec.terms.push_back({map.b[h], -1.0});
      model.add_constraint(std::move(prec));

      LinearConstraint ps;
      ps.name = "def_fps_" + std::to_string(i);
      ps.op = RowOp::EQ;
      ps.rhs = 0.0;
      ps.terms.push_back({fv.preceding_in_cover_sentence, 1.0});
      for (std::size_t h = sb; h < i; ++h) ps.terms.push_back({map.b[h], -1.0});
      model.add_constraint(std::move(ps));

      // occurs-as-gap: binary OR over same-word partners
      LinearConstraint cap;
      cap.name = "def_focc_ub_" + std::to_string(i);
      cap.op = RowOp::LE;
      cap.rhs = 0.0;
      cap.terms.push_back({fv.occurs_as_gap, 1.0});
      for (std::size_t h = 0; h < n; ++h) {
        if (!instance.same_word.at(i, h)) continue;
        cap.terms.push_back({map.b[h], -1.0});
        LinearConstraint lb;
        lb.name = "def_focc_lb_" + std::to_string(i) + "_" + std::to_string(h);
        lb.op = RowOp::GE;
        lb.rhs = 0.0;
        lb.terms.push_back({fv.occurs_as_gap, 1.0});
        lb.terms.push_back({map.b[h], -1.0});
        model.add_constraint(std::move(lb));
      }
      if (cap.terms.size() > 1) model.add_constraint(std::move(cap));
    }
  }

  model::TreeEnsemble reduce(std::size_t i, int j) const {
    std::array<std::optional<double>, feat::kFeatureDim> fixed;
    for (int k = 0; k < feat::kFeatureDim; ++k) {
      switch (schema.dependency(k)) {
        case feat::DependencyClass::Static:
          fixed[static_cast<std::size_t>(k)] = tables.statics.at(i, j, k);
          break;
        case feat::DependencyClass::SizeDependent: {
          const auto& u = schema.size_dependent();
          auto pos = std::find(u.begin(), u.end(), k) - u.begin();
          int source_j = j;
          if (!opts.vary_resource_features && (k == 49 || k == 50)) {
            int l = instance.word_length(i);
            source_j = std::clamp((l + 1) / 2, 1, l - 1);  // default-size row
          }
          fixed[static_cast<std::size_t>(k)] =
              tables.size_features[i].at(source_j, static_cast<int>(pos));
          break;
        }
        case feat::DependencyClass::PlacementDependent:
          break;  // stays free
      }
    }
    return model::partial_evaluate(ensemble, fixed);
  }

  int role_of_feature(int k) const {
    for (int r = 0; r < 4; ++r) {
      if (role_index[static_cast<std::size_t>(r)] == k) return r;
    }
    throw DomainError("reduced ensemble still splits on feature k" + std::to_string(k) +
                      ", which is not a placement feature");
  }

  void leaf_rows(std::size_t i, int j, std::size_t t, const model::Tree& tree,
                 std::int32_t node_index, RoleBounds path, const RoleBounds& rb,
                 VarMap::LeafGroup& group, LinearConstraint& pick,
                 std::vector<LinearTerm>& contribution) {
    const model::TreeNode& node = tree.nodes[static_cast<std::size_t>(node_index)];
    if (!node.is_leaf) {
      const int role = role_of_feature(node.feature);
      RoleBounds left = path;
      left.hi[static_cast<std::size_t>(role)] =
          std::min(left.hi[static_cast<std::size_t>(role)], left_upper(node.threshold));
      RoleBounds right = path;
      right.lo[static_cast<std::size_t>(role)] =
          std::max(right.lo[static_cast<std::size_t>(role)], right_lower(node.threshold));
      if (left.lo[static_cast<std::size_t>(role)] <= left.hi[static_cast<std::size_t>(role)])
        leaf_rows(i, j, t, tree, node.left, left, rb, group, pick, contribution);
      if (right.lo[static_cast<std::size_t>(role)] <= right.hi[static_cast<std::size_t>(role)])
        leaf_rows(i, j, t, tree, node.right, right, rb, group, pick, contribution);
      return;
    }
    const std::string leaf_name = "z_" + std::to_string(i) + "_" + std::to_string(j) + "_" +
                                  std::to_string(t) + "_" +
                                  std::to_string(group.vars.size());
    int zv = model.add_variable(leaf_name, VarKind::Binary, 0, 1);
    group.vars.push_back(zv);
    group.nodes.push_back(node_index);
    pick.terms.push_back({zv, 1.0});
    contribution.push_back({zv, ensemble.shrinkage * node.value});

    const std::array<int, 4> fvars = {map.f[i].gaps_in_cover_sentence,
                                      map.f[i].preceding_gaps,
                                      map.f[i].preceding_in_cover_sentence,
                                      map.f[i].occurs_as_gap};
    for (int r = 0; r < 4; ++r) {
      const auto ri = static_cast<std::size_t>(r);
      if (path.hi[ri] < rb.hi[ri]) {
        LinearConstraint c;
        c.name = leaf_name + "_ub" + std::to_string(r);
        c.op = RowOp::LE;
        c.rhs = static_cast<double>(rb.hi[ri]);
        c.terms.push_back({fvars[ri], 1.0});
        c.terms.push_back({zv, static_cast<double>(rb.hi[ri] - path.hi[ri])});
        model.add_constraint(std::move(c));
      }
      if (path.lo[ri] > rb.lo[ri]) {
        LinearConstraint c;
        c.name = leaf_name + "_lb" + std::to_string(r);
        c.op = RowOp::GE;
        c.rhs = static_cast<double>(rb.lo[ri]);
        c.terms.push_back({fvars[ri], 1.0});
        c.terms.push_back({zv, -static_cast<double>(path.lo[ri] - rb.lo[ri])});
        model.add_constraint(std::move(c));
      }
    }
  }

  void add_embeddings(double& tl, double& th) {
    const std::size_t n = instance.n();
    map.pe.resize(n);
    map.z.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const int l = instance.word_length(i);
      map.pe[i].reserve(static_cast<std::size_t>(l - 1));
      map.z[i].resize(static_cast<std::size_t>(l - 1));
      map.e[i].resize(static_cast<std::size_t>(l - 1));
      RoleBounds rb = role_bounds(i);
      for (int j = 1; j < l; ++j) {
        model::TreeEnsemble pe = reduce(i, j);

        model::FeatureBox box = model::FeatureBox::everything();
        for (int r = 0; r < 4; ++r) {
          box.lo[static_cast<std::size_t>(role_index[static_cast<std::size_t>(r)])] =
              static_cast<double>(rb.lo[static_cast<std::size_t>(r)]);
          box.hi[static_cast<std::size_t>(role_index[static_cast<std::size_t>(r)])] =
              static_cast<double>(rb.hi[static_cast<std::size_t>(r)]);
        }
        auto [lo, hi] = model::predict_interval(pe, box);
        tl = std::min(tl, lo);
        th = std::max(th, hi);

        int ev = model.add_variable("e_" + std::to_string(i) + "_" + std::to_string(j),
                                    VarKind::Continuous, std::min(0.0, lo), std::max(0.0, hi));
        map.e[i][static_cast<std::size_t>(j - 1)] = ev;
        const int sv = map.s[i][static_cast<std::size_t>(j - 1)];

        LinearConstraint def;
        def.name = "def_e_" + std::to_string(i) + "_" + std::to_string(j);
        def.op = RowOp::EQ;
        def.rhs = 0.0;
        def.terms.push_back({ev, 1.0});

        double folded = pe.base_score;
        auto& zgroups = map.z[i][static_cast<std::size_t>(j - 1)];
        for (std::size_t t = 0; t < pe.trees.size(); ++t) {
          const model::Tree& tree = pe.trees[t];
          if (tree.nodes.size() == 1) {
            folded += pe.shrinkage * tree.nodes[0].value;
            zgroups.emplace_back();  // no indicators for a constant tree
            continue;
          }
          LinearConstraint pick;
          pick.name = "pick_" + std::to_string(i) + "_" + std::to_string(j) + "_" +
                      std::to_string(t);
          pick.op = RowOp::EQ;
          pick.rhs = 0.0;
          VarMap::LeafGroup group;
          std::vector<LinearTerm> contribution;
          leaf_rows(i, j, t, tree, 0, rb, rb, group, pick, contribution);
          pick.terms.push_back({sv, -1.0});
          model.add_constraint(std::move(pick));
          for (const auto& term : contribution) def.terms.push_back({term.var, -term.coef});
          zgroups.push_back(std::move(group));
        }
        def.terms.push_back({sv, -folded});
        model.add_constraint(std::move(def));
        map.pe[i].push_back(std::move(pe));
      }
    }
  }

  void add_tau_hat(double tl, double th) {
    // any feasible tau_hat is a mean of per-gap contributions
    map.tau_hat = model.add_variable("tau_hat", VarKind::Continuous, tl, th);
    LinearConstraint def;
    def.name = "def_tau_hat";
    def.op = RowOp::EQ;
    def.rhs = 0.0;
    def.terms.push_back({map.tau_hat, 1.0});
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < instance.n(); ++i) {
      for (int ev : map.e[i]) def.terms.push_back({ev, -inv_m});
    }
    model.add_constraint(std::move(def));
  }

  void indicator_row(int bin, int value, std::string name, std::vector<LinearTerm> terms,
                     RowOp op, double rhs) {
    IndicatorConstraint ic;
    ic.bin_var = bin;
    ic.bin_value = value;
    ic.row.name = std::move(name);
    ic.row.terms = std::move(terms);
    ic.row.op = op;
    ic.row.rhs = rhs;
    model.add_indicator(std::move(ic));
  }

  void add_objective(double tl, double th) {
    switch (opts.encoding) {
      case ObjectiveEncoding::Epigraph: {
        map.u = model.add_variable("u", VarKind::Continuous, 0, kInf);
        LinearConstraint above;
        above.name = "epi_above";
        above.op = RowOp::GE;
        above.rhs = tau;
        above.terms = {{map.u, 1.0}, {map.tau_hat, 1.0}};
        model.add_constraint(std::move(above));
        LinearConstraint below;
        below.name = "epi_below";
        below.op = RowOp::GE;
        below.rhs = -tau;
        below.terms = {{map.u, 1.0}, {map.tau_hat, -1.0}};
        model.add_constraint(std::move(below));
        model.objective = {{map.u, 1.0}};
        break;
      }
      case ObjectiveEncoding::MinMax: {
        const double lo_b = std::min(tau, tl), hi_b = std::max(tau, th);
        map.mm_gamma = model.add_variable("mm_gamma", VarKind::Binary, 0, 1);
        map.mm_hi = model.add_variable("mm_hi", VarKind::Continuous, lo_b, hi_b);
        map.mm_lo = model.add_variable("mm_lo", VarKind::Continuous, lo_b, hi_b);
        // gamma = 1: tau_hat <= tau, hi = tau, lo = tau_hat
        indicator_row(map.mm_gamma, 1, "mm_le", {{map.tau_hat, 1.0}}, RowOp::LE, tau);
        indicator_row(map.mm_gamma, 1, "mm_hi_tau", {{map.mm_hi, 1.0}}, RowOp::EQ, tau);
        indicator_row(map.mm_gamma, 1, "mm_lo_that", {{map.mm_lo, 1.0}, {map.tau_hat, -1.0}},
                      RowOp::EQ, 0.0);
        // gamma = 0: tau_hat >= tau, hi = tau_hat, lo = tau
        indicator_row(map.mm_gamma, 0, "mm_ge", {{map.tau_hat, 1.0}}, RowOp::GE, tau);
        indicator_row(map.mm_gamma, 0, "mm_hi_that", {{map.mm_hi, 1.0}, {map.tau_hat, -1.0}},
                      RowOp::EQ, 0.0);
        indicator_row(map.mm_gamma, 0, "mm_lo_tau", {{map.mm_lo, 1.0}}, RowOp::EQ, tau);
        model.objective = {{map.mm_hi, 1.0}, {map.mm_lo, -1.0}};
        break;
      }
      case ObjectiveEncoding::Indicator: {
        map.ind_delta = model.add_variable("delta", VarKind::Binary, 0, 1);
        map.ind_d = model.add_variable("d", VarKind::Continuous, 0, kInf);
        // delta = 1: tau_hat <= tau and d = tau - tau_hat
        indicator_row(map.ind_delta, 1, "ind_le", {{map.tau_hat, 1.0}}, RowOp::LE, tau);
        indicator_row(map.ind_delta, 1, "ind_d_below", {{map.ind_d, 1.0}, {map.tau_hat, 1.0}},
                      RowOp::EQ, tau);
        // delta = 0: tau_hat >= tau and d = tau_hat - tau
        indicator_row(map.ind_delta, 0, "ind_ge", {{map.tau_hat, 1.0}}, RowOp::GE, tau);
        indicator_row(map.ind_delta, 0, "ind_d_above", {{map.ind_d, 1.0}, {map.tau_hat, -1.0}},
                      RowOp::EQ, -tau);
        model.objective = {{map.ind_d, 1.0}};
        break;
      }
      case ObjectiveEncoding::Pwl: {
        const double kink = std::clamp(tau + opts.pwl_kink_shift, 0.0, 1.0);
        const double y_hi = std::max({kink, 1.0 - kink,
                                      encoding_objective(ObjectiveEncoding::Pwl, tau, tl,
                                                         opts.pwl_kink_shift),
                                      encoding_objective(ObjectiveEncoding::Pwl, tau, th,
                                                         opts.pwl_kink_shift)});
        map.pwl_y = model.add_variable("pwl_y", VarKind::Continuous, 0, y_hi);
        // segment s: x in [xlo, xhi], y = slope * x + offset
        const double big = 1e30;
        const std::array<double, 4> xlo = {-big, 0.0, kink, 1.0};
        const std::array<double, 4> xhi = {0.0, kink, 1.0, big};
        const std::array<double, 4> slope = {0.0, -1.0, 1.0, 0.0};
        const std::array<double, 4> offset = {kink, kink, -kink, 1.0 - kink};
        LinearConstraint one;
        one.name = "pwl_pick";
        one.op = RowOp::EQ;
        one.rhs = 1.0;
        for (int seg = 0; seg < 4; ++seg) {
          int dv = model.add_variable("pwl_seg_" + std::to_string(seg), VarKind::Binary, 0, 1);
          map.pwl_seg[static_cast<std::size_t>(seg)] = dv;
          one.terms.push_back({dv, 1.0});
          const std::string base = "pwl_s" + std::to_string(seg);
          if (xlo[static_cast<std::size_t>(seg)] > -big)
            indicator_row(dv, 1, base + "_xlo", {{map.tau_hat, 1.0}}, RowOp::GE,
                          xlo[static_cast<std::size_t>(seg)]);
          if (xhi[static_cast<std::size_t>(seg)] < big)
            indicator_row(dv, 1, base + "_xhi", {{map.tau_hat, 1.0}}, RowOp::LE,
                          xhi[static_cast<std::size_t>(seg)]);
          indicator_row(dv, 1, base + "_y",
                        {{map.pwl_y, 1.0}, {map.tau_hat, -slope[static_cast<std::size_t>(seg)]}},
                        RowOp::EQ, offset[static_cast<std::size_t>(seg)]);
        }
        model.add_constraint(std::move(one));
        model.objective = {{map.pwl_y, 1.0}};
        model.pwl_breakpoints = {{0.0, kink}, {kink, 0.0}, {1.0, 1.0 - kink}};
        break;
      }
    }
  }
};

}  // namespace

std::pair<MipModel, VarMap> build(const feat::Instance& instance,
                                  const feat::FeatureTables& tables,
                                  const model::TreeEnsemble& ensemble, double tau,
                                  std::size_t m, const BuildOptions& opts,
                                  const feat::FeatureSchema& schema) {
  Builder b{instance, tables, ensemble, tau, m, opts, schema, {}, {}, {}};
  b.run();
  return {std::move(b.model), std::move(b.map)};
}

std::vector<double> complete_assignment(const MipModel& model, const VarMap& map,
                                        const feat::Instance& instance,
                                        const std::vector<std::uint8_t>& selected,
                                        const std::vector<int>& sizes) {
  const std::size_t n = instance.n();
  if (selected.size() != n || sizes.size() != n)
    throw DomainError("selection/size vectors must cover all candidates");
  std::vector<double> x(model.variables.size(), 0.0);

  const feat::FeatureSchema& schema = feat::FeatureSchema::standard();
  const auto& binding = schema.placement();

  for (std::size_t i = 0; i < n; ++i) x[static_cast<std::size_t>(map.b[i])] = selected[i] ? 1 : 0;

  for (std::size_t i = 0; i < n; ++i) {
    feat::PlacementFeatures pf = feat::placement_features(instance, selected, i);
    x[static_cast<std::size_t>(map.f[i].gaps_in_cover_sentence)] = pf.gaps_in_cover_sentence;
    x[static_cast<std::size_t>(map.f[i].preceding_gaps)] = pf.preceding_gaps;
    x[static_cast<std::size_t>(map.f[i].preceding_in_cover_sentence)] =
        pf.preceding_in_cover_sentence;
    x[static_cast<std::size_t>(map.f[i].occurs_as_gap)] = pf.occurs_as_gap;
  }

  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!selected[i]) continue;
    const int j = sizes[i];
    if (j < 1 || j > instance.word_length(i) - 1)
      throw DomainError("size out of range for candidate " + std::to_string(i));
    x[static_cast<std::size_t>(map.s[i][static_cast<std::size_t>(j - 1)])] = 1.0;

    feat::PlacementFeatures pf = feat::placement_features(instance, selected, i);
    feat::FeatureVector fv{};
    fv[static_cast<std::size_t>(binding.gaps_in_cover_sentence)] = pf.gaps_in_cover_sentence;
    fv[static_cast<std::size_t>(binding.preceding_gaps)] = pf.preceding_gaps;
    fv[static_cast<std::size_t>(binding.preceding_in_cover_sentence)] =
        pf.preceding_in_cover_sentence;
    fv[static_cast<std::size_t>(binding.occurs_as_gap)] = pf.occurs_as_gap;

    const model::TreeEnsemble& pe = map.pe[i][static_cast<std::size_t>(j - 1)];
    const auto& zgroups = map.z[i][static_cast<std::size_t>(j - 1)];
    for (std::size_t t = 0; t < pe.trees.size(); ++t) {
      if (zgroups[t].vars.empty()) continue;  // folded constant tree
      const model::Tree& tree = pe.trees[t];
      std::int32_t node = 0;
      while (!tree.nodes[static_cast<std::size_t>(node)].is_leaf) {
        const auto& nd = tree.nodes[static_cast<std::size_t>(node)];
        node = fv[static_cast<std::size_t>(nd.feature)] < nd.threshold ? nd.left : nd.right;
      }
      auto pos = std::find(zgroups[t].nodes.begin(), zgroups[t].nodes.end(), node) -
                 zgroups[t].nodes.begin();
      if (pos == static_cast<std::ptrdiff_t>(zgroups[t].nodes.size()))
        throw DomainError("reached a leaf pruned as unreachable; placement bounds broken");
      x[static_cast<std::size_t>(zgroups[t].vars[static_cast<std::size_t>(pos)])] = 1.0;
    }
    double pred = model::predict(pe, fv);
    x[static_cast<std::size_t>(map.e[i][static_cast<std::size_t>(j - 1)])] = pred;
    acc += pred;
  }
  const double tau_hat = acc / static_cast<double>(map.m);
  x[static_cast<std::size_t>(map.tau_hat)] = tau_hat;

  const double tau = map.tau;
  switch (map.encoding) {
    case ObjectiveEncoding::Epigraph:
      x[static_cast<std::size_t>(map.u)] = std::fabs(tau - tau_hat);
      break;
    case ObjectiveEncoding::MinMax:
      x[static_cast<std::size_t>(map.mm_gamma)] = tau_hat <= tau ? 1.0 : 0.0;
      x[static_cast<std::size_t>(map.mm_hi)] = std::max(tau, tau_hat);
      x[static_cast<std::size_t>(map.mm_lo)] = std::min(tau, tau_hat);
      break;
    case ObjectiveEncoding::Indicator:
      x[static_cast<std::size_t>(map.ind_delta)] = tau_hat <= tau ? 1.0 : 0.0;
      x[static_cast<std::size_t>(map.ind_d)] = std::fabs(tau - tau_hat);
      break;
    case ObjectiveEncoding::Pwl: {
      const double kink = map.pwl_kink;
      int seg = tau_hat <= 0.0 ? 0 : tau_hat <= kink ? 1 : tau_hat <= 1.0 ? 2 : 3;
      x[static_cast<std::size_t>(map.pwl_seg[static_cast<std::size_t>(seg)])] = 1.0;
      const std::array<double, 4> slope = {0.0, -1.0, 1.0, 0.0};
      const std::array<double, 4> offset = {kink, kink, -kink, 1.0 - kink};
      x[static_cast<std::size_t>(map.pwl_y)] =
          slope[static_cast<std::size_t>(seg)] * tau_hat + offset[static_cast<std::size_t>(seg)];
      break;
    }
  }
  return x;
}

}  // namespace ctg::mip

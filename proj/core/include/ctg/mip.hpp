#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ctg/features.hpp"
#include "ctg/model.hpp"

namespace ctg::mip {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class VarKind { Binary, Integer, Continuous };

struct Variable {
  std::string name;
  VarKind kind = VarKind::Continuous;
  double lb = 0.0;
  double ub = kInf;
};

struct LinearTerm {
  int var = -1;
  double coef = 0.0;
};

enum class RowOp { LE, GE, EQ };

struct LinearConstraint {
  std::string name;
  std::vector<LinearTerm> terms;
  RowOp op = RowOp::LE;
  double rhs = 0.0;
};

/// binary variable == value  implies  row holds.
struct IndicatorConstraint {
  int bin_var = -1;
  int bin_value = 1;
  LinearConstraint row;
};

struct ModelStats {
  std::size_t rows = 0;
  std::size_t columns = 0;
  std::size_t nonzeros = 0;
  std::size_t binaries = 0;
  std::size_t integers = 0;  // includes binaries
  std::size_t continuous = 0;
};

struct PwlPoint {
  double x = 0.0;
  double y = 0.0;
};

class MipModel {
 public:
  int add_variable(std::string name, VarKind kind, double lb, double ub);
  int add_constraint(LinearConstraint c);
  void add_indicator(IndicatorConstraint c);

  std::vector<Variable> variables;
  std::vector<LinearConstraint> constraints;
  std::vector<IndicatorConstraint> indicators;
  std::vector<LinearTerm> objective;  // minimized
  double objective_constant = 0.0;
  /// Present when the objective was encoded piecewise-linearly; kept as
  /// metadata next to the linearized segment constraints.
  std::vector<PwlPoint> pwl_breakpoints;

  ModelStats stats() const;
};

std::string stats_to_json(const ModelStats& s);

enum class ObjectiveEncoding { Epigraph, MinMax, Indicator, Pwl };

const char* to_string(ObjectiveEncoding e);
ObjectiveEncoding encoding_from_string(const std::string& name);

struct GapPin {
  std::size_t candidate = 0;
  int size = 0;
};

struct BuildOptions {
  ObjectiveEncoding encoding = ObjectiveEncoding::Epigraph;
  /// When false the size-varying resource features (k=49, k=50) are frozen at
  /// their default-size values, trading fidelity for a smaller search space.
  bool vary_resource_features = true;
  std::vector<GapPin> pins;            // force candidate i to be a gap of size j
  std::vector<std::size_t> excludes;   // force b_i = 0
  int max_size = 0;                    // cap gap sizes, 0 = unlimited
  /// Test hook: shifts the kink of the piecewise-linear objective away from
  /// tau to provoke the encoding-equality guard.
  double pwl_kink_shift = 0.0;
};

/// Where each decision variable and auxiliary of a built model lives, plus
/// the per-(candidate, size) reduced ensembles the embedding is based on.
struct VarMap {
  struct PlacementVars {
    int gaps_in_cover_sentence = -1;
    int preceding_gaps = -1;
    int preceding_in_cover_sentence = -1;
    int occurs_as_gap = -1;
  };

  std::vector<int> b;                    // per candidate
  std::vector<std::vector<int>> s;       // [i][j-1]
  std::vector<std::vector<int>> e;       // [i][j-1], contribution variables
  std::vector<PlacementVars> f;          // per candidate
  int tau_hat = -1;

  int u = -1;                                       // epigraph
  int mm_gamma = -1, mm_hi = -1, mm_lo = -1;        // min/max
  int ind_delta = -1, ind_d = -1;                   // indicator
  int pwl_y = -1;
  std::array<int, 4> pwl_seg = {-1, -1, -1, -1};

  /// Reachable leaves of one reduced tree: `vars[p]` is the indicator
  /// variable of the leaf at node index `nodes[p]`.
  struct LeafGroup {
    std::vector<int> vars;
    std::vector<std::int32_t> nodes;
  };

  /// pe[i][j-1]: the ensemble partially evaluated at the static and size
  /// feature values of (i, j); only placement features remain free.
  std::vector<std::vector<model::TreeEnsemble>> pe;
  /// z[i][j-1][t]: leaf indicators of tree t. Trees collapsed to a single
  /// leaf carry an empty group (their value is folded into the contribution
  /// row).
  std::vector<std::vector<std::vector<LeafGroup>>> z;

  ObjectiveEncoding encoding = ObjectiveEncoding::Epigraph;
  double tau = 0.0;
  double pwl_kink = 0.0;  // kink position of the piecewise objective
  std::size_t m = 0;

  // extra constraints baked into the model, mirrored for the solver
  std::vector<int> pinned_size;        // per candidate, -1 = unpinned
  std::vector<std::uint8_t> excluded;  // per candidate
  int max_size = 0;                    // 0 = unlimited
};

/// Compiles instance + tables + ensemble + target difficulty into a MIP:
/// placement constraint, coupled size constraint, placement-feature linking,
/// per-(i, j) embedding of the reduced ensemble with indicator-selected
/// leaves and big-M feature linking, the mean-contribution row, and the
/// requested objective encoding.
std::pair<MipModel, VarMap> build(const feat::Instance& instance,
                                  const feat::FeatureTables& tables,
                                  const model::TreeEnsemble& ensemble, double tau,
                                  std::size_t m, const BuildOptions& opts = {},
                                  const feat::FeatureSchema& schema =
                                      feat::FeatureSchema::standard());

/// Objective value of an encoding at a fixed estimated difficulty.
double encoding_objective(ObjectiveEncoding e, double tau, double tau_hat,
                          double pwl_kink_shift = 0.0);

/// Fills a complete variable assignment from a gap selection: placement
/// features, leaf indicators, contributions, the estimated difficulty and the
/// objective auxiliaries. `sizes[i]` is ignored unless `selected[i]`.
std::vector<double> complete_assignment(const MipModel& model, const VarMap& map,
                                        const feat::Instance& instance,
                                        const std::vector<std::uint8_t>& selected,
                                        const std::vector<int>& sizes);

// --- file formats -----------------------------------------------------------

/// CPLEX-LP-format text; indicator constraints use the "b = 1 ->" syntax.
void export_lp(const MipModel& model, const std::string& path);
void write_lp(const MipModel& model, std::ostream& out);

/// Free MPS with a Gurobi-style INDICATORS section.
void export_mps(const MipModel& model, const std::string& path);
void write_mps(const MipModel& model, std::ostream& out);

/// Reads back the LP subset written by write_lp.
MipModel parse_lp(std::istream& in);
MipModel parse_lp_file(const std::string& path);

}  // namespace ctg::mip

#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ctg/features.hpp"

namespace ctg::model {

/// One node of a regression tree. Internal nodes route left iff
/// x[feature] < threshold; ties go right.
struct TreeNode {
  bool is_leaf = true;
  double value = 0.0;  // leaf payload
  int feature = -1;
  double threshold = 0.0;
  std::int32_t left = -1;   // index into Tree::nodes
  std::int32_t right = -1;
};

struct Tree {
  std::vector<TreeNode> nodes;  // root at index 0

  double evaluate(const feat::FeatureVector& x) const;
};

/// Additive ensemble: prediction = base_score + shrinkage * sum of tree outputs.
struct TreeEnsemble {
  double base_score = 0.0;
  double shrinkage = 1.0;
  std::vector<Tree> trees;
  std::vector<std::string> feature_names;

  bool valid() const;
};

struct TrainConfig {
  int rounds = 50;
  int max_depth = 4;
  double shrinkage = 0.1;
  int min_samples_leaf = 1;
  std::uint64_t seed = 0;
};

/// Per-feature closed interval; fixed features have lo == hi.
struct FeatureBox {
  std::array<double, feat::kFeatureDim> lo;
  std::array<double, feat::kFeatureDim> hi;

  static FeatureBox everything();
  static FeatureBox point(const feat::FeatureVector& x);
  bool contains(const feat::FeatureVector& x) const;
};

/// Squared-loss gradient boosting with greedy variance-reduction splits.
/// Deterministic for a fixed config; stops early once residuals vanish.
/// Constant targets yield base_score = y with a single zero leaf.
TreeEnsemble train_gbrt(const std::vector<feat::FeatureVector>& X,
                        const std::vector<double>& y, const TrainConfig& cfg);

double predict(const TreeEnsemble& ensemble, const feat::FeatureVector& x);
/// Reporting view clamped to [0, 1]; the raw sum is what the optimizer uses.
double predict_clamped(const TreeEnsemble& ensemble, const feat::FeatureVector& x);

/// Sound enclosure of the ensemble over a box: branches unreachable under the
/// box are pruned per tree, then the per-tree [min, max] leaf ranges are summed.
std::pair<double, double> predict_interval(const TreeEnsemble& ensemble,
                                           const FeatureBox& box);

/// Collapses every split on a fixed feature. The result predicts identically
/// on any completion of `fixed` and keeps one tree per original tree so that
/// summation order (and hence floating-point results) is preserved.
TreeEnsemble partial_evaluate(const TreeEnsemble& ensemble,
                              const std::array<std::optional<double>, feat::kFeatureDim>& fixed);

double rmse(const std::vector<double>& pred, const std::vector<double>& truth);
double pearson(const std::vector<double>& pred, const std::vector<double>& truth);

/// JSON model format:
///   { "base_score": x, "shrinkage": x,
///     "trees": [ { "nodes": [ {"k":int,"t":num,"l":int,"r":int} | {"v":num} ] } ],
///     "feature_names": [61 strings] }
void save_model(const TreeEnsemble& ensemble, const std::string& path);
std::string model_to_json(const TreeEnsemble& ensemble);
TreeEnsemble load_model(const std::string& path,
                        std::vector<std::string>* warnings = nullptr);
TreeEnsemble model_from_json(const std::string& json_text,
                             std::vector<std::string>* warnings = nullptr);

}  // namespace ctg::model

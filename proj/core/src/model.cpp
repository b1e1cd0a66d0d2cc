#include "ctg/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace ctg::model {

double Tree::evaluate(const feat::FeatureVector& x) const {
  const TreeNode* node = &nodes[0];
  while (!node->is_leaf) {
    node = x[static_cast<std::size_t>(node->feature)] < node->threshold
               ? &nodes[static_cast<std::size_t>(node->left)]
               : &nodes[static_cast<std::size_t>(node->right)];
  }
  return node->value;
}

bool TreeEnsemble::valid() const {
  if (trees.empty() || !(shrinkage > 0.0) || !std::isfinite(base_score)) return false;
  for (const Tree& t : trees) {
    if (t.nodes.empty()) return false;
    for (const TreeNode& n : t.nodes) {
      if (n.is_leaf) {
        if (!std::isfinite(n.value)) return false;
      } else if (n.feature < 0 || n.feature >= feat::kFeatureDim) {
        return false;
      }
    }
  }
  return true;
}

FeatureBox FeatureBox::everything() {
  FeatureBox b;
  b.lo.fill(-std::numeric_limits<double>::infinity());
  b.hi.fill(std::numeric_limits<double>::infinity());
  return b;
}

FeatureBox FeatureBox::point(const feat::FeatureVector& x) {
  FeatureBox b;
  std::copy(x.begin(), x.end(), b.lo.begin());
  std::copy(x.begin(), x.end(), b.hi.begin());
  return b;
}

bool FeatureBox::contains(const feat::FeatureVector& x) const {
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (x[k] < lo[k] || x[k] > hi[k]) return false;
  }
  return true;
}

namespace {

struct SplitScan {
  // residual sums per sorted order of one feature
  double best_gain = 0.0;
  int best_feature = -1;
  double best_threshold = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<feat::FeatureVector>& X, const TrainConfig& cfg,
              const std::array<bool, feat::kFeatureDim>& integer_feature)
      : X_(X), cfg_(cfg), integer_feature_(integer_feature) {}

  Tree fit(const std::vector<double>& residuals) {
    residuals_ = &residuals;
    Tree tree;
    std::vector<std::size_t> samples(X_.size());
    std::iota(samples.begin(), samples.end(), 0);
    build(tree, samples, 0);
    return tree;
  }

 private:
  std::int32_t build(Tree& tree, std::vector<std::size_t>& samples, int depth) {
    const std::vector<double>& r = *residuals_;
    double sum = 0.0;
    for (std::size_t s : samples) sum += r[s];
    const double mean = sum / static_cast<double>(samples.size());

    std::int32_t index = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.push_back({});
    TreeNode& placeholder = tree.nodes.back();
    placeholder.is_leaf = true;
    placeholder.value = mean;

    if (depth >= cfg_.max_depth ||
        samples.size() < 2 * static_cast<std::size_t>(cfg_.min_samples_leaf))
      return index;

    double best_gain = 1e-12;  // require a strict improvement
    int best_feature = -1;
    double best_threshold = 0.0;

    std::vector<std::size_t> order(samples);
    for (int k = 0; k < feat::kFeatureDim; ++k) {
      auto key = [&](std::size_t s) { return X_[s][static_cast<std::size_t>(k)]; };
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
      double left_sum = 0.0;
      const double total = sum;
      const double total_n = static_cast<double>(samples.size());
      for (std::size_t pos = 1; pos < order.size(); ++pos) {
        left_sum += r[order[pos - 1]];
        double a = key(order[pos - 1]);
        double b = key(order[pos]);
        if (!(a < b)) continue;  // no boundary between equal values
        if (pos < static_cast<std::size_t>(cfg_.min_samples_leaf) ||
            order.size() - pos < static_cast<std::size_t>(cfg_.min_samples_leaf))
          continue;
        double threshold = a + (b - a) / 2.0;
        if (integer_feature_[static_cast<std::size_t>(k)])
          threshold = std::floor(threshold) + 0.5;
        double ln = static_cast<double>(pos);
        double rn = total_n - ln;
        double right_sum = total - left_sum;
        double gain =
            left_sum * left_sum / ln + right_sum * right_sum / rn - total * total / total_n;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = k;
          best_threshold = threshold;
        }
      }
    }

    if (best_feature < 0) return index;

    std::vector<std::size_t> left, right;
    left.reserve(samples.size());
    right.reserve(samples.size());
    for (std::size_t s : samples) {
      if (X_[s][static_cast<std::size_t>(best_feature)] < best_threshold)
        left.push_back(s);
      else
        right.push_back(s);
    }
    if (left.empty() || right.empty()) return index;  // threshold snapping edge

    std::int32_t l = build(tree, left, depth + 1);
    std::int32_t rgt = build(tree, right, depth + 1);
    TreeNode& node = tree.nodes[static_cast<std::size_t>(index)];
    node.is_leaf = false;
    node.value = 0.0;
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = l;
    node.right = rgt;
    return index;
  }

  const std::vector<feat::FeatureVector>& X_;
  const TrainConfig& cfg_;
  const std::array<bool, feat::kFeatureDim>& integer_feature_;
  const std::vector<double>* residuals_ = nullptr;
};

}  // namespace

TreeEnsemble train_gbrt(const std::vector<feat::FeatureVector>& X,
                        const std::vector<double>& y, const TrainConfig& cfg) {
  if (X.size() != y.size()) throw DomainError("feature/label count mismatch");
  if (X.size() < 2) throw DomainError("need at least two training samples");
  if (cfg.rounds < 1 || cfg.max_depth < 1 || !(cfg.shrinkage > 0.0) || cfg.shrinkage > 1.0)
    throw DomainError("invalid training configuration");
  for (double v : y) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("labels must lie in [0, 1]");
  }

  std::array<bool, feat::kFeatureDim> integer_feature;
  for (int k = 0; k < feat::kFeatureDim; ++k) {
    bool all_int = true;
    for (const auto& x : X) {
      double v = x[static_cast<std::size_t>(k)];
      if (v != std::floor(v)) {
        all_int = false;
        break;
      }
    }
    integer_feature[static_cast<std::size_t>(k)] = all_int;
  }

  TreeEnsemble ens;
  ens.shrinkage = cfg.shrinkage;
  ens.feature_names = feat::FeatureSchema::standard().names();

  // constant targets: the base score carries everything
  if (std::all_of(y.begin(), y.end(), [&](double v) { return v == y.front(); })) {
    ens.base_score = y.front();
    Tree zero;
    zero.nodes.push_back({});
    zero.nodes.back().is_leaf = true;
    zero.nodes.back().value = 0.0;
    ens.trees.push_back(std::move(zero));
    return ens;
  }
  ens.base_score = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());

  std::vector<double> residual(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) residual[i] = y[i] - ens.base_score;

  TreeBuilder builder(X, cfg, integer_feature);
  for (int round = 0; round < cfg.rounds; ++round) {
    Tree tree = builder.fit(residual);
    for (std::size_t i = 0; i < X.size(); ++i)
      residual[i] -= cfg.shrinkage * tree.evaluate(X[i]);
    ens.trees.push_back(std::move(tree));
    double max_abs = 0.0;
    for (double r : residual) max_abs = std::max(max_abs, std::fabs(r));
    if (max_abs == 0.0) break;
  }
  return ens;
}

double predict(const TreeEnsemble& ensemble, const feat::FeatureVector& x) {
  double acc = ensemble.base_score;
  for (const Tree& t : ensemble.trees) acc += ensemble.shrinkage * t.evaluate(x);
  return acc;
}

double predict_clamped(const TreeEnsemble& ensemble, const feat::FeatureVector& x) {
  return std::clamp(predict(ensemble, x), 0.0, 1.0);
}

namespace {

void interval_walk(const Tree& tree, std::int32_t index, FeatureBox& box, double& lo,
                   double& hi) {
  const TreeNode& node = tree.nodes[static_cast<std::size_t>(index)];
  if (node.is_leaf) {
    lo = std::min(lo, node.value);
    hi = std::max(hi, node.value);
    return;
  }
  const std::size_t k = static_cast<std::size_t>(node.feature);
  const double t = node.threshold;
  if (box.hi[k] < t) {
    interval_walk(tree, node.left, box, lo, hi);
  } else if (box.lo[k] >= t) {
    interval_walk(tree, node.right, box, lo, hi);
  } else {
    double saved = box.hi[k];
    box.hi[k] = t;  // x < t relaxed to x <= t: still a sound enclosure
    interval_walk(tree, node.left, box, lo, hi);
    box.hi[k] = saved;
    saved = box.lo[k];
    box.lo[k] = t;
    interval_walk(tree, node.right, box, lo, hi);
    box.lo[k] = saved;
  }
}

}  // namespace

std::pair<double, double> predict_interval(const TreeEnsemble& ensemble,
                                           const FeatureBox& box) {
  double lo_acc = ensemble.base_score;
  double hi_acc = ensemble.base_score;
  FeatureBox scratch = box;
  for (const Tree& t : ensemble.trees) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    interval_walk(t, 0, scratch, lo, hi);
    lo_acc += ensemble.shrinkage * lo;
    hi_acc += ensemble.shrinkage * hi;
  }
  return {lo_acc, hi_acc};
}

namespace {

std::int32_t reduce_node(const Tree& src, std::int32_t index, Tree& dst,
                         const std::array<std::optional<double>, feat::kFeatureDim>& fixed) {
  const TreeNode& node = src.nodes[static_cast<std::size_t>(index)];
  if (!node.is_leaf) {
    const auto& fv = fixed[static_cast<std::size_t>(node.feature)];
    if (fv.has_value())
      return reduce_node(src, *fv < node.threshold ? node.left : node.right, dst, fixed);
  }
  std::int32_t out = static_cast<std::int32_t>(dst.nodes.size());
  dst.nodes.push_back(node);
  if (!node.is_leaf) {
    std::int32_t l = reduce_node(src, node.left, dst, fixed);
    std::int32_t r = reduce_node(src, node.right, dst, fixed);
    dst.nodes[static_cast<std::size_t>(out)].left = l;
    dst.nodes[static_cast<std::size_t>(out)].right = r;
  }
  return out;
}

}  // namespace

TreeEnsemble partial_evaluate(
    const TreeEnsemble& ensemble,
    const std::array<std::optional<double>, feat::kFeatureDim>& fixed) {
  TreeEnsemble out;
  out.base_score = ensemble.base_score;
  out.shrinkage = ensemble.shrinkage;
  out.feature_names = ensemble.feature_names;
  out.trees.reserve(ensemble.trees.size());
  for (const Tree& t : ensemble.trees) {
    Tree reduced;
    reduce_node(t, 0, reduced, fixed);
    out.trees.push_back(std::move(reduced));
  }
  return out;
}

double rmse(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.size() != truth.size() || pred.empty())
    throw DomainError("rmse requires equal non-empty vectors");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double d = pred[i] - truth[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

double pearson(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.size() != truth.size() || pred.size() < 2)
    throw DomainError("pearson requires equal vectors of length >= 2");
  const double n = static_cast<double>(pred.size());
  double mp = std::accumulate(pred.begin(), pred.end(), 0.0) / n;
  double mt = std::accumulate(truth.begin(), truth.end(), 0.0) / n;
  double cov = 0.0, vp = 0.0, vt = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double a = pred[i] - mp;
    double b = truth[i] - mt;
    cov += a * b;
    vp += a * a;
    vt += b * b;
  }
  if (vp == 0.0 || vt == 0.0)
    throw ZeroVarianceError("pearson undefined for constant input");
  return cov / std::sqrt(vp * vt);
}

std::string model_to_json(const TreeEnsemble& ensemble) {
  nlohmann::ordered_json j;
  j["base_score"] = ensemble.base_score;
  j["shrinkage"] = ensemble.shrinkage;
  j["trees"] = nlohmann::ordered_json::array();
  for (const Tree& t : ensemble.trees) {
    nlohmann::ordered_json jt;
    jt["nodes"] = nlohmann::ordered_json::array();
    for (const TreeNode& n : t.nodes) {
      if (n.is_leaf) {
        jt["nodes"].push_back({{"v", n.value}});
      } else {
        jt["nodes"].push_back({{"k", n.feature}, {"t", n.threshold}, {"l", n.left}, {"r", n.right}});
      }
    }
    j["trees"].push_back(std::move(jt));
  }
  j["feature_names"] = ensemble.feature_names;
  return j.dump(2);
}

void save_model(const TreeEnsemble& ensemble, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model file: " + path);
  out << model_to_json(ensemble) << "\n";
}

namespace {

void validate_tree(const Tree& t, const std::string& ptr) {
  if (t.nodes.empty()) throw SchemaError(ptr, "tree has no nodes");
  std::vector<char> seen(t.nodes.size(), 0);
  // children must point forward and be referenced at most once (acyclic)
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    const TreeNode& n = t.nodes[i];
    if (n.is_leaf) {
      if (!std::isfinite(n.value)) throw SchemaError(ptr, "non-finite leaf value");
      continue;
    }
    if (n.feature < 0 || n.feature >= feat::kFeatureDim)
      throw SchemaError(ptr, "feature index out of range");
    for (std::int32_t c : {n.left, n.right}) {
      if (c <= static_cast<std::int32_t>(i) || c >= static_cast<std::int32_t>(t.nodes.size()))
        throw SchemaError(ptr, "child index must point forward within the tree");
      if (seen[static_cast<std::size_t>(c)]) throw SchemaError(ptr, "node referenced twice");
      seen[static_cast<std::size_t>(c)] = 1;
    }
  }
}

}  // namespace

TreeEnsemble model_from_json(const std::string& json_text,
                             std::vector<std::string>* warnings) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("/", e.what());
  }
  static const std::vector<std::string> known = {"base_score", "shrinkage", "trees",
                                                 "feature_names"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end() && warnings)
      warnings->push_back("ignoring unknown field '" + it.key() + "'");
  }
  TreeEnsemble ens;
  if (!j.contains("base_score") || !j["base_score"].is_number())
    throw SchemaError("/base_score", "missing or non-numeric");
  if (!j.contains("shrinkage") || !j["shrinkage"].is_number())
    throw SchemaError("/shrinkage", "missing or non-numeric");
  ens.base_score = j["base_score"].get<double>();
  ens.shrinkage = j["shrinkage"].get<double>();
  if (!(ens.shrinkage > 0.0)) throw SchemaError("/shrinkage", "must be positive");
  if (!j.contains("trees") || !j["trees"].is_array() || j["trees"].empty())
    throw SchemaError("/trees", "missing or empty");
  for (std::size_t ti = 0; ti < j["trees"].size(); ++ti) {
    const auto& jt = j["trees"][ti];
    const std::string ptr = "/trees/" + std::to_string(ti);
    if (!jt.contains("nodes") || !jt["nodes"].is_array())
      throw SchemaError(ptr + "/nodes", "missing or non-array");
    Tree tree;
    for (const auto& jn : jt["nodes"]) {
      TreeNode n;
      if (jn.contains("v")) {
        n.is_leaf = true;
        n.value = jn["v"].get<double>();
      } else {
        n.is_leaf = false;
        if (!jn.contains("k") || !jn.contains("t") || !jn.contains("l") || !jn.contains("r"))
          throw SchemaError(ptr, "internal node requires k, t, l, r");
        n.feature = jn["k"].get<int>();
        n.threshold = jn["t"].get<double>();
        n.left = jn["l"].get<std::int32_t>();
        n.right = jn["r"].get<std::int32_t>();
      }
      tree.nodes.push_back(n);
    }
    validate_tree(tree, ptr);
    ens.trees.push_back(std::move(tree));
  }
  if (j.contains("feature_names")) {
    ens.feature_names = j["feature_names"].get<std::vector<std::string>>();
    if (ens.feature_names.size() != static_cast<std::size_t>(feat::kFeatureDim))
      throw SchemaError("/feature_names", "expected 61 names");
  } else {
    ens.feature_names = feat::FeatureSchema::standard().names();
    if (warnings) warnings->push_back("feature_names missing, using the standard schema");
  }
  return ens;
}

TreeEnsemble load_model(const std::string& path, std::vector<std::string>* warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return model_from_json(text, warnings);
}

}  // namespace ctg::model

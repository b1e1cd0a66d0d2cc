#include "ctg/solver.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <mutex>
#include <ostream>
#include <thread>

#include "json.hpp"

namespace ctg::solver {

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal:
      return "optimal";
    case SolveStatus::Feasible:
      return "feasible";
    case SolveStatus::Infeasible:
      return "infeasible";
    case SolveStatus::Limit:
      return "limit";
  }
  return "?";
}

std::string Solution::stats_json() const {
  nlohmann::ordered_json j;
  j["status"] = to_string(status);
  j["objective"] = objective;
  j["bound"] = bound;
  j["nodes"] = stats.nodes;
  j["time_s"] = stats.wall_s;
  return j.dump();
}

namespace {

using Clock = std::chrono::steady_clock;


long left_upper(double t) {
  return t == std::floor(t) ? static_cast<long>(t) - 1 : static_cast<long>(std::floor(t));
}
long right_lower(double t) {
  return t == std::floor(t) ? static_cast<long>(t) : static_cast<long>(std::ceil(t));
}

struct RoleBox {
  std::array<long, 4> lo;
  std::array<long, 4> hi;
};

// Reduced tree in role space (0 sent, 1 prec, 2 prec-in-sent, 3 occurs).
struct BoundTree {
  struct Node {
    bool leaf;
    std::int8_t role;
    double threshold;
    double value;
    std::int32_t left, right;
  };
  std::vector<Node> nodes;
};

struct GapBlock {
  double folded = 0.0;  // base plus all collapsed trees, shrinkage applied
  double shrinkage = 1.0;
  std::vector<BoundTree> trees;

  void interval(const RoleBox& box, double& lo, double& hi) const;
};

void walk(const BoundTree& t, std::int32_t idx, RoleBox& box, double& lo, double& hi) {
  const BoundTree::Node& n = t.nodes[static_cast<std::size_t>(idx)];
  if (n.leaf) {
    lo = std::min(lo, n.value);
    hi = std::max(hi, n.value);
    return;
  }
  const auto r = static_cast<std::size_t>(n.role);
  const long lu = left_upper(n.threshold);
  const long rl = right_lower(n.threshold);
  if (box.hi[r] <= lu) {
    walk(t, n.left, box, lo, hi);
  } else if (box.lo[r] >= rl) {
    walk(t, n.right, box, lo, hi);
  } else {
    long saved = box.hi[r];
    box.hi[r] = lu;
    walk(t, n.left, box, lo, hi);
    box.hi[r] = saved;
    saved = box.lo[r];
    box.lo[r] = rl;
    walk(t, n.right, box, lo, hi);
    box.lo[r] = saved;
  }
}

void GapBlock::interval(const RoleBox& box, double& lo, double& hi) const {
  lo = folded;
  hi = folded;
  RoleBox scratch = box;
  for (const BoundTree& t : trees) {
    double tl = std::numeric_limits<double>::infinity();
    double th = -std::numeric_limits<double>::infinity();
    walk(t, 0, scratch, tl, th);
    lo += shrinkage * tl;
    hi += shrinkage * th;
  }
}

struct Shared {
  double tau;
  mip::ObjectiveEncoding encoding;
  double pwl_kink;
  double gap_tol;
  // exact mode for the lexicographic branching rule: prune only subtrees
  // that cannot tie the incumbent, so the first optimum found in search
  // order is the lexicographically smallest one
  bool lex_exact = false;

  std::atomic<double> incumbent{std::numeric_limits<double>::infinity()};
  std::mutex witness_mutex;
  std::vector<std::uint8_t> best_selected;
  std::vector<int> best_sizes;
  double best_tau_hat = std::numeric_limits<double>::quiet_NaN();
  bool has_witness = false;

  std::atomic<double> pruned_min{std::numeric_limits<double>::infinity()};
  std::atomic<std::uint64_t> nodes{0};
  std::atomic<bool> aborted{false};
  // proven lower bound at the root; reaching it within gap_tol ends the search
  double root_bound = -std::numeric_limits<double>::infinity();
  std::atomic<bool> gap_stop{false};

  std::uint64_t node_limit;
  Clock::time_point deadline;
  bool has_deadline = false;

  std::ostream* log = nullptr;
  std::uint64_t log_every = 0;
  std::mutex log_mutex;
  Clock::time_point start;

  double hull_objective(double lo, double hi) const {
    const double target = encoding == mip::ObjectiveEncoding::Pwl ? pwl_kink : tau;
    const double x = std::clamp(target, lo, hi);
    return mip::encoding_objective(encoding, tau, x, pwl_kink - tau);
  }

  void note_pruned(double bound) {
    double cur = pruned_min.load(std::memory_order_relaxed);
    while (bound < cur &&
           !pruned_min.compare_exchange_weak(cur, bound, std::memory_order_relaxed)) {
    }
  }
};

// witness order: selected index tuples, then sizes, both lexicographic
bool witness_less(const std::vector<std::uint8_t>& sa, const std::vector<int>& za,
                  const std::vector<std::uint8_t>& sb, const std::vector<int>& zb) {
  const std::size_t n = sa.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (sa[i] != sb[i]) return sa[i] > sb[i];  // containing the lower index comes first
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (sa[i] && za[i] != zb[i]) return za[i] < zb[i];
  }
  return false;
}

class Worker {
 public:
  Worker(const feat::Instance& inst, const mip::VarMap& map, Shared& shared,
         const std::vector<GapBlock*>& blocks, bool lex_rule)
      : inst_(inst),
        map_(map),
        shared_(shared),
        blocks_(blocks),
        lex_rule_(lex_rule),
        n_(inst.n()) {
    status_.assign(n_, 0);
    size_of_.assign(n_, 0);
    partners_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t h = 0; h < n_; ++h) {
        if (inst.same_word.at(i, h)) partners_[i].push_back(h);
      }
    }
    sel_before_.assign(n_ + 1, 0);
    und_before_.assign(n_ + 1, 0);
    lo_buf_.resize(n_);
    hi_buf_.resize(n_);
    pick_buf_.reserve(n_);
  }

  // seed with a pre-decided prefix (parallel frontier)
  void preset(const std::vector<std::pair<std::size_t, int>>& decisions) {
    for (auto [i, j] : decisions) {
      if (j == 0) {
        status_[i] = 2;
        ++exc_count_;
      } else {
        status_[i] = 1;
        size_of_[i] = j;
        ++sel_count_;
      }
    }
  }

  void apply_pins() {
    for (std::size_t i = 0; i < n_; ++i) {
      if (map_.pinned_size[i] >= 0) {
        status_[i] = 1;
        size_of_[i] = map_.pinned_size[i];
        ++sel_count_;
      } else if (map_.excluded[i]) {
        status_[i] = 2;
        ++exc_count_;
      }
    }
  }

  const GapBlock& block(std::size_t i, int j) const {
    return *blocks_[i * stride_ + static_cast<std::size_t>(j - 1)];
  }
  static std::size_t stride_for(const feat::Instance& inst) {
    std::size_t s = 0;
    for (std::size_t i = 0; i < inst.n(); ++i)
      s = std::max(s, static_cast<std::size_t>(inst.word_length(i) - 1));
    return s;
  }
  void set_stride(std::size_t s) { stride_ = s; }

  int max_j(std::size_t i) const {
    int l = inst_.word_length(i) - 1;
    if (map_.max_size > 0) l = std::min(l, map_.max_size);
    return l;
  }

  void run() { dfs(); }

  // exact incumbent evaluation, shared arithmetic path with the oracle
  double exact_tau_hat() {
    std::vector<std::uint8_t> sel(n_, 0);
    for (std::size_t i = 0; i < n_; ++i) sel[i] = status_[i] == 1 ? 1 : 0;
    const auto& binding = feat::FeatureSchema::standard().placement();
    double acc = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      if (status_[i] != 1) continue;
      feat::PlacementFeatures pf = feat::placement_features(inst_, sel, i);
      feat::FeatureVector fv{};
      fv[static_cast<std::size_t>(binding.gaps_in_cover_sentence)] = pf.gaps_in_cover_sentence;
      fv[static_cast<std::size_t>(binding.preceding_gaps)] = pf.preceding_gaps;
      fv[static_cast<std::size_t>(binding.preceding_in_cover_sentence)] =
          pf.preceding_in_cover_sentence;
      fv[static_cast<std::size_t>(binding.occurs_as_gap)] = pf.occurs_as_gap;
      acc += model::predict(map_.pe[i][static_cast<std::size_t>(size_of_[i] - 1)], fv);
    }
    return acc / static_cast<double>(map_.m);
  }

 private:
  void offer_incumbent() {
    const double that = exact_tau_hat();
    const double obj =
        mip::encoding_objective(shared_.encoding, shared_.tau, that,
                                shared_.pwl_kink - shared_.tau);
    double cur = shared_.incumbent.load(std::memory_order_relaxed);
    if (obj > cur) return;
    std::lock_guard<std::mutex> lock(shared_.witness_mutex);
    cur = shared_.incumbent.load(std::memory_order_relaxed);
    std::vector<std::uint8_t> sel(n_, 0);
    for (std::size_t i = 0; i < n_; ++i) sel[i] = status_[i] == 1 ? 1 : 0;
    if (obj < cur ||
        (obj == cur && shared_.has_witness &&
         witness_less(sel, size_of_, shared_.best_selected, shared_.best_sizes)) ||
        (obj == cur && !shared_.has_witness)) {
      shared_.incumbent.store(obj, std::memory_order_relaxed);
      shared_.best_selected = std::move(sel);
      shared_.best_sizes = size_of_;
      shared_.best_tau_hat = that;
      shared_.has_witness = true;
      if (obj - shared_.root_bound <= shared_.gap_tol) {
        shared_.gap_stop.store(true, std::memory_order_relaxed);
        shared_.aborted.store(true, std::memory_order_relaxed);
      }
    }
  }

  bool limits_hit(std::uint64_t node_id) {
    if (shared_.aborted.load(std::memory_order_relaxed)) return true;
    if (shared_.node_limit && node_id > shared_.node_limit) {
      shared_.aborted.store(true, std::memory_order_relaxed);
      return true;
    }
    if ((node_id & 1023u) == 0 && shared_.has_deadline && Clock::now() >= shared_.deadline) {
      shared_.aborted.store(true, std::memory_order_relaxed);
      return true;
    }
    return false;
  }

  void log_line(double bound) {
    if (!shared_.log || !shared_.log_every) return;
    const std::uint64_t nodes = shared_.nodes.load(std::memory_order_relaxed);
    if (nodes % shared_.log_every != 0) return;
    std::lock_guard<std::mutex> lock(shared_.log_mutex);
    const double secs =
        std::chrono::duration<double>(Clock::now() - shared_.start).count();
    (*shared_.log) << "nodes=" << nodes
                   << " incumbent=" << shared_.incumbent.load(std::memory_order_relaxed)
                   << " bound=" << bound << " time=" << secs << "\n";
  }

  // hull bound over the open node; also picks the branching candidate
  double open_bound(std::size_t& branch_on) {
    const long rem = static_cast<long>(map_.m) - static_cast<long>(sel_count_);

    for (std::size_t i = 0; i < n_; ++i) {
      sel_before_[i + 1] = sel_before_[i] + (status_[i] == 1 ? 1 : 0);
      und_before_[i + 1] = und_before_[i] + (status_[i] == 0 ? 1 : 0);
    }

    double sel_lo = 0.0, sel_hi = 0.0;
    pick_buf_.clear();
    double best_width = -1.0;
    branch_on = n_;

    for (std::size_t i = 0; i < n_; ++i) {
      if (status_[i] == 2) continue;
      const bool selected = status_[i] == 1;
      const long cap_others = rem - (selected ? 0 : 1);

      RoleBox box;
      auto [sb, se] = inst_.sentence_range[i];
      long sent_sel = sel_before_[se] - sel_before_[sb];
      long sent_und = und_before_[se] - und_before_[sb] - (selected ? 0 : 1);
      box.lo[0] = sent_sel + (selected ? 0 : 1);  // own gap counts in its sentence
      box.hi[0] = box.lo[0] + std::min(sent_und, cap_others);
      box.lo[1] = sel_before_[i];
      box.hi[1] = box.lo[1] + std::min(static_cast<long>(und_before_[i]), cap_others);
      long ps_sel = sel_before_[i] - sel_before_[sb];
      long ps_und = und_before_[i] - und_before_[sb];
      box.lo[2] = ps_sel;
      box.hi[2] = box.lo[2] + std::min(ps_und, cap_others);
      long occ_lo = 0, occ_hi = 0;
      for (std::size_t h : partners_[i]) {
        if (status_[h] == 1) {
          occ_lo = occ_hi = 1;
          break;
        }
        if (status_[h] == 0 && cap_others > 0) occ_hi = 1;
      }
      box.lo[3] = occ_lo;
      box.hi[3] = occ_hi;

      double lo, hi;
      if (selected) {
        block(i, size_of_[i]).interval(box, lo, hi);
        sel_lo += lo;
        sel_hi += hi;
      } else {
        lo = std::numeric_limits<double>::infinity();
        hi = -std::numeric_limits<double>::infinity();
        const int jm = max_j(i);
        for (int j = 1; j <= jm; ++j) {
          double jl, jh;
          block(i, j).interval(box, jl, jh);
          lo = std::min(lo, jl);
          hi = std::max(hi, jh);
        }
        lo_buf_[pick_buf_.size()] = lo;
        hi_buf_[pick_buf_.size()] = hi;
        pick_buf_.push_back(i);
        if (!lex_rule_) {
          double width = hi - lo;
          if (width > best_width + 1e-15) {
            best_width = width;
            branch_on = i;
          }
        } else if (branch_on == n_) {
          branch_on = i;
        }
      }
    }

    // hull of achievable tau_hat: exact contributions of the selected gaps
    // plus the best/worst picks among the undecided ones
    const std::size_t need = static_cast<std::size_t>(rem);
    scratch_.assign(lo_buf_.begin(), lo_buf_.begin() + static_cast<long>(pick_buf_.size()));
    std::nth_element(scratch_.begin(), scratch_.begin() + static_cast<long>(need - 1),
                     scratch_.end());
    double t_lo = sel_lo;
    for (std::size_t p = 0; p < need; ++p) t_lo += scratch_[p];
    scratch_.assign(hi_buf_.begin(), hi_buf_.begin() + static_cast<long>(pick_buf_.size()));
    std::nth_element(scratch_.begin(), scratch_.begin() + static_cast<long>(need - 1),
                     scratch_.end(), std::greater<double>());
    double t_hi = sel_hi;
    for (std::size_t p = 0; p < need; ++p) t_hi += scratch_[p];

    const double inv_m = 1.0 / static_cast<double>(map_.m);
    return shared_.hull_objective(t_lo * inv_m, t_hi * inv_m);
  }

 public:
  // bound of the current partial assignment: exact for complete nodes,
  // +infinity for infeasible ones
  double current_bound() {
    const std::size_t und = n_ - sel_count_ - exc_count_;
    const long rem = static_cast<long>(map_.m) - static_cast<long>(sel_count_);
    if (rem < 0 || und < static_cast<std::size_t>(rem))
      return std::numeric_limits<double>::infinity();
    if (rem == 0) {
      const double that = exact_tau_hat();
      return mip::encoding_objective(shared_.encoding, shared_.tau, that,
                                     shared_.pwl_kink - shared_.tau);
    }
    std::size_t ignored;
    return open_bound(ignored);
  }

 private:
  void dfs() {
    const std::uint64_t node_id = shared_.nodes.fetch_add(1, std::memory_order_relaxed) + 1;
    if (limits_hit(node_id)) return;

    const std::size_t und = n_ - sel_count_ - exc_count_;
    const long rem = static_cast<long>(map_.m) - static_cast<long>(sel_count_);
    if (rem < 0 || und < static_cast<std::size_t>(rem)) return;  // infeasible branch
    if (rem == 0) {
      // remaining candidates are forced out; node is a complete selection
      offer_incumbent();
      return;
    }
    if (und == static_cast<std::size_t>(rem)) {
      // every undecided candidate must be selected; if their sizes are forced
      // too, the node is a complete assignment
      bool forced = true;
      for (std::size_t i = 0; i < n_ && forced; ++i)
        if (status_[i] == 0 && max_j(i) != 1) forced = false;
      if (forced) {
        std::vector<std::size_t> flipped;
        for (std::size_t i = 0; i < n_; ++i) {
          if (status_[i] != 0) continue;
          status_[i] = 1;
          size_of_[i] = 1;
          ++sel_count_;
          flipped.push_back(i);
        }
        offer_incumbent();
        for (std::size_t i : flipped) {
          status_[i] = 0;
          --sel_count_;
        }
        return;
      }
    }

    const double incumbent = shared_.incumbent.load(std::memory_order_relaxed);
    std::size_t branch_on = n_;
    const double bound = open_bound(branch_on);
    const std::size_t need = static_cast<std::size_t>(rem);
    log_line(bound);
    // the literal cut rule: subtrees that cannot strictly beat the incumbent
    // are closed; optimality is proven by exhaustion
    if (bound >= incumbent) {
      shared_.note_pruned(bound);
      return;
    }

    // children: select with each size, then exclude (when still feasible)
    const std::size_t c = branch_on;
    status_[c] = 1;
    ++sel_count_;
    const int jm = max_j(c);
    for (int j = 1; j <= jm; ++j) {
      size_of_[c] = j;
      dfs();
      if (shared_.aborted.load(std::memory_order_relaxed)) break;
    }
    status_[c] = 0;
    --sel_count_;
    if (und > need && !shared_.aborted.load(std::memory_order_relaxed)) {
      status_[c] = 2;
      ++exc_count_;
      dfs();
      status_[c] = 0;
      --exc_count_;
    }
  }

  const feat::Instance& inst_;
  const mip::VarMap& map_;
  Shared& shared_;
  const std::vector<GapBlock*>& blocks_;
  bool lex_rule_;
  std::size_t n_;
  std::size_t stride_ = 0;

  std::vector<std::uint8_t> status_;  // 0 undecided, 1 selected, 2 excluded
  std::vector<int> size_of_;
  std::size_t sel_count_ = 0, exc_count_ = 0;
  std::vector<std::vector<std::size_t>> partners_;
  std::vector<long> sel_before_, und_before_;
  std::vector<double> lo_buf_, hi_buf_, scratch_;
  std::vector<std::size_t> pick_buf_;
};

struct Blocks {
  std::vector<GapBlock> storage;
  std::vector<GapBlock*> ptrs;
  std::size_t stride = 0;
};

// role-space bound trees per (i, j)
Blocks build_blocks(const mip::VarMap& map, const feat::Instance& instance) {
  const std::size_t n = instance.n();
  const auto& binding = feat::FeatureSchema::standard().placement();
  auto role_of = [&](int k) -> int {
    if (k == binding.gaps_in_cover_sentence) return 0;
    if (k == binding.preceding_gaps) return 1;
    if (k == binding.preceding_in_cover_sentence) return 2;
    if (k == binding.occurs_as_gap) return 3;
    throw DomainError("reduced ensemble splits on non-placement feature k" + std::to_string(k));
  };
  Blocks out;
  out.stride = Worker::stride_for(instance);
  out.storage.resize(n * out.stride);
  out.ptrs.assign(n * out.stride, nullptr);
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 1; j < instance.word_length(i); ++j) {
      GapBlock& g = out.storage[i * out.stride + static_cast<std::size_t>(j - 1)];
      const model::TreeEnsemble& pe = map.pe[i][static_cast<std::size_t>(j - 1)];
      g.shrinkage = pe.shrinkage;
      g.folded = pe.base_score;
      for (const model::Tree& t : pe.trees) {
        if (t.nodes.size() == 1) {
          g.folded += pe.shrinkage * t.nodes[0].value;
          continue;
        }
        BoundTree bt;
        bt.nodes.reserve(t.nodes.size());
        for (const model::TreeNode& nd : t.nodes) {
          BoundTree::Node b;
          b.leaf = nd.is_leaf;
          b.value = nd.value;
          b.threshold = nd.threshold;
          b.role = nd.is_leaf ? -1 : static_cast<std::int8_t>(role_of(nd.feature));
          b.left = nd.left;
          b.right = nd.right;
          bt.nodes.push_back(b);
        }
        g.trees.push_back(std::move(bt));
      }
      out.ptrs[i * out.stride + static_cast<std::size_t>(j - 1)] = &g;
    }
  }
  return out;
}

}  // namespace

double partial_bound(const mip::MipModel& model, const mip::VarMap& map,
                     const feat::Instance& instance, const std::vector<int>& state,
                     double tau) {
  (void)model;
  if (state.size() != instance.n()) throw DomainError("state must cover all candidates");
  Blocks blocks = build_blocks(map, instance);
  Shared shared;
  shared.tau = tau;
  shared.encoding = map.encoding;
  shared.pwl_kink = map.encoding == mip::ObjectiveEncoding::Pwl ? map.pwl_kink : tau;
  shared.gap_tol = 0.0;
  shared.node_limit = 0;
  Worker w(instance, map, shared, blocks.ptrs, false);
  w.set_stride(blocks.stride);
  std::vector<std::pair<std::size_t, int>> decisions;
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (state[i] >= 0) decisions.emplace_back(i, state[i]);
  }
  w.preset(decisions);
  return w.current_bound();
}

Solution solve(const mip::MipModel& model, const mip::VarMap& map,
               const feat::Instance& instance, const model::TreeEnsemble& ensemble,
               double tau, const SolveOptions& opts) {
  (void)ensemble;  // the reduced per-(i, j) ensembles in `map` carry the model
  const auto t0 = Clock::now();
  const std::size_t n = instance.n();

  Solution out;
  out.stats.nodes = 0;

  // feasibility of pins/excludes against the gap count
  std::size_t pinned = 0, excluded = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (map.pinned_size[i] >= 0) ++pinned;
    if (map.excluded[i]) ++excluded;
  }
  if (pinned > map.m || n - excluded < map.m) {
    out.status = SolveStatus::Infeasible;
    out.bound = std::numeric_limits<double>::infinity();
    out.stats.wall_s = std::chrono::duration<double>(Clock::now() - t0).count();
    return out;
  }

  Blocks built = build_blocks(map, instance);
  std::vector<GapBlock*>& blocks = built.ptrs;
  std::size_t stride = built.stride;

  Shared shared;
  shared.tau = tau;
  shared.encoding = map.encoding;
  shared.pwl_kink = map.encoding == mip::ObjectiveEncoding::Pwl ? map.pwl_kink : tau;
  shared.gap_tol = opts.gap_tolerance;
  shared.node_limit = opts.node_limit;
  shared.log = opts.log;
  shared.log_every = opts.log_every;
  shared.start = t0;
  if (opts.time_limit_s > 0) {
    shared.deadline = t0 + std::chrono::duration_cast<Clock::duration>(
                               std::chrono::duration<double>(opts.time_limit_s));
    shared.has_deadline = true;
  }

  const bool lex_rule = opts.branching == "lex";
  shared.lex_exact = lex_rule;

  {
    Worker rooter(instance, map, shared, blocks, lex_rule);
    rooter.set_stride(stride);
    rooter.apply_pins();
    shared.root_bound = rooter.current_bound();
  }

  // incumbent seed: static-style placement with per-gap size adjustment.
  // Skipped under the lexicographic rule, where the first optimum found in
  // search order must be the lexicographically smallest witness.
  if (!lex_rule) {
    std::vector<std::size_t> free_order;
    for (std::size_t i = 1; i < n; i += 2)
      if (map.pinned_size[i] < 0 && !map.excluded[i]) free_order.push_back(i);
    for (std::size_t i = 0; i < n; i += 2)
      if (map.pinned_size[i] < 0 && !map.excluded[i]) free_order.push_back(i);
    std::vector<std::pair<std::size_t, int>> picks;
    std::size_t take = map.m - pinned;
    for (std::size_t p = 0; p < free_order.size() && picks.size() < take; ++p) {
      std::size_t i = free_order[p];
      int l = instance.word_length(i);
      int j = std::clamp((l + 1) / 2, 1, l - 1);
      if (map.max_size > 0) j = std::min(j, map.max_size);
      picks.emplace_back(i, j);
    }
    if (picks.size() == take) {
      // greedy per-gap size walk toward tau, in index order
      std::vector<std::uint8_t> sel(n, 0);
      std::vector<int> size_of(n, 0);
      for (std::size_t i = 0; i < n; ++i) {
        if (map.pinned_size[i] >= 0) {
          sel[i] = 1;
          size_of[i] = map.pinned_size[i];
        }
      }
      for (auto [i, j] : picks) {
        sel[i] = 1;
        size_of[i] = j;
      }
      const auto& bind2 = feat::FeatureSchema::standard().placement();
      auto predict_at = [&](std::size_t i, int j) {
        feat::PlacementFeatures pf = feat::placement_features(instance, sel, i);
        feat::FeatureVector fv{};
        fv[static_cast<std::size_t>(bind2.gaps_in_cover_sentence)] = pf.gaps_in_cover_sentence;
        fv[static_cast<std::size_t>(bind2.preceding_gaps)] = pf.preceding_gaps;
        fv[static_cast<std::size_t>(bind2.preceding_in_cover_sentence)] =
            pf.preceding_in_cover_sentence;
        fv[static_cast<std::size_t>(bind2.occurs_as_gap)] = pf.occurs_as_gap;
        return model::predict(map.pe[i][static_cast<std::size_t>(j - 1)], fv);
      };
      for (auto& [i, j] : picks) {
        const int jm = map.max_size > 0
                           ? std::min(instance.word_length(i) - 1, map.max_size)
                           : instance.word_length(i) - 1;
        double p = predict_at(i, j);
        if (p < tau) {
          while (p < tau && j < jm) p = predict_at(i, ++j);
        } else if (p > tau) {
          while (p > tau && j > 1) p = predict_at(i, --j);
        }
        size_of[i] = j;
      }
      Worker eval(instance, map, shared, blocks, lex_rule);
      eval.set_stride(stride);
      std::vector<std::pair<std::size_t, int>> all;
      for (std::size_t i = 0; i < n; ++i) {
        if (sel[i])
          all.emplace_back(i, size_of[i]);
        else
          all.emplace_back(i, 0);
      }
      eval.preset(all);
      // complete node: rem == 0, offer as incumbent
      const double that = eval.exact_tau_hat();
      const double obj = mip::encoding_objective(shared.encoding, tau, that,
                                                 shared.pwl_kink - tau);
      std::lock_guard<std::mutex> lock(shared.witness_mutex);
      shared.incumbent.store(obj, std::memory_order_relaxed);
      shared.best_selected = sel;
      shared.best_sizes = size_of;
      shared.best_tau_hat = that;
      shared.has_witness = true;
    }
  }

  const int threads = std::max(1, opts.threads);
  if (threads == 1) {
    Worker w(instance, map, shared, blocks, lex_rule);
    w.set_stride(stride);
    w.apply_pins();
    w.run();
  } else {
    // frontier split: pre-assign the first few unpinned candidates
    std::vector<std::size_t> frontier_vars;
    for (std::size_t i = 0; i < n && frontier_vars.size() < 3; ++i) {
      if (map.pinned_size[i] < 0 && !map.excluded[i]) frontier_vars.push_back(i);
    }
    std::vector<std::vector<std::pair<std::size_t, int>>> jobs;
    std::vector<std::pair<std::size_t, int>> current;
    auto expand = [&](auto&& self, std::size_t depth) -> void {
      if (depth == frontier_vars.size()) {
        jobs.push_back(current);
        return;
      }
      std::size_t i = frontier_vars[depth];
      int jm = instance.word_length(i) - 1;
      if (map.max_size > 0) jm = std::min(jm, map.max_size);
      for (int j = 1; j <= jm; ++j) {
        current.emplace_back(i, j);
        self(self, depth + 1);
        current.pop_back();
      }
      current.emplace_back(i, 0);  // excluded
      self(self, depth + 1);
      current.pop_back();
    };
    expand(expand, 0);

    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&]() {
        while (true) {
          std::size_t job = next.fetch_add(1);
          if (job >= jobs.size()) return;
          Worker w(instance, map, shared, blocks, lex_rule);
          w.set_stride(stride);
          w.apply_pins();
          w.preset(jobs[job]);
          w.run();
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  out.stats.nodes = shared.nodes.load();
  out.stats.wall_s = std::chrono::duration<double>(Clock::now() - t0).count();

  if (!shared.has_witness) {
    // count-feasible instances always yield a witness unless cut short first
    out.status = shared.aborted.load() ? SolveStatus::Limit : SolveStatus::Infeasible;
    out.bound = out.status == SolveStatus::Limit ? std::max(0.0, shared.root_bound)
                                                 : std::numeric_limits<double>::infinity();
    return out;
  }
  out.objective = shared.incumbent.load();
  out.tau_hat = shared.best_tau_hat;
  out.selected = shared.best_selected;
  out.sizes = shared.best_sizes;
  // sizes of unselected candidates are meaningless; normalize to 0
  for (std::size_t i = 0; i < n; ++i)
    if (!out.selected[i]) out.sizes[i] = 0;
  out.assignment = mip::complete_assignment(model, map, instance, out.selected, out.sizes);

  const bool aborted = shared.aborted.load();
  const double pruned = shared.pruned_min.load();
  if (shared.gap_stop.load()) {
    // the incumbent met the root bound within the tolerance
    out.status = SolveStatus::Optimal;
    out.bound = shared.root_bound;
  } else if (aborted) {
    out.status = SolveStatus::Limit;
    out.bound = std::max(0.0, shared.root_bound);  // root proof is all that remains
  } else {
    out.status = SolveStatus::Optimal;
    out.bound = std::min(out.objective, pruned);
  }
  return out;
}

BigUint::BigUint(std::uint64_t v) {
  limbs_ = {static_cast<std::uint32_t>(v & 0xffffffffu), static_cast<std::uint32_t>(v >> 32)};
  while (limbs_.size() > 1 && limbs_.back() == 0) limbs_.pop_back();
}

void BigUint::multiply(std::uint32_t f) {
  std::uint64_t carry = 0;
  for (auto& limb : limbs_) {
    std::uint64_t cur = static_cast<std::uint64_t>(limb) * f + carry;
    limb = static_cast<std::uint32_t>(cur & 0xffffffffu);
    carry = cur >> 32;
  }
  while (carry) {
    limbs_.push_back(static_cast<std::uint32_t>(carry & 0xffffffffu));
    carry >>= 32;
  }
}

void BigUint::divide_exact(std::uint32_t d) {
  std::uint64_t rem = 0;
  for (std::size_t i = limbs_.size(); i-- > 0;) {
    std::uint64_t cur = (rem << 32) | limbs_[i];
    limbs_[i] = static_cast<std::uint32_t>(cur / d);
    rem = cur % d;
  }
  while (limbs_.size() > 1 && limbs_.back() == 0) limbs_.pop_back();
}

bool BigUint::fits_uint64() const { return limbs_.size() <= 2; }

std::uint64_t BigUint::as_uint64() const {
  std::uint64_t v = limbs_[0];
  if (limbs_.size() > 1) v |= static_cast<std::uint64_t>(limbs_[1]) << 32;
  return v;
}

std::string BigUint::to_string() const {
  BigUint tmp = *this;
  std::string out;
  auto is_zero = [&]() { return tmp.limbs_.size() == 1 && tmp.limbs_[0] == 0; };
  if (is_zero()) return "0";
  while (!is_zero()) {
    std::uint64_t rem = 0;
    for (std::size_t i = tmp.limbs_.size(); i-- > 0;) {
      std::uint64_t cur = (rem << 32) | tmp.limbs_[i];
      tmp.limbs_[i] = static_cast<std::uint32_t>(cur / 10);
      rem = cur % 10;
    }
    while (tmp.limbs_.size() > 1 && tmp.limbs_.back() == 0) tmp.limbs_.pop_back();
    out.push_back(static_cast<char>('0' + rem));
  }
  std::reverse(out.begin(), out.end());
  return out;
}

BigUint BigUint::binomial(unsigned n, unsigned k) {
  if (k > n) throw DomainError("binomial requires k <= n");
  k = std::min(k, n - k);
  BigUint result(1);
  for (unsigned i = 1; i <= k; ++i) {
    result.multiply(n - k + i);
    result.divide_exact(i);  // exact: C(n-k+i, i) is integral
  }
  return result;
}

BigUint count_placements(unsigned n, unsigned m) {
  if (m > n) throw DomainError("cannot place " + std::to_string(m) + " gaps among " +
                               std::to_string(n) + " candidates");
  return BigUint::binomial(n, m);
}

VerificationReport verify(const mip::MipModel& model, const std::vector<double>& assignment,
                          double tolerance) {
  VerificationReport report;
  if (assignment.size() != model.variables.size()) {
    report.violations.push_back({"assignment", "size", 0.0});
    return report;
  }
  for (std::size_t v = 0; v < model.variables.size(); ++v) {
    const mip::Variable& var = model.variables[v];
    const double x = assignment[v];
    if (x < var.lb - tolerance || x > var.ub + tolerance)
      report.violations.push_back({var.name, "bound", x});
    if (var.kind != mip::VarKind::Continuous && std::fabs(x - std::round(x)) > tolerance)
      report.violations.push_back({var.name, "integrality", x});
  }
  auto check_row = [&](const mip::LinearConstraint& c, const char* kind) {
    double lhs = 0.0;
    for (const mip::LinearTerm& t : c.terms) lhs += t.coef * assignment[static_cast<std::size_t>(t.var)];
    bool ok = true;
    switch (c.op) {
      case mip::RowOp::LE:
        ok = lhs <= c.rhs + tolerance;
        break;
      case mip::RowOp::GE:
        ok = lhs >= c.rhs - tolerance;
        break;
      case mip::RowOp::EQ:
        ok = std::fabs(lhs - c.rhs) <= tolerance;
        break;
    }
    if (!ok) report.violations.push_back({c.name, kind, lhs - c.rhs});
  };
  for (const mip::LinearConstraint& c : model.constraints) check_row(c, "row");
  for (const mip::IndicatorConstraint& c : model.indicators) {
    const double b = assignment[static_cast<std::size_t>(c.bin_var)];
    if (std::fabs(b - c.bin_value) <= tolerance) check_row(c.row, "indicator");
  }
  return report;
}

}  // namespace ctg::solver

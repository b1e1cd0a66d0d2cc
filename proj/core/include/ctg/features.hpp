#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ctg/corpus.hpp"

namespace ctg::feat {

inline constexpr int kFeatureDim = 61;

using FeatureVector = std::array<double, kFeatureDim>;

enum class DependencyClass { Static, SizeDependent, PlacementDependent };

/// Placement-dependent quantities of one candidate under a gap selection.
struct PlacementFeatures {
  int occurs_as_gap = 0;           // another selected candidate has the same word
  int gaps_in_cover_sentence = 0;  // selected candidates in the covering sentence (incl. self)
  int preceding_gaps = 0;          // selected candidates before this one
  int preceding_in_cover_sentence = 0;
};

/// The 61-entry feature schema. Size-dependent indices are fixed to
/// {49, 50, 56, 57, 58, 59}; the four placement-dependent quantities can be
/// rebound to different indices, the default binding follows the standard
/// feature table.
class FeatureSchema {
 public:
  struct PlacementBinding {
    int gaps_in_cover_sentence = 51;
    int preceding_gaps = 52;
    int preceding_in_cover_sentence = 53;
    int occurs_as_gap = 54;
  };

  static const FeatureSchema& standard();
  explicit FeatureSchema(PlacementBinding binding);

  DependencyClass dependency(int k) const { return classes_[static_cast<std::size_t>(k)]; }
  const std::string& name(int k) const { return names_[static_cast<std::size_t>(k)]; }
  int index_of(const std::string& name) const;
  const PlacementBinding& placement() const { return binding_; }
  const std::vector<int>& size_dependent() const { return size_dependent_; }

  std::vector<std::string> names() const {
    return {names_.begin(), names_.end()};
  }

 private:
  std::array<std::string, kFeatureDim> names_;
  std::array<DependencyClass, kFeatureDim> classes_;
  PlacementBinding binding_;
  std::vector<int> size_dependent_;
};

/// Binary same-word matrix V: v(i,h) = 1 iff candidates i and h carry the
/// same surface (case-insensitive) and i != h.
class SameWordMatrix {
 public:
  SameWordMatrix() = default;
  explicit SameWordMatrix(const corpus::CandidateSet& candidates);
  int at(std::size_t i, std::size_t h) const { return v_[i * n_ + h]; }
  std::size_t size() const { return n_; }

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> v_;
};

/// A tokenized document with its candidate set and derived lookups; the unit
/// the feature layer, the builder, and the solver all operate on.
struct Instance {
  corpus::Document doc;
  corpus::CandidateSet candidates;
  SameWordMatrix same_word;
  // candidate-index range [first, second) of each candidate's covering sentence
  std::vector<std::pair<std::size_t, std::size_t>> sentence_range;

  std::size_t n() const { return candidates.size(); }
  int word_length(std::size_t i) const { return candidates[i].word_length; }
};

Instance make_instance(corpus::Document doc, const corpus::CandidatePolicy& policy = {});

/// Pre-computed values c_{i,j,k} for all static features.
class StaticFeatureTable {
 public:
  StaticFeatureTable() = default;
  StaticFeatureTable(std::vector<int> word_lengths);
  double at(std::size_t i, int j, int k) const {
    return rows_[row_index(i, j)][static_cast<std::size_t>(k)];
  }
  void set(std::size_t i, int j, int k, double v) {
    rows_[row_index(i, j)][static_cast<std::size_t>(k)] = v;
  }
  std::size_t candidate_count() const { return offsets_.size() - 1; }
  int word_length(std::size_t i) const {
    return static_cast<int>(offsets_[i + 1] - offsets_[i]) + 1;
  }

 private:
  std::size_t row_index(std::size_t i, int j) const;
  std::vector<std::size_t> offsets_;  // row offset per candidate; l_i - 1 rows each
  std::vector<FeatureVector> rows_;
};

/// Per-candidate matrix C_i: row j holds the size-dependent feature values
/// when the gap size is j. Row count is l_i - 1.
class SizeFeatureMatrix {
 public:
  SizeFeatureMatrix() = default;
  explicit SizeFeatureMatrix(int word_length)
      : word_length_(word_length),
        rows_(static_cast<std::size_t>(word_length - 1)) {}
  double at(int j, int u) const { return rows_[static_cast<std::size_t>(j - 1)][static_cast<std::size_t>(u)]; }
  void set(int j, int u, double v) { rows_[static_cast<std::size_t>(j - 1)][static_cast<std::size_t>(u)] = v; }
  int rows() const { return word_length_ - 1; }

 private:
  int word_length_ = 0;
  std::vector<std::array<double, 6>> rows_;  // columns follow schema.size_dependent() order
};

struct MissingFeatureWarning {
  int k = 0;
  std::size_t cells = 0;  // how many (i, j) pairs fell back to the default 0
};

struct FeatureTables {
  StaticFeatureTable statics;
  std::vector<SizeFeatureMatrix> size_features;  // one per candidate
  std::vector<MissingFeatureWarning> warnings;
};

/// Supplies feature values it is responsible for; deterministic and safe for
/// concurrent reads. Returns nullopt for cells it does not cover.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual std::string identity() const = 0;
  virtual std::optional<double> value(const Instance& instance, std::size_t i, int j,
                                      int k) const = 0;
};

/// Cheap deterministic text features computed from the document itself plus
/// an optional lexicon (compound detection).
std::shared_ptr<FeatureProvider> make_builtin_provider(
    std::set<std::string> lexicon = {});

/// Stand-in for the resource-backed masked-prediction features (k=49, k=50).
/// Not faithful to the original resource pipeline: k=49 is the relative
/// frequency of document words sharing the gap's hint prefix, k=50 a fixed
/// 0.5 entropy placeholder.
std::shared_ptr<FeatureProvider> make_surrogate_resource_provider();

/// Serves cells of a pre-computed feature CSV (see save_features for the
/// format); missing cells stay uncovered.
std::shared_ptr<FeatureProvider> make_precomputed_provider(const std::string& csv_path);

struct ProviderConfig {
  std::vector<std::shared_ptr<FeatureProvider>> providers;  // first covering wins
  bool strict = false;  // strict: MissingFeatureError instead of default 0

  static ProviderConfig defaults();
};

/// Fills the static table and the per-candidate size matrices from the
/// provider chain. Lenient mode records a warning per feature index that
/// fell back to 0.
FeatureTables compute_features(const Instance& instance, const ProviderConfig& config,
                               const FeatureSchema& schema = FeatureSchema::standard());

/// Placement features of candidate i under a 0/1 selection vector over all
/// candidates. The covering-sentence count includes the candidate itself;
/// occurs-as-gap ignores it.
PlacementFeatures placement_features(const Instance& instance,
                                     const std::vector<std::uint8_t>& selection,
                                     std::size_t i);

FeatureVector assemble_vector(const Instance& instance, const FeatureTables& tables,
                              std::size_t i, int j,
                              const std::vector<std::uint8_t>& selection,
                              const FeatureSchema& schema = FeatureSchema::standard());

/// Columnar CSV with header "candidate,size,k0,...,k60"; one row per (i, j).
/// Placement-dependent cells are written empty.
void save_features(const FeatureTables& tables, const std::string& path,
                   const FeatureSchema& schema = FeatureSchema::standard());
FeatureTables load_features(const std::string& path,
                            const FeatureSchema& schema = FeatureSchema::standard());

// Heuristic syllabification used by the builtin provider: boundaries from
// vowel-group segmentation, exposed for tests.
int syllable_count(const std::string& word);
std::vector<int> syllable_boundaries(const std::string& word);

}  // namespace ctg::feat

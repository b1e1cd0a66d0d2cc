#include "ctg/features.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace ctg::feat {

namespace {

const std::array<std::string, kFeatureDim> kStandardNames = {
    "AvgSentenceLength",
    "AvgWordLengthInCharacters",
    "AvgWordLengthInSyllables",
    "BigramSolutionRank",
    "COPCognate_Exists",
    "GapIsADJ",
    "GapIsADV",
    "GapIsART",
    "GapIsCONJ",
    "GapIsNN",
    "GapIsNP",
    "GapIsPP",
    "GapIsPR",
    "GapIsV",
    "IsAcademicWord",
    "IsCompound",
    "IsDerivedAdjective",
    "IsFunctionWord",
    "IsInflectedAdjective",
    "IsInflectedNoun",
    "IsInflectedVerb",
    "IsLemma",
    "IsWordWithLatinRoot",
    "LanguageModelProbability",
    "LanguageModelProbabilityOfPrefix",
    "LanguageModelProbabilityOfSolution",
    "LeftBigramLogProbability",
    "LeftTrigramLogProbability",
    "LmRankOfSolution",
    "MaxStringSimWithCandidate",
    "NrOfBigramCandidates",
    "NrOfCandidates",
    "NrOfTrigramCandidates",
    "NrOfUbySenses",
    "NrOfUnigramCandidates",
    "NumberOfChunksPerSentence",
    "OccursAsText",
    "PhoneticScore",
    "PhoneticSimilarity",
    "RightBigramLogProbability",
    "RightTrigramLogProbability",
    "TrigramLogProbability",
    "TrigramSolutionRank",
    "TypeTokenRatio",
    "Uby_XDiceScore",
    "UnigramLogProbability",
    "UnigramSolutionRank",
    "VerbVariation",
    "posProbability",
    "BertWordPredictionProbability",
    "BertTop50Entropy",
    "NumberOfGapsInCoverSentence",
    "NumberOfPrecedingGaps",
    "NumberOfPrecedingGapsInCoverSentence",
    "OccursAsGap",
    "PositionOfGap",
    "IsCompoundBreak",
    "IsReferentialGap",
    "IsSyllableBreak",
    "LengthOfSolutionInCharacters",
    "LengthOfSolutionInSyllables",
};

bool is_vowel(char c) {
  switch (std::tolower(static_cast<unsigned char>(c))) {
    case 'a':
    case 'e':
    case 'i':
    case 'o':
    case 'u':
    case 'y':
      return true;
    default:
      return false;
  }
}

std::string format_double(double v) {
  std::array<char, 64> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

}  // namespace

FeatureSchema::FeatureSchema(PlacementBinding binding) : binding_(binding) {
  names_ = kStandardNames;
  size_dependent_ = {49, 50, 56, 57, 58, 59};
  classes_.fill(DependencyClass::Static);
  for (int u : size_dependent_) classes_[static_cast<std::size_t>(u)] = DependencyClass::SizeDependent;
  const std::array<int, 4> p = {binding.gaps_in_cover_sentence, binding.preceding_gaps,
                                binding.preceding_in_cover_sentence, binding.occurs_as_gap};
  std::array<int, 4> sorted = p;
  std::sort(sorted.begin(), sorted.end());
  if (std::unique(sorted.begin(), sorted.end()) != sorted.end())
    throw DomainError("placement feature indices must be distinct");
  for (int k : p) {
    if (k < 0 || k >= kFeatureDim) throw DomainError("placement feature index out of range");
    if (classes_[static_cast<std::size_t>(k)] == DependencyClass::SizeDependent)
      throw DomainError("placement feature index collides with a size-dependent index");
    classes_[static_cast<std::size_t>(k)] = DependencyClass::PlacementDependent;
  }
}

const FeatureSchema& FeatureSchema::standard() {
  static const FeatureSchema schema{PlacementBinding{}};
  return schema;
}

int FeatureSchema::index_of(const std::string& name) const {
  for (int k = 0; k < kFeatureDim; ++k) {
    if (names_[static_cast<std::size_t>(k)] == name) return k;
  }
  throw DomainError("unknown feature name: " + name);
}

SameWordMatrix::SameWordMatrix(const corpus::CandidateSet& candidates)
    : n_(candidates.size()), v_(candidates.size() * candidates.size(), 0) {
  std::vector<std::string> lowered(n_);
  for (std::size_t i = 0; i < n_; ++i) lowered[i] = corpus::to_lower(candidates[i].surface);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t h = i + 1; h < n_; ++h) {
      if (lowered[i] == lowered[h]) {
        v_[i * n_ + h] = 1;
        v_[h * n_ + i] = 1;
      }
    }
  }
}

Instance make_instance(corpus::Document doc, const corpus::CandidatePolicy& policy) {
  Instance inst;
  inst.candidates = corpus::extract_candidates(doc, policy);
  inst.doc = std::move(doc);
  inst.same_word = SameWordMatrix(inst.candidates);
  inst.sentence_range.resize(inst.candidates.size());
  // candidates are position-ordered, so per-sentence ranges are contiguous
  std::size_t begin = 0;
  while (begin < inst.candidates.size()) {
    std::size_t end = begin + 1;
    while (end < inst.candidates.size() &&
           inst.candidates[end].sentence_index == inst.candidates[begin].sentence_index)
      ++end;
    for (std::size_t i = begin; i < end; ++i) inst.sentence_range[i] = {begin, end};
    begin = end;
  }
  return inst;
}

StaticFeatureTable::StaticFeatureTable(std::vector<int> word_lengths) {
  offsets_.resize(word_lengths.size() + 1, 0);
  for (std::size_t i = 0; i < word_lengths.size(); ++i) {
    if (word_lengths[i] < 2) throw DomainError("candidate word length must be >= 2");
    offsets_[i + 1] = offsets_[i] + static_cast<std::size_t>(word_lengths[i] - 1);
  }
  rows_.resize(offsets_.back());
  for (auto& r : rows_) r.fill(0.0);
}

std::size_t StaticFeatureTable::row_index(std::size_t i, int j) const {
  if (i + 1 >= offsets_.size()) throw DomainError("candidate index out of range");
  std::size_t row = offsets_[i] + static_cast<std::size_t>(j - 1);
  if (j < 1 || row >= offsets_[i + 1]) throw DomainError("gap size out of range");
  return row;
}

namespace {

class BuiltinProvider final : public FeatureProvider {
 public:
  explicit BuiltinProvider(std::set<std::string> lexicon) {
    for (const auto& w : lexicon) lexicon_.insert(corpus::to_lower(w));
  }

  std::string identity() const override { return "builtin"; }

  std::optional<double> value(const Instance& inst, std::size_t i, int j,
                              int k) const override {
    const corpus::GapCandidate& cand = inst.candidates[i];
    switch (k) {
      case 0: {  // mean word tokens per sentence
        double words = static_cast<double>(inst.doc.word_count());
        return words / static_cast<double>(inst.doc.sentence_count());
      }
      case 1: {
        double total = 0, count = 0;
        for (const auto& t : inst.doc.tokens) {
          if (!t.is_word) continue;
          total += static_cast<double>(corpus::utf8_length(t.surface));
          count += 1;
        }
        return count > 0 ? total / count : 0.0;
      }
      case 2: {
        double total = 0, count = 0;
        for (const auto& t : inst.doc.tokens) {
          if (!t.is_word) continue;
          total += static_cast<double>(syllable_count(t.surface));
          count += 1;
        }
        return count > 0 ? total / count : 0.0;
      }
      case 15: {  // word splits into two lexicon words at any point
        if (lexicon_.empty()) return std::nullopt;
        std::string lower = corpus::to_lower(cand.surface);
        for (int cut = 1; cut < cand.word_length; ++cut) {
          auto [a, b] = corpus::utf8_split(lower, static_cast<std::size_t>(cut));
          if (lexicon_.count(a) && lexicon_.count(b)) return 1.0;
        }
        return 0.0;
      }
      case 17:
        return function_words().count(corpus::to_lower(cand.surface)) ? 1.0 : 0.0;
      case 36: {  // surface occurs elsewhere in the text
        std::string lower = corpus::to_lower(cand.surface);
        int seen = 0;
        for (const auto& t : inst.doc.tokens) {
          if (t.is_word && corpus::to_lower(t.surface) == lower && ++seen >= 2) return 1.0;
        }
        return 0.0;
      }
      case 43: {
        std::unordered_set<std::string> types;
        double count = 0;
        for (const auto& t : inst.doc.tokens) {
          if (!t.is_word) continue;
          types.insert(corpus::to_lower(t.surface));
          count += 1;
        }
        return count > 0 ? static_cast<double>(types.size()) / count : 0.0;
      }
      case 55:
        return static_cast<double>(cand.token_index);
      case 56: {  // both hint and solution are lexicon words
        auto [hint, solution] =
            corpus::utf8_split(corpus::to_lower(cand.surface),
                               static_cast<std::size_t>(cand.word_length - j));
        return lexicon_.count(hint) && lexicon_.count(solution) ? 1.0 : 0.0;
      }
      case 57: {  // the remaining prefix is exactly "th"
        auto [hint, solution] = corpus::utf8_split(
            cand.surface, static_cast<std::size_t>(cand.word_length - j));
        (void)solution;
        return corpus::to_lower(hint) == "th" ? 1.0 : 0.0;
      }
      case 58: {
        std::vector<int> bounds = syllable_boundaries(cand.surface);
        int cut = cand.word_length - j;
        return std::find(bounds.begin(), bounds.end(), cut) != bounds.end() ? 1.0 : 0.0;
      }
      case 59:
        return static_cast<double>(j);
      case 60:
        return static_cast<double>(syllable_count(cand.surface));
      default:
        return std::nullopt;
    }
  }

 private:
  static const std::unordered_set<std::string>& function_words() {
    static const std::unordered_set<std::string> words = {
        "a",       "an",     "the",    "and",   "or",    "but",    "if",    "then",
        "than",    "that",   "this",   "these", "those", "is",     "are",   "was",
        "were",    "be",     "been",   "being", "am",    "do",     "does",  "did",
        "have",    "has",    "had",    "will",  "would", "can",    "could", "shall",
        "should",  "may",    "might",  "must",  "of",    "in",     "on",    "at",
        "by",      "for",    "with",   "about", "into",  "through", "before", "after",
        "to",      "from",   "up",     "down",  "out",   "off",    "over",  "under",
        "not",     "no",     "nor",    "only",  "so",    "too",    "very",  "it",
        "its",     "he",     "she",    "his",   "her",   "they",   "them",  "their",
        "we",      "us",     "our",    "you",   "your",  "i",      "me",    "my",
        "as",      "while",  "because", "until", "since", "what",  "which", "who",
        "whom",    "whose",  "when",   "where", "why",   "how",    "all",   "any",
        "both",    "each",   "few",    "more",  "most",  "other",  "some",  "such",
    };
    return words;
  }

  std::unordered_set<std::string> lexicon_;
};

class SurrogateResourceProvider final : public FeatureProvider {
 public:
  std::string identity() const override { return "surrogate-resources"; }

  std::optional<double> value(const Instance& inst, std::size_t i, int j,
                              int k) const override {
    if (k == 50) return 0.5;
    if (k != 49) return std::nullopt;
    const corpus::GapCandidate& cand = inst.candidates[i];
    auto [hint, solution] = corpus::utf8_split(
        corpus::to_lower(cand.surface), static_cast<std::size_t>(cand.word_length - j));
    (void)solution;
    double matching = 0, total = 0;
    for (const auto& t : inst.doc.tokens) {
      if (!t.is_word) continue;
      total += 1;
      std::string lower = corpus::to_lower(t.surface);
      if (lower.size() >= hint.size() && lower.compare(0, hint.size(), hint) == 0)
        matching += 1;
    }
    return total > 0 ? matching / total : 0.0;
  }
};

struct CsvCells {
  // (candidate, size) -> per-feature optional values
  std::map<std::pair<std::size_t, int>, std::array<std::optional<double>, kFeatureDim>> cells;
};

CsvCells read_feature_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open feature file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(1, 1, "missing header");
  {
    std::string expect = "candidate,size";
    for (int k = 0; k < kFeatureDim; ++k) expect += ",k" + std::to_string(k);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != expect) throw FormatError(1, 1, "unexpected header");
  }
  CsvCells out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t pos = 0;
    while (true) {
      std::size_t comma = line.find(',', pos);
      fields.push_back(line.substr(pos, comma == std::string::npos ? comma : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (fields.size() != static_cast<std::size_t>(kFeatureDim) + 2)
      throw FormatError(row, fields.size(), "expected " + std::to_string(kFeatureDim + 2) +
                                                " columns");
    auto parse_int = [&](const std::string& s, std::size_t col) -> long {
      long v = 0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc{} || p != s.data() + s.size())
        throw FormatError(row, col, "invalid integer '" + s + "'");
      return v;
    };
    std::size_t cand = static_cast<std::size_t>(parse_int(fields[0], 1));
    int size = static_cast<int>(parse_int(fields[1], 2));
    if (size < 1) throw FormatError(row, 2, "size must be >= 1");
    auto& arr = out.cells[{cand, size}];
    for (int k = 0; k < kFeatureDim; ++k) {
      const std::string& cell = fields[static_cast<std::size_t>(k) + 2];
      if (cell.empty()) continue;
      double v = 0;
      auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc{} || p != cell.data() + cell.size())
        throw FormatError(row, static_cast<std::size_t>(k) + 3, "invalid number '" + cell + "'");
      arr[static_cast<std::size_t>(k)] = v;
    }
  }
  return out;
}

class PrecomputedProvider final : public FeatureProvider {
 public:
  explicit PrecomputedProvider(const std::string& path)
      : path_(path), cells_(read_feature_csv(path)) {}

  std::string identity() const override { return "precomputed:" + path_; }

  std::optional<double> value(const Instance&, std::size_t i, int j, int k) const override {
    auto it = cells_.cells.find({i, j});
    if (it == cells_.cells.end()) return std::nullopt;
    return it->second[static_cast<std::size_t>(k)];
  }

 private:
  std::string path_;
  CsvCells cells_;
};

}  // namespace

std::shared_ptr<FeatureProvider> make_builtin_provider(std::set<std::string> lexicon) {
  return std::make_shared<BuiltinProvider>(std::move(lexicon));
}

std::shared_ptr<FeatureProvider> make_surrogate_resource_provider() {
  return std::make_shared<SurrogateResourceProvider>();
}

std::shared_ptr<FeatureProvider> make_precomputed_provider(const std::string& csv_path) {
  return std::make_shared<PrecomputedProvider>(csv_path);
}

ProviderConfig ProviderConfig::defaults() {
  ProviderConfig cfg;
  cfg.providers = {make_builtin_provider(), make_surrogate_resource_provider()};
  return cfg;
}

FeatureTables compute_features(const Instance& instance, const ProviderConfig& config,
                               const FeatureSchema& schema) {
  if (instance.n() == 0) throw DomainError("candidate set is empty");
  std::vector<int> lengths;
  lengths.reserve(instance.n());
  for (std::size_t i = 0; i < instance.n(); ++i) lengths.push_back(instance.word_length(i));

  FeatureTables tables;
  tables.statics = StaticFeatureTable(lengths);
  tables.size_features.reserve(instance.n());
  std::array<std::size_t, kFeatureDim> missing{};

  for (std::size_t i = 0; i < instance.n(); ++i) {
    SizeFeatureMatrix m(lengths[i]);
    for (int j = 1; j < lengths[i]; ++j) {
      for (int k = 0; k < kFeatureDim; ++k) {
        if (schema.dependency(k) == DependencyClass::PlacementDependent) continue;
        std::optional<double> v;
        for (const auto& p : config.providers) {
          v = p->value(instance, i, j, k);
          if (v) break;
        }
        if (!v) {
          if (config.strict)
            throw MissingFeatureError(k, static_cast<int>(i), j,
                                      "no provider covers feature k" + std::to_string(k) +
                                          " for candidate " + std::to_string(i) + " size " +
                                          std::to_string(j));
          v = 0.0;
          ++missing[static_cast<std::size_t>(k)];
        }
        if (schema.dependency(k) == DependencyClass::SizeDependent) {
          const auto& u = schema.size_dependent();
          auto pos = std::find(u.begin(), u.end(), k) - u.begin();
          m.set(j, static_cast<int>(pos), *v);
        } else {
          tables.statics.set(i, j, k, *v);
        }
      }
    }
    tables.size_features.push_back(std::move(m));
  }
  for (int k = 0; k < kFeatureDim; ++k) {
    if (missing[static_cast<std::size_t>(k)] > 0)
      tables.warnings.push_back({k, missing[static_cast<std::size_t>(k)]});
  }
  return tables;
}

PlacementFeatures placement_features(const Instance& instance,
                                     const std::vector<std::uint8_t>& selection,
                                     std::size_t i) {
  const std::size_t n = instance.n();
  if (selection.size() != n) throw DomainError("selection vector length mismatch");
  if (i >= n) throw DomainError("candidate index out of range");
  PlacementFeatures f;
  for (std::size_t h = 0; h < n; ++h) {
    if (!selection[h]) continue;
    if (instance.same_word.at(i, h)) f.occurs_as_gap = 1;
    if (h < i) ++f.preceding_gaps;
  }
  auto [sb, se] = instance.sentence_range[i];
  for (std::size_t h = sb; h < se; ++h) {
    if (!selection[h]) continue;
    ++f.gaps_in_cover_sentence;
    if (h < i) ++f.preceding_in_cover_sentence;
  }
  return f;
}

FeatureVector assemble_vector(const Instance& instance, const FeatureTables& tables,
                              std::size_t i, int j,
                              const std::vector<std::uint8_t>& selection,
                              const FeatureSchema& schema) {
  FeatureVector x{};
  for (int k = 0; k < kFeatureDim; ++k) {
    if (schema.dependency(k) == DependencyClass::Static)
      x[static_cast<std::size_t>(k)] = tables.statics.at(i, j, k);
  }
  const auto& u = schema.size_dependent();
  for (std::size_t pos = 0; pos < u.size(); ++pos)
    x[static_cast<std::size_t>(u[pos])] = tables.size_features[i].at(j, static_cast<int>(pos));
  PlacementFeatures pf = placement_features(instance, selection, i);
  const auto& b = schema.placement();
  x[static_cast<std::size_t>(b.gaps_in_cover_sentence)] = pf.gaps_in_cover_sentence;
  x[static_cast<std::size_t>(b.preceding_gaps)] = pf.preceding_gaps;
  x[static_cast<std::size_t>(b.preceding_in_cover_sentence)] = pf.preceding_in_cover_sentence;
  x[static_cast<std::size_t>(b.occurs_as_gap)] = pf.occurs_as_gap;
  return x;
}

void save_features(const FeatureTables& tables, const std::string& path,
                   const FeatureSchema& schema) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write feature file: " + path);
  out << "candidate,size";
  for (int k = 0; k < kFeatureDim; ++k) out << ",k" << k;
  out << "\n";
  for (std::size_t i = 0; i < tables.statics.candidate_count(); ++i) {
    for (int j = 1; j < tables.statics.word_length(i); ++j) {
      out << i << ',' << j;
      for (int k = 0; k < kFeatureDim; ++k) {
        out << ',';
        switch (schema.dependency(k)) {
          case DependencyClass::Static:
            out << format_double(tables.statics.at(i, j, k));
            break;
          case DependencyClass::SizeDependent: {
            const auto& u = schema.size_dependent();
            auto pos = std::find(u.begin(), u.end(), k) - u.begin();
            out << format_double(tables.size_features[i].at(j, static_cast<int>(pos)));
            break;
          }
          case DependencyClass::PlacementDependent:
            break;  // selection-dependent, left empty
        }
      }
      out << "\n";
    }
  }
}

FeatureTables load_features(const std::string& path, const FeatureSchema& schema) {
  CsvCells csv = read_feature_csv(path);

  std::map<std::size_t, int> max_size;
  for (const auto& [key, _] : csv.cells) {
    auto& m = max_size[key.first];
    m = std::max(m, key.second);
  }
  FeatureTables tables;
  if (csv.cells.empty()) {
    tables.statics = StaticFeatureTable(std::vector<int>{});
    return tables;
  }
  std::size_t n = max_size.rbegin()->first + 1;
  std::vector<int> lengths(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    auto it = max_size.find(i);
    if (it == max_size.end()) throw FormatError(0, 1, "candidate " + std::to_string(i) + " has no rows");
    lengths[i] = it->second + 1;
  }
  tables.statics = StaticFeatureTable(lengths);
  for (std::size_t i = 0; i < n; ++i) tables.size_features.emplace_back(lengths[i]);

  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 1; j < lengths[i]; ++j) {
      auto it = csv.cells.find({i, j});
      if (it == csv.cells.end())
        throw FormatError(0, 2, "missing row for candidate " + std::to_string(i) + " size " +
                                    std::to_string(j));
      for (int k = 0; k < kFeatureDim; ++k) {
        const auto& cell = it->second[static_cast<std::size_t>(k)];
        switch (schema.dependency(k)) {
          case DependencyClass::Static:
            tables.statics.set(i, j, k, cell.value_or(0.0));
            break;
          case DependencyClass::SizeDependent: {
            const auto& u = schema.size_dependent();
            auto pos = std::find(u.begin(), u.end(), k) - u.begin();
            tables.size_features[i].set(j, static_cast<int>(pos), cell.value_or(0.0));
            break;
          }
          case DependencyClass::PlacementDependent:
            break;
        }
      }
    }
  }
  return tables;
}

int syllable_count(const std::string& word) {
  int groups = 0;
  bool in_group = false;
  for (char c : word) {
    if (is_vowel(c)) {
      if (!in_group) ++groups;
      in_group = true;
    } else {
      in_group = false;
    }
  }
  return std::max(groups, 1);
}

std::vector<int> syllable_boundaries(const std::string& word) {
  // Positions (in code points) where a new syllable starts: the last
  // consonant before each vowel group after the first.
  std::vector<int> bounds;
  std::vector<std::pair<int, int>> groups;  // [start, end) in code points
  int pos = 0;
  bool in_group = false;
  for (std::size_t byte = 0; byte < word.size();) {
    char c = word[byte];
    std::size_t adv = 1;
    while (byte + adv < word.size() &&
           (static_cast<unsigned char>(word[byte + adv]) & 0xC0) == 0x80)
      ++adv;
    if (is_vowel(c) && static_cast<unsigned char>(c) < 0x80) {
      if (!in_group) groups.emplace_back(pos, pos + 1);
      else groups.back().second = pos + 1;
      in_group = true;
    } else {
      in_group = false;
    }
    byte += adv;
    ++pos;
  }
  for (std::size_t g = 1; g < groups.size(); ++g) {
    int cluster_end = groups[g].first;       // first vowel of this group
    int cluster_begin = groups[g - 1].second;  // one past last vowel of previous
    if (cluster_end > cluster_begin)
      bounds.push_back(cluster_end - 1);  // last consonant starts the syllable
    else
      bounds.push_back(cluster_end);
  }
  return bounds;
}

}  // namespace ctg::feat

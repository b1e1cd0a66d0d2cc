#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "ctg/errors.hpp"

namespace ctg::corpus {

struct Token {
  std::string surface;
  std::size_t begin = 0;  // byte offset into the source text
  std::size_t end = 0;    // one past the last byte
  bool is_word = false;
};

/// Tokenized text with sentence segmentation. Immutable after construction;
/// sentence ranges are half-open token index intervals that partition the
/// token list.
struct Document {
  std::string text;
  std::vector<Token> tokens;
  std::vector<std::pair<std::size_t, std::size_t>> sentences;

  std::size_t sentence_count() const { return sentences.size(); }
  std::size_t word_count() const;
  /// Index of the sentence covering token `t`.
  std::size_t sentence_of(std::size_t t) const;
};

/// A word eligible to become a gap.
struct GapCandidate {
  std::size_t token_index = 0;
  int word_length = 0;  // l_i, in code points
  std::size_t sentence_index = 0;
  std::string surface;
};

struct CandidateSet {
  std::vector<GapCandidate> candidates;
  std::size_t size() const { return candidates.size(); }
  const GapCandidate& operator[](std::size_t i) const { return candidates[i]; }
};

/// One gap: `size` code points removed from the end of the word.
struct Gap {
  std::size_t candidate_index = 0;
  int size = 0;
  std::string hint;
  std::string solution;
};

struct CTest {
  Document document;
  CandidateSet candidates;
  std::vector<Gap> gaps;  // sorted by candidate_index, at most one per candidate

  std::size_t gap_count() const { return gaps.size(); }
};

/// Which words may become gaps. The defaults mirror the usual construction
/// rule: alphabetic words of at least two characters in interior sentences.
struct CandidatePolicy {
  int min_length = 2;
  bool allow_hyphenated = false;
};

enum class RenderStyle {
  Underscores,  // "c__"
  Brackets,     // "c[at]", solutions visible
};

/// Deterministic rule-based tokenizer. Sentences end at ./!/? followed by
/// whitespace and a capital letter (or end of input); punctuation becomes
/// separate non-word tokens. Throws EmptyInputError when no sentence is found.
Document tokenize(const std::string& text);

/// All word tokens in interior sentences that satisfy the policy, ordered by
/// position. May be empty (documents with fewer than three sentences have no
/// interior sentence).
CandidateSet extract_candidates(const Document& doc,
                                const CandidatePolicy& policy = {});

Gap make_gap(const CandidateSet& candidates, std::size_t candidate_index, int size);

std::string render(const CTest& ctest, RenderStyle style = RenderStyle::Underscores);

std::string serialize_ctest(const CTest& ctest, const std::string& strategy = "",
                            double tau = 0.0);
CTest parse_ctest(const std::string& json_text,
                  const CandidatePolicy& policy = {});

// UTF-8 helpers shared with the feature layer.
std::size_t utf8_length(const std::string& s);
/// Split `s` after `prefix_points` code points; returns {hint, solution}.
std::pair<std::string, std::string> utf8_split(const std::string& s,
                                               std::size_t prefix_points);
std::string to_lower(const std::string& s);

}  // namespace ctg::corpus

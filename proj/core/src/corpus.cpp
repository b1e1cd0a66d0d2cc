#include "ctg/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>

#include "json.hpp"

namespace ctg::corpus {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_ascii_letter(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_upper(char c) { return std::isupper(static_cast<unsigned char>(c)) != 0; }

// Bytes >= 0x80 belong to a multi-byte UTF-8 sequence; we treat those
// sequences as letters.
bool is_word_char(char c) {
  return is_ascii_letter(c) || is_digit(c) || static_cast<unsigned char>(c) >= 0x80;
}

bool is_sentence_end(const std::string& s) {
  return s == "." || s == "!" || s == "?";
}

}  // namespace

std::size_t utf8_length(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) {
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
  }
  return n;
}

std::pair<std::string, std::string> utf8_split(const std::string& s,
                                               std::size_t prefix_points) {
  std::size_t seen = 0;
  std::size_t byte = 0;
  while (byte < s.size() && seen < prefix_points) {
    ++byte;
    while (byte < s.size() && (static_cast<unsigned char>(s[byte]) & 0xC0) == 0x80)
      ++byte;
    ++seen;
  }
  return {s.substr(0, byte), s.substr(byte)};
}

std::string to_lower(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    if (static_cast<unsigned char>(c) < 0x80)
      c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::size_t Document::word_count() const {
  return static_cast<std::size_t>(
      std::count_if(tokens.begin(), tokens.end(), [](const Token& t) { return t.is_word; }));
}

std::size_t Document::sentence_of(std::size_t t) const {
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    if (t >= sentences[s].first && t < sentences[s].second) return s;
  }
  throw DomainError("token index " + std::to_string(t) + " not covered by any sentence");
}

Document tokenize(const std::string& text) {
  Document doc;
  doc.text = text;

  // Pass 1: tokens. A word token is a maximal run of word characters, with
  // apostrophes and hyphens allowed strictly between word characters.
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    if (is_space(text[i])) {
      ++i;
      continue;
    }
    std::size_t start = i;
    if (is_word_char(text[i])) {
      while (i < n) {
        if (is_word_char(text[i])) {
          ++i;
        } else if ((text[i] == '\'' || text[i] == '-') && i + 1 < n &&
                   is_word_char(text[i + 1]) && i > start) {
          ++i;
        } else {
          break;
        }
      }
      doc.tokens.push_back({text.substr(start, i - start), start, i, true});
    } else {
      // punctuation: one character per token
      ++i;
      doc.tokens.push_back({text.substr(start, i - start), start, i, false});
    }
  }

  if (doc.tokens.empty()) throw EmptyInputError("no sentence found in input text");

  // Pass 2: sentence boundaries. A sentence ends at ./!/? when the next
  // non-whitespace character is a capital letter or the input ends.
  std::size_t sent_start = 0;
  for (std::size_t t = 0; t < doc.tokens.size(); ++t) {
    const Token& tok = doc.tokens[t];
    if (!tok.is_word && is_sentence_end(tok.surface)) {
      std::size_t p = tok.end;
      while (p < n && is_space(text[p])) ++p;
      if (p >= n || is_upper(text[p])) {
        doc.sentences.emplace_back(sent_start, t + 1);
        sent_start = t + 1;
      }
    }
  }
  if (sent_start < doc.tokens.size()) {
    doc.sentences.emplace_back(sent_start, doc.tokens.size());
  }
  return doc;
}

namespace {

bool eligible_word(const std::string& surface, const CandidatePolicy& policy) {
  if (utf8_length(surface) < static_cast<std::size_t>(policy.min_length)) return false;
  bool has_hyphen = false;
  for (char c : surface) {
    if (is_digit(c)) return false;
    if (c == '\'') return false;
    if (c == '-') {
      has_hyphen = true;
      continue;
    }
    if (!is_ascii_letter(c) && static_cast<unsigned char>(c) < 0x80) return false;
  }
  if (has_hyphen && !policy.allow_hyphenated) return false;
  return true;
}

}  // namespace

CandidateSet extract_candidates(const Document& doc, const CandidatePolicy& policy) {
  if (doc.sentences.empty()) throw DomainError("document has no sentences");
  CandidateSet out;
  if (doc.sentences.size() < 3) return out;  // no interior sentence
  for (std::size_t s = 1; s + 1 < doc.sentences.size(); ++s) {
    for (std::size_t t = doc.sentences[s].first; t < doc.sentences[s].second; ++t) {
      const Token& tok = doc.tokens[t];
      if (!tok.is_word) continue;
      if (!eligible_word(tok.surface, policy)) continue;
      GapCandidate c;
      c.token_index = t;
      c.word_length = static_cast<int>(utf8_length(tok.surface));
      c.sentence_index = s;
      c.surface = tok.surface;
      out.candidates.push_back(std::move(c));
    }
  }
  return out;
}

Gap make_gap(const CandidateSet& candidates, std::size_t candidate_index, int size) {
  if (candidate_index >= candidates.size())
    throw DomainError("candidate index out of range");
  const GapCandidate& c = candidates[candidate_index];
  if (size < 1 || size > c.word_length - 1)
    throw InvariantViolation("gap size " + std::to_string(size) + " out of range for word '" +
                             c.surface + "'");
  Gap g;
  g.candidate_index = candidate_index;
  g.size = size;
  auto [hint, solution] = utf8_split(c.surface, c.word_length - size);
  g.hint = std::move(hint);
  g.solution = std::move(solution);
  return g;
}

std::string render(const CTest& ctest, RenderStyle style) {
  std::unordered_map<std::size_t, const Gap*> by_token;
  for (const Gap& g : ctest.gaps) {
    by_token[ctest.candidates[g.candidate_index].token_index] = &g;
  }
  std::string out;
  for (std::size_t t = 0; t < ctest.document.tokens.size(); ++t) {
    if (!out.empty()) out += ' ';
    auto it = by_token.find(t);
    if (it == by_token.end()) {
      out += ctest.document.tokens[t].surface;
    } else if (style == RenderStyle::Underscores) {
      out += it->second->hint;
      out.append(static_cast<std::size_t>(it->second->size), '_');
    } else {
      out += it->second->hint;
      out += '[';
      out += it->second->solution;
      out += ']';
    }
  }
  return out;
}

std::string serialize_ctest(const CTest& ctest, const std::string& strategy, double tau) {
  nlohmann::ordered_json j;
  j["text"] = ctest.document.text;
  j["sentences"] = nlohmann::ordered_json::array();
  for (const auto& [b, e] : ctest.document.sentences) j["sentences"].push_back({b, e});
  j["gaps"] = nlohmann::ordered_json::array();
  for (const Gap& g : ctest.gaps) {
    nlohmann::ordered_json jg;
    jg["token"] = ctest.candidates[g.candidate_index].token_index;
    jg["size"] = g.size;
    jg["hint"] = g.hint;
    jg["solution"] = g.solution;
    j["gaps"].push_back(std::move(jg));
  }
  j["meta"] = {{"strategy", strategy}, {"tau", tau}};
  return j.dump(2);
}

CTest parse_ctest(const std::string& json_text, const CandidatePolicy& policy) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("/", e.what());
  }
  if (!j.contains("text") || !j["text"].is_string())
    throw SchemaError("/text", "missing or non-string");
  if (!j.contains("gaps") || !j["gaps"].is_array())
    throw SchemaError("/gaps", "missing or non-array");

  CTest ct;
  ct.document = tokenize(j["text"].get<std::string>());
  if (j.contains("sentences")) {
    const auto& js = j["sentences"];
    if (!js.is_array() || js.size() != ct.document.sentences.size())
      throw SchemaError("/sentences", "sentence ranges do not match the text");
    for (std::size_t s = 0; s < js.size(); ++s) {
      if (js[s].size() != 2 || js[s][0].get<std::size_t>() != ct.document.sentences[s].first ||
          js[s][1].get<std::size_t>() != ct.document.sentences[s].second)
        throw SchemaError("/sentences/" + std::to_string(s), "range mismatch");
    }
  }
  ct.candidates = extract_candidates(ct.document, policy);

  std::unordered_map<std::size_t, std::size_t> candidate_of_token;
  for (std::size_t c = 0; c < ct.candidates.size(); ++c)
    candidate_of_token[ct.candidates[c].token_index] = c;

  for (std::size_t gi = 0; gi < j["gaps"].size(); ++gi) {
    const auto& jg = j["gaps"][gi];
    const std::string ptr = "/gaps/" + std::to_string(gi);
    if (!jg.contains("token") || !jg.contains("size"))
      throw SchemaError(ptr, "gap requires 'token' and 'size'");
    std::size_t tok = jg["token"].get<std::size_t>();
    int size = jg["size"].get<int>();
    auto it = candidate_of_token.find(tok);
    if (it == candidate_of_token.end())
      throw SchemaError(ptr + "/token", "token is not an eligible gap candidate");
    Gap g = make_gap(ct.candidates, it->second, size);  // InvariantViolation on bad size
    if (jg.contains("hint") && jg["hint"].get<std::string>() != g.hint)
      throw InvariantViolation("stored hint does not match word split at " + ptr);
    if (jg.contains("solution") && jg["solution"].get<std::string>() != g.solution)
      throw InvariantViolation("stored solution does not match word split at " + ptr);
    ct.gaps.push_back(std::move(g));
  }
  std::sort(ct.gaps.begin(), ct.gaps.end(),
            [](const Gap& a, const Gap& b) { return a.candidate_index < b.candidate_index; });
  for (std::size_t k = 1; k < ct.gaps.size(); ++k) {
    if (ct.gaps[k].candidate_index == ct.gaps[k - 1].candidate_index)
      throw InvariantViolation("duplicate gap at candidate " +
                               std::to_string(ct.gaps[k].candidate_index));
  }
  return ct;
}

}  // namespace ctg::corpus

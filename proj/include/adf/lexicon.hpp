#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "adf/matrix.hpp"
#include "adf/text.hpp"

namespace adf::lex {

// How a block turns lexicon hits into slot values.
//   relative: matches per 100 tokens
//   weighted_sum: sum of entry weights over matches
//   rating_mean: mean of entry weights over covered tokens
enum class BlockKind { relative, weighted_sum, rating_mean };

struct LexiconEntry {
  std::string pattern;  // lowercase; prefix=true means "match any token starting with it"
  bool prefix = false;
  std::vector<std::pair<std::size_t, double>> categories;  // (index, weight)
};

struct Lexicon {
  std::string name;
  std::vector<std::string> categories;
  std::vector<LexiconEntry> entries;
};

// TSV: pattern <TAB> category[,category...] [<TAB> weight[,weight...]]
// '#' starts a comment; "# lexicon:" and "# categories:" head the file.
// A trailing '*' on a pattern marks a prefix wildcard.
inline Lexicon load_lexicon(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open lexicon " + path);
  Lexicon lex;
  std::map<std::string, std::size_t> cat_index;
  std::set<std::pair<std::string, std::size_t>> seen;
  std::string line;
  std::size_t line_no = 0;

  const auto split_commas = [](const std::string& field) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : field) {
      if (c == ',') {
        if (!cur.empty()) parts.push_back(cur);
        cur.clear();
      } else if (c != ' ') {
        cur.push_back(c);
      }
    }
    if (!cur.empty()) parts.push_back(cur);
    return parts;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto tail_of = [&](const std::string& tag) -> std::optional<std::string> {
        if (line.compare(0, tag.size(), tag) != 0) return std::nullopt;
        return line.substr(tag.size());
      };
      if (auto v = tail_of("# lexicon:")) {
        std::istringstream name(*v);
        name >> lex.name;
      } else if (auto c = tail_of("# categories:")) {
        std::istringstream cats(*c);
        std::string cat;
        while (cats >> cat) {
          if (cat_index.count(cat))
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": duplicate category " + cat);
          cat_index[cat] = lex.categories.size();
          lex.categories.push_back(cat);
        }
      }
      continue;
    }
    std::vector<std::string> cols;
    std::size_t pos = 0;
    while (true) {
      const std::size_t tab = line.find('\t', pos);
      cols.push_back(line.substr(pos, tab == std::string::npos ? std::string::npos : tab - pos));
      if (tab == std::string::npos) break;
      pos = tab + 1;
    }
    if (cols.size() < 2)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected pattern<TAB>categories");

    LexiconEntry entry;
    entry.pattern = cols[0];
    for (auto& ch : entry.pattern)
      ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (!entry.pattern.empty() && entry.pattern.back() == '*') {
      entry.prefix = true;
      entry.pattern.pop_back();
    }
    if (entry.pattern.empty())
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": empty pattern");

    const std::vector<std::string> cats = split_commas(cols[1]);
    std::vector<double> weights;
    if (cols.size() >= 3 && !cols[2].empty()) {
      for (const auto& w : split_commas(cols[2])) weights.push_back(std::stod(w));
      if (weights.size() != cats.size())
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": weight count does not match category count");
    }
    if (cats.empty())
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": no categories for pattern");
    for (std::size_t i = 0; i < cats.size(); ++i) {
      const auto it = cat_index.find(cats[i]);
      if (it == cat_index.end())
        throw std::runtime_error(path + ":" + std::to_string(line_no) + ": unknown category " + cats[i]);
      if (!seen.insert({entry.pattern, it->second}).second)
        throw std::runtime_error(path + ":" + std::to_string(line_no) + ": duplicate pattern/category " +
                                 entry.pattern + "/" + cats[i]);
      entry.categories.emplace_back(it->second, weights.empty() ? 1.0 : weights[i]);
    }
    lex.entries.push_back(std::move(entry));
  }
  return lex;
}

// Lowercased word tokens plus single-character punctuation tokens, in order.
// Apostrophes between alphanumerics stay inside the word ("i'm").
inline std::vector<std::string> tokenize(const std::string& input) {
  std::vector<std::string> tokens;
  std::string cur;
  const std::size_t n = input.size();
  auto flush = [&]() {
    if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  };
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char u = static_cast<unsigned char>(input[i]);
    if (std::isalnum(u)) {
      cur.push_back(static_cast<char>(std::tolower(u)));
    } else if (input[i] == '\'' && !cur.empty() && i + 1 < n &&
               std::isalnum(static_cast<unsigned char>(input[i + 1]))) {
      cur.push_back('\'');
    } else if (std::isspace(u)) {
      flush();
    } else if (u >= 0x21 && u < 0x7f) {
      flush();
      tokens.push_back(std::string(1, input[i]));
    } else {
      flush();  // non-ASCII bytes separate tokens but are not tokens themselves
    }
  }
  flush();
  return tokens;
}

// Whether a slot scales like a raw count (doubles when the text is
// concatenated with itself) or like a rate/mean (stays put).
enum class SlotScale { count, rate };

struct FeatureSchema {
  struct Block {
    std::string name;
    BlockKind kind = BlockKind::relative;
    std::vector<std::string> slot_names;  // prefixed, globally unique
    std::size_t lexicon_index = 0;        // into the bound lexicon list; unused for statistics
    bool statistics = false;
  };
  std::vector<Block> blocks;
  std::vector<SlotScale> scales;  // per flat slot
  std::size_t dim = 0;

  std::vector<std::string> slot_names() const {
    std::vector<std::string> names;
    for (const auto& b : blocks) names.insert(names.end(), b.slot_names.begin(), b.slot_names.end());
    return names;
  }
};

struct FeatureVector {
  Vec values;
};

inline constexpr std::size_t kStatSlots = 18;
inline constexpr std::size_t kStatCountSlots = 10;  // leading slots that are raw counts

// The source feature set's prosodic/utterance group is speech-oriented;
// these are its text-computable stand-ins. The first kStatCountSlots are
// raw counts, the remainder rates or means.
inline const char* const kStatNames[kStatSlots] = {
    "word_count",        "sentence_count",   "question_count",      "exclamation_count",
    "comma_count",       "semicolon_count",  "colon_count",         "quote_count",
    "parenthesis_count", "dash_count",       "mean_word_length",    "mean_sentence_length",
    "question_rate",     "exclamation_rate", "long_word_rate",      "all_caps_word_rate",
    "numeral_rate",      "punctuation_rate"};

// Default layout: 64 LIWC-style category slots, 14 MRC-style rating slots,
// 18 text statistics, 5 hourglass-affect slots, 11 emotion-association
// slots -> 112 total.
inline FeatureSchema build_schema(const std::vector<Lexicon>& lexicons) {
  auto find = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < lexicons.size(); ++i)
      if (lexicons[i].name == name) return i;
    throw std::runtime_error("schema: no lexicon named " + name);
  };
  struct BlockSpec {
    const char* name;
    const char* prefix;
    std::size_t expect;
    BlockKind kind;
  };
  const BlockSpec head[2] = {{"mairesse_liwc", "liwc_", 64, BlockKind::relative},
                             {"mairesse_mrc", "mrc_", 14, BlockKind::rating_mean}};
  const BlockSpec tail[2] = {{"senticnet", "sent_", 5, BlockKind::weighted_sum},
                             {"nrc", "nrc_", 11, BlockKind::relative}};

  FeatureSchema schema;
  std::set<std::string> names_seen;
  auto push_block = [&](FeatureSchema::Block b, const std::vector<SlotScale>& scales) {
    for (const auto& n : b.slot_names)
      if (!names_seen.insert(n).second) throw std::runtime_error("schema: duplicate slot " + n);
    schema.scales.insert(schema.scales.end(), scales.begin(), scales.end());
    schema.dim += b.slot_names.size();
    schema.blocks.push_back(std::move(b));
  };
  auto push_lexicon_block = [&](const BlockSpec& spec) {
    const std::size_t li = find(spec.name);
    if (lexicons[li].categories.size() != spec.expect)
      throw std::runtime_error("schema: " + std::string(spec.name) + " must declare " +
                               std::to_string(spec.expect) + " categories");
    FeatureSchema::Block b;
    b.name = spec.name;
    b.kind = spec.kind;
    b.lexicon_index = li;
    for (const auto& c : lexicons[li].categories) b.slot_names.push_back(spec.prefix + c);
    push_block(std::move(b),
               std::vector<SlotScale>(spec.expect, spec.kind == BlockKind::weighted_sum
                                                       ? SlotScale::count
                                                       : SlotScale::rate));
  };

  for (const auto& spec : head) push_lexicon_block(spec);
  {
    FeatureSchema::Block b;
    b.name = "mairesse_prosodic_utterance";
    b.statistics = true;
    for (std::size_t i = 0; i < kStatSlots; ++i) b.slot_names.push_back(std::string("pros_") + kStatNames[i]);
    std::vector<SlotScale> scales;
    for (std::size_t i = 0; i < kStatSlots; ++i)
      scales.push_back(i < kStatCountSlots ? SlotScale::count : SlotScale::rate);
    push_block(std::move(b), scales);
  }
  for (const auto& spec : tail) push_lexicon_block(spec);
  return schema;
}

namespace detail {

inline bool pattern_matches(const LexiconEntry& e, const std::string& token) {
  if (e.prefix)
    return token.size() >= e.pattern.size() && token.compare(0, e.pattern.size(), e.pattern) == 0;
  return token == e.pattern;
}

inline bool is_word_token(const std::string& t) {
  return !t.empty() && std::isalnum(static_cast<unsigned char>(t[0]));
}

// Raw tallies for one or more texts. Every member is additive, so a
// multi-post sample can be accumulated post by post and the finalized
// rates are independent of post order by construction.
struct Accumulator {
  std::vector<Vec> lex_sums;                          // per block, per category
  std::vector<std::vector<std::size_t>> lex_covered;  // rating_mean coverage
  std::size_t tokens = 0;
  std::size_t words = 0;
  std::size_t word_chars = 0;
  std::size_t long_words = 0;
  std::size_t numeral_words = 0;
  std::size_t caps_words = 0;
  std::size_t punct_tokens = 0;
  std::size_t sentences = 0;
  std::size_t question_sentences = 0;
  std::size_t exclamation_sentences = 0;
  std::size_t commas = 0, semicolons = 0, colons = 0, quotes = 0, parens = 0, dashes = 0;

  explicit Accumulator(const FeatureSchema& schema) {
    lex_sums.resize(schema.blocks.size());
    lex_covered.resize(schema.blocks.size());
    for (std::size_t b = 0; b < schema.blocks.size(); ++b) {
      if (schema.blocks[b].statistics) continue;
      lex_sums[b].assign(schema.blocks[b].slot_names.size(), 0.0);
      lex_covered[b].assign(schema.blocks[b].slot_names.size(), 0);
    }
  }

  void add_text(const std::string& raw_text, const std::vector<Lexicon>& lexicons,
                const FeatureSchema& schema) {
    const std::vector<std::string> toks = tokenize(raw_text);
    tokens += toks.size();
    bool in_run = false, run_q = false, run_x = false;
    auto close_run = [&]() {
      if (in_run) {
        ++sentences;
        if (run_q) ++question_sentences;
        if (run_x) ++exclamation_sentences;
      }
      in_run = run_q = run_x = false;
    };
    for (const auto& t : toks) {
      if (is_word_token(t)) {
        close_run();
        ++words;
        std::size_t len = 0;
        bool all_digit = true;
        for (char c : t) {
          if (std::isalnum(static_cast<unsigned char>(c))) ++len;
          if (!std::isdigit(static_cast<unsigned char>(c))) all_digit = false;
        }
        word_chars += len;
        if (len >= 7) ++long_words;
        if (all_digit) ++numeral_words;
      } else {
        ++punct_tokens;
        if (t == "." || t == "!" || t == "?") {
          in_run = true;
          if (t == "?") run_q = true;
          if (t == "!") run_x = true;
        } else {
          close_run();
          if (t == ",") ++commas;
          else if (t == ";") ++semicolons;
          else if (t == ":") ++colons;
          else if (t == "\"" || t == "'") ++quotes;
          else if (t == "(" || t == ")") ++parens;
          else if (t == "-") ++dashes;
        }
      }
    }
    close_run();

    // Casing comes from the raw text; tokens are already lowercased.
    {
      std::string cur;
      auto check = [&]() {
        if (cur.size() >= 2 &&
            std::all_of(cur.begin(), cur.end(),
                        [](char c) { return std::isupper(static_cast<unsigned char>(c)); }))
          ++caps_words;
        cur.clear();
      };
      for (char c : raw_text) {
        if (std::isalpha(static_cast<unsigned char>(c)))
          cur.push_back(c);
        else
          check();
      }
      check();
    }

    for (std::size_t b = 0; b < schema.blocks.size(); ++b) {
      const auto& block = schema.blocks[b];
      if (block.statistics) continue;
      const Lexicon& lex = lexicons[block.lexicon_index];
      for (const auto& token : toks) {
        if (!is_word_token(token)) continue;
        for (const auto& entry : lex.entries) {
          if (!pattern_matches(entry, token)) continue;
          for (const auto& [cat, weight] : entry.categories) {
            switch (block.kind) {
              case BlockKind::relative:
                lex_sums[b][cat] += 1.0;
                break;
              case BlockKind::weighted_sum:
                lex_sums[b][cat] += weight;
                break;
              case BlockKind::rating_mean:
                lex_sums[b][cat] += weight;
                ++lex_covered[b][cat];
                break;
            }
          }
        }
      }
    }
  }

  FeatureVector finalize(const FeatureSchema& schema) const {
    FeatureVector fv;
    fv.values.assign(schema.dim, 0.0);
    if (tokens == 0) return fv;
    const double per100 = 100.0 / static_cast<double>(tokens);
    const double w = static_cast<double>(words);
    std::size_t offset = 0;
    for (std::size_t b = 0; b < schema.blocks.size(); ++b) {
      const auto& block = schema.blocks[b];
      double* out = fv.values.data() + offset;
      if (block.statistics) {
        out[0] = w;
        out[1] = static_cast<double>(sentences);
        out[2] = static_cast<double>(question_sentences);
        out[3] = static_cast<double>(exclamation_sentences);
        out[4] = static_cast<double>(commas);
        out[5] = static_cast<double>(semicolons);
        out[6] = static_cast<double>(colons);
        out[7] = static_cast<double>(quotes);
        out[8] = static_cast<double>(parens);
        out[9] = static_cast<double>(dashes);
        out[10] = words ? static_cast<double>(word_chars) / w : 0.0;
        out[11] = sentences ? w / static_cast<double>(sentences) : 0.0;
        out[12] = sentences ? 100.0 * static_cast<double>(question_sentences) /
                                  static_cast<double>(sentences)
                            : 0.0;
        out[13] = sentences ? 100.0 * static_cast<double>(exclamation_sentences) /
                                  static_cast<double>(sentences)
                            : 0.0;
        out[14] = words ? 100.0 * static_cast<double>(long_words) / w : 0.0;
        out[15] = words ? 100.0 * static_cast<double>(caps_words) / w : 0.0;
        out[16] = words ? 100.0 * static_cast<double>(numeral_words) / w : 0.0;
        out[17] = 100.0 * static_cast<double>(punct_tokens) / static_cast<double>(tokens);
      } else {
        for (std::size_t c = 0; c < block.slot_names.size(); ++c) {
          switch (block.kind) {
            case BlockKind::relative:
              out[c] = lex_sums[b][c] * per100;
              break;
            case BlockKind::weighted_sum:
              out[c] = lex_sums[b][c];
              break;
            case BlockKind::rating_mean:
              out[c] = lex_covered[b][c]
                           ? lex_sums[b][c] / static_cast<double>(lex_covered[b][c])
                           : 0.0;
              break;
          }
        }
      }
      offset += block.slot_names.size();
    }
    return fv;
  }
};

}  // namespace detail

// One pass of the token stream against every bound lexicon plus the
// statistics block. Empty text yields the zero vector (never an error).
inline FeatureVector count_features(const std::string& raw_text,
                                    const std::vector<Lexicon>& lexicons,
                                    const FeatureSchema& schema) {
  detail::Accumulator acc(schema);
  acc.add_text(raw_text, lexicons, schema);
  return acc.finalize(schema);
}

// Whole-document feature vector: the same pipeline over every post of the
// sample. Tallies are accumulated per post, so the result cannot depend on
// post order even where punctuation abuts a post boundary.
inline FeatureVector whole_sample_features(const adf::text::RawSample& sample,
                                           const std::vector<Lexicon>& lexicons,
                                           const FeatureSchema& schema) {
  detail::Accumulator acc(schema);
  for (const auto& post : sample.posts)
    acc.add_text(adf::text::clean_for_counter(post), lexicons, schema);
  return acc.finalize(schema);
}

}  // namespace adf::lex

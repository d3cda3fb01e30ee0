#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "adf/csv.hpp"
#include "adf/rng.hpp"

namespace adf::text {

enum class SizeClass { small, big };

struct Segment {
  std::size_t index = 0;
  std::string clean_text;  // encoder-grade
  std::string raw_text;    // counter-grade
  SizeClass size_class = SizeClass::small;
};

struct SegmentSet {
  std::vector<Segment> segments;
  std::size_t n_small = 0;
  std::size_t n_big = 0;
};

// One author's material: a single essay is a one-post body.
struct RawSample {
  std::string id;
  std::vector<std::string> posts;
  std::map<std::string, int> labels;  // trait dimension -> {0,1}
};

// Column layout of a source CSV. Exactly one of text_column / posts_column is
// set, and exactly one of type_column / label_columns.
struct CsvSchema {
  std::string id_column;       // empty: ids are synthesized row0001, row0002, ...
  std::string text_column;     // essay layout
  std::string posts_column;    // delimited post blob layout
  std::string post_delimiter = "|||";
  std::string type_column;     // 4-letter MBTI code
  std::vector<std::pair<std::string, std::string>> label_columns;  // dim -> column
};

struct DatasetProfile {
  std::string name;
  std::size_t n_small = 0;
  std::size_t n_big = 0;
  std::vector<std::string> split_rules{"sentence", "first_person"};
  bool shuffle_posts = false;
  CsvSchema schema;
  std::vector<std::string> trait_dimensions;
};

inline DatasetProfile essays_profile() {
  DatasetProfile p;
  p.name = "essays";
  p.n_small = 4;
  p.n_big = 2;
  p.shuffle_posts = false;
  p.schema.id_column = "#AUTHID";
  p.schema.text_column = "TEXT";
  p.schema.label_columns = {{"EXT", "cEXT"}, {"NEU", "cNEU"}, {"AGR", "cAGR"},
                            {"CON", "cCON"}, {"OPN", "cOPN"}};
  p.trait_dimensions = {"EXT", "NEU", "AGR", "CON", "OPN"};
  return p;
}

inline DatasetProfile twitter_profile() {
  DatasetProfile p;
  p.name = "twitter";
  p.n_small = 5;
  p.n_big = 3;
  p.shuffle_posts = true;
  p.schema.posts_column = "posts";
  p.schema.post_delimiter = "|||";
  p.schema.type_column = "type";
  p.trait_dimensions = {"E/I", "S/N", "T/F", "J/P"};
  return p;
}

// Bit convention: E=1/I=0, S=1/N=0, T=1/F=0, J=1/P=0.
inline std::map<std::string, int> decompose_mbti(const std::string& code) {
  if (code.size() != 4) throw std::runtime_error("unknown type code \"" + code + "\"");
  auto up = [](char c) { return static_cast<char>(std::toupper(static_cast<unsigned char>(c))); };
  std::map<std::string, int> labels;
  const struct {
    const char* dim;
    char one;
    char zero;
  } pairs[4] = {{"E/I", 'E', 'I'}, {"S/N", 'S', 'N'}, {"T/F", 'T', 'F'}, {"J/P", 'J', 'P'}};
  for (int i = 0; i < 4; ++i) {
    const char c = up(code[static_cast<std::size_t>(i)]);
    if (c == pairs[i].one)
      labels[pairs[i].dim] = 1;
    else if (c == pairs[i].zero)
      labels[pairs[i].dim] = 0;
    else
      throw std::runtime_error("unknown type code \"" + code + "\"");
  }
  return labels;
}

namespace detail {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : s) {
    if (is_space(c)) {
      if (!cur.empty()) {
        words.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) words.push_back(cur);
  return words;
}

inline std::string join_words(const std::vector<std::string>& words, std::size_t from,
                              std::size_t to) {
  std::string out;
  for (std::size_t i = from; i < to; ++i) {
    if (i > from) out.push_back(' ');
    out += words[i];
  }
  return out;
}

inline std::string to_lower(const std::string& s) {
  std::string out = s;
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline bool looks_like_url(const std::string& token) {
  const std::string t = to_lower(token);
  return t.find("http://") != std::string::npos || t.find("https://") != std::string::npos ||
         t.find("www.") != std::string::npos;
}

inline bool keep_char(char c) {
  const unsigned char u = static_cast<unsigned char>(c);
  if (u < 0x20 || u >= 0x7f) return false;  // control bytes and non-ASCII
  if (std::isalnum(u)) return true;
  switch (c) {
    case ' ':
    case '.':
    case ',':
    case '!':
    case '?':
    case ';':
    case ':':
    case '\'':
    case '"':
    case '(':
    case ')':
    case '-':
      return true;
    default:
      return false;
  }
}

inline bool is_bare_number(const std::string& token) {
  std::size_t b = 0, e = token.size();
  auto is_punct = [](char c) { return !std::isalnum(static_cast<unsigned char>(c)); };
  while (b < e && is_punct(token[b])) ++b;
  while (e > b && is_punct(token[e - 1])) --e;
  if (b >= e) return false;
  bool digit = false;
  for (std::size_t i = b; i < e; ++i) {
    const char c = token[i];
    if (std::isdigit(static_cast<unsigned char>(c))) {
      digit = true;
    } else if (c != '.' && c != ',' && c != ':' && c != '/' && c != '-') {
      return false;
    }
  }
  return digit;
}

inline bool is_punct_char(char c) {
  return std::ispunct(static_cast<unsigned char>(c)) != 0;
}

// One cleaning pass; clean_for_encoder iterates it to a fixed point.
inline std::string encoder_clean_pass(const std::string& input) {
  std::vector<std::string> words = split_words(input);
  std::string stage;
  for (const auto& w : words) {
    if (looks_like_url(w)) continue;
    std::string kept;
    for (char c : w)
      if (keep_char(c)) kept.push_back(c);
    // collapse runs of the same punctuation character
    std::string collapsed;
    for (char c : kept) {
      if (!collapsed.empty() && is_punct_char(c) && collapsed.back() == c) continue;
      collapsed.push_back(c);
    }
    if (collapsed.empty()) continue;
    if (is_bare_number(collapsed)) continue;
    if (!stage.empty()) stage.push_back(' ');
    stage += collapsed;
  }
  return stage;
}

}  // namespace detail

// Encoder-grade cleaning: drops URLs, bare numbers and uncommon symbols,
// collapses repeated punctuation, normalizes whitespace. Idempotent.
inline std::string clean_for_encoder(const std::string& input) {
  std::string cur = detail::encoder_clean_pass(input);
  for (int i = 0; i < 4; ++i) {
    std::string next = detail::encoder_clean_pass(cur);
    if (next == cur) break;
    cur = std::move(next);
  }
  return cur;
}

// Counter-grade cleaning: whitespace collapse and control-character removal
// only; punctuation, casing and symbols survive.
inline std::string clean_for_counter(const std::string& input) {
  std::string out;
  bool pending_space = false;
  for (char c : input) {
    const unsigned char u = static_cast<unsigned char>(c);
    if (detail::is_space(c)) {
      pending_space = true;
      continue;
    }
    if (u < 0x20 || u == 0x7f) continue;  // control characters
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

namespace detail {

inline bool sentence_boundary_before(const std::vector<std::string>& words, std::size_t b) {
  const std::string& prev = words[b - 1];
  std::size_t e = prev.size();
  while (e > 0 && (prev[e - 1] == '"' || prev[e - 1] == '\'' || prev[e - 1] == ')')) --e;
  if (e == 0) return false;
  const char c = prev[e - 1];
  return c == '.' || c == '!' || c == '?';
}

inline bool first_person_at(const std::vector<std::string>& words, std::size_t b) {
  std::string w = to_lower(words[b]);
  std::size_t s = 0;
  while (s < w.size() && (w[s] == '"' || w[s] == '\'' || w[s] == '(')) ++s;
  w = w.substr(s);
  while (!w.empty() && is_punct_char(w.back())) w.pop_back();
  return w == "i" || w == "i'm" || w == "i've" || w == "i'll" || w == "i'd";
}

// Chooses k-1 ordered split points over [0, n_words), each near its uniform
// target with seeded jitter, snapped to the highest-priority rule boundary in
// reach. Returns segment extents [start, end).
inline std::vector<std::pair<std::size_t, std::size_t>> divide(
    const std::vector<std::string>& words, std::size_t k, Rng& rng,
    const std::vector<std::string>& rules, bool jitter) {
  const std::size_t n = words.size();
  std::vector<std::size_t> cuts;
  std::size_t prev = 0;
  for (std::size_t j = 1; j < k; ++j) {
    const double exact = static_cast<double>(n) * static_cast<double>(j) / static_cast<double>(k);
    double t = exact;
    if (jitter) {
      const double span = static_cast<double>(n) / (4.0 * static_cast<double>(k));
      t += rng.next_range(-1.0, 1.0) * span;
    }
    const std::size_t lo = prev + 1;
    const std::size_t hi = n - (k - j);  // leave room for the remaining segments
    std::size_t target = static_cast<std::size_t>(std::llround(std::max(0.0, t)));
    target = std::clamp(target, lo, hi);

    const std::size_t radius =
        std::max<std::size_t>(1, n / (2 * k));
    std::size_t chosen = target;
    bool snapped = false;
    for (const auto& rule : rules) {
      std::size_t best = 0, best_dist = radius + 1;
      for (std::size_t b = (target > radius ? target - radius : lo); b <= target + radius; ++b) {
        if (b < lo || b > hi) continue;
        bool hit = false;
        if (rule == "sentence")
          hit = sentence_boundary_before(words, b);
        else if (rule == "first_person")
          hit = first_person_at(words, b);
        if (!hit) continue;
        const std::size_t dist = b > target ? b - target : target - b;
        if (dist < best_dist) {
          best_dist = dist;
          best = b;
        }
      }
      if (best_dist <= radius) {
        chosen = best;
        snapped = true;
        break;
      }
    }
    (void)snapped;  // hard offset is the documented last resort
    cuts.push_back(chosen);
    prev = chosen;
  }
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  std::size_t start = 0;
  for (std::size_t c : cuts) {
    spans.emplace_back(start, c);
    start = c;
  }
  spans.emplace_back(start, n);
  return spans;
}

inline bool build_segments(const std::vector<std::string>& words, const DatasetProfile& profile,
                           Rng& rng, bool jitter, SegmentSet& out) {
  out.segments.clear();
  out.n_small = profile.n_small;
  out.n_big = profile.n_big;
  const auto small_spans = divide(words, profile.n_small, rng, profile.split_rules, jitter);
  const auto big_spans = divide(words, profile.n_big, rng, profile.split_rules, jitter);
  std::size_t index = 0;
  for (const auto& [a, b] : small_spans) {
    Segment s;
    s.index = index++;
    s.size_class = SizeClass::small;
    s.raw_text = join_words(words, a, b);
    s.clean_text = clean_for_encoder(s.raw_text);
    if (s.clean_text.empty()) return false;
    out.segments.push_back(std::move(s));
  }
  for (const auto& [a, b] : big_spans) {
    Segment s;
    s.index = index++;
    s.size_class = SizeClass::big;
    s.raw_text = join_words(words, a, b);
    s.clean_text = clean_for_encoder(s.raw_text);
    if (s.clean_text.empty()) return false;
    out.segments.push_back(std::move(s));
  }
  return true;
}

}  // namespace detail

// Shuffle-and-join the posts (when the profile says so), then divide the
// document into the profile's fixed counts of small and big segments. Both
// families cover the whole document; overlap between them is expected.
inline std::pair<std::string, SegmentSet> enhance(const RawSample& sample,
                                                  const DatasetProfile& profile,
                                                  std::uint64_t seed) {
  if (sample.posts.empty()) throw std::runtime_error("empty body");
  Rng rng(seed);
  std::vector<std::string> posts = sample.posts;
  if (profile.shuffle_posts) rng.shuffle(posts);
  std::string joined;
  for (std::size_t i = 0; i < posts.size(); ++i) {
    if (i) joined.push_back(' ');
    joined += posts[i];
  }
  const std::string document = clean_for_counter(joined);
  const std::vector<std::string> words = detail::split_words(document);
  if (words.size() < std::max(profile.n_small, profile.n_big) || profile.n_big < 1 ||
      profile.n_small < profile.n_big)
    throw std::runtime_error("insufficient text");

  SegmentSet set;
  if (!detail::build_segments(words, profile, rng, /*jitter=*/true, set)) {
    // Seeded cuts put all the cleanable text on one side; fall back to plain
    // equal division before giving up.
    Rng fallback_rng(seed);
    if (!detail::build_segments(words, profile, fallback_rng, /*jitter=*/false, set))
      throw std::runtime_error("insufficient text");
  }
  return {document, std::move(set)};
}

namespace detail {

inline int parse_binary_label(const std::string& raw, std::size_t row, const std::string& column) {
  const std::string v = to_lower(raw);
  if (v == "y" || v == "yes" || v == "1" || v == "true") return 1;
  if (v == "n" || v == "no" || v == "0" || v == "false") return 0;
  throw std::runtime_error("row " + std::to_string(row) + ": bad label \"" + raw + "\" in column " +
                           column);
}

}  // namespace detail

// Reads one of the two supported CSV layouts into RawSamples.
inline std::vector<RawSample> ingest(const std::string& path, const DatasetProfile& profile) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  io::CsvReader reader(in);
  std::vector<std::string> header;
  if (!reader.next(header)) throw std::runtime_error(path + ": empty file");

  auto find_col = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw std::runtime_error(path + ": missing column \"" + name + "\"");
  };

  const auto& schema = profile.schema;
  const bool essay_layout = !schema.text_column.empty();
  const std::size_t body_col = essay_layout ? find_col(schema.text_column)
                                            : find_col(schema.posts_column);
  const std::size_t id_col = schema.id_column.empty() ? header.size() : find_col(schema.id_column);
  std::size_t type_col = header.size();
  std::vector<std::pair<std::string, std::size_t>> label_cols;
  if (!schema.type_column.empty()) {
    type_col = find_col(schema.type_column);
  } else {
    for (const auto& [dim, col] : schema.label_columns) label_cols.emplace_back(dim, find_col(col));
  }

  std::vector<RawSample> samples;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    const std::size_t row = reader.row();
    if (fields.size() != header.size())
      throw std::runtime_error("row " + std::to_string(row) + ": expected " +
                               std::to_string(header.size()) + " fields, got " +
                               std::to_string(fields.size()));
    RawSample s;
    if (id_col < header.size()) {
      s.id = fields[id_col];
    } else {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "row%04zu", row - 1);
      s.id = buf;
    }
    const std::string& body = fields[body_col];
    if (essay_layout) {
      if (body.empty()) throw std::runtime_error("row " + std::to_string(row) + ": empty body");
      s.posts.push_back(body);
    } else {
      std::size_t pos = 0;
      while (pos <= body.size()) {
        const std::size_t next = body.find(schema.post_delimiter, pos);
        const std::string post =
            body.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
        if (!post.empty()) s.posts.push_back(post);
        if (next == std::string::npos) break;
        pos = next + schema.post_delimiter.size();
      }
      if (s.posts.empty()) throw std::runtime_error("row " + std::to_string(row) + ": empty body");
    }
    if (type_col < header.size()) {
      s.labels = decompose_mbti(fields[type_col]);
    } else {
      for (const auto& [dim, col] : label_cols)
        s.labels[dim] = detail::parse_binary_label(fields[col], row, header[col]);
    }
    for (const auto& dim : profile.trait_dimensions)
      if (!s.labels.count(dim))
        throw std::runtime_error("row " + std::to_string(row) + ": missing label for " + dim);
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace adf::text

#include "prw/text.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace prw {

namespace {

inline bool word_byte(unsigned char c) {
  return std::isalnum(c) != 0 || c >= 0x80;
}

inline bool space_byte(unsigned char c) { return std::isspace(c) != 0; }

}  // namespace

TokenSeq tokenize(std::string_view text) {
  TokenSeq out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (space_byte(c)) {
      ++i;
      continue;
    }
    if (word_byte(c)) {
      std::string tok;
      while (i < n && word_byte(static_cast<unsigned char>(text[i]))) {
        tok.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
        ++i;
      }
      out.push_back(std::move(tok));
    } else {
      out.emplace_back(1, text[i]);
      ++i;
    }
  }
  return out;
}

std::size_t prefix_bytes_for_tokens(std::string_view text, std::size_t max_tokens) {
  std::size_t i = 0, count = 0;
  const std::size_t n = text.size();
  while (i < n && count < max_tokens) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (space_byte(c)) {
      ++i;
      continue;
    }
    if (word_byte(c)) {
      while (i < n && word_byte(static_cast<unsigned char>(text[i]))) ++i;
    } else {
      ++i;
    }
    ++count;
  }
  return i;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && space_byte(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && space_byte(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool in_space = false;
  for (char ch : s) {
    if (space_byte(static_cast<unsigned char>(ch))) {
      in_space = true;
      continue;
    }
    if (in_space && !out.empty()) out.push_back(' ');
    in_space = false;
    out.push_back(ch);
  }
  return out;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (ch == '\n') {
      std::string t = trim(cur);
      if (!t.empty()) out.push_back(std::move(t));
      cur.clear();
      continue;
    }
    cur.push_back(ch);
    if (ch == '.' || ch == '!' || ch == '?') {
      std::string t = trim(cur);
      if (!t.empty()) out.push_back(std::move(t));
      cur.clear();
    }
  }
  std::string t = trim(cur);
  if (!t.empty()) out.push_back(std::move(t));
  return out;
}

TermFreq term_freq(const TokenSeq& tokens) {
  TermFreq tf;
  for (const auto& t : tokens) tf[t] += 1.0;
  return tf;
}

double cosine(const TermFreq& a, const TermFreq& b) {
  if (a.empty() || b.empty()) return 0.0;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [t, f] : a) {
    na += f * f;
    auto it = b.find(t);
    if (it != b.end()) dot += f * it->second;
  }
  for (const auto& [t, f] : b) nb += f * f;
  if (dot == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

const std::unordered_set<std::string>& builtin_stopwords() {
  static const std::unordered_set<std::string> kStop = {
      "a",    "about", "after", "all",  "an",    "and",  "any",  "are",  "as",   "at",
      "be",   "been",  "but",   "by",   "can",   "could","did",  "do",   "for",  "from",
      "had",  "has",   "have",  "he",   "her",   "his",  "i",    "if",   "in",   "is",
      "it",   "its",   "me",    "my",   "not",   "of",   "on",   "or",   "our",  "she",
      "so",   "that",  "the",   "their","they",  "this", "to",   "was",  "we",   "with"};
  return kStop;
}

std::unordered_set<std::string> load_stopwords(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open stopword file: " + path);
  std::unordered_set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    out.insert(to_lower(t));
  }
  return out;
}

bool is_word_token(std::string_view tok) {
  if (tok.empty()) return false;
  return word_byte(static_cast<unsigned char>(tok[0]));
}

}  // namespace prw

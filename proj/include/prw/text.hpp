#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace prw {

using TokenSeq = std::vector<std::string>;
using TermFreq = std::unordered_map<std::string, double>;

// Lowercases ASCII letters, keeps maximal runs of letters/digits (bytes >= 0x80
// count as letters so UTF-8 sequences stay intact), emits every other
// non-whitespace character as a single-character token, discards whitespace.
TokenSeq tokenize(std::string_view text);

// Byte length of the prefix of `text` that contains exactly the first
// `max_tokens` tokens (the whole string if it has fewer).
std::size_t prefix_bytes_for_tokens(std::string_view text, std::size_t max_tokens);

std::string trim(std::string_view s);

// Collapses every whitespace run to a single space and trims the ends.
std::string collapse_whitespace(std::string_view s);

std::string to_lower(std::string_view s);

// Splits on '.', '!', '?' (terminator kept) and on newlines; pieces are
// trimmed and empty pieces dropped.
std::vector<std::string> split_sentences(std::string_view text);

TermFreq term_freq(const TokenSeq& tokens);

// Cosine similarity of raw term-frequency vectors; 0 when either is empty.
double cosine(const TermFreq& a, const TermFreq& b);

// The built-in 50-word English stopword list (also shipped as data/stopwords.txt).
const std::unordered_set<std::string>& builtin_stopwords();

// One token per line; '#' lines and blanks ignored.
std::unordered_set<std::string> load_stopwords(const std::string& path);

bool is_word_token(std::string_view tok);

}  // namespace prw

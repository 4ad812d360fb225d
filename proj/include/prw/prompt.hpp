#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace prw {

// Section headers of the canonical prompt template. These strings are a
// bit-exact external interface shared by the rendered-prompt format, the
// label format, and the generator gateway; do not change them.
inline constexpr std::string_view kSummaryHeader = "Past document summary: ";
inline constexpr std::string_view kKeywordsHeader = "Keywords: ";
inline constexpr std::string_view kStyleHeader = "Writing style: ";
inline constexpr std::string_view kEntryHeader = "Past document: ";
inline constexpr std::string_view kElementSep = " | ";
inline constexpr std::string_view kDefaultInstruction = "Finish the passage in the user voice";

enum class ElementKind { SummarySentence, Keyword, StylePhrase };

// An atomic rewriteable unit: one summary sentence, keyword, or style phrase.
// Construction normalizes whitespace (so element text can never contain a
// newline) and rejects the " | " separator inside keywords and style phrases,
// which keeps the joined section lines lossless.
struct Element {
  ElementKind kind;
  std::string text;

  Element(ElementKind k, std::string_view raw);

  friend bool operator==(const Element& a, const Element& b) = default;
};

std::vector<Element> make_elements(ElementKind kind, const std::vector<std::string>& texts);
std::vector<std::string> element_texts(const std::vector<Element>& elems);

// The structured prompt p = (instruction, immediate context, summary,
// keywords, style, ranked entries). Only summary/keywords/style are ever
// rewritten; entries keep the ranker's order.
struct PromptDoc {
  std::string instruction;
  std::string immediate_context;
  std::vector<Element> summary;
  std::vector<Element> keywords;
  std::vector<Element> style;
  std::vector<std::string> ranked_entries;

  friend bool operator==(const PromptDoc& a, const PromptDoc& b) = default;
};

// The reduced label form: just the three rewriteable sections.
struct RewriteLabel {
  std::vector<Element> summary;
  std::vector<Element> keywords;
  std::vector<Element> style;

  friend bool operator==(const RewriteLabel& a, const RewriteLabel& b) = default;
};

struct ParseError : std::runtime_error {
  enum class Kind { UnknownHeader, MalformedSeparator, DuplicateHeader };
  Kind kind;
  std::size_t offset;  // byte offset of the offending line/element

  ParseError(Kind k, std::size_t off, const std::string& what)
      : std::runtime_error(what), kind(k), offset(off) {}
};

// Deterministic canonical rendering: instruction line, immediate-context
// block, then one line per nonempty section (summary sentences joined by a
// space, keywords/style joined by " | "), then each ranked entry in its own
// block prefixed "Past document: ". Empty sections are omitted entirely.
std::string render(const PromptDoc& prompt);

// Inverse of render for text produced by it. Used by tests and by the
// simulated generator. Sections must appear in canonical order.
PromptDoc parse_prompt(std::string_view text);

std::string render_label(const RewriteLabel& label);
RewriteLabel parse_label(std::string_view text);

RewriteLabel label_of(const PromptDoc& prompt);

// Returns `prompt` with the three rewriteable sections replaced by `label`'s;
// instruction, immediate context and entries are copied verbatim.
PromptDoc apply_label(const PromptDoc& prompt, const RewriteLabel& label);

}  // namespace prw

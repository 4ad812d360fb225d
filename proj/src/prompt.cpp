#include "prw/prompt.hpp"

#include "prw/text.hpp"

namespace prw {

namespace {

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && s.substr(0, prefix.size()) == prefix;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      lines.push_back(text.substr(pos));
      break;
    }
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return lines;
}

std::string join_texts(const std::vector<Element>& elems, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < elems.size(); ++i) {
    if (i) out += sep;
    out += elems[i].text;
  }
  return out;
}

// Splits a section payload on " | ", validating that no piece is empty.
std::vector<Element> parse_separated(ElementKind kind, std::string_view payload,
                                     std::size_t line_offset) {
  std::vector<Element> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t sep = payload.find(kElementSep, pos);
    const std::string_view piece =
        sep == std::string_view::npos ? payload.substr(pos) : payload.substr(pos, sep - pos);
    if (trim(piece).empty())
      throw ParseError(ParseError::Kind::MalformedSeparator, line_offset + pos,
                       "empty element in section list");
    out.emplace_back(kind, piece);
    if (sep == std::string_view::npos) break;
    pos = sep + kElementSep.size();
  }
  return out;
}

std::vector<Element> parse_summary_line(std::string_view payload, std::size_t line_offset) {
  // Summary sentences were joined by single spaces, so the line is re-split
  // with the sentence splitter. A sentence without terminating punctuation
  // only round-trips when it is the sole sentence; render_label/render always
  // receive terminator-carrying sentences from the ingest pipeline.
  std::vector<Element> out;
  if (trim(payload).empty())
    throw ParseError(ParseError::Kind::MalformedSeparator, line_offset, "empty summary section");
  for (const auto& s : split_sentences(payload)) out.emplace_back(ElementKind::SummarySentence, s);
  return out;
}

struct SectionParse {
  bool saw_summary = false, saw_keywords = false, saw_style = false;
  int last_rank = 0;  // 1 summary, 2 keywords, 3 style, 4 entries

  void check_order(int rank, bool seen, std::size_t offset) {
    if (seen)
      throw ParseError(ParseError::Kind::DuplicateHeader, offset, "duplicate section header");
    if (rank < last_rank)
      throw ParseError(ParseError::Kind::UnknownHeader, offset, "section out of canonical order");
    last_rank = rank;
  }
};

}  // namespace

Element::Element(ElementKind k, std::string_view raw) : kind(k), text(collapse_whitespace(raw)) {
  if (text.empty()) throw std::invalid_argument("element text must be nonempty");
  if (kind == ElementKind::SummarySentence) {
    // Summary sentences are joined by single spaces in the rendered form, so
    // each must carry exactly one sentence terminator, at its end; the ingest
    // sentence splitter produces exactly this shape.
    const auto is_term = [](char c) { return c == '.' || c == '!' || c == '?'; };
    for (std::size_t i = 0; i + 1 < text.size(); ++i)
      if (is_term(text[i]))
        throw std::invalid_argument("summary sentence contains an interior terminator");
    if (!is_term(text.back())) text += '.';
  } else if (text.find(kElementSep) != std::string::npos) {
    throw std::invalid_argument("element text must not contain the section separator \" | \"");
  }
}

std::vector<Element> make_elements(ElementKind kind, const std::vector<std::string>& texts) {
  std::vector<Element> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.emplace_back(kind, t);
  return out;
}

std::vector<std::string> element_texts(const std::vector<Element>& elems) {
  std::vector<std::string> out;
  out.reserve(elems.size());
  for (const auto& e : elems) out.push_back(e.text);
  return out;
}

std::string render(const PromptDoc& prompt) {
  std::string out = prompt.instruction;
  out += '\n';
  out += prompt.immediate_context;
  if (!prompt.summary.empty()) {
    out += '\n';
    out += kSummaryHeader;
    out += join_texts(prompt.summary, " ");
  }
  if (!prompt.keywords.empty()) {
    out += '\n';
    out += kKeywordsHeader;
    out += join_texts(prompt.keywords, kElementSep);
  }
  if (!prompt.style.empty()) {
    out += '\n';
    out += kStyleHeader;
    out += join_texts(prompt.style, kElementSep);
  }
  for (const auto& e : prompt.ranked_entries) {
    out += '\n';
    out += kEntryHeader;
    out += e;
  }
  return out;
}

PromptDoc parse_prompt(std::string_view text) {
  PromptDoc doc;
  const auto lines = split_lines(text);
  std::size_t offset = 0;
  bool in_entries = false;
  bool context_started = false;
  SectionParse order;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string_view line = lines[i];
    if (i == 0) {
      doc.instruction = std::string(line);
    } else if (starts_with(line, kSummaryHeader)) {
      order.check_order(1, order.saw_summary, offset);
      order.saw_summary = true;
      in_entries = false;
      doc.summary = parse_summary_line(line.substr(kSummaryHeader.size()),
                                       offset + kSummaryHeader.size());
    } else if (starts_with(line, kKeywordsHeader)) {
      order.check_order(2, order.saw_keywords, offset);
      order.saw_keywords = true;
      in_entries = false;
      doc.keywords = parse_separated(ElementKind::Keyword, line.substr(kKeywordsHeader.size()),
                                     offset + kKeywordsHeader.size());
    } else if (starts_with(line, kStyleHeader)) {
      order.check_order(3, order.saw_style, offset);
      order.saw_style = true;
      in_entries = false;
      doc.style = parse_separated(ElementKind::StylePhrase, line.substr(kStyleHeader.size()),
                                  offset + kStyleHeader.size());
    } else if (starts_with(line, kEntryHeader)) {
      order.check_order(4, false, offset);
      in_entries = true;
      doc.ranked_entries.emplace_back(line.substr(kEntryHeader.size()));
    } else if (in_entries) {
      // continuation line of a multi-line entry
      doc.ranked_entries.back() += '\n';
      doc.ranked_entries.back() += line;
    } else if (order.last_rank > 0) {
      throw ParseError(ParseError::Kind::UnknownHeader, offset,
                       "unheadered line after section start");
    } else {
      if (context_started) doc.immediate_context += '\n';
      doc.immediate_context += line;
      context_started = true;
    }
    offset += line.size() + 1;
  }
  return doc;
}

std::string render_label(const RewriteLabel& label) {
  std::string out;
  auto append_line = [&out](std::string_view header, const std::string& payload) {
    if (!out.empty()) out += '\n';
    out += header;
    out += payload;
  };
  if (!label.summary.empty()) append_line(kSummaryHeader, join_texts(label.summary, " "));
  if (!label.keywords.empty())
    append_line(kKeywordsHeader, join_texts(label.keywords, kElementSep));
  if (!label.style.empty()) append_line(kStyleHeader, join_texts(label.style, kElementSep));
  return out;
}

RewriteLabel parse_label(std::string_view text) {
  RewriteLabel label;
  if (text.empty()) return label;
  std::size_t offset = 0;
  SectionParse order;
  for (const std::string_view line : split_lines(text)) {
    if (starts_with(line, kSummaryHeader)) {
      order.check_order(1, order.saw_summary, offset);
      order.saw_summary = true;
      label.summary = parse_summary_line(line.substr(kSummaryHeader.size()),
                                         offset + kSummaryHeader.size());
    } else if (starts_with(line, kKeywordsHeader)) {
      order.check_order(2, order.saw_keywords, offset);
      order.saw_keywords = true;
      label.keywords = parse_separated(ElementKind::Keyword, line.substr(kKeywordsHeader.size()),
                                       offset + kKeywordsHeader.size());
    } else if (starts_with(line, kStyleHeader)) {
      order.check_order(3, order.saw_style, offset);
      order.saw_style = true;
      label.style = parse_separated(ElementKind::StylePhrase, line.substr(kStyleHeader.size()),
                                    offset + kStyleHeader.size());
    } else {
      throw ParseError(ParseError::Kind::UnknownHeader, offset, "unknown label header");
    }
    offset += line.size() + 1;
  }
  return label;
}

RewriteLabel label_of(const PromptDoc& prompt) {
  return RewriteLabel{prompt.summary, prompt.keywords, prompt.style};
}

PromptDoc apply_label(const PromptDoc& prompt, const RewriteLabel& label) {
  PromptDoc out = prompt;
  out.summary = label.summary;
  out.keywords = label.keywords;
  out.style = label.style;
  return out;
}

}  // namespace prw

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "prw/prompt.hpp"
#include "prw/text.hpp"

namespace prw {

class Generator;

enum class Domain { Email, Review, Social };

Domain domain_from_string(const std::string& s);
std::string domain_to_string(Domain d);

struct HistoryDoc {
  std::string doc_id;
  std::int64_t timestamp = 0;
  std::string title;
  std::string body;
  std::map<std::string, std::string> extras;
};

struct UserHistory {
  std::string user_id;
  std::vector<HistoryDoc> docs;  // sorted ascending by timestamp
};

// One writing episode: the immediate context, the ground-truth current
// document, and the user's strictly earlier history.
struct WritingTask {
  std::string user_id;
  std::string doc_id;
  std::string immediate_context;
  std::string ground_truth;
  UserHistory history;  // excludes the current document and anything later
  Domain domain = Domain::Social;
};

struct CorpusSplits {
  std::vector<WritingTask> train;
  std::vector<WritingTask> validation;
  std::vector<WritingTask> test;
};

struct IngestOptions {
  Domain domain = Domain::Social;
  int context_budget_tokens = 30;
  int retrieval_k = 5;
  int max_summary_sentences = 6;
  int max_keywords = 28;
  int render_token_budget = 1024;
  int email_min_sentences = 2;  // Email "qualified document" rule
  int email_min_tokens = 20;
  std::string instruction = std::string(kDefaultInstruction);
  std::string stopwords_path;  // empty = built-in list
  int style_num_docs = 5;
};

// Line-delimited JSON records {user_id, doc_id, timestamp, title, body,
// extras?}; grouped per user and sorted by timestamp. Malformed lines raise
// errors naming the line number.
std::vector<UserHistory> load_corpus(const std::string& path);
std::vector<UserHistory> parse_corpus(std::istream& in, const std::string& source_name);

struct SplitRatios {
  int train = 85, validation = 5, test = 10;
};

// Deterministic user-level split: users are shuffled under `seed`, then
// sliced by ratio with largest-remainder rounding.
std::array<std::vector<std::string>, 3> assign_split_users(
    const std::vector<UserHistory>& histories, SplitRatios ratios, std::uint64_t seed);

// Emits the tasks of one user: the most recent document for Review/Social,
// every qualified document for Email. Throws when fewer than 2 docs.
std::vector<WritingTask> build_tasks(const UserHistory& history, const IngestOptions& opt);

CorpusSplits make_splits(const std::vector<UserHistory>& histories, const IngestOptions& opt,
                         SplitRatios ratios, std::uint64_t seed);

// BM25 (k1 = 1.2, b = 0.75, idf = ln(1 + (N-df+0.5)/(df+0.5))) over the
// tokenized history bodies, queried with the immediate context; ties broken
// by recency. Returns at most k entry bodies, best first.
std::vector<std::string> retrieve_rank(const WritingTask& task, int k = 5);

struct Bm25Index {
  struct Posting {
    int doc = 0;
    double tf = 0.0;
  };
  explicit Bm25Index(const std::vector<TokenSeq>& docs);
  double score(const TokenSeq& query_terms, int doc) const;

  std::map<std::string, std::vector<Posting>> postings;
  std::vector<double> doc_len;
  double avg_len = 0.0;
  int num_docs = 0;
  static constexpr double k1 = 1.2;
  static constexpr double b = 0.75;
};

struct ExtractResult {
  std::vector<Element> summary;
  std::vector<Element> keywords;
};

// Extractive stand-ins for the learned summary/synthesis models: entry
// sentences ranked by term-frequency cosine against the immediate context,
// and non-stopword entry tokens scored freq x (1 if in context else 0.5).
ExtractResult extract_summary_and_keywords(const WritingTask& task,
                                           const std::vector<std::string>& entries,
                                           const IngestOptions& opt);

// Prompts the generator with the style-synthesis instruction over the
// `num_docs` earliest history docs and parses the numbered-list reply.
std::vector<Element> style_synthesis(const UserHistory& history, Generator& generator,
                                     int num_docs = 5);

// Splits a numbered-list reply ("1. concise 2. formal") into phrases. An
// unparseable reply comes back whole, flagged via `parsed_as_list`.
std::vector<std::string> parse_numbered_list(const std::string& reply, bool* parsed_as_list);

// Assembles the Original baseline prompt; entries are dropped last-first
// until the rendering fits the token budget.
PromptDoc assemble_original_prompt(const WritingTask& task, const std::vector<std::string>& entries,
                                   std::vector<Element> summary, std::vector<Element> keywords,
                                   std::vector<Element> style, const IngestOptions& opt);

struct TaskPrompt {
  WritingTask task;
  PromptDoc prompt;
};

// Drops tasks whose original prompt yields fewer than 5 unique variants.
std::vector<TaskPrompt> filter_tasks(std::vector<TaskPrompt> tasks, std::uint64_t variant_seed);

}  // namespace prw

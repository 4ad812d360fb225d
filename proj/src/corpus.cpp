#include "prw/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "prw/generator.hpp"
#include "prw/rng.hpp"
#include "prw/variants.hpp"

namespace prw {

using nlohmann::json;

Domain domain_from_string(const std::string& s) {
  if (s == "email") return Domain::Email;
  if (s == "review") return Domain::Review;
  if (s == "social") return Domain::Social;
  throw std::invalid_argument("unknown domain: " + s);
}

std::string domain_to_string(Domain d) {
  switch (d) {
    case Domain::Email: return "email";
    case Domain::Review: return "review";
    case Domain::Social: return "social";
  }
  return "social";
}

std::vector<UserHistory> parse_corpus(std::istream& in, const std::string& source_name) {
  std::map<std::string, UserHistory> by_user;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw std::runtime_error(source_name + ":" + std::to_string(line_no) + ": invalid JSON");
    for (const char* field : {"user_id", "doc_id", "timestamp", "title", "body"}) {
      if (!j.contains(field))
        throw std::runtime_error(source_name + ":" + std::to_string(line_no) +
                                 ": missing field '" + field + "'");
    }
    HistoryDoc doc;
    doc.doc_id = j["doc_id"].get<std::string>();
    doc.timestamp = j["timestamp"].get<std::int64_t>();
    doc.title = j["title"].get<std::string>();
    doc.body = j["body"].get<std::string>();
    if (j.contains("extras")) {
      for (const auto& [k, v] : j["extras"].items()) doc.extras[k] = v.get<std::string>();
    }
    const std::string user = j["user_id"].get<std::string>();
    auto& hist = by_user[user];
    hist.user_id = user;
    for (const auto& existing : hist.docs) {
      if (existing.doc_id == doc.doc_id)
        throw std::runtime_error(source_name + ":" + std::to_string(line_no) +
                                 ": duplicate doc_id '" + doc.doc_id + "' for user " + user);
    }
    hist.docs.push_back(std::move(doc));
  }
  std::vector<UserHistory> out;
  out.reserve(by_user.size());
  for (auto& [user, hist] : by_user) {
    std::stable_sort(hist.docs.begin(), hist.docs.end(),
                     [](const HistoryDoc& a, const HistoryDoc& b) {
                       return a.timestamp < b.timestamp;
                     });
    out.push_back(std::move(hist));
  }
  return out;
}

std::vector<UserHistory> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  return parse_corpus(in, path);
}

std::array<std::vector<std::string>, 3> assign_split_users(
    const std::vector<UserHistory>& histories, SplitRatios ratios, std::uint64_t seed) {
  if (ratios.train + ratios.validation + ratios.test != 100)
    throw std::invalid_argument("split ratios must sum to 100");
  std::vector<std::string> users;
  users.reserve(histories.size());
  for (const auto& h : histories) users.push_back(h.user_id);
  std::sort(users.begin(), users.end());  // input-order independence

  int nonzero = 0;
  for (int r : {ratios.train, ratios.validation, ratios.test})
    if (r > 0) ++nonzero;
  if (static_cast<int>(users.size()) < nonzero)
    throw std::runtime_error("fewer users than nonzero splits");

  Rng rng(mix64(seed, 0x5eed50117ULL));
  rng.shuffle(users);

  const double n = static_cast<double>(users.size());
  const std::array<int, 3> r{ratios.train, ratios.validation, ratios.test};
  std::array<int, 3> counts{};
  std::array<double, 3> frac{};
  int assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = n * r[i] / 100.0;
    counts[i] = static_cast<int>(std::floor(exact));
    frac[i] = exact - counts[i];
    assigned += counts[i];
  }
  // largest-remainder rounding, ties to the earlier split
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return frac[a] > frac[b]; });
  for (int i = 0; assigned < static_cast<int>(users.size()); ++i) {
    ++counts[order[static_cast<std::size_t>(i) % 3]];
    ++assigned;
  }

  std::array<std::vector<std::string>, 3> out;
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < counts[i]; ++j) out[i].push_back(users[pos++]);
  }
  return out;
}

namespace {

bool email_qualified(const HistoryDoc& doc, const IngestOptions& opt) {
  return static_cast<int>(split_sentences(doc.body).size()) >= opt.email_min_sentences &&
         static_cast<int>(tokenize(doc.body).size()) >= opt.email_min_tokens;
}

std::string make_context(const HistoryDoc& doc, Domain domain, int budget_tokens) {
  std::string ctx = doc.title;
  const std::size_t cut = prefix_bytes_for_tokens(doc.body, static_cast<std::size_t>(budget_tokens));
  const std::string start = doc.body.substr(0, cut);
  if (!start.empty()) {
    if (!ctx.empty()) ctx += ' ';
    ctx += start;
  }
  auto append_extra = [&](const char* key) {
    const auto it = doc.extras.find(key);
    if (it != doc.extras.end() && !it->second.empty()) {
      if (!ctx.empty()) ctx += ' ';
      ctx += it->second;
    }
  };
  if (domain == Domain::Review) {
    append_extra("product_title");
    append_extra("product_description");
  } else if (domain == Domain::Social) {
    append_extra("top_level_post");
    append_extra("parent_comment");
  }
  return collapse_whitespace(ctx);
}

WritingTask task_for_doc(const UserHistory& history, std::size_t doc_idx,
                         const IngestOptions& opt) {
  const HistoryDoc& current = history.docs[doc_idx];
  WritingTask task;
  task.user_id = history.user_id;
  task.doc_id = current.doc_id;
  task.domain = opt.domain;
  task.immediate_context = make_context(current, opt.domain, opt.context_budget_tokens);
  task.ground_truth = current.body;
  task.history.user_id = history.user_id;
  task.history.docs.assign(history.docs.begin(), history.docs.begin() + doc_idx);
  return task;
}

}  // namespace

std::vector<WritingTask> build_tasks(const UserHistory& history, const IngestOptions& opt) {
  if (history.docs.size() < 2)
    throw std::runtime_error("TooShortHistory: user " + history.user_id + " has " +
                             std::to_string(history.docs.size()) + " docs, need >= 2");
  std::vector<WritingTask> out;
  if (opt.domain == Domain::Email) {
    for (std::size_t i = 1; i < history.docs.size(); ++i) {
      if (email_qualified(history.docs[i], opt)) out.push_back(task_for_doc(history, i, opt));
    }
  } else {
    out.push_back(task_for_doc(history, history.docs.size() - 1, opt));
  }
  return out;
}

CorpusSplits make_splits(const std::vector<UserHistory>& histories, const IngestOptions& opt,
                         SplitRatios ratios, std::uint64_t seed) {
  const auto split_users = assign_split_users(histories, ratios, seed);
  std::map<std::string, const UserHistory*> by_user;
  for (const auto& h : histories) by_user[h.user_id] = &h;

  CorpusSplits splits;
  std::vector<WritingTask>* dest[3] = {&splits.train, &splits.validation, &splits.test};
  for (int s = 0; s < 3; ++s) {
    for (const auto& user : split_users[s]) {
      const UserHistory* hist = by_user.at(user);
      if (hist->docs.size() < 2) continue;  // too short to form a task
      auto tasks = build_tasks(*hist, opt);
      for (auto& t : tasks) dest[s]->push_back(std::move(t));
    }
  }
  return splits;
}

Bm25Index::Bm25Index(const std::vector<TokenSeq>& docs) : num_docs(static_cast<int>(docs.size())) {
  doc_len.resize(docs.size());
  double total_len = 0.0;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    doc_len[d] = static_cast<double>(docs[d].size());
    total_len += doc_len[d];
    std::map<std::string, double> tf;
    for (const auto& t : docs[d]) tf[t] += 1.0;
    for (const auto& [term, f] : tf) postings[term].push_back({static_cast<int>(d), f});
  }
  avg_len = docs.empty() ? 0.0 : total_len / static_cast<double>(docs.size());
}

double Bm25Index::score(const TokenSeq& query_terms, int doc) const {
  double s = 0.0;
  for (const auto& term : query_terms) {
    const auto it = postings.find(term);
    if (it == postings.end()) continue;
    const double df = static_cast<double>(it->second.size());
    double tf = 0.0;
    for (const auto& p : it->second) {
      if (p.doc == doc) {
        tf = p.tf;
        break;
      }
    }
    if (tf == 0.0) continue;
    const double idf = std::log(1.0 + (num_docs - df + 0.5) / (df + 0.5));
    const double norm = k1 * (1.0 - b + b * doc_len[doc] / (avg_len > 0 ? avg_len : 1.0));
    s += idf * tf * (k1 + 1.0) / (tf + norm);
  }
  return s;
}

std::vector<std::string> retrieve_rank(const WritingTask& task, int k) {
  if (k < 1) throw std::invalid_argument("retrieve_rank k must be >= 1");
  const auto& docs = task.history.docs;
  if (docs.empty()) return {};

  std::vector<TokenSeq> bodies;
  bodies.reserve(docs.size());
  for (const auto& d : docs) bodies.push_back(tokenize(d.body));
  const Bm25Index index(bodies);

  // unique query terms, classic BM25
  TokenSeq query = tokenize(task.immediate_context);
  std::sort(query.begin(), query.end());
  query.erase(std::unique(query.begin(), query.end()), query.end());

  std::vector<int> order(docs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> scores(docs.size());
  for (std::size_t d = 0; d < docs.size(); ++d)
    scores[d] = index.score(query, static_cast<int>(d));

  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    if (docs[a].timestamp != docs[b].timestamp) return docs[a].timestamp > docs[b].timestamp;
    return a > b;  // later in the (time-sorted) list = newer
  });

  std::vector<std::string> out;
  const std::size_t limit = std::min<std::size_t>(static_cast<std::size_t>(k), docs.size());
  out.reserve(limit);
  for (std::size_t i = 0; i < limit; ++i) out.push_back(docs[order[i]].body);
  return out;
}

ExtractResult extract_summary_and_keywords(const WritingTask& task,
                                           const std::vector<std::string>& entries,
                                           const IngestOptions& opt) {
  ExtractResult res;
  if (entries.empty()) return res;

  const auto stop = opt.stopwords_path.empty() ? builtin_stopwords()
                                               : load_stopwords(opt.stopwords_path);
  const TermFreq ctx_tf = term_freq(tokenize(task.immediate_context));

  // summary: entry sentences by descending cosine against the context
  struct Cand {
    std::string text;
    double sim;
    std::size_t pos;
  };
  std::vector<Cand> cands;
  std::size_t pos = 0;
  for (const auto& entry : entries) {
    for (auto& s : split_sentences(entry)) {
      const double sim = cosine(term_freq(tokenize(s)), ctx_tf);
      cands.push_back({std::move(s), sim, pos++});
    }
  }
  std::stable_sort(cands.begin(), cands.end(),
                   [](const Cand& a, const Cand& b) { return a.sim > b.sim; });
  for (const auto& c : cands) {
    if (static_cast<int>(res.summary.size()) >= opt.max_summary_sentences) break;
    try {
      res.summary.emplace_back(ElementKind::SummarySentence, c.text);
    } catch (const std::invalid_argument&) {
      // sentence not representable as a single summary element; skip it
    }
  }

  // keywords: non-stopword entry tokens scored by frequency, halved when the
  // token does not appear in the immediate context
  struct Kw {
    std::string token;
    double score;
    std::size_t first_pos;
  };
  std::map<std::string, std::pair<double, std::size_t>> freq;  // token -> (count, first pos)
  std::size_t tok_pos = 0;
  for (const auto& entry : entries) {
    for (const auto& t : tokenize(entry)) {
      if (!is_word_token(t) || stop.count(t)) {
        ++tok_pos;
        continue;
      }
      auto [it, inserted] = freq.try_emplace(t, std::make_pair(0.0, tok_pos));
      it->second.first += 1.0;
      ++tok_pos;
    }
  }
  std::vector<Kw> kws;
  kws.reserve(freq.size());
  for (const auto& [tok, fp] : freq) {
    const double boost = ctx_tf.count(tok) ? 1.0 : 0.5;
    kws.push_back({tok, fp.first * boost, fp.second});
  }
  std::sort(kws.begin(), kws.end(), [](const Kw& a, const Kw& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.first_pos < b.first_pos;
  });
  for (const auto& kw : kws) {
    if (static_cast<int>(res.keywords.size()) >= opt.max_keywords) break;
    res.keywords.emplace_back(ElementKind::Keyword, kw.token);
  }
  return res;
}

std::vector<std::string> parse_numbered_list(const std::string& reply, bool* parsed_as_list) {
  // phrases delimited by "<digits>." markers preceded by start-of-text or whitespace
  std::vector<std::pair<std::size_t, std::size_t>> markers;  // (start, end past dot)
  for (std::size_t i = 0; i < reply.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(reply[i]))) continue;
    if (i > 0 && !std::isspace(static_cast<unsigned char>(reply[i - 1]))) continue;
    std::size_t j = i;
    while (j < reply.size() && std::isdigit(static_cast<unsigned char>(reply[j]))) ++j;
    if (j < reply.size() && reply[j] == '.') {
      markers.emplace_back(i, j + 1);
      i = j;
    }
  }
  std::vector<std::string> phrases;
  if (markers.empty()) {
    if (parsed_as_list) *parsed_as_list = false;
    const std::string whole = trim(reply);
    if (!whole.empty()) phrases.push_back(whole);
    return phrases;
  }
  if (parsed_as_list) *parsed_as_list = true;
  for (std::size_t m = 0; m < markers.size(); ++m) {
    const std::size_t begin = markers[m].second;
    const std::size_t end = m + 1 < markers.size() ? markers[m + 1].first : reply.size();
    const std::string phrase = trim(reply.substr(begin, end - begin));
    if (!phrase.empty()) phrases.push_back(phrase);
  }
  return phrases;
}

std::vector<Element> style_synthesis(const UserHistory& history, Generator& generator,
                                     int num_docs) {
  std::string prompt(kStyleInstruction);
  const int limit = std::min<int>(num_docs, static_cast<int>(history.docs.size()));
  for (int i = 0; i < limit; ++i) {
    prompt += '\n';
    prompt += history.docs[i].body;  // earliest documents first
  }
  prompt += "\n1.";

  const GenerationRecord rec = generator.generate(prompt);
  bool as_list = false;
  const auto phrases = parse_numbered_list(rec.output, &as_list);
  std::vector<Element> out;
  for (const auto& p : phrases) {
    try {
      out.emplace_back(ElementKind::StylePhrase, p);
    } catch (const std::invalid_argument&) {
      // phrase not representable (contains the separator); skip
    }
  }
  return out;
}

PromptDoc assemble_original_prompt(const WritingTask& task, const std::vector<std::string>& entries,
                                   std::vector<Element> summary, std::vector<Element> keywords,
                                   std::vector<Element> style, const IngestOptions& opt) {
  PromptDoc prompt;
  prompt.instruction = opt.instruction;
  prompt.immediate_context = task.immediate_context;
  prompt.summary = std::move(summary);
  prompt.keywords = std::move(keywords);
  prompt.style = std::move(style);
  prompt.ranked_entries = entries;

  // entries truncated last-first until the rendering fits the budget
  while (!prompt.ranked_entries.empty() &&
         static_cast<int>(tokenize(render(prompt)).size()) > opt.render_token_budget) {
    prompt.ranked_entries.pop_back();
  }
  return prompt;
}

std::vector<TaskPrompt> filter_tasks(std::vector<TaskPrompt> tasks, std::uint64_t variant_seed) {
  std::vector<TaskPrompt> out;
  out.reserve(tasks.size());
  for (auto& tp : tasks) {
    const VariantSet vset = sample_variants(tp.prompt, variant_seed);
    if (vset.variants.size() >= 5) out.push_back(std::move(tp));
  }
  return out;
}

}  // namespace prw

#include "prw/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "prw/policy.hpp"
#include "prw/rng.hpp"
#include "prw/text.hpp"

namespace prw {

using nlohmann::json;

namespace {

const std::vector<std::string>& topic_vocab() {
  static const std::vector<std::string> v = {
      "harbor", "violin", "glacier", "saffron", "lantern", "meadow", "compass", "ember",
      "orchid", "quarry", "falcon", "tundra", "cobalt", "willow", "anchor", "prairie",
      "summit", "canyon", "breeze", "timber", "marble", "craters", "voyage", "pebble",
      "thicket", "harvest", "beacon", "drizzle", "mosaic", "pollen", "grove", "ripple",
      "sparrow", "boulder", "chimney", "ledger", "garnet", "hollow", "juniper", "kestrel",
      "lagoon", "mantle", "nectar", "obsidian", "paddle", "quartz", "raven", "sequoia",
      "trellis", "umber", "vessel", "walnut", "yarrow", "zephyr", "alcove", "bramble",
      "cinder", "delta", "estuary", "fjord", "gully", "heather", "islet", "knoll"};
  return v;
}

const std::vector<std::string>& noise_kw_vocab() {
  static const std::vector<std::string> v = {
      "gasket", "sprocket", "widget", "flange", "grommet", "spindle", "ratchet", "gimbal",
      "piston", "bellows", "crampon", "ferrule", "hasp",    "jamb",    "kerf",    "lug",
      "mandrel", "nib",    "oakum",  "pawl",   "quoin",    "rasp",    "shim",    "tang",
      "ullage",  "vane",   "wicket", "yoke"};
  return v;
}

const std::vector<std::string>& habit_vocab() {
  static const std::vector<std::string> v = {"totally",  "literally", "honestly", "basically",
                                             "actually", "frankly",   "roughly",  "plainly",
                                             "clearly",  "surely",    "kindly",   "truly"};
  return v;
}

const std::vector<std::string>& junk_stems() {
  static const std::vector<std::string> v = {"fen", "tarn", "scree", "loam", "silt",
                                             "marl", "peat", "shale", "gault", "till"};
  return v;
}

const std::vector<std::string>& neutral_style_phrases() {
  static const std::vector<std::string> v = {"shares personal stories", "keeps sentences short",
                                             "asks direct questions"};
  return v;
}

std::vector<std::string> pick_distinct(const std::vector<std::string>& vocab, int count,
                                       Rng& rng) {
  std::vector<std::string> pool = vocab;
  rng.shuffle(pool);
  pool.resize(static_cast<std::size_t>(count));
  return pool;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

// Context-block multiplicities: strictly decreasing counts that sum to the
// context budget, so relevance strictly orders the topic keywords.
std::vector<int> context_counts(int num_topics, int budget) {
  std::vector<int> counts(num_topics);
  int sum = 0;
  for (int i = 0; i < num_topics; ++i) {
    counts[i] = num_topics - i;
    sum += counts[i];
  }
  if (sum > budget)
    throw std::invalid_argument("context budget too small for the topic count");
  int rem = budget - sum;
  while (rem > 0) {
    for (int i = 0; i < num_topics && rem > 0; ++i) {
      ++counts[i];
      --rem;
    }
  }
  return counts;
}

struct Sentence {
  std::vector<std::string> words;
  bool in_ground_truth = false;

  std::string text() const { return join(words) + "."; }
};

}  // namespace

void validate(const SyntheticSpec& spec) {
  if (spec.num_users < 1) throw std::invalid_argument("synthetic spec: num_users must be >= 1");
  if (spec.docs_per_user < 2)
    throw std::invalid_argument("synthetic spec: docs_per_user must be >= 2");
  if (spec.relevant_keywords_per_task < 1)
    throw std::invalid_argument("synthetic spec: need at least one relevant keyword");
  if (spec.relevant_keywords_per_task > static_cast<int>(topic_vocab().size()))
    throw std::invalid_argument("synthetic spec: relevant keyword count exceeds the vocabulary");
  if (spec.noise_keywords_per_task > static_cast<int>(noise_kw_vocab().size()))
    throw std::invalid_argument("synthetic spec: noise keyword count exceeds the vocabulary");
  if (spec.relevant_sentences < 0 || spec.noise_sentences < 0)
    throw std::invalid_argument("synthetic spec: sentence counts must be >= 0");
  if (spec.style_mix < 0.0 || spec.style_mix > 1.0)
    throw std::invalid_argument("synthetic spec: style_mix must lie in [0,1]");
  // three context slots are reserved for the retrieval anchor stopword
  if (spec.context_tokens - 3 <
      spec.relevant_keywords_per_task * (spec.relevant_keywords_per_task + 1) / 2)
    throw std::invalid_argument("synthetic spec: context budget too small for the topic count");
}

std::string build_synthetic_corpus_text(const SyntheticSpec& spec) {
  validate(spec);
  std::string out;

  for (int u = 0; u < spec.num_users; ++u) {
    Rng rng(mix64(spec.seed, 0x5f3759df, static_cast<std::uint64_t>(u)));
    const int num_topics = spec.relevant_keywords_per_task;
    const auto topics = pick_distinct(topic_vocab(), num_topics, rng);
    const auto counts = context_counts(num_topics, spec.context_tokens - 3);

    // Context block: topic tokens grouped with strictly decreasing counts,
    // then three copies of the anchor stopword ("the") that seeds the BM25
    // ranking of otherwise-junk history docs without ever becoming a keyword.
    std::vector<std::string> block;
    block.reserve(static_cast<std::size_t>(spec.context_tokens));
    for (int i = 0; i < num_topics; ++i)
      for (int c = 0; c < counts[i]; ++c) block.push_back(topics[i]);
    for (int c = 0; c < 3; ++c) block.emplace_back("the");

    // Keyword slots: topics carried by the prompt plus noise keywords, in a
    // shuffled order realized through engineered entry frequencies. In clean
    // mode every topic is carried, in canonical order.
    const bool clean = spec.clean_mode();
    const int missing = clean ? 0 : std::min(2, std::max(0, num_topics - 4));
    const int present = num_topics - missing;
    const auto noise_kws = pick_distinct(noise_kw_vocab(), spec.noise_keywords_per_task, rng);

    // Keyword slots carry engineered entry frequencies. Topic tokens get the
    // small integer scores 3..3+P-1; noise tokens get half-odd scores (odd
    // frequency, halved by the out-of-context factor), so all scores are
    // distinct and the extractor's ranking is fully pinned. In noisy regimes
    // the topic frequencies anti-correlate with context salience - the
    // extractor ranks by author frequency, so the prompt's topic order comes
    // out reversed, the gap a learned reordering has to close.
    struct Slot {
      std::string token;
      bool is_topic;
      int freq;
    };
    std::vector<Slot> slots;
    for (int i = 0; i < present; ++i) {
      const int freq = clean ? 3 + (present - 1 - i) : 3 + i;
      slots.push_back({topics[i], true, freq});
    }
    for (std::size_t m = 0; m < noise_kws.size(); ++m)
      slots.push_back({noise_kws[m], false, 7 + 2 * static_cast<int>(m)});

    int junk_counter = 0;
    auto junk_word = [&]() {
      const auto& stems = junk_stems();
      std::string w = stems[junk_counter % stems.size()] + std::to_string(u) + "x" +
                      std::to_string(junk_counter);
      ++junk_counter;
      return w;
    };
    auto junk_run = [&](int n) {
      std::vector<std::string> words;
      for (int i = 0; i < n; ++i) words.push_back(junk_word());
      return words;
    };

    const int histories = spec.docs_per_user - 1;

    // Opening lines: every history doc starts with one of these, the pieces
    // of the current document the author reuses. They are reachable only by
    // keeping a style phrase that carries the simulator trigger token, which
    // makes destroying the style section (or dropping the trigger phrase)
    // costly while the all-junk summary stays freely removable.
    std::vector<Sentence> openings(histories);
    for (auto& s : openings) {
      s.words = junk_run(7);
      s.in_ground_truth = true;
    }

    // Carrier sentences realize the engineered keyword frequencies; every one
    // of them is clipped noise unless the corpus is in clean mode. Noise
    // carriers never reach the summary (zero cosine), so only the small topic
    // carriers and the bait sentences compete for its slots.
    auto carrier = [&](const Slot& slot) {
      Sentence s;
      s.words = junk_run(spec.junk_words_per_sentence);
      for (int c = 0; c < slot.freq; ++c) s.words.push_back(slot.token);
      rng.shuffle(s.words);
      s.in_ground_truth = clean && slot.is_topic;
      return s;
    };
    std::vector<Sentence> carriers;
    for (const auto& slot : slots) carriers.push_back(carrier(slot));
    {
      Sentence habit;  // author-frequency signal, ranked below every keyword score
      habit.words = junk_run(2);
      const auto habits = pick_distinct(habit_vocab(), 2, rng);
      for (const auto& h : habits)
        for (int c = 0; c < 4; ++c) habit.words.push_back(h);
      rng.shuffle(habit.words);
      carriers.push_back(std::move(habit));
    }

    std::vector<Sentence> extra;  // gt-tail junk plus plain noise sentences
    for (int i = 0; i < spec.relevant_sentences; ++i) {
      Sentence s;
      s.words = junk_run(spec.junk_words_per_sentence + 2);
      s.in_ground_truth = true;
      extra.push_back(std::move(s));
    }
    for (int i = 0; i < spec.noise_sentences; ++i) {
      Sentence s;
      s.words = junk_run(spec.junk_words_per_sentence + 2);
      extra.push_back(std::move(s));
    }

    // History docs. Doc 0 holds every keyword carrier, so it dominates the
    // BM25 ranking; later docs are ranked by strictly decreasing counts of
    // the anchor stopword, which pins the entry order (and with it the order
    // in which opening lines appear in the ground truth).
    std::vector<std::vector<std::string>> doc_sentences(histories);
    doc_sentences[0].push_back(openings[0].text());
    for (const auto& s : carriers) doc_sentences[0].push_back(s.text());
    for (int d = 1; d < histories; ++d) {
      doc_sentences[d].push_back(openings[d].text());
      if (!clean) {
        std::vector<std::string> bait = junk_run(2);
        for (int c = 0; c < 2 * (histories - d); ++c) bait.emplace_back("the");
        doc_sentences[d].push_back(join(bait) + ".");
      }
    }
    for (std::size_t i = 0; i < extra.size(); ++i) {
      const int d = histories > 1 ? 1 + static_cast<int>(i % (histories - 1)) : 0;
      doc_sentences[d].push_back(extra[i].text());
    }

    // Ground truth: context block, topics in canonical order, carrier
    // sentences when they are ground-truth content (ordered exactly as the
    // extractor will order the summary: by term-frequency cosine against the
    // context), the junk tail, then the opening lines in entry order.
    const std::string context_text = join(block);
    const TermFreq ctx_tf = term_freq(tokenize(context_text));
    std::vector<const Sentence*> gt_carriers;
    for (const auto& s : carriers)
      if (s.in_ground_truth) gt_carriers.push_back(&s);
    std::stable_sort(gt_carriers.begin(), gt_carriers.end(),
                     [&](const Sentence* a, const Sentence* b) {
                       return cosine(term_freq(tokenize(a->text())), ctx_tf) >
                              cosine(term_freq(tokenize(b->text())), ctx_tf);
                     });

    std::string gt = context_text;
    for (int i = 0; i < num_topics; ++i) {
      gt.push_back(' ');
      gt += topics[i];
    }
    for (const Sentence* s : gt_carriers) {
      gt.push_back(' ');
      gt += s->text();
    }
    for (const auto& s : extra) {
      if (!s.in_ground_truth) continue;
      gt.push_back(' ');
      gt += s.text();
    }
    for (const auto& s : openings) {
      gt.push_back(' ');
      gt += s.text();
    }

    char user_id[32];
    std::snprintf(user_id, sizeof(user_id), "u%04d", u);
    auto emit = [&](const std::string& doc_id, int timestamp, const std::string& body) {
      const json j = {{"user_id", user_id},
                      {"doc_id", doc_id},
                      {"timestamp", timestamp},
                      {"title", ""},
                      {"body", body}};
      out += j.dump();
      out.push_back('\n');
    };
    for (int d = 0; d < histories; ++d)
      emit(std::string(user_id) + "_d" + std::to_string(d), d, join(doc_sentences[d]));
    emit(std::string(user_id) + "_cur", histories, gt);
  }
  return out;
}

void write_synthetic_corpus(const SyntheticSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path);
  out << build_synthetic_corpus_text(spec);
}

std::vector<std::string> canned_style_phrases(double style_mix) {
  const int triggers = std::clamp(static_cast<int>(std::lround(style_mix * 4.0)), 0, 4);
  std::vector<std::string> phrases;
  const auto& neutral = neutral_style_phrases();
  for (int i = 0; i < 4 - triggers; ++i) phrases.push_back(neutral[i % neutral.size()]);
  for (int i = 0; i < triggers; ++i) phrases.emplace_back(kUniformThoroughPhrase);
  return phrases;
}

std::string canned_style_reply(double style_mix) {
  const auto phrases = canned_style_phrases(style_mix);
  std::string out;
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    if (i) out.push_back(' ');
    out += std::to_string(i + 1) + ". " + phrases[i];
  }
  return out;
}

}  // namespace prw

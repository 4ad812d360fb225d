#include "prw/variants.hpp"

#include <set>
#include <stdexcept>

#include "prw/corpus.hpp"
#include "prw/generator.hpp"
#include "prw/metrics.hpp"
#include "prw/rng.hpp"

namespace prw {

std::vector<Element> randomize_sequence(const std::vector<Element>& elements, Rng& rng) {
  std::vector<Element> out = elements;
  rng.shuffle(out);
  const std::size_t n = out.size();
  const std::size_t k = n == 0 ? 0 : static_cast<std::size_t>(rng.below(n / 2 + 1));
  out.erase(out.end() - static_cast<std::ptrdiff_t>(k), out.end());
  return out;
}

namespace {

std::vector<std::string> texts_of(const std::vector<Element>& elems) {
  return element_texts(elems);
}

// Unique randomized sequences for one element type. Sequences equal to the
// original order are rejected so the "+1 original" arithmetic holds exactly;
// sections with fewer than 2 elements cannot vary and contribute just their
// identity sequence.
std::vector<std::vector<Element>> draw_sequences(const std::vector<Element>& elems, Rng& rng,
                                                 int per_type, int cap_attempts) {
  if (elems.size() < 2) return {elems};
  const std::vector<std::string> identity = texts_of(elems);
  std::vector<std::vector<Element>> out;
  std::set<std::vector<std::string>> seen;
  for (int attempt = 0; attempt < cap_attempts && static_cast<int>(out.size()) < per_type;
       ++attempt) {
    auto seq = randomize_sequence(elems, rng);
    auto key = texts_of(seq);
    if (key == identity) continue;
    if (seen.insert(std::move(key)).second) out.push_back(std::move(seq));
  }
  if (out.empty()) out.push_back(elems);
  return out;
}

}  // namespace

VariantSet sample_variants(const PromptDoc& prompt, std::uint64_t seed, int per_type,
                           int cap_attempts) {
  VariantSet vset;
  vset.original = prompt;
  vset.seed = seed;

  Rng rng_su(mix64(seed, 1));
  Rng rng_kw(mix64(seed, 2));
  Rng rng_st(mix64(seed, 3));
  const auto summaries = draw_sequences(prompt.summary, rng_su, per_type, cap_attempts);
  const auto keywords = draw_sequences(prompt.keywords, rng_kw, per_type, cap_attempts);
  const auto styles = draw_sequences(prompt.style, rng_st, per_type, cap_attempts);

  std::set<std::string> seen;
  auto push_unique = [&](PromptDoc v) {
    if (seen.insert(render(v)).second) vset.variants.push_back(std::move(v));
  };
  push_unique(prompt);  // the original is always variant 0
  for (const auto& su : summaries) {
    for (const auto& kw : keywords) {
      for (const auto& st : styles) {
        PromptDoc v = prompt;
        v.summary = su;
        v.keywords = kw;
        v.style = st;
        push_unique(std::move(v));
      }
    }
  }
  return vset;
}

std::pair<ScoredVariant, std::vector<ScoredVariant>> select_best(const WritingTask& task,
                                                                 const VariantSet& vset,
                                                                 Generator& generator,
                                                                 const RunOptions& run) {
  if (vset.variants.empty()) throw std::invalid_argument("variant set is empty");
  if (task.ground_truth.empty())
    throw std::invalid_argument("select_best needs the ground-truth document");

  const TokenSeq ref = tokenize(task.ground_truth);
  std::vector<ScoredVariant> scored(vset.variants.size());
  std::string first_error;
  for_each_index(vset.variants.size(), run, [&](std::size_t i) {
    ScoredVariant& sv = scored[i];
    sv.prompt = vset.variants[i];
    try {
      sv.generated = generator.generate(render(sv.prompt)).output;
    } catch (const std::exception& e) {
      throw std::runtime_error("generation failed for variant " + std::to_string(i) + ": " +
                               e.what());
    }
    sv.score = bleu(tokenize(sv.generated), ref, 4, BleuMode::Smoothed);
  });

  std::size_t best = 0;
  for (std::size_t i = 1; i < scored.size(); ++i)
    if (scored[i].score > scored[best].score) best = i;
  return {scored[best], scored};
}

std::vector<SlExample> emit_sl_examples(const VariantSet& vset, const ScoredVariant& best) {
  const RewriteLabel label = label_of(best.prompt);
  std::vector<SlExample> out;
  out.reserve(vset.variants.size());
  for (const auto& v : vset.variants) out.push_back({v, label});
  return out;
}

}  // namespace prw

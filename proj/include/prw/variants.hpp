#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prw/parallel.hpp"
#include "prw/prompt.hpp"

namespace prw {

class Generator;
class Rng;
struct WritingTask;

// The randomized variants of one original prompt. variants[0] is always the
// original; every other variant differs from it in at least one rewriteable
// section, and non-rewriteable components are identical across all of them.
struct VariantSet {
  PromptDoc original;
  std::vector<PromptDoc> variants;
  std::uint64_t seed = 0;
};

struct ScoredVariant {
  PromptDoc prompt;
  std::string generated;
  double score = 0.0;  // smoothed sentence BLEU vs the ground truth, in [0,100]
};

struct SlExample {
  PromptDoc input;
  RewriteLabel label;
};

// Uniform random permutation followed by removal of the trailing k elements,
// k ~ U{0..floor(N/2)}.
std::vector<Element> randomize_sequence(const std::vector<Element>& elements, Rng& rng);

// Draws up to `per_type` unique randomized sequences per element type (the
// identity order never counts as one, so the original joins exactly once at
// the end), then crosses them and prepends the original. Deterministic per
// seed; duplicates are merged.
VariantSet sample_variants(const PromptDoc& prompt, std::uint64_t seed, int per_type = 4,
                           int cap_attempts = 64);

// Renders, generates and scores every variant against the task's ground
// truth. Best = argmax score, ties to the earliest variant (the original is
// index 0, so it wins any tie it is part of).
std::pair<ScoredVariant, std::vector<ScoredVariant>> select_best(
    const WritingTask& task, const VariantSet& vset, Generator& generator,
    const RunOptions& run = {});

// One SL example per variant, all labeled with the best prompt's sections.
std::vector<SlExample> emit_sl_examples(const VariantSet& vset, const ScoredVariant& best);

}  // namespace prw

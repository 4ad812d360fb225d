#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace prw {

// Generator spec for the synthetic closed-loop corpus. Construction
// guarantees, under the simulated generator with the default ingest options
// (30-token context, 8 keywords, 6 summary sentences):
//   - the ground truth is the context block, the topic keywords in a
//     canonical order (descending context frequency), then the opening lines
//     of the user's past documents in retrieval order;
//   - the opening lines are reachable only through a style phrase carrying
//     the simulator trigger token, so wrecking the style section costs far
//     more than any junk it sheds;
//   - every summary candidate sentence is noise after n-gram clipping, so
//     removing the summary section is reward-optimal;
//   - two topic keywords are withheld from the prompt (noisy regimes only)
//     and appear in the add-candidate pool, which only the RL stage can use;
//   - with zero noise ("clean mode") the original prompt itself is
//     reward-optimal and no edit can improve it.
struct SyntheticSpec {
  std::uint64_t seed = 0;
  int num_users = 200;
  int docs_per_user = 6;
  int relevant_keywords_per_task = 6;
  int noise_keywords_per_task = 8;
  int relevant_sentences = 0;  // extra ground-truth tail sentences
  int noise_sentences = 4;
  double style_mix = 0.25;  // fraction of canned style phrases that trigger long output
  int context_tokens = 30;  // must equal the ingest context budget
  int junk_words_per_sentence = 4;

  bool clean_mode() const { return noise_keywords_per_task == 0 && noise_sentences == 0; }
};

void validate(const SyntheticSpec& spec);

// Line-delimited corpus records, deterministic per seed.
std::string build_synthetic_corpus_text(const SyntheticSpec& spec);
void write_synthetic_corpus(const SyntheticSpec& spec, const std::string& path);

// The canned style-synthesis reply matching style_mix: four phrases of which
// round(style_mix * 4) are the output-lengthening trigger phrase.
std::vector<std::string> canned_style_phrases(double style_mix);
std::string canned_style_reply(double style_mix);

}  // namespace prw

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prw/corpus.hpp"
#include "prw/metrics.hpp"
#include "prw/parallel.hpp"
#include "prw/policy.hpp"
#include "prw/variants.hpp"

namespace prw {

class Generator;

// Presence bits for the Original-variant ablation grid.
inline constexpr unsigned kMaskSummary = 1u;
inline constexpr unsigned kMaskKeywords = 2u;
inline constexpr unsigned kMaskStyle = 4u;

std::string mask_method_name(unsigned mask);

enum class MethodKind {
  Original,
  RewriterSl,
  RewriterRl,
  RewriterSlRl,
  RuleRewriter,
  OriginalVariant,
  ElementAblation,
};

struct MethodSpec {
  MethodKind kind = MethodKind::Original;
  std::string name;         // report row label
  std::string policy_file;  // Rewriter*/ElementAblation
  RuleSet ruleset;          // RuleRewriter
  unsigned mask = kMaskSummary | kMaskKeywords | kMaskStyle;  // OriginalVariant
  unsigned drop_mask = 0;   // ElementAblation: sections stripped before the policy runs
  bool uniform_style = false;  // style section replaced by the learned phrase

  static MethodSpec original();
  static MethodSpec policy(MethodKind kind, std::string policy_file);
  static MethodSpec rules(Domain domain);
  static MethodSpec original_variant(unsigned mask);
  static MethodSpec element_ablation(unsigned drop_mask, std::string policy_file);
  static MethodSpec uniform_style_variant();
};

struct MethodReport {
  std::string name;
  ScoreReport scores;
  bool has_significance = false;  // vs the Original row
  double p_bleu = 1.0, p_rouge1 = 1.0, p_rouge2 = 1.0, p_rougeL = 1.0;
  bool star_bleu = false, star_rouge1 = false, star_rouge2 = false, star_rougeL = false;
};

struct EvalResult {
  std::vector<MethodReport> methods;
  std::string table_text;          // fixed-width table, stars at p < 0.01
  std::string significance_csv;    // method,p_bleu,p_rouge1,p_rouge2,p_rougeL
};

// Evaluates every method on the split: rewrite (never reading the ground
// truth), generate, score. Missing policy files fail before any generation.
// Significance is a paired t-test of per-document scores against the
// Original row when one is present.
EvalResult run_eval(const std::vector<MethodSpec>& methods, const std::vector<TaskPrompt>& split,
                    Generator& generator, const RunOptions& run = {});

enum class AblationKind { OriginalVariants, ElementRemoval, UniformStyle };

// OriginalVariants: the 8-row presence/absence grid. ElementRemoval: one row
// per element type stripped from the policy rewriter's input. UniformStyle:
// keywords + the learned uniform style phrase.
EvalResult run_ablation(AblationKind kind, const std::vector<TaskPrompt>& split,
                        Generator& generator, const std::string& policy_file = {},
                        const RunOptions& run = {});

// The rewritten prompt a method produces for one task; exposed for the
// information-flow tests and the CLI rewrite subcommand.
PromptDoc apply_method(const MethodSpec& method, const PolicyParams* params,
                       const PromptDoc& prompt);

// --- pipeline glue -------------------------------------------------------

// Retrieval + extraction + style synthesis + assembly for every task.
std::vector<TaskPrompt> build_prompts(const std::vector<WritingTask>& tasks, Generator& generator,
                                      const IngestOptions& opt, const RunOptions& run = {});

std::string task_id(const WritingTask& task);

// Tasks-with-prompts interchange file (line-delimited JSON).
void save_task_prompts(const std::vector<TaskPrompt>& tasks, const std::string& path);
std::vector<TaskPrompt> load_task_prompts(const std::string& path);

// SL example interchange file: {task_id, input, label} per line, where input
// is the rendered variant and label the rendered label text.
void save_sl_examples(const std::vector<std::pair<std::string, SlExample>>& examples,
                      const std::string& path);
std::vector<std::pair<std::string, SlExample>> load_sl_examples(const std::string& path);

struct LabelGenResult {
  std::vector<std::pair<std::string, SlExample>> examples;  // keyed by task id
  std::vector<double> best_scores;
  std::vector<double> original_scores;
  double mean_gain = 0.0;  // mean(best - original)
};

// Variant randomization, best-prompt selection, and SL example emission
// over a task list.
LabelGenResult generate_labels(const std::vector<TaskPrompt>& tasks, Generator& generator,
                               std::uint64_t variant_seed, const RunOptions& run = {});

}  // namespace prw

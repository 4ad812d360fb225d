#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "prw/corpus.hpp"
#include "prw/parallel.hpp"
#include "prw/prompt.hpp"
#include "prw/text.hpp"
#include "prw/variants.hpp"

namespace prw {

class Generator;
class Rng;

inline constexpr int kFeatureDim = 5;
using FeatVec = std::array<double, kFeatureDim>;

enum class SectionKind { Summary = 0, Keywords = 1, Style = 2 };

// The learned uniform writing style for long-form (email-like) output.
inline constexpr std::string_view kUniformThoroughPhrase =
    "the author is thorough, and they make the changes they have";

// Everything a rewriter may look at. Built from the prompt alone, so no
// rewrite path can reach the ground-truth document by construction.
struct RewriteContext {
  std::string immediate_context;
  std::vector<std::string> entries;
  TermFreq context_tf;
  TermFreq entry_tf;  // word tokens across all entries
  double max_entry_tf = 0.0;

  static RewriteContext from_prompt(const PromptDoc& prompt);
};

// [bias, relevance (tf-cosine vs context), index/N, tokens/20 capped at 1,
// entry-corpus frequency scaled by the max].
FeatVec featurize(const Element& elem, std::size_t index, std::size_t section_size,
                  const RewriteContext& ctx);

// Addable keywords standing in for the open-vocabulary add action: top
// immediate-context tokens then top author-frequent tokens (non-stopword
// words, by frequency then first occurrence), minus tokens already present.
std::vector<std::string> candidate_pool(const PromptDoc& prompt, const RewriteContext& ctx,
                                        int pool_size = 8);

// Linear element-edit policy. Per section: a 3 x F action matrix over
// {drop, keep, duplicate} (duplicate is reachable only for keywords), an
// ordering vector (sorted deterministically, so it carries no probability
// mass), and a section-drop gate; plus one add-gate for the keyword
// candidate pool and an EMA reward baseline.
struct SectionPolicyParams {
  std::array<FeatVec, 3> action{};  // rows: drop, keep, duplicate
  FeatVec ordering{};
  FeatVec gate{};
};

struct PolicyParams {
  std::array<SectionPolicyParams, 3> sections{};
  FeatVec add_gate{};
  double baseline = 0.0;
  double baseline_decay = 0.9;

  static PolicyParams zeros() { return {}; }
  static PolicyParams random_init(std::uint64_t seed, double scale);

  void save(const std::string& path) const;
  static PolicyParams load(const std::string& path);
};

enum class DecisionType { SectionGate, ElementAction, AddCandidate };

// Gate/add decisions: action 1 = drop/add, 0 = keep/skip.
// Element decisions: action 0 = drop, 1 = keep, 2 = duplicate.
struct Decision {
  DecisionType type;
  SectionKind section;
  FeatVec feats;
  int action = 0;
  double log_prob = 0.0;
};

struct Trajectory {
  std::vector<Decision> decisions;
  double total_log_prob = 0.0;
};

enum class RewriteMode { Sample, Greedy };

// The rewrite p' = R(p). Greedy resolves every tie toward keep/original
// order, so the all-zero policy is exactly the identity rewriter. Sample mode
// needs an rng and is deterministic under its seed.
std::pair<PromptDoc, Trajectory> policy_rewrite(const PromptDoc& prompt,
                                                const RewriteContext& ctx,
                                                const PolicyParams& params, RewriteMode mode,
                                                Rng* rng = nullptr);

// Probability of a recorded decision under (possibly different) params;
// used by PPO ratios and the trajectory-probability invariant.
double decision_log_prob(const PolicyParams& params, const Decision& d);
double decision_entropy(const PolicyParams& params, const Decision& d);

struct SlFitResult {
  std::vector<double> losses;  // one entry per epoch plus the final loss
};

// Supervised imitation: per-element action targets and section-gate targets
// are derived from the label (absent = drop, once = keep, twice = duplicate;
// empty label section with nonempty input = gate drop); cross-entropy for
// actions/gates, pairwise hinge for the keyword ordering vector. Full-batch
// gradient descent, deterministic.
SlFitResult sl_fit(PolicyParams& params, const std::vector<SlExample>& examples, int epochs,
                   double learning_rate);

struct RlConfig {
  double clip_epsilon = 0.2;
  double learning_rate = 0.05;
  int ppo_epochs = 4;
  int batch_episodes = 32;
  double entropy_coef = 0.01;
  double baseline_decay = 0.9;
  long long max_episodes = 3000;
  int eval_every = 5;
  std::uint64_t seed = 17;
};

struct PpoStats {
  double surrogate = 0.0;
  double kl = 0.0;       // mean(old_log_prob - new_log_prob)
  double entropy = 0.0;
  double mean_reward = 0.0;
  bool aborted_non_finite = false;
};

// Clipped-surrogate PPO over the recorded decisions. Advantages are
// reward - baseline, whitened per batch; the objective is the mean over all
// decisions of min(r A, clip(r, 1-eps, 1+eps) A) plus the entropy bonus,
// ascended full-batch for ppo_epochs passes. A non-finite gradient aborts
// the update and keeps the old params.
PpoStats ppo_update(PolicyParams& params, const std::vector<Trajectory>& trajectories,
                    const std::vector<double>& rewards, const RlConfig& cfg);

// PPO parameter vector (action matrices, gates, add-gate; ordering vectors
// and the baseline are not part of the stochastic objective). Exposed for
// the finite-difference and REINFORCE-equivalence tests.
std::vector<double> flatten_ppo_params(const PolicyParams& params);
void unflatten_ppo_params(const std::vector<double>& flat, PolicyParams& params);
double ppo_surrogate_value(const PolicyParams& params, const std::vector<Trajectory>& trajectories,
                           const std::vector<double>& advantages, double clip_epsilon,
                           double entropy_coef);
std::vector<double> ppo_surrogate_gradient(const PolicyParams& params,
                                           const std::vector<Trajectory>& trajectories,
                                           const std::vector<double>& advantages,
                                           double clip_epsilon, double entropy_coef);

struct BatchLog {
  int batch = 0;
  double mean_reward = 0.0;
  double surrogate = 0.0;
  double kl = 0.0;
  double entropy = 0.0;
  double val_reward = 0.0;
  bool has_val = false;
  int episodes = 0;
  int skipped = 0;
};

std::string training_log_csv(const std::vector<BatchLog>& log);

// PPO training loop: batches of episodes sampled uniformly from the train
// split, rewarded with smoothed sentence BLEU / 100 against the ground
// truth; every eval_every batches the greedy policy is scored on the
// validation tasks. Generator failures skip the episode; an exhausted budget
// stops training.
PolicyParams rl_train(PolicyParams params, const std::vector<TaskPrompt>& train,
                      const std::vector<TaskPrompt>& validation, Generator& generator,
                      const RlConfig& cfg, std::vector<BatchLog>* log = nullptr,
                      const RunOptions& run = {});

// Greedy reward of `params` on a task list (mean smoothed BLEU / 100).
double evaluate_policy_reward(const PolicyParams& params, const std::vector<TaskPrompt>& tasks,
                              Generator& generator, const RunOptions& run = {});

// The learned edit patterns as an executable rule set.
struct RuleSet {
  bool drop_summary = false;
  bool filter_keywords = false;
  double filter_theta = 0.1;
  bool reorder_keywords_by_appearance = false;
  bool repeat_top_keywords = false;
  int repeat_m = 2;
  bool drop_style = false;
  bool uniform_thorough_style = false;
  bool keep_interest_style_phrases = false;
};

// Domain presets: email keeps the uniform thorough style, review drops the
// style section, social keeps interest-like phrases only.
RuleSet default_ruleset(Domain domain);

PromptDoc rule_rewrite(const PromptDoc& prompt, const RewriteContext& ctx, const RuleSet& rules);

}  // namespace prw

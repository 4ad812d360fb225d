#pragma once

#include <string>
#include <vector>

#include "prw/text.hpp"

namespace prw {

enum class BleuMode { Smoothed, Plain };

// Modified n-gram match/total counts plus candidate/reference lengths; the
// unit both sentence and corpus BLEU are computed from.
struct BleuStats {
  std::vector<long long> match;  // clipped matches per order (index n-1)
  std::vector<long long> total;  // candidate n-gram counts per order
  long long cand_len = 0;
  long long ref_len = 0;

  explicit BleuStats(int max_n = 4) : match(max_n, 0), total(max_n, 0) {}
  BleuStats& operator+=(const BleuStats& o);
};

BleuStats bleu_stats(const TokenSeq& candidate, const TokenSeq& reference, int max_n = 4);

// Multi-reference variant: n-gram counts are clipped against the per-gram
// maximum across references and the closest reference length is used for the
// brevity penalty. The pipeline scores against the single ground-truth
// document, so this stays unused there.
BleuStats bleu_stats_multi(const TokenSeq& candidate, const std::vector<TokenSeq>& references,
                           int max_n = 4);

// Geometric mean of modified n-gram precisions times the brevity penalty
// min(1, e^{1-r/c}), scaled to [0,100]. Smoothed mode add-one smooths the
// precision numerator and denominator for n >= 2 (the reward variant); Plain
// mode returns 0 whenever any precision is 0. Orders longer than the
// candidate are skipped. Empty candidate scores 0; empty reference throws.
double bleu(const TokenSeq& candidate, const TokenSeq& reference, int max_n = 4,
            BleuMode mode = BleuMode::Plain);

// Plain BLEU over corpus-accumulated counts (the reporting variant).
double corpus_bleu(const BleuStats& stats);

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

RougeScore rouge_n(const TokenSeq& candidate, const TokenSeq& reference, int n);
RougeScore rouge_l(const TokenSeq& candidate, const TokenSeq& reference);

struct TTestResult {
  double t = 0.0;
  double p_two_sided = 1.0;
};

// Paired two-sided t-test on differences a-b (sample sd, df = n-1).
// All-zero differences give t=0, p=1; zero sd with nonzero mean gives p=0.
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

// Regularized incomplete beta I_x(a, b), exposed for tests.
double reg_incomplete_beta(double a, double b, double x);

struct DocScore {
  std::string doc_id;
  double bleu = 0.0;  // smoothed sentence BLEU
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
};

// Per-document scores with arithmetic-mean aggregates; corpus-level Plain
// BLEU is kept separately since it is not a mean of per-document values.
struct ScoreReport {
  std::vector<DocScore> per_doc;
  double mean_bleu = 0.0;
  double mean_rouge1 = 0.0;
  double mean_rouge2 = 0.0;
  double mean_rougeL = 0.0;
  double corpus_bleu = 0.0;

  void finalize();
  // CSV with columns doc_id,bleu,rouge1,rouge2,rougeL and a mean footer row.
  std::string to_csv() const;
};

DocScore score_document(const std::string& doc_id, const std::string& generated,
                        const std::string& reference);

}  // namespace prw

#include "prw/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace prw {

namespace {

// n-grams keyed by their tokens joined with an unprintable separator.
std::unordered_map<std::string, long long> ngram_counts(const TokenSeq& toks, int n) {
  std::unordered_map<std::string, long long> counts;
  if (static_cast<int>(toks.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::string key;
    for (int j = 0; j < n; ++j) {
      if (j) key.push_back('\x1f');
      key += toks[i + j];
    }
    ++counts[key];
  }
  return counts;
}

double brevity_penalty(long long cand_len, long long ref_len) {
  if (cand_len == 0) return 0.0;
  if (cand_len >= ref_len) return 1.0;
  return std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
}

}  // namespace

BleuStats& BleuStats::operator+=(const BleuStats& o) {
  if (match.size() != o.match.size()) throw std::invalid_argument("bleu stats order mismatch");
  for (std::size_t i = 0; i < match.size(); ++i) {
    match[i] += o.match[i];
    total[i] += o.total[i];
  }
  cand_len += o.cand_len;
  ref_len += o.ref_len;
  return *this;
}

BleuStats bleu_stats(const TokenSeq& candidate, const TokenSeq& reference, int max_n) {
  if (max_n < 1) throw std::invalid_argument("bleu max_n must be >= 1");
  BleuStats st(max_n);
  st.cand_len = static_cast<long long>(candidate.size());
  st.ref_len = static_cast<long long>(reference.size());
  for (int n = 1; n <= max_n; ++n) {
    const auto cand = ngram_counts(candidate, n);
    if (cand.empty()) continue;
    const auto ref = ngram_counts(reference, n);
    long long matched = 0, total = 0;
    for (const auto& [gram, c] : cand) {
      total += c;
      const auto it = ref.find(gram);
      if (it != ref.end()) matched += std::min(c, it->second);
    }
    st.match[n - 1] = matched;
    st.total[n - 1] = total;
  }
  return st;
}

BleuStats bleu_stats_multi(const TokenSeq& candidate, const std::vector<TokenSeq>& references,
                           int max_n) {
  if (max_n < 1) throw std::invalid_argument("bleu max_n must be >= 1");
  if (references.empty()) throw std::invalid_argument("EmptyReference: no references given");
  BleuStats st(max_n);
  st.cand_len = static_cast<long long>(candidate.size());
  // closest reference length, ties to the shorter
  st.ref_len = static_cast<long long>(references.front().size());
  for (const auto& ref : references) {
    const auto len = static_cast<long long>(ref.size());
    const auto diff = std::llabs(len - st.cand_len);
    const auto best = std::llabs(st.ref_len - st.cand_len);
    if (diff < best || (diff == best && len < st.ref_len)) st.ref_len = len;
  }
  for (int n = 1; n <= max_n; ++n) {
    const auto cand = ngram_counts(candidate, n);
    if (cand.empty()) continue;
    std::unordered_map<std::string, long long> clip;
    for (const auto& ref : references) {
      for (const auto& [gram, c] : ngram_counts(ref, n)) {
        auto& cur = clip[gram];
        cur = std::max(cur, c);
      }
    }
    long long matched = 0, total = 0;
    for (const auto& [gram, c] : cand) {
      total += c;
      const auto it = clip.find(gram);
      if (it != clip.end()) matched += std::min(c, it->second);
    }
    st.match[n - 1] = matched;
    st.total[n - 1] = total;
  }
  return st;
}

double bleu(const TokenSeq& candidate, const TokenSeq& reference, int max_n, BleuMode mode) {
  if (reference.empty()) throw std::invalid_argument("EmptyReference: bleu reference is empty");
  if (candidate.empty()) return 0.0;
  const BleuStats st = bleu_stats(candidate, reference, max_n);
  double log_sum = 0.0;
  int orders = 0;
  for (int n = 1; n <= max_n; ++n) {
    const long long total = st.total[n - 1];
    if (total == 0) continue;  // candidate shorter than n: order skipped
    const long long matched = st.match[n - 1];
    double p;
    if (mode == BleuMode::Smoothed && n >= 2) {
      p = static_cast<double>(matched + 1) / static_cast<double>(total + 1);
    } else {
      if (matched == 0) return 0.0;
      p = static_cast<double>(matched) / static_cast<double>(total);
    }
    log_sum += std::log(p);
    ++orders;
  }
  if (orders == 0) return 0.0;
  return 100.0 * brevity_penalty(st.cand_len, st.ref_len) * std::exp(log_sum / orders);
}

double corpus_bleu(const BleuStats& stats) {
  double log_sum = 0.0;
  int orders = 0;
  for (std::size_t i = 0; i < stats.total.size(); ++i) {
    if (stats.total[i] == 0) continue;
    if (stats.match[i] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(stats.match[i]) / static_cast<double>(stats.total[i]));
    ++orders;
  }
  if (orders == 0) return 0.0;
  return 100.0 * brevity_penalty(stats.cand_len, stats.ref_len) * std::exp(log_sum / orders);
}

RougeScore rouge_n(const TokenSeq& candidate, const TokenSeq& reference, int n) {
  if (n < 1) throw std::invalid_argument("rouge n must be >= 1");
  const auto cand = ngram_counts(candidate, n);
  const auto ref = ngram_counts(reference, n);
  long long cand_total = 0, ref_total = 0, overlap = 0;
  for (const auto& [g, c] : cand) cand_total += c;
  for (const auto& [g, c] : ref) ref_total += c;
  for (const auto& [g, c] : cand) {
    const auto it = ref.find(g);
    if (it != ref.end()) overlap += std::min(c, it->second);
  }
  RougeScore s;
  if (cand_total > 0) s.precision = 100.0 * overlap / cand_total;
  if (ref_total > 0) s.recall = 100.0 * overlap / ref_total;
  if (s.precision + s.recall > 0)
    s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

RougeScore rouge_l(const TokenSeq& candidate, const TokenSeq& reference) {
  const std::size_t n = candidate.size(), m = reference.size();
  RougeScore s;
  if (n == 0 || m == 0) return s;
  std::vector<long long> prev(m + 1, 0), cur(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      cur[j] = candidate[i - 1] == reference[j - 1] ? prev[j - 1] + 1
                                                    : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[m]);
  s.precision = 100.0 * lcs / static_cast<double>(n);
  s.recall = 100.0 * lcs / static_cast<double>(m);
  if (s.precision + s.recall > 0)
    s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

// Continued-fraction evaluation of the incomplete beta (modified Lentz).
static double incbeta_cf(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-15;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 400; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

double reg_incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * incbeta_cf(a, b, x) / a;
  return 1.0 - std::exp(std::lgamma(a + b) - std::lgamma(b) - std::lgamma(a) + b * std::log1p(-x) +
                        a * std::log(x)) *
                   incbeta_cf(b, a, 1.0 - x) / b;
}

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("InvalidSample: paired t-test needs equal lengths >= 2");
  const std::size_t n = a.size();
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  TTestResult r;
  if (sd == 0.0) {
    if (mean == 0.0) return r;  // t = 0, p = 1
    r.t = mean > 0 ? std::numeric_limits<double>::infinity()
                   : -std::numeric_limits<double>::infinity();
    r.p_two_sided = 0.0;
    return r;
  }
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  const double df = static_cast<double>(n - 1);
  r.p_two_sided = reg_incomplete_beta(df / 2.0, 0.5, df / (df + r.t * r.t));
  return r;
}

void ScoreReport::finalize() {
  mean_bleu = mean_rouge1 = mean_rouge2 = mean_rougeL = 0.0;
  if (per_doc.empty()) return;
  for (const auto& d : per_doc) {
    mean_bleu += d.bleu;
    mean_rouge1 += d.rouge1;
    mean_rouge2 += d.rouge2;
    mean_rougeL += d.rougeL;
  }
  const double n = static_cast<double>(per_doc.size());
  mean_bleu /= n;
  mean_rouge1 /= n;
  mean_rouge2 /= n;
  mean_rougeL /= n;
}

std::string ScoreReport::to_csv() const {
  std::string out = "doc_id,bleu,rouge1,rouge2,rougeL\n";
  char buf[192];
  for (const auto& d : per_doc) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f\n", d.doc_id.c_str(), d.bleu, d.rouge1,
                  d.rouge2, d.rougeL);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "mean,%.6f,%.6f,%.6f,%.6f\n", mean_bleu, mean_rouge1,
                mean_rouge2, mean_rougeL);
  out += buf;
  return out;
}

DocScore score_document(const std::string& doc_id, const std::string& generated,
                        const std::string& reference) {
  const TokenSeq cand = tokenize(generated);
  const TokenSeq ref = tokenize(reference);
  DocScore s;
  s.doc_id = doc_id;
  s.bleu = ref.empty() ? 0.0 : bleu(cand, ref, 4, BleuMode::Smoothed);
  s.rouge1 = rouge_n(cand, ref, 1).f1;
  s.rouge2 = rouge_n(cand, ref, 2).f1;
  s.rougeL = rouge_l(cand, ref).f1;
  return s;
}

}  // namespace prw

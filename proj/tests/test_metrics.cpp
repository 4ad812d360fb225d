#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "prw/metrics.hpp"
#include "prw/rng.hpp"

using namespace prw;

namespace {

TokenSeq random_tokens(Rng& rng, int min_len, int max_len, int vocab) {
  const int n = min_len + static_cast<int>(rng.below(max_len - min_len + 1));
  TokenSeq out;
  for (int i = 0; i < n; ++i) out.push_back("w" + std::to_string(rng.below(vocab)));
  return out;
}

}  // namespace

TEST_CASE("tokenize") {
  CHECK(tokenize("The cat sat.") == TokenSeq{"the", "cat", "sat", "."});
  CHECK(tokenize("") == TokenSeq{});
  CHECK(tokenize("don't stop") == TokenSeq{"don", "'", "t", "stop"});
  CHECK(tokenize("  A1b2  x--y ") == TokenSeq{"a1b2", "x", "-", "-", "y"});
}

TEST_CASE("bleu basics") {
  const TokenSeq ref = {"the", "cat", "sat", "on", "the", "mat"};
  CHECK(bleu(ref, ref, 4, BleuMode::Plain) == doctest::Approx(100.0));

  SUBCASE("hand-clipped unigram example") {
    const TokenSeq cand = {"the", "the", "the"};
    const TokenSeq r = {"the", "cat"};
    CHECK(bleu(cand, r, 1, BleuMode::Plain) == doctest::Approx(100.0 / 3).epsilon(1e-9));
  }

  SUBCASE("empty candidate scores zero, empty reference throws") {
    CHECK(bleu({}, ref) == 0.0);
    CHECK_THROWS_AS(bleu(ref, {}), std::invalid_argument);
  }

  SUBCASE("plain mode matches the brute-force oracle") {
    Rng rng(42);
    for (int i = 0; i < 50; ++i) {
      const TokenSeq cand = random_tokens(rng, 1, 25, 8);
      const TokenSeq r = random_tokens(rng, 1, 25, 8);
      CHECK(bleu(cand, r, 4, BleuMode::Plain) ==
            doctest::Approx(oracle::bleu_plain(cand, r, 4)).epsilon(1e-11));
    }
  }

  SUBCASE("brevity penalty strictly decreases when the candidate shortens below the reference") {
    // candidates that are prefixes of the reference keep p_n = 1
    const TokenSeq long_ref = {"a", "b", "c", "d", "e", "f", "g", "h"};
    double prev = 101.0;
    for (std::size_t len = long_ref.size(); len >= 4; --len) {
      const TokenSeq cand(long_ref.begin(), long_ref.begin() + len);
      const double score = bleu(cand, long_ref, 4, BleuMode::Plain);
      CHECK(score < prev);
      prev = score;
    }
  }

  SUBCASE("smoothed mode is nonnegative and approaches plain as counts grow") {
    Rng rng(7);
    for (int i = 0; i < 200; ++i) {
      const TokenSeq cand = random_tokens(rng, 1, 30, 6);
      const TokenSeq r = random_tokens(rng, 1, 30, 6);
      CHECK(bleu(cand, r, 4, BleuMode::Smoothed) >= 0.0);
    }
    // duplicating a sentence pair grows every count; the smoothing delta shrinks
    TokenSeq cand = {"a", "b", "c", "a", "d"};
    TokenSeq r = {"a", "b", "d", "c", "a"};
    double prev_delta = 1e9;
    for (int rep = 1; rep <= 4; rep *= 2) {
      TokenSeq c2, r2;
      for (int k = 0; k < rep; ++k) {
        c2.insert(c2.end(), cand.begin(), cand.end());
        r2.insert(r2.end(), r.begin(), r.end());
      }
      const double delta =
          std::fabs(bleu(c2, r2, 2, BleuMode::Smoothed) - bleu(c2, r2, 2, BleuMode::Plain));
      CHECK(delta <= prev_delta + 1e-12);
      prev_delta = delta;
    }
  }
}

TEST_CASE("corpus bleu aggregates counts before the geometric mean") {
  BleuStats total(4);
  const TokenSeq a = {"x", "y", "z", "w"};
  const TokenSeq b = {"x", "y", "q", "w"};
  total += bleu_stats(a, b, 4);
  total += bleu_stats(b, b, 4);
  // sentence-level plain of (a,b) is 0 (no 3-grams match), corpus-level is not
  CHECK(bleu(a, b, 4, BleuMode::Plain) == 0.0);
  CHECK(corpus_bleu(total) > 0.0);
}

TEST_CASE("rouge") {
  SUBCASE("hand counts") {
    const auto s = rouge_n({"a", "b", "c"}, {"a", "b", "d"}, 1);
    CHECK(s.precision == doctest::Approx(200.0 / 3));
    CHECK(s.recall == doctest::Approx(200.0 / 3));
    CHECK(s.f1 == doctest::Approx(200.0 / 3));
  }
  SUBCASE("identical and disjoint") {
    const TokenSeq x = {"p", "q", "r"};
    const auto same = rouge_n(x, x, 1);
    CHECK(same.f1 == doctest::Approx(100.0));
    const auto diff = rouge_n({"a"}, {"b"}, 1);
    CHECK(diff.precision == 0.0);
    CHECK(diff.recall == 0.0);
    CHECK(diff.f1 == 0.0);
  }
  SUBCASE("lcs hand example") {
    const auto s = rouge_l({"a", "c", "b"}, {"a", "b", "c"});
    CHECK(s.f1 == doctest::Approx(200.0 / 3));
  }
  SUBCASE("rouge_l identical and empty") {
    CHECK(rouge_l({"a", "b"}, {"a", "b"}).f1 == doctest::Approx(100.0));
    CHECK(rouge_l({}, {"a"}).f1 == 0.0);
  }
  SUBCASE("oracle agreement on random pairs") {
    Rng rng(11);
    for (int i = 0; i < 50; ++i) {
      const TokenSeq cand = random_tokens(rng, 0, 20, 5);
      const TokenSeq ref = random_tokens(rng, 0, 20, 5);
      for (int n = 1; n <= 2; ++n) {
        const auto got = rouge_n(cand, ref, n);
        const auto want = oracle::rouge_n(cand, ref, n);
        CHECK(got.f1 == doctest::Approx(want.f1).epsilon(1e-11));
      }
      const auto got = rouge_l(cand, ref);
      const auto want = oracle::rouge_l(cand, ref);
      CHECK(got.f1 == doctest::Approx(want.f1).epsilon(1e-11));
    }
  }
}

TEST_CASE("paired t-test") {
  SUBCASE("identical samples") {
    const std::vector<double> a = {1, 2, 3};
    const auto r = paired_t_test(a, a);
    CHECK(r.t == 0.0);
    CHECK(r.p_two_sided == 1.0);
  }
  SUBCASE("hand arithmetic for d = [1, -1, 2, 0]") {
    const std::vector<double> a = {1, -1, 2, 0};
    const std::vector<double> b = {0, 0, 0, 0};
    const auto r = paired_t_test(a, b);
    CHECK(r.t == doctest::Approx(0.5 / (1.2909944487358056 / 2.0)).epsilon(1e-9));
    CHECK(r.p_two_sided == doctest::Approx(oracle::t_two_sided_p(r.t, 3.0)).epsilon(1e-9));
  }
  SUBCASE("zero variance, nonzero mean") {
    const std::vector<double> a = {1, 1, 1, 1};
    const std::vector<double> b = {0, 0, 0, 0};
    CHECK(paired_t_test(a, b).p_two_sided == 0.0);
  }
  SUBCASE("invalid samples") {
    CHECK_THROWS_AS(paired_t_test({1.0}, {2.0}), std::invalid_argument);
    CHECK_THROWS_AS(paired_t_test({1.0, 2.0}, {1.0}), std::invalid_argument);
  }
  SUBCASE("antisymmetry") {
    Rng rng(5);
    for (int i = 0; i < 20; ++i) {
      std::vector<double> a, b;
      for (int j = 0; j < 10; ++j) {
        a.push_back(rng.real01());
        b.push_back(rng.real01());
      }
      const auto ab = paired_t_test(a, b);
      const auto ba = paired_t_test(b, a);
      CHECK(ab.t == doctest::Approx(-ba.t).epsilon(1e-12));
      CHECK(ab.p_two_sided == doctest::Approx(ba.p_two_sided).epsilon(1e-12));
    }
  }
  SUBCASE("p values agree with the quadrature oracle") {
    Rng rng(31);
    for (int i = 0; i < 50; ++i) {
      std::vector<double> a, b;
      const int n = 4 + static_cast<int>(rng.below(12));
      for (int j = 0; j < n; ++j) {
        a.push_back(rng.real01() * 3.0);
        b.push_back(rng.real01() * 3.0);
      }
      const auto r = paired_t_test(a, b);
      CHECK(r.p_two_sided ==
            doctest::Approx(oracle::t_two_sided_p(r.t, n - 1.0)).epsilon(1e-8));
    }
  }
}

TEST_CASE("score report csv") {
  ScoreReport rep;
  rep.per_doc = {{"d1", 10, 20, 30, 40}, {"d2", 20, 30, 40, 50}};
  rep.finalize();
  CHECK(rep.mean_bleu == doctest::Approx(15.0));
  const std::string csv = rep.to_csv();
  CHECK(csv.find("doc_id,bleu,rouge1,rouge2,rougeL\n") == 0);
  CHECK(csv.find("mean,15.000000,25.000000,35.000000,45.000000\n") != std::string::npos);
}

TEST_CASE("multi-reference clipping") {
  const TokenSeq cand = {"the", "cat", "the", "cat"};
  const TokenSeq r1 = {"the", "cat"};
  const TokenSeq r2 = {"the", "cat", "the", "dog"};
  const BleuStats single = bleu_stats(cand, r1, 1);
  const BleuStats multi = bleu_stats_multi(cand, {r1, r2}, 1);
  CHECK(single.match[0] == 2);  // one "the", one "cat" after clipping
  CHECK(multi.match[0] == 3);   // r2 contributes a second "the"
  CHECK(multi.ref_len == 4);    // closest reference length
  // a single reference reduces to the plain path
  const BleuStats same = bleu_stats_multi(cand, {r1}, 4);
  const BleuStats plain = bleu_stats(cand, r1, 4);
  CHECK(same.match == plain.match);
  CHECK(same.total == plain.total);
  CHECK(same.ref_len == plain.ref_len);
  CHECK_THROWS_AS(bleu_stats_multi(cand, {}, 4), std::invalid_argument);
}

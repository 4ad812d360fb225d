#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "prw/policy.hpp"
#include "prw/prompt.hpp"

using namespace prw;

namespace {

PromptDoc review_prompt() {
  PromptDoc p;
  p.instruction = "Finish the passage in the user voice";
  p.immediate_context = "call of the dragon";
  p.summary = make_elements(ElementKind::SummarySentence, {"some old summary."});
  p.keywords = make_elements(ElementKind::Keyword, {"dragon", "call", "yourself"});
  p.style = make_elements(ElementKind::StylePhrase, {"romantic", "dragon tales fan"});
  p.ranked_entries = {"loved call of the dragon. next sentence."};
  return p;
}

}  // namespace

TEST_CASE("uniform thorough style renders the exact learned phrase") {
  const PromptDoc p = review_prompt();
  const RewriteContext ctx = RewriteContext::from_prompt(p);
  RuleSet rules;
  rules.uniform_thorough_style = true;
  const PromptDoc out = rule_rewrite(p, ctx, rules);
  const std::string text = render(out);
  CHECK(text.find("Writing style: the author is thorough, and they make the changes they have\n") !=
        std::string::npos);
  REQUIRE(out.style.size() == 1);
  CHECK(out.style[0].text == std::string(kUniformThoroughPhrase));
}

TEST_CASE("drop style leaves no style line") {
  const PromptDoc p = review_prompt();
  const RewriteContext ctx = RewriteContext::from_prompt(p);
  RuleSet rules;
  rules.drop_style = true;
  const PromptDoc out = rule_rewrite(p, ctx, rules);
  CHECK(out.style.empty());
  CHECK(render(out).find("Writing style:") == std::string::npos);
}

TEST_CASE("drop summary empties the summary only") {
  const PromptDoc p = review_prompt();
  const RewriteContext ctx = RewriteContext::from_prompt(p);
  RuleSet rules;
  rules.drop_summary = true;
  const PromptDoc out = rule_rewrite(p, ctx, rules);
  CHECK(out.summary.empty());
  CHECK(out.keywords == p.keywords);
  CHECK(out.style == p.style);
  CHECK(out.ranked_entries == p.ranked_entries);
}

TEST_CASE("appearance reorder + top-keyword repetition on the dragon fixture") {
  PromptDoc p = review_prompt();
  const RewriteContext ctx = RewriteContext::from_prompt(p);
  RuleSet rules;
  rules.reorder_keywords_by_appearance = true;
  rules.repeat_top_keywords = true;
  rules.repeat_m = 2;
  const PromptDoc out = rule_rewrite(p, ctx, rules);
  // appearance order in "call of the dragon": call@0, dragon@3; "yourself"
  // unseen goes last; the two highest-relevance keywords (call and dragon,
  // tied, stable) each repeat once, adjacently.
  CHECK(element_texts(out.keywords) ==
        std::vector<std::string>{"call", "call", "dragon", "dragon", "yourself"});
}

TEST_CASE("relevance filter removes off-context keywords") {
  PromptDoc p = review_prompt();
  const RewriteContext ctx = RewriteContext::from_prompt(p);
  RuleSet rules;
  rules.filter_keywords = true;
  rules.filter_theta = 0.1;
  const PromptDoc out = rule_rewrite(p, ctx, rules);
  CHECK(element_texts(out.keywords) == std::vector<std::string>{"dragon", "call"});
}

TEST_CASE("interest-style filter keeps phrases sharing a non-stopword context token") {
  PromptDoc p = review_prompt();
  const RewriteContext ctx = RewriteContext::from_prompt(p);
  RuleSet rules;
  rules.keep_interest_style_phrases = true;
  const PromptDoc out = rule_rewrite(p, ctx, rules);
  REQUIRE(out.style.size() == 1);
  CHECK(out.style[0].text == "dragon tales fan");
}

TEST_CASE("domain presets") {
  CHECK(default_ruleset(Domain::Email).uniform_thorough_style);
  CHECK_FALSE(default_ruleset(Domain::Email).drop_style);
  CHECK(default_ruleset(Domain::Review).drop_style);
  CHECK(default_ruleset(Domain::Social).keep_interest_style_phrases);
  for (const Domain d : {Domain::Email, Domain::Review, Domain::Social}) {
    const RuleSet r = default_ruleset(d);
    CHECK(r.drop_summary);
    CHECK(r.filter_keywords);
    CHECK(r.reorder_keywords_by_appearance);
    CHECK(r.repeat_top_keywords);
  }
}

TEST_CASE("rules never touch non-rewriteable components") {
  const PromptDoc p = review_prompt();
  const RewriteContext ctx = RewriteContext::from_prompt(p);
  for (const Domain d : {Domain::Email, Domain::Review, Domain::Social}) {
    const PromptDoc out = rule_rewrite(p, ctx, default_ruleset(d));
    CHECK(out.instruction == p.instruction);
    CHECK(out.immediate_context == p.immediate_context);
    CHECK(out.ranked_entries == p.ranked_entries);
  }
}

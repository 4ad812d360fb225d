#include "prw/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "prw/generator.hpp"
#include "prw/rng.hpp"

namespace prw {

using nlohmann::json;

std::string mask_method_name(unsigned mask) {
  if (mask == 0) return "Original_none";
  std::string parts;
  auto add = [&parts](const char* p) {
    if (!parts.empty()) parts += ",";
    parts += p;
  };
  if (mask & kMaskSummary) add("sum");
  if (mask & kMaskKeywords) add("word");
  if (mask & kMaskStyle) add("stl");
  if (mask == (kMaskSummary | kMaskKeywords | kMaskStyle)) return "Original";
  return "Original_" + parts;
}

MethodSpec MethodSpec::original() {
  MethodSpec m;
  m.kind = MethodKind::Original;
  m.name = "Original";
  return m;
}

MethodSpec MethodSpec::policy(MethodKind kind, std::string policy_file) {
  MethodSpec m;
  m.kind = kind;
  m.policy_file = std::move(policy_file);
  switch (kind) {
    case MethodKind::RewriterSl: m.name = "RewriterSl"; break;
    case MethodKind::RewriterRl: m.name = "RewriterRl"; break;
    case MethodKind::RewriterSlRl: m.name = "RewriterSlRl"; break;
    default: throw std::invalid_argument("not a policy method kind");
  }
  return m;
}

MethodSpec MethodSpec::rules(Domain domain) {
  MethodSpec m;
  m.kind = MethodKind::RuleRewriter;
  m.name = "RuleRewriter_" + domain_to_string(domain);
  m.ruleset = default_ruleset(domain);
  return m;
}

MethodSpec MethodSpec::original_variant(unsigned mask) {
  MethodSpec m;
  m.kind = MethodKind::OriginalVariant;
  m.mask = mask;
  m.name = mask_method_name(mask);
  return m;
}

MethodSpec MethodSpec::element_ablation(unsigned drop_mask, std::string policy_file) {
  MethodSpec m;
  m.kind = MethodKind::ElementAblation;
  m.drop_mask = drop_mask;
  m.policy_file = std::move(policy_file);
  const unsigned kept = (kMaskSummary | kMaskKeywords | kMaskStyle) & ~drop_mask;
  std::string parts;
  auto add = [&parts](const char* p) {
    if (!parts.empty()) parts += ",";
    parts += p;
  };
  if (kept & kMaskSummary) add("sum");
  if (kept & kMaskKeywords) add("word");
  if (kept & kMaskStyle) add("stl");
  m.name = "RewriterSlRl_" + (parts.empty() ? std::string("none") : parts);
  return m;
}

MethodSpec MethodSpec::uniform_style_variant() {
  MethodSpec m;
  m.kind = MethodKind::OriginalVariant;
  m.mask = kMaskKeywords | kMaskStyle;
  m.uniform_style = true;
  m.name = "Original_word,stl*";
  return m;
}

namespace {

PromptDoc strip_sections(PromptDoc prompt, unsigned keep_mask) {
  if (!(keep_mask & kMaskSummary)) prompt.summary.clear();
  if (!(keep_mask & kMaskKeywords)) prompt.keywords.clear();
  if (!(keep_mask & kMaskStyle)) prompt.style.clear();
  return prompt;
}

}  // namespace

PromptDoc apply_method(const MethodSpec& method, const PolicyParams* params,
                       const PromptDoc& prompt) {
  switch (method.kind) {
    case MethodKind::Original:
      return prompt;
    case MethodKind::RewriterSl:
    case MethodKind::RewriterRl:
    case MethodKind::RewriterSlRl: {
      const RewriteContext ctx = RewriteContext::from_prompt(prompt);
      return policy_rewrite(prompt, ctx, *params, RewriteMode::Greedy).first;
    }
    case MethodKind::RuleRewriter: {
      const RewriteContext ctx = RewriteContext::from_prompt(prompt);
      return rule_rewrite(prompt, ctx, method.ruleset);
    }
    case MethodKind::OriginalVariant: {
      PromptDoc out = strip_sections(prompt, method.mask);
      if (method.uniform_style)
        out.style = {Element(ElementKind::StylePhrase, kUniformThoroughPhrase)};
      return out;
    }
    case MethodKind::ElementAblation: {
      const PromptDoc input = strip_sections(prompt, ~method.drop_mask);
      const RewriteContext ctx = RewriteContext::from_prompt(input);
      return policy_rewrite(input, ctx, *params, RewriteMode::Greedy).first;
    }
  }
  return prompt;
}

namespace {

struct MetricColumns {
  std::vector<double> bleu, r1, r2, rL;
};

MetricColumns columns_of(const ScoreReport& report) {
  MetricColumns c;
  for (const auto& d : report.per_doc) {
    c.bleu.push_back(d.bleu);
    c.r1.push_back(d.rouge1);
    c.r2.push_back(d.rouge2);
    c.rL.push_back(d.rougeL);
  }
  return c;
}

void add_significance(MethodReport& row, const MetricColumns& base) {
  const MetricColumns mine = columns_of(row.scores);
  if (mine.bleu.size() != base.bleu.size() || mine.bleu.size() < 2) return;
  auto test = [&](const std::vector<double>& a, const std::vector<double>& b, double& p,
                  bool& star) {
    p = paired_t_test(a, b).p_two_sided;
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) diff += a[i] - b[i];
    star = p < 0.01 && diff > 0.0;
  };
  test(mine.bleu, base.bleu, row.p_bleu, row.star_bleu);
  test(mine.r1, base.r1, row.p_rouge1, row.star_rouge1);
  test(mine.r2, base.r2, row.p_rouge2, row.star_rouge2);
  test(mine.rL, base.rL, row.p_rougeL, row.star_rougeL);
  row.has_significance = true;
}

std::string format_table(const std::vector<MethodReport>& methods) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-24s %10s %10s %10s %10s %10s\n", "method", "Bleu", "sBleu",
                "Rouge-1", "Rouge-2", "Rouge-L");
  out += buf;
  for (const auto& m : methods) {
    auto cell = [&](double v, bool star) {
      static thread_local char c[32];
      std::snprintf(c, sizeof(c), "%.2f%s", v, star ? "*" : " ");
      return std::string(c);
    };
    std::snprintf(buf, sizeof(buf), "%-24s %10.2f %10s %10s %10s %10s\n", m.name.c_str(),
                  m.scores.corpus_bleu, cell(m.scores.mean_bleu, m.star_bleu).c_str(),
                  cell(m.scores.mean_rouge1, m.star_rouge1).c_str(),
                  cell(m.scores.mean_rouge2, m.star_rouge2).c_str(),
                  cell(m.scores.mean_rougeL, m.star_rougeL).c_str());
    out += buf;
  }
  out += "* = paired-t p < 0.01 vs Original (per-document scores)\n";
  return out;
}

}  // namespace

EvalResult run_eval(const std::vector<MethodSpec>& methods, const std::vector<TaskPrompt>& split,
                    Generator& generator, const RunOptions& run) {
  // fail fast on missing artifacts before any generation spend
  std::map<std::string, PolicyParams> loaded;
  for (const auto& m : methods) {
    if (m.kind == MethodKind::RewriterSl || m.kind == MethodKind::RewriterRl ||
        m.kind == MethodKind::RewriterSlRl || m.kind == MethodKind::ElementAblation) {
      if (m.policy_file.empty())
        throw std::runtime_error("method " + m.name + " needs a policy file");
      if (!loaded.count(m.policy_file)) loaded.emplace(m.policy_file, PolicyParams::load(m.policy_file));
    }
  }

  EvalResult result;
  for (const auto& method : methods) {
    const PolicyParams* params =
        method.policy_file.empty() ? nullptr : &loaded.at(method.policy_file);
    MethodReport row;
    row.name = method.name;
    row.scores.per_doc.resize(split.size());
    std::vector<std::string> generated(split.size());
    for_each_index(split.size(), run, [&](std::size_t i) {
      const TaskPrompt& tp = split[i];
      const PromptDoc rewritten = apply_method(method, params, tp.prompt);
      generated[i] = generator.generate(render(rewritten)).output;
      row.scores.per_doc[i] = score_document(task_id(tp.task), generated[i], tp.task.ground_truth);
    });
    BleuStats corpus(4);
    for (std::size_t i = 0; i < split.size(); ++i)
      corpus += bleu_stats(tokenize(generated[i]), tokenize(split[i].task.ground_truth), 4);
    row.scores.finalize();
    row.scores.corpus_bleu = corpus_bleu(corpus);
    result.methods.push_back(std::move(row));
  }

  const auto original = std::find_if(result.methods.begin(), result.methods.end(),
                                     [](const MethodReport& m) { return m.name == "Original"; });
  if (original != result.methods.end()) {
    const MetricColumns base = columns_of(original->scores);
    for (auto& row : result.methods) {
      if (row.name == "Original") continue;
      add_significance(row, base);
    }
  }

  result.table_text = format_table(result.methods);
  result.significance_csv = "method,p_bleu,p_rouge1,p_rouge2,p_rougeL\n";
  char buf[192];
  for (const auto& m : result.methods) {
    if (!m.has_significance) continue;
    std::snprintf(buf, sizeof(buf), "%s,%.6g,%.6g,%.6g,%.6g\n", m.name.c_str(), m.p_bleu,
                  m.p_rouge1, m.p_rouge2, m.p_rougeL);
    result.significance_csv += buf;
  }
  return result;
}

EvalResult run_ablation(AblationKind kind, const std::vector<TaskPrompt>& split,
                        Generator& generator, const std::string& policy_file,
                        const RunOptions& run) {
  std::vector<MethodSpec> methods;
  switch (kind) {
    case AblationKind::OriginalVariants:
      for (unsigned mask = 0; mask < 8; ++mask)
        methods.push_back(MethodSpec::original_variant(mask));
      break;
    case AblationKind::ElementRemoval:
      for (const unsigned drop : {kMaskSummary, kMaskKeywords, kMaskStyle})
        methods.push_back(MethodSpec::element_ablation(drop, policy_file));
      break;
    case AblationKind::UniformStyle:
      methods.push_back(MethodSpec::uniform_style_variant());
      break;
  }
  return run_eval(methods, split, generator, run);
}

// --- pipeline glue ---------------------------------------------------------

std::string task_id(const WritingTask& task) { return task.user_id + "/" + task.doc_id; }

std::vector<TaskPrompt> build_prompts(const std::vector<WritingTask>& tasks, Generator& generator,
                                      const IngestOptions& opt, const RunOptions& run) {
  std::vector<TaskPrompt> out(tasks.size());
  for_each_index(tasks.size(), run, [&](std::size_t i) {
    const WritingTask& task = tasks[i];
    const auto entries = retrieve_rank(task, opt.retrieval_k);
    const auto extracted = extract_summary_and_keywords(task, entries, opt);
    const auto style = style_synthesis(task.history, generator, opt.style_num_docs);
    out[i].task = task;
    out[i].prompt = assemble_original_prompt(task, entries, extracted.summary, extracted.keywords,
                                             style, opt);
  });
  return out;
}

namespace {

json prompt_to_json(const PromptDoc& p) {
  return json{{"instruction", p.instruction},
              {"immediate_context", p.immediate_context},
              {"summary", element_texts(p.summary)},
              {"keywords", element_texts(p.keywords)},
              {"style", element_texts(p.style)},
              {"entries", p.ranked_entries}};
}

PromptDoc prompt_from_json(const json& j) {
  PromptDoc p;
  p.instruction = j.at("instruction").get<std::string>();
  p.immediate_context = j.at("immediate_context").get<std::string>();
  p.summary = make_elements(ElementKind::SummarySentence,
                            j.at("summary").get<std::vector<std::string>>());
  p.keywords =
      make_elements(ElementKind::Keyword, j.at("keywords").get<std::vector<std::string>>());
  p.style =
      make_elements(ElementKind::StylePhrase, j.at("style").get<std::vector<std::string>>());
  p.ranked_entries = j.at("entries").get<std::vector<std::string>>();
  return p;
}

}  // namespace

void save_task_prompts(const std::vector<TaskPrompt>& tasks, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write tasks file: " + path);
  for (const auto& tp : tasks) {
    json hist = json::array();
    for (const auto& d : tp.task.history.docs) {
      hist.push_back({{"doc_id", d.doc_id},
                      {"timestamp", d.timestamp},
                      {"title", d.title},
                      {"body", d.body}});
    }
    const json j = {{"task_id", task_id(tp.task)},
                    {"user_id", tp.task.user_id},
                    {"doc_id", tp.task.doc_id},
                    {"domain", domain_to_string(tp.task.domain)},
                    {"immediate_context", tp.task.immediate_context},
                    {"ground_truth", tp.task.ground_truth},
                    {"history", hist},
                    {"prompt", prompt_to_json(tp.prompt)}};
    out << j.dump() << '\n';
  }
}

std::vector<TaskPrompt> load_task_prompts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open tasks file: " + path);
  std::vector<TaskPrompt> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": invalid JSON");
    TaskPrompt tp;
    tp.task.user_id = j.at("user_id").get<std::string>();
    tp.task.doc_id = j.at("doc_id").get<std::string>();
    tp.task.domain = domain_from_string(j.at("domain").get<std::string>());
    tp.task.immediate_context = j.at("immediate_context").get<std::string>();
    tp.task.ground_truth = j.at("ground_truth").get<std::string>();
    tp.task.history.user_id = tp.task.user_id;
    for (const auto& d : j.at("history")) {
      HistoryDoc doc;
      doc.doc_id = d.at("doc_id").get<std::string>();
      doc.timestamp = d.at("timestamp").get<std::int64_t>();
      doc.title = d.at("title").get<std::string>();
      doc.body = d.at("body").get<std::string>();
      tp.task.history.docs.push_back(std::move(doc));
    }
    tp.prompt = prompt_from_json(j.at("prompt"));
    out.push_back(std::move(tp));
  }
  return out;
}

void save_sl_examples(const std::vector<std::pair<std::string, SlExample>>& examples,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write SL examples file: " + path);
  for (const auto& [id, ex] : examples) {
    const json j = {{"task_id", id}, {"input", render(ex.input)}, {"label", render_label(ex.label)}};
    out << j.dump() << '\n';
  }
}

std::vector<std::pair<std::string, SlExample>> load_sl_examples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open SL examples file: " + path);
  std::vector<std::pair<std::string, SlExample>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": invalid JSON");
    SlExample ex;
    ex.input = parse_prompt(j.at("input").get<std::string>());
    ex.label = parse_label(j.at("label").get<std::string>());
    out.emplace_back(j.at("task_id").get<std::string>(), std::move(ex));
  }
  return out;
}

LabelGenResult generate_labels(const std::vector<TaskPrompt>& tasks, Generator& generator,
                               std::uint64_t variant_seed, const RunOptions& run) {
  LabelGenResult result;
  result.best_scores.resize(tasks.size());
  result.original_scores.resize(tasks.size());
  std::vector<std::vector<std::pair<std::string, SlExample>>> per_task(tasks.size());

  for_each_index(tasks.size(), run, [&](std::size_t i) {
    const TaskPrompt& tp = tasks[i];
    const VariantSet vset = sample_variants(tp.prompt, mix64(variant_seed, i));
    const auto [best, all] = select_best(tp.task, vset, generator, RunOptions::serial());
    result.best_scores[i] = best.score;
    result.original_scores[i] = all.front().score;  // variant 0 is the original
    const std::string id = task_id(tp.task);
    for (auto& ex : emit_sl_examples(vset, best)) per_task[i].emplace_back(id, std::move(ex));
  });

  double gain = 0.0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    gain += result.best_scores[i] - result.original_scores[i];
    for (auto& e : per_task[i]) result.examples.push_back(std::move(e));
  }
  result.mean_gain = tasks.empty() ? 0.0 : gain / static_cast<double>(tasks.size());
  return result;
}

}  // namespace prw

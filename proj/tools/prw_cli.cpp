// prw: end-to-end pipeline driver: synthetic corpora, ingest, user splits,
// prompt assembly, variant label generation, SL/RL training, rewriting,
// evaluation, ablations, and report emission.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "prw/config.hpp"
#include "prw/corpus.hpp"
#include "prw/generator.hpp"
#include "prw/harness.hpp"
#include "prw/metrics.hpp"
#include "prw/policy.hpp"
#include "prw/rng.hpp"
#include "prw/synthetic.hpp"
#include "prw/variants.hpp"

namespace fs = std::filesystem;
using namespace prw;

namespace {

struct GlobalOpts {
  std::string config_path;
  long long seed = -1;  // master seed override
  std::string backend;
  std::string endpoint;
  std::string model;
  long long budget = -1;
  int max_inflight = -1;
  std::string cache_dir;
  int threads = -1;
  bool serial = false;
};

Config effective_config(const GlobalOpts& g) {
  Config cfg = g.config_path.empty() ? config_from_ini({}) : load_config(g.config_path);
  if (g.seed >= 0) {
    const auto s = static_cast<std::uint64_t>(g.seed);
    cfg.split_seed = mix64(s, 1);
    cfg.variant_seed = mix64(s, 2);
    cfg.rl.seed = mix64(s, 3);
    cfg.synth.seed = s;
  }
  if (!g.backend.empty())
    cfg.gateway.backend = g.backend == "remote" ? BackendKind::Remote : BackendKind::Simulated;
  if (!g.endpoint.empty()) cfg.gateway.endpoint_url = g.endpoint;
  if (!g.model.empty()) cfg.gateway.model_name = g.model;
  if (g.budget >= 0) cfg.gateway.budget_calls = g.budget;
  if (g.max_inflight > 0) cfg.gateway.max_inflight = g.max_inflight;
  if (!g.cache_dir.empty()) cfg.gateway.cache_dir = g.cache_dir;
  if (g.threads >= 0) cfg.run.threads = g.threads;
  if (g.serial) cfg.run.mode = ExecMode::Serial;
  return cfg;
}

Generator make_generator(const Config& cfg) {
  if (cfg.gateway.backend == BackendKind::Simulated)
    return Generator(cfg.gateway, make_simulated_backend(cfg.sim));
  return Generator(cfg.gateway, make_remote_backend(cfg.gateway));
}

void write_file(const std::string& path, const std::string& content) {
  if (const fs::path dir = fs::path(path).parent_path(); !dir.empty())
    fs::create_directories(dir);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

std::vector<WritingTask> split_tasks(const CorpusSplits& splits, const std::string& which) {
  std::vector<WritingTask> tasks;
  auto add = [&tasks](const std::vector<WritingTask>& src) {
    tasks.insert(tasks.end(), src.begin(), src.end());
  };
  if (which == "train") {
    add(splits.train);
  } else if (which == "validation") {
    add(splits.validation);
  } else if (which == "test") {
    add(splits.test);
  } else if (which == "all") {
    add(splits.train);
    add(splits.validation);
    add(splits.test);
  } else {
    throw CLI::ValidationError("--split", "expected train|validation|test|all");
  }
  return tasks;
}

unsigned parse_mask(const std::string& text) {
  if (text == "none") return 0;
  unsigned mask = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = text.find(',', pos);
    const std::string part =
        comma == std::string::npos ? text.substr(pos) : text.substr(pos, comma - pos);
    if (part == "sum") {
      mask |= kMaskSummary;
    } else if (part == "word") {
      mask |= kMaskKeywords;
    } else if (part == "stl") {
      mask |= kMaskStyle;
    } else {
      throw CLI::ValidationError("--method", "unknown mask part: " + part);
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return mask;
}

MethodSpec parse_method(const std::string& text) {
  if (text == "Original") return MethodSpec::original();
  if (text == "UniformStyle") return MethodSpec::uniform_style_variant();
  if (const auto eq = text.find('='); eq != std::string::npos) {
    const std::string kind = text.substr(0, eq);
    const std::string file = text.substr(eq + 1);
    if (kind == "RewriterSl") return MethodSpec::policy(MethodKind::RewriterSl, file);
    if (kind == "RewriterRl") return MethodSpec::policy(MethodKind::RewriterRl, file);
    if (kind == "RewriterSlRl") return MethodSpec::policy(MethodKind::RewriterSlRl, file);
    throw CLI::ValidationError("--method", "unknown policy method: " + kind);
  }
  if (const auto colon = text.find(':'); colon != std::string::npos) {
    const std::string kind = text.substr(0, colon);
    const std::string arg = text.substr(colon + 1);
    if (kind == "RuleRewriter") return MethodSpec::rules(domain_from_string(arg));
    if (kind == "OriginalVariant") return MethodSpec::original_variant(parse_mask(arg));
    throw CLI::ValidationError("--method", "unknown method kind: " + kind);
  }
  throw CLI::ValidationError("--method", "cannot parse method spec: " + text);
}

std::string summary_csv(const EvalResult& result) {
  std::string out =
      "method,bleu,sbleu,rouge1,rouge2,rougeL,p_bleu,p_rouge1,p_rouge2,p_rougeL,significant\n";
  char buf[320];
  for (const auto& m : result.methods) {
    const bool star = m.star_bleu || m.star_rouge1 || m.star_rouge2 || m.star_rougeL;
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6g,%.6g,%.6g,%.6g,%d\n",
                  m.name.c_str(), m.scores.corpus_bleu, m.scores.mean_bleu, m.scores.mean_rouge1,
                  m.scores.mean_rouge2, m.scores.mean_rougeL, m.p_bleu, m.p_rouge1, m.p_rouge2,
                  m.p_rougeL, star ? 1 : 0);
    out += buf;
  }
  return out;
}

void emit_eval_outputs(const EvalResult& result, const std::string& out_dir) {
  fs::create_directories(out_dir);
  for (const auto& m : result.methods) {
    std::string name = m.name;
    for (char& c : name)
      if (c == '/' || c == ' ' || c == '*') c = '_';
    write_file(out_dir + "/scores_" + name + ".csv", m.scores.to_csv());
  }
  write_file(out_dir + "/summary.csv", summary_csv(result));
  write_file(out_dir + "/significance.csv", result.significance_csv);
  write_file(out_dir + "/report.txt", result.table_text);
  std::cout << result.table_text;
}

int run(int argc, char** argv) {
  CLI::App app{"prompt rewriting pipeline for a frozen text generator"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "config file (flat key/value, one section per module)");
  app.add_option("--seed", g.seed, "master seed override");
  app.add_option("--backend", g.backend, "generator backend: simulated|remote")
      ->check(CLI::IsMember({"simulated", "remote"}));
  app.add_option("--endpoint", g.endpoint, "remote completion endpoint URL");
  app.add_option("--model", g.model, "generator model name");
  app.add_option("--budget", g.budget, "backend call budget");
  app.add_option("--max-inflight", g.max_inflight, "max concurrent backend calls");
  app.add_option("--cache-dir", g.cache_dir, "generation cache directory");
  app.add_option("--threads", g.threads, "worker threads (0 = default)");
  app.add_flag("--serial", g.serial, "use the serial reference path");

  // synth
  auto* synth = app.add_subcommand("synth", "build a synthetic corpus");
  std::string synth_out = "corpus.jsonl";
  synth->add_option("--out", synth_out, "corpus output path");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "load and validate a corpus");
  std::string ingest_corpus;
  ingest->add_option("--corpus", ingest_corpus, "corpus file")->required();

  // split
  auto* split_cmd = app.add_subcommand("split", "assign users to train/validation/test");
  std::string split_corpus, split_out = "splits.tsv";
  split_cmd->add_option("--corpus", split_corpus, "corpus file")->required();
  split_cmd->add_option("--out", split_out, "splits manifest output");

  // prompts
  auto* prompts_cmd = app.add_subcommand("prompts", "assemble original prompts for a split");
  std::string prompts_corpus, prompts_split = "all", prompts_out = "tasks.jsonl";
  bool prompts_no_filter = false;
  prompts_cmd->add_option("--corpus", prompts_corpus, "corpus file")->required();
  prompts_cmd->add_option("--split", prompts_split, "train|validation|test|all");
  prompts_cmd->add_option("--out", prompts_out, "tasks output path");
  prompts_cmd->add_flag("--no-filter", prompts_no_filter, "skip the <5-variant task filter");

  // variants
  auto* variants_cmd = app.add_subcommand("variants", "report variant counts per task");
  std::string variants_tasks, variants_out;
  variants_cmd->add_option("--tasks", variants_tasks, "tasks file")->required();
  variants_cmd->add_option("--out", variants_out, "CSV output (default stdout)");

  // label
  auto* label_cmd = app.add_subcommand("label", "select best variants and emit SL examples");
  std::string label_tasks, label_examples = "sl_examples.jsonl", label_scores;
  label_cmd->add_option("--tasks", label_tasks, "tasks file")->required();
  label_cmd->add_option("--out-examples", label_examples, "SL examples output");
  label_cmd->add_option("--out-scores", label_scores, "per-task best/original scores CSV");

  // train-sl
  auto* sl_cmd = app.add_subcommand("train-sl", "supervised imitation of best-prompt labels");
  std::string sl_examples, sl_out = "policy_sl.txt", sl_log;
  int sl_epochs = -1;
  double sl_lr = -1;
  sl_cmd->add_option("--examples", sl_examples, "SL examples file")->required();
  sl_cmd->add_option("--out", sl_out, "policy output path");
  sl_cmd->add_option("--epochs", sl_epochs, "override [sl] epochs");
  sl_cmd->add_option("--lr", sl_lr, "override [sl] learning_rate");
  sl_cmd->add_option("--log", sl_log, "loss-curve CSV output");

  // train-rl
  auto* rl_cmd = app.add_subcommand("train-rl", "PPO fine-tuning with generation reward");
  std::string rl_tasks, rl_val, rl_init, rl_out = "policy_rl.txt", rl_log;
  long long rl_episodes = -1;
  double rl_lr = -1, rl_scale = 0.5;
  rl_cmd->add_option("--tasks", rl_tasks, "train tasks file")->required();
  rl_cmd->add_option("--val", rl_val, "validation tasks file");
  rl_cmd->add_option("--init", rl_init, "initial policy (default: random init)");
  rl_cmd->add_option("--out", rl_out, "policy output path");
  rl_cmd->add_option("--episodes", rl_episodes, "override [rl] max_episodes");
  rl_cmd->add_option("--lr", rl_lr, "override [rl] learning_rate");
  rl_cmd->add_option("--random-init-scale", rl_scale, "stddev for the random init");
  rl_cmd->add_option("--log", rl_log, "training-log CSV output");

  // rewrite
  auto* rewrite_cmd = app.add_subcommand("rewrite", "apply a rewriter to a task file");
  std::string rw_tasks, rw_policy, rw_rules, rw_out = "rewritten.jsonl";
  rewrite_cmd->add_option("--tasks", rw_tasks, "tasks file")->required();
  rewrite_cmd->add_option("--policy", rw_policy, "policy file (greedy element-edit rewriter)");
  rewrite_cmd->add_option("--rules", rw_rules, "rule rewriter domain: email|review|social");
  rewrite_cmd->add_option("--out", rw_out, "rewritten prompts output");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score methods on a split");
  std::string eval_tasks, eval_out_dir = "out";
  std::vector<std::string> eval_methods;
  eval_cmd->add_option("--tasks", eval_tasks, "tasks file")->required();
  eval_cmd->add_option("--method", eval_methods,
                       "method spec: Original | RewriterSl=path | RewriterRl=path | "
                       "RewriterSlRl=path | RuleRewriter:domain | OriginalVariant:mask | "
                       "UniformStyle")
      ->required();
  eval_cmd->add_option("--out-dir", eval_out_dir, "report output directory");

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "run an ablation grid");
  std::string ab_tasks, ab_kind, ab_policy, ab_out_dir = "out";
  ablate_cmd->add_option("--tasks", ab_tasks, "tasks file")->required();
  ablate_cmd
      ->add_option("--kind", ab_kind, "original-variants|element-removal|uniform-style")
      ->required()
      ->check(CLI::IsMember({"original-variants", "element-removal", "uniform-style"}));
  ablate_cmd->add_option("--policy", ab_policy, "policy file (element-removal)");
  ablate_cmd->add_option("--out-dir", ab_out_dir, "report output directory");

  // report
  auto* report_cmd = app.add_subcommand("report", "merge per-method score CSVs into a table");
  std::vector<std::string> report_scores;
  std::string report_out;
  report_cmd->add_option("--scores", report_scores, "scores_<method>.csv files (first = baseline)")
      ->required();
  report_cmd->add_option("--out", report_out, "table output (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  }
  const Config cfg = effective_config(g);

  if (synth->parsed()) {
    write_synthetic_corpus(cfg.synth, synth_out);
    std::cout << "wrote " << synth_out << " (" << cfg.synth.num_users << " users, "
              << cfg.synth.docs_per_user << " docs each)\n";
    return 0;
  }

  if (ingest->parsed()) {
    const auto users = load_corpus(ingest_corpus);
    std::size_t docs = 0;
    for (const auto& u : users) docs += u.docs.size();
    std::cout << "corpus ok: " << users.size() << " users, " << docs << " documents\n";
    return 0;
  }

  if (split_cmd->parsed()) {
    const auto users = load_corpus(split_corpus);
    const auto assigned = assign_split_users(users, cfg.ratios, cfg.split_seed);
    std::string out;
    const char* names[3] = {"train", "validation", "test"};
    for (int s = 0; s < 3; ++s)
      for (const auto& u : assigned[s]) out += u + "\t" + names[s] + "\n";
    write_file(split_out, out);
    std::cout << "train " << assigned[0].size() << " / validation " << assigned[1].size()
              << " / test " << assigned[2].size() << " users -> " << split_out << "\n";
    return 0;
  }

  if (prompts_cmd->parsed()) {
    const auto users = load_corpus(prompts_corpus);
    const CorpusSplits splits = make_splits(users, cfg.ingest, cfg.ratios, cfg.split_seed);
    const auto tasks = split_tasks(splits, prompts_split);
    Generator gen = make_generator(cfg);
    auto tps = build_prompts(tasks, gen, cfg.ingest, cfg.run);
    const std::size_t before = tps.size();
    if (!prompts_no_filter) tps = filter_tasks(std::move(tps), cfg.variant_seed);
    save_task_prompts(tps, prompts_out);
    std::cout << "assembled " << tps.size() << " prompts (" << before - tps.size()
              << " filtered) -> " << prompts_out << "\n";
    return 0;
  }

  if (variants_cmd->parsed()) {
    const auto tps = load_task_prompts(variants_tasks);
    std::string csv = "task_id,variants\n";
    for (std::size_t i = 0; i < tps.size(); ++i) {
      const VariantSet vset = sample_variants(tps[i].prompt, mix64(cfg.variant_seed, i),
                                              cfg.variants_per_type, cfg.variant_cap_attempts);
      csv += task_id(tps[i].task) + "," + std::to_string(vset.variants.size()) + "\n";
    }
    if (variants_out.empty()) {
      std::cout << csv;
    } else {
      write_file(variants_out, csv);
    }
    return 0;
  }

  if (label_cmd->parsed()) {
    const auto tps = load_task_prompts(label_tasks);
    Generator gen = make_generator(cfg);
    const LabelGenResult labels = generate_labels(tps, gen, cfg.variant_seed, cfg.run);
    save_sl_examples(labels.examples, label_examples);
    if (!label_scores.empty()) {
      std::string csv = "task_id,original,best,gain\n";
      char buf[160];
      for (std::size_t i = 0; i < tps.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f\n", task_id(tps[i].task).c_str(),
                      labels.original_scores[i], labels.best_scores[i],
                      labels.best_scores[i] - labels.original_scores[i]);
        csv += buf;
      }
      write_file(label_scores, csv);
    }
    std::printf("labeled %zu tasks, %zu SL examples, mean(best-original) = %+.3f\n", tps.size(),
                labels.examples.size(), labels.mean_gain);
    return 0;
  }

  if (sl_cmd->parsed()) {
    const auto examples = load_sl_examples(sl_examples);
    std::vector<SlExample> exs;
    exs.reserve(examples.size());
    for (const auto& [id, ex] : examples) exs.push_back(ex);
    PolicyParams params = PolicyParams::zeros();
    params.baseline_decay = cfg.rl.baseline_decay;
    const SlFitResult fit = sl_fit(params, exs, sl_epochs > 0 ? sl_epochs : cfg.sl_epochs,
                                   sl_lr > 0 ? sl_lr : cfg.sl_learning_rate);
    params.save(sl_out);
    if (!sl_log.empty()) {
      std::string csv = "epoch,loss\n";
      char buf[64];
      for (std::size_t e = 0; e < fit.losses.size(); ++e) {
        std::snprintf(buf, sizeof(buf), "%zu,%.6f\n", e, fit.losses[e]);
        csv += buf;
      }
      write_file(sl_log, csv);
    }
    std::printf("fit %zu examples, loss %.4f -> %.4f, policy -> %s\n", exs.size(),
                fit.losses.front(), fit.losses.back(), sl_out.c_str());
    return 0;
  }

  if (rl_cmd->parsed()) {
    const auto train = load_task_prompts(rl_tasks);
    const auto val = rl_val.empty() ? std::vector<TaskPrompt>{} : load_task_prompts(rl_val);
    PolicyParams params = rl_init.empty()
                              ? PolicyParams::random_init(cfg.rl.seed, rl_scale)
                              : PolicyParams::load(rl_init);
    RlConfig rl = cfg.rl;
    if (rl_episodes >= 0) rl.max_episodes = rl_episodes;
    if (rl_lr > 0) rl.learning_rate = rl_lr;
    Generator gen = make_generator(cfg);
    std::vector<BatchLog> log;
    params = rl_train(std::move(params), train, val, gen, rl, &log, cfg.run);
    params.save(rl_out);
    if (!rl_log.empty()) write_file(rl_log, training_log_csv(log));
    double final_reward = log.empty() ? 0.0 : log.back().mean_reward;
    std::printf("trained %lld episodes in %zu batches, final batch reward %.4f, policy -> %s\n",
                rl.max_episodes, log.size(), final_reward, rl_out.c_str());
    return 0;
  }

  if (rewrite_cmd->parsed()) {
    if (rw_policy.empty() == rw_rules.empty())
      throw CLI::ValidationError("--policy/--rules", "pass exactly one rewriter");
    const auto tps = load_task_prompts(rw_tasks);
    PolicyParams params;
    MethodSpec method;
    if (!rw_policy.empty()) {
      params = PolicyParams::load(rw_policy);
      method = MethodSpec::policy(MethodKind::RewriterSlRl, rw_policy);
    } else {
      method = MethodSpec::rules(domain_from_string(rw_rules));
    }
    std::string out;
    for (const auto& tp : tps) {
      const PromptDoc doc = apply_method(method, &params, tp.prompt);
      const nlohmann::json j = {{"task_id", task_id(tp.task)}, {"prompt", render(doc)}};
      out += j.dump();
      out += '\n';
    }
    write_file(rw_out, out);
    std::cout << "rewrote " << tps.size() << " prompts -> " << rw_out << "\n";
    return 0;
  }

  if (eval_cmd->parsed()) {
    const auto tps = load_task_prompts(eval_tasks);
    std::vector<MethodSpec> methods;
    for (const auto& m : eval_methods) methods.push_back(parse_method(m));
    Generator gen = make_generator(cfg);
    const EvalResult result = run_eval(methods, tps, gen, cfg.run);
    emit_eval_outputs(result, eval_out_dir);
    return 0;
  }

  if (ablate_cmd->parsed()) {
    const auto tps = load_task_prompts(ab_tasks);
    AblationKind kind = AblationKind::OriginalVariants;
    if (ab_kind == "element-removal") kind = AblationKind::ElementRemoval;
    if (ab_kind == "uniform-style") kind = AblationKind::UniformStyle;
    Generator gen = make_generator(cfg);
    const EvalResult result = run_ablation(kind, tps, gen, ab_policy, cfg.run);
    emit_eval_outputs(result, ab_out_dir);
    return 0;
  }

  if (report_cmd->parsed()) {
    // merge per-doc score CSVs; the first file is the significance baseline
    struct Loaded {
      std::string name;
      ScoreReport report;
    };
    std::vector<Loaded> loaded;
    for (const auto& path : report_scores) {
      Loaded l;
      l.name = fs::path(path).stem().string();
      if (l.name.rfind("scores_", 0) == 0) l.name = l.name.substr(7);
      std::ifstream in(path);
      if (!in) throw std::runtime_error("cannot open " + path);
      std::string line;
      std::getline(in, line);  // header
      while (std::getline(in, line)) {
        DocScore d;
        char id[128];
        if (std::sscanf(line.c_str(), "%127[^,],%lf,%lf,%lf,%lf", id, &d.bleu, &d.rouge1,
                        &d.rouge2, &d.rougeL) == 5 &&
            std::string(id) != "mean") {
          d.doc_id = id;
          l.report.per_doc.push_back(d);
        }
      }
      l.report.finalize();
      loaded.push_back(std::move(l));
    }
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-24s %10s %10s %10s %10s %10s\n", "method", "sBleu",
                  "Rouge-1", "Rouge-2", "Rouge-L", "p(sBleu)");
    out += buf;
    for (const auto& l : loaded) {
      std::string pcell = "-";
      if (&l != &loaded.front() && l.report.per_doc.size() == loaded[0].report.per_doc.size() &&
          l.report.per_doc.size() >= 2) {
        std::vector<double> a, b;
        for (std::size_t i = 0; i < l.report.per_doc.size(); ++i) {
          a.push_back(l.report.per_doc[i].bleu);
          b.push_back(loaded[0].report.per_doc[i].bleu);
        }
        const auto t = paired_t_test(a, b);
        char pb[48];
        std::snprintf(pb, sizeof(pb), "%.4g%s", t.p_two_sided,
                      t.p_two_sided < 0.01 && l.report.mean_bleu > loaded[0].report.mean_bleu
                          ? "*"
                          : "");
        pcell = pb;
      }
      std::snprintf(buf, sizeof(buf), "%-24s %10.2f %10.2f %10.2f %10.2f %10s\n", l.name.c_str(),
                    l.report.mean_bleu, l.report.mean_rouge1, l.report.mean_rouge2,
                    l.report.mean_rougeL, pcell.c_str());
      out += buf;
    }
    if (report_out.empty()) {
      std::cout << out;
    } else {
      write_file(report_out, out);
    }
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

// Benchmark comparing the serial reference path against the OpenMP path for
// the three data-parallel kernels: variant scoring, per-task evaluation, and
// batch rollouts. Verifies that both paths agree before timing them.
#include <chrono>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "prw/corpus.hpp"
#include "prw/generator.hpp"
#include "prw/harness.hpp"
#include "prw/policy.hpp"
#include "prw/rng.hpp"
#include "prw/synthetic.hpp"
#include "prw/variants.hpp"

using namespace prw;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Generator fresh_generator() {
  SimProfile profile;
  profile.max_words = 240;
  profile.canned_style_reply = canned_style_reply(0.25);
  GeneratorConfig cfg;
  return Generator(cfg, make_simulated_backend(profile));
}

struct Timing {
  double serial = 0.0;
  double parallel = 0.0;
};

void report(const char* name, const Timing& t, bool agree) {
  std::printf("%-18s serial %8.3f s   parallel %8.3f s   speedup %5.2fx   %s\n", name, t.serial,
              t.parallel, t.parallel > 0 ? t.serial / t.parallel : 0.0,
              agree ? "outputs identical" : "OUTPUT MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  int users = argc > 1 ? std::atoi(argv[1]) : 120;
  SyntheticSpec spec;
  spec.num_users = users;

  IngestOptions opt;
  opt.domain = Domain::Social;
  opt.max_keywords = 12;
  opt.max_summary_sentences = 6;

  std::istringstream in(build_synthetic_corpus_text(spec));
  const auto parsed = parse_corpus(in, "synth");
  std::vector<WritingTask> tasks;
  for (const auto& u : parsed)
    for (auto& t : build_tasks(u, opt)) tasks.push_back(std::move(t));

  Generator gen = fresh_generator();
  const auto tps = build_prompts(tasks, gen, opt, RunOptions::serial());

#ifdef _OPENMP
  std::printf("OpenMP: %d threads, %zu tasks\n", omp_get_max_threads(), tps.size());
#else
  std::printf("OpenMP unavailable: the parallel path degrades to serial\n");
#endif
  RunOptions par;  // default parallel

  // 1. variant scoring (fresh generator per run so the cache cannot hide work)
  {
    Timing t;
    std::vector<double> serial_scores, parallel_scores;
    {
      Generator g = fresh_generator();
      const auto t0 = std::chrono::steady_clock::now();
      for (std::size_t i = 0; i < tps.size(); ++i) {
        const VariantSet vset = sample_variants(tps[i].prompt, mix64(7, i));
        const auto [best, all] = select_best(tps[i].task, vset, g, RunOptions::serial());
        serial_scores.push_back(best.score);
      }
      t.serial = seconds_since(t0);
    }
    {
      Generator g = fresh_generator();
      const auto t0 = std::chrono::steady_clock::now();
      for (std::size_t i = 0; i < tps.size(); ++i) {
        const VariantSet vset = sample_variants(tps[i].prompt, mix64(7, i));
        const auto [best, all] = select_best(tps[i].task, vset, g, par);
        parallel_scores.push_back(best.score);
      }
      t.parallel = seconds_since(t0);
    }
    report("variant scoring", t, serial_scores == parallel_scores);
  }

  // 2. method evaluation
  {
    Timing t;
    const std::vector<MethodSpec> methods = {MethodSpec::original(),
                                             MethodSpec::rules(Domain::Social)};
    std::string serial_table, parallel_table;
    {
      Generator g = fresh_generator();
      const auto t0 = std::chrono::steady_clock::now();
      serial_table = run_eval(methods, tps, g, RunOptions::serial()).table_text;
      t.serial = seconds_since(t0);
    }
    {
      Generator g = fresh_generator();
      const auto t0 = std::chrono::steady_clock::now();
      parallel_table = run_eval(methods, tps, g, par).table_text;
      t.parallel = seconds_since(t0);
    }
    report("method eval", t, serial_table == parallel_table);
  }

  // 3. RL batch rollouts
  {
    Timing t;
    RlConfig cfg;
    cfg.max_episodes = 2048;
    cfg.batch_episodes = 64;
    cfg.eval_every = 0;
    cfg.learning_rate = 0.5;
    std::vector<double> serial_params, parallel_params;
    {
      Generator g = fresh_generator();
      const auto t0 = std::chrono::steady_clock::now();
      const PolicyParams out =
          rl_train(PolicyParams::zeros(), tps, {}, g, cfg, nullptr, RunOptions::serial());
      t.serial = seconds_since(t0);
      serial_params = flatten_ppo_params(out);
    }
    {
      Generator g = fresh_generator();
      const auto t0 = std::chrono::steady_clock::now();
      const PolicyParams out = rl_train(PolicyParams::zeros(), tps, {}, g, cfg, nullptr, par);
      t.parallel = seconds_since(t0);
      parallel_params = flatten_ppo_params(out);
    }
    report("rl rollouts", t, serial_params == parallel_params);
  }
  return 0;
}

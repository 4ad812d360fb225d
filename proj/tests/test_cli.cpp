#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PRW_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct WorkDir {
  fs::path dir;
  WorkDir() {
    dir = fs::temp_directory_path() / "prw_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~WorkDir() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_CASE("unknown subcommands and bad flags are usage errors") {
  CHECK(run_cli("frobnicate") == 1);
  CHECK(run_cli("eval") == 1);                       // missing required flags
  CHECK(run_cli("--backend quantum synth") == 1);    // invalid choice
  CHECK(run_cli("--help") == 0);
}

TEST_CASE("missing inputs are runtime errors") {
  CHECK(run_cli("ingest --corpus /no/such/file.jsonl") == 2);
  CHECK(run_cli("label --tasks /no/such/tasks.jsonl") == 2);
}

TEST_CASE("the closed-loop pipeline runs end to end") {
  WorkDir wd;
  const std::string config = wd / "config.ini";
  {
    std::ofstream out(config);
    out << "[corpus]\nmax_keywords = 12\nmax_summary_sentences = 6\n"
        << "[sim]\nmax_words = 240\n"
        << "[synth]\nnum_users = 24\n"
        << "[split]\ntrain = 70\nvalidation = 10\ntest = 20\n"
        << "[rl]\nlearning_rate = 2.0\nmax_episodes = 192\nbatch_episodes = 32\neval_every = 0\n"
        << "[sl]\nepochs = 30\n";
  }
  const std::string base = "--config " + config + " ";

  REQUIRE(run_cli(base + "synth --out " + (wd / "corpus.jsonl")) == 0);
  REQUIRE(run_cli(base + "ingest --corpus " + (wd / "corpus.jsonl")) == 0);
  REQUIRE(run_cli(base + "split --corpus " + (wd / "corpus.jsonl") + " --out " + (wd / "splits.tsv")) == 0);

  for (const char* split : {"train", "validation", "test"}) {
    REQUIRE(run_cli(base + "prompts --corpus " + (wd / "corpus.jsonl") + " --split " + split +
                    " --out " + (wd / (std::string(split) + ".jsonl"))) == 0);
  }
  REQUIRE(run_cli(base + "variants --tasks " + (wd / "train.jsonl") + " --out " + (wd / "variants.csv")) == 0);
  REQUIRE(run_cli(base + "label --tasks " + (wd / "train.jsonl") + " --out-examples " +
                  (wd / "sl.jsonl") + " --out-scores " + (wd / "label_scores.csv")) == 0);
  REQUIRE(run_cli(base + "train-sl --examples " + (wd / "sl.jsonl") + " --out " + (wd / "sl_policy.txt") +
                  " --log " + (wd / "sl_loss.csv")) == 0);
  REQUIRE(run_cli(base + "train-rl --tasks " + (wd / "train.jsonl") + " --val " + (wd / "validation.jsonl") +
                  " --init " + (wd / "sl_policy.txt") + " --out " + (wd / "slrl_policy.txt") +
                  " --log " + (wd / "rl_log.csv")) == 0);
  REQUIRE(run_cli(base + "rewrite --tasks " + (wd / "test.jsonl") + " --policy " +
                  (wd / "slrl_policy.txt") + " --out " + (wd / "rewritten.jsonl")) == 0);
  REQUIRE(run_cli(base + "eval --tasks " + (wd / "test.jsonl") +
                  " --method Original --method RewriterSlRl=" + (wd / "slrl_policy.txt") +
                  " --method RuleRewriter:social --method OriginalVariant:word,stl" +
                  " --out-dir " + (wd / "out")) == 0);
  REQUIRE(run_cli(base + "ablate --tasks " + (wd / "test.jsonl") + " --kind original-variants" +
                  " --out-dir " + (wd / "ablate")) == 0);
  REQUIRE(run_cli(base + "report --scores " + (wd / "out/scores_Original.csv") + " --scores " +
                  (wd / "out/scores_RewriterSlRl.csv") + " --out " + (wd / "merged.txt")) == 0);

  // artifacts exist and are well formed
  CHECK(slurp(wd.dir / "out/report.txt").find("RewriterSlRl") != std::string::npos);
  CHECK(slurp(wd.dir / "out/summary.csv").rfind("method,", 0) == 0);
  CHECK(slurp(wd.dir / "rl_log.csv").rfind("batch,mean_reward,loss,kl,entropy,val_reward", 0) == 0);
  CHECK(slurp(wd.dir / "merged.txt").find("Original") != std::string::npos);

  SUBCASE("reports are byte-identical across reruns with the same config and seed") {
    REQUIRE(run_cli(base + "eval --tasks " + (wd / "test.jsonl") +
                    " --method Original --method RewriterSlRl=" + (wd / "slrl_policy.txt") +
                    " --out-dir " + (wd / "out_a")) == 0);
    REQUIRE(run_cli(base + "--serial eval --tasks " + (wd / "test.jsonl") +
                    " --method Original --method RewriterSlRl=" + (wd / "slrl_policy.txt") +
                    " --out-dir " + (wd / "out_b")) == 0);
    CHECK(slurp(wd.dir / "out_a/report.txt") == slurp(wd.dir / "out_b/report.txt"));
    CHECK(slurp(wd.dir / "out_a/summary.csv") == slurp(wd.dir / "out_b/summary.csv"));
    CHECK(slurp(wd.dir / "out_a/scores_Original.csv") == slurp(wd.dir / "out_b/scores_Original.csv"));
  }
}

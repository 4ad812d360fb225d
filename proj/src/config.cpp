#include "prw/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "prw/text.hpp"

namespace prw {

IniData parse_ini(const std::string& text) {
  IniData data;
  std::string section;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw std::runtime_error("config line " + std::to_string(line_no) + ": unclosed section");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(line_no) + ": expected key = value");
    data[section][trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return data;
}

IniData load_ini(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_ini(buf.str());
}

namespace {

struct IniView {
  const IniData& data;

  std::string str(const std::string& sec, const std::string& key, std::string def) const {
    const auto s = data.find(sec);
    if (s == data.end()) return def;
    const auto k = s->second.find(key);
    return k == s->second.end() ? def : k->second;
  }
  long long integer(const std::string& sec, const std::string& key, long long def) const {
    const std::string v = str(sec, key, "");
    return v.empty() ? def : std::stoll(v);
  }
  double real(const std::string& sec, const std::string& key, double def) const {
    const std::string v = str(sec, key, "");
    return v.empty() ? def : std::stod(v);
  }
  bool boolean(const std::string& sec, const std::string& key, bool def) const {
    const std::string v = to_lower(str(sec, key, ""));
    if (v.empty()) return def;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::runtime_error("config: bad boolean for " + sec + "." + key + ": " + v);
  }
};

}  // namespace

Config config_from_ini(const IniData& ini) {
  const IniView v{ini};
  Config cfg;

  cfg.ingest.domain = domain_from_string(v.str("corpus", "domain", "social"));
  cfg.ingest.context_budget_tokens =
      static_cast<int>(v.integer("corpus", "context_budget_tokens", 30));
  cfg.ingest.retrieval_k = static_cast<int>(v.integer("corpus", "retrieval_k", 5));
  cfg.ingest.max_summary_sentences =
      static_cast<int>(v.integer("corpus", "max_summary_sentences", 6));
  cfg.ingest.max_keywords = static_cast<int>(v.integer("corpus", "max_keywords", 28));
  cfg.ingest.render_token_budget =
      static_cast<int>(v.integer("corpus", "render_token_budget", 1024));
  cfg.ingest.email_min_sentences =
      static_cast<int>(v.integer("corpus", "email_min_sentences", 2));
  cfg.ingest.email_min_tokens = static_cast<int>(v.integer("corpus", "email_min_tokens", 20));
  cfg.ingest.instruction = v.str("corpus", "instruction", std::string(kDefaultInstruction));
  cfg.ingest.stopwords_path = v.str("corpus", "stopwords_path", "");
  cfg.ingest.style_num_docs = static_cast<int>(v.integer("corpus", "style_num_docs", 5));

  cfg.ratios.train = static_cast<int>(v.integer("split", "train", 85));
  cfg.ratios.validation = static_cast<int>(v.integer("split", "validation", 5));
  cfg.ratios.test = static_cast<int>(v.integer("split", "test", 10));
  cfg.split_seed = static_cast<std::uint64_t>(v.integer("split", "seed", 13));

  const std::string backend = to_lower(v.str("gateway", "backend", "simulated"));
  if (backend == "simulated") {
    cfg.gateway.backend = BackendKind::Simulated;
  } else if (backend == "remote") {
    cfg.gateway.backend = BackendKind::Remote;
  } else {
    throw std::runtime_error("config: unknown gateway backend: " + backend);
  }
  cfg.gateway.endpoint_url =
      v.str("gateway", "endpoint", "http://localhost:8080/v1/complete");
  cfg.gateway.model_name = v.str("gateway", "model", "frozen-lm");
  cfg.gateway.auth_env_var = v.str("gateway", "auth_env", "PRW_API_TOKEN");
  cfg.gateway.temperature = v.real("gateway", "temperature", 0.0);
  cfg.gateway.max_output_tokens =
      static_cast<int>(v.integer("gateway", "max_output_tokens", 256));
  cfg.gateway.max_inflight = static_cast<int>(v.integer("gateway", "max_inflight", 4));
  cfg.gateway.budget_calls = v.integer("gateway", "budget_calls", 1000000);
  cfg.gateway.cache_dir = v.str("gateway", "cache_dir", "");
  cfg.gateway.retry_base_ms = static_cast<int>(v.integer("gateway", "retry_base_ms", 100));

  cfg.sim.max_words = static_cast<int>(v.integer("sim", "max_words", 120));
  cfg.sim.style_trigger_token = v.str("sim", "style_trigger", "thorough");
  cfg.sim.canned_style_reply =
      v.str("sim", "canned_style_reply", canned_style_reply(cfg.synth.style_mix));

  cfg.variant_seed = static_cast<std::uint64_t>(v.integer("variants", "seed", 7));
  cfg.variants_per_type = static_cast<int>(v.integer("variants", "per_type", 4));
  cfg.variant_cap_attempts = static_cast<int>(v.integer("variants", "cap_attempts", 64));

  cfg.sl_epochs = static_cast<int>(v.integer("sl", "epochs", 60));
  cfg.sl_learning_rate = v.real("sl", "learning_rate", 0.3);

  cfg.rl.clip_epsilon = v.real("rl", "clip_epsilon", 0.2);
  cfg.rl.learning_rate = v.real("rl", "learning_rate", 0.05);
  cfg.rl.ppo_epochs = static_cast<int>(v.integer("rl", "ppo_epochs", 4));
  cfg.rl.batch_episodes = static_cast<int>(v.integer("rl", "batch_episodes", 32));
  cfg.rl.entropy_coef = v.real("rl", "entropy_coef", 0.01);
  cfg.rl.baseline_decay = v.real("rl", "baseline_decay", 0.9);
  cfg.rl.max_episodes = v.integer("rl", "max_episodes", 3000);
  cfg.rl.eval_every = static_cast<int>(v.integer("rl", "eval_every", 5));
  cfg.rl.seed = static_cast<std::uint64_t>(v.integer("rl", "seed", 17));

  cfg.synth.seed = static_cast<std::uint64_t>(v.integer("synth", "seed", 0));
  cfg.synth.num_users = static_cast<int>(v.integer("synth", "num_users", 200));
  cfg.synth.docs_per_user = static_cast<int>(v.integer("synth", "docs_per_user", 6));
  cfg.synth.relevant_keywords_per_task =
      static_cast<int>(v.integer("synth", "relevant_keywords", 6));
  cfg.synth.noise_keywords_per_task = static_cast<int>(v.integer("synth", "noise_keywords", 8));
  cfg.synth.relevant_sentences = static_cast<int>(v.integer("synth", "relevant_sentences", 0));
  cfg.synth.noise_sentences = static_cast<int>(v.integer("synth", "noise_sentences", 4));
  cfg.synth.style_mix = v.real("synth", "style_mix", 0.25);
  cfg.synth.context_tokens = static_cast<int>(v.integer("synth", "context_tokens", 30));
  cfg.synth.junk_words_per_sentence =
      static_cast<int>(v.integer("synth", "junk_words_per_sentence", 4));

  cfg.run.mode = v.boolean("run", "parallel", true) ? ExecMode::Parallel : ExecMode::Serial;
  cfg.run.threads = static_cast<int>(v.integer("run", "threads", 0));
  cfg.out_dir = v.str("run", "out_dir", "out");

  // the canned reply default tracks style_mix when not set explicitly
  if (v.str("sim", "canned_style_reply", "").empty())
    cfg.sim.canned_style_reply = canned_style_reply(cfg.synth.style_mix);

  return cfg;
}

Config load_config(const std::string& path) { return config_from_ini(load_ini(path)); }

std::string reference_config_text() {
  return R"(# Reference configuration. Every pipeline default is spelled out here; any
# key may be omitted to fall back to the same value.

[corpus]
domain = social
context_budget_tokens = 30
retrieval_k = 5
max_summary_sentences = 6
max_keywords = 28
render_token_budget = 1024
email_min_sentences = 2
email_min_tokens = 20
instruction = Finish the passage in the user voice
stopwords_path =
style_num_docs = 5

[split]
train = 85
validation = 5
test = 10
seed = 13

[gateway]
backend = simulated
endpoint = http://localhost:8080/v1/complete
model = frozen-lm
auth_env = PRW_API_TOKEN
temperature = 0
max_output_tokens = 256
max_inflight = 4
budget_calls = 1000000
cache_dir =
retry_base_ms = 100

[sim]
max_words = 120
style_trigger = thorough
# defaults to the canned reply derived from synth.style_mix
canned_style_reply =

[variants]
seed = 7
per_type = 4
cap_attempts = 64

[sl]
epochs = 60
learning_rate = 0.3

[rl]
clip_epsilon = 0.2
learning_rate = 0.05
ppo_epochs = 4
batch_episodes = 32
entropy_coef = 0.01
baseline_decay = 0.9
max_episodes = 3000
eval_every = 5
seed = 17

[synth]
seed = 0
num_users = 200
docs_per_user = 6
relevant_keywords = 6
noise_keywords = 8
relevant_sentences = 0
noise_sentences = 4
style_mix = 0.25
context_tokens = 30
junk_words_per_sentence = 4

[run]
parallel = true
threads = 0
out_dir = out
)";
}

}  // namespace prw

#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>

namespace prw {

// Instruction prefix of the writing-style synthesis prompt; the simulator
// answers such prompts with its canned style reply.
inline constexpr std::string_view kStyleInstruction =
    "Summarize the author's writing style in detail.";

enum class BackendKind { Remote, Simulated };

struct GeneratorConfig {
  BackendKind backend = BackendKind::Simulated;
  std::string endpoint_url;        // e.g. http://host:port/v1/complete
  std::string model_name = "frozen-lm";
  std::string auth_env_var = "PRW_API_TOKEN";
  double temperature = 0.0;        // the pipeline always runs at 0
  int max_output_tokens = 256;
  int max_inflight = 4;
  long long budget_calls = 1000000;
  std::string cache_dir;           // empty = in-memory cache only
  int retry_base_ms = 100;         // exponential backoff base for Remote
};

struct GenerationRecord {
  std::string prompt_hash;  // hex SHA-256 of prompt + model + temperature + max tokens
  std::string output;
  std::string backend;
  long long latency_ms = 0;
  bool from_cache = false;
};

// Deterministic test double for the frozen generator. Echoes, in order, the
// immediate-context tokens, each keyword token (duplicates emit duplicates),
// each summary sentence's tokens, and, when any style phrase carries the
// trigger token, the first sentence of each ranked entry; output is truncated
// to max_words tokens. Style-synthesis prompts get the canned reply.
struct SimProfile {
  int max_words = 120;
  std::string style_trigger_token = "thorough";
  std::string canned_style_reply = "1. keeps sentences short 2. asks direct questions";
};

std::string sim_generate(const std::string& prompt_text, const SimProfile& profile);

struct BudgetExhausted : std::runtime_error {
  BudgetExhausted() : std::runtime_error("generator call budget exhausted") {}
};

struct AuthMissing : std::runtime_error {
  explicit AuthMissing(const std::string& var)
      : std::runtime_error("auth env var not set: " + var) {}
};

struct RemoteError : std::runtime_error {
  int status;
  std::string body;
  RemoteError(int s, std::string b)
      : std::runtime_error("remote generator error, status " + std::to_string(s)),
        status(s),
        body(std::move(b)) {}
};

// One backend call; implementations may throw RemoteError.
class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  virtual std::string complete(const std::string& prompt_text) = 0;
  virtual std::string name() const = 0;
};

std::unique_ptr<CompletionBackend> make_simulated_backend(SimProfile profile);
std::unique_ptr<CompletionBackend> make_remote_backend(const GeneratorConfig& cfg);

std::string sha256_hex(std::string_view data);

// Uniform gateway to the frozen generator: consults the cache first (memory,
// then disk when cache_dir is set), dedupes concurrent requests for the same
// prompt, enforces the call budget and the in-flight bound, and persists
// every fresh record. Safe for concurrent callers.
class Generator {
 public:
  Generator(GeneratorConfig cfg, std::unique_ptr<CompletionBackend> backend);
  explicit Generator(GeneratorConfig cfg);  // backend chosen from cfg.backend

  GenerationRecord generate(const std::string& prompt_text);

  const GeneratorConfig& config() const { return cfg_; }
  long long backend_calls() const { return backend_calls_.load(); }
  long long cache_hits() const { return cache_hits_.load(); }

 private:
  struct Pending;

  GenerationRecord run_backend(const std::string& prompt_text, const std::string& key);
  bool load_from_disk(const std::string& key, GenerationRecord& rec) const;
  void store_to_disk(const GenerationRecord& rec) const;

  GeneratorConfig cfg_;
  std::unique_ptr<CompletionBackend> backend_;

  std::mutex mu_;
  std::unordered_map<std::string, GenerationRecord> cache_;
  std::unordered_map<std::string, std::shared_ptr<Pending>> pending_;

  std::mutex inflight_mu_;
  std::condition_variable inflight_cv_;
  int inflight_ = 0;

  std::atomic<long long> backend_calls_{0};
  std::atomic<long long> cache_hits_{0};
};

}  // namespace prw

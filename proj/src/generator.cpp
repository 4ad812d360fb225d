#include "prw/generator.hpp"

#include <openssl/evp.h>

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "prw/prompt.hpp"
#include "prw/text.hpp"

// httplib is include-heavy; keep it out of the public header.
#include <httplib.h>

namespace prw {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string sim_generate(const std::string& prompt_text, const SimProfile& profile) {
  if (prompt_text.rfind(kStyleInstruction, 0) == 0) return profile.canned_style_reply;

  PromptDoc doc;
  try {
    doc = parse_prompt(prompt_text);
  } catch (const ParseError&) {
    // Unparseable prompts degrade to instruction + context with no sections.
    const std::size_t nl = prompt_text.find('\n');
    doc = PromptDoc{};
    if (nl != std::string::npos) doc.immediate_context = prompt_text.substr(nl + 1);
  }

  TokenSeq out = tokenize(doc.immediate_context);
  auto append = [&out](const std::string& text) {
    for (auto& t : tokenize(text)) out.push_back(std::move(t));
  };
  for (const auto& kw : doc.keywords) append(kw.text);
  for (const auto& s : doc.summary) append(s.text);

  bool triggered = false;
  for (const auto& phrase : doc.style) {
    for (const auto& tok : tokenize(phrase.text)) {
      if (tok == profile.style_trigger_token) {
        triggered = true;
        break;
      }
    }
    if (triggered) break;
  }
  if (triggered) {
    for (const auto& entry : doc.ranked_entries) {
      const auto sentences = split_sentences(entry);
      if (!sentences.empty()) append(sentences.front());
    }
  }

  if (static_cast<int>(out.size()) > profile.max_words) out.resize(profile.max_words);
  std::string text;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i) text.push_back(' ');
    text += out[i];
  }
  return text;
}

namespace {

class SimBackend : public CompletionBackend {
 public:
  explicit SimBackend(SimProfile profile) : profile_(std::move(profile)) {}
  std::string complete(const std::string& prompt_text) override {
    return sim_generate(prompt_text, profile_);
  }
  std::string name() const override { return "simulated"; }

 private:
  SimProfile profile_;
};

bool transient_status(int status) {
  return status == 429 || (status >= 500 && status < 600);
}

// Single-completion HTTP POST client. Wire format (fixed, see the config
// reference): request {"model","prompt","temperature","max_tokens"}, reply
// {"completion": "..."}. Retries transient statuses 3 times with exponential
// backoff.
class RemoteBackend : public CompletionBackend {
 public:
  explicit RemoteBackend(const GeneratorConfig& cfg) : cfg_(cfg) {
    const char* tok = cfg_.auth_env_var.empty() ? nullptr : std::getenv(cfg_.auth_env_var.c_str());
    if (!tok) throw AuthMissing(cfg_.auth_env_var);
    token_ = tok;

    // split endpoint into host part and path
    std::string url = cfg_.endpoint_url;
    const auto scheme = url.find("://");
    const auto path_pos = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (path_pos == std::string::npos) {
      base_ = url;
      path_ = "/";
    } else {
      base_ = url.substr(0, path_pos);
      path_ = url.substr(path_pos);
    }
  }

  std::string complete(const std::string& prompt_text) override {
    json req = {{"model", cfg_.model_name},
                {"prompt", prompt_text},
                {"temperature", cfg_.temperature},
                {"max_tokens", cfg_.max_output_tokens}};
    const std::string body = req.dump();

    int last_status = 0;
    std::string last_body;
    for (int attempt = 0; attempt < 3; ++attempt) {
      if (attempt > 0)
        std::this_thread::sleep_for(
            std::chrono::milliseconds(cfg_.retry_base_ms * (1LL << (attempt - 1))));
      httplib::Client cli(base_);
      cli.set_connection_timeout(30);
      cli.set_read_timeout(120);
      httplib::Headers headers = {{"Authorization", "Bearer " + token_}};
      auto res = cli.Post(path_, headers, body, "application/json");
      if (!res) {
        last_status = 0;
        last_body = "connection failure";
        continue;
      }
      last_status = res->status;
      last_body = res->body;
      if (res->status == 200) {
        const json reply = json::parse(res->body, nullptr, false);
        if (reply.is_discarded() || !reply.contains("completion"))
          throw RemoteError(200, "malformed reply: " + res->body);
        return reply["completion"].get<std::string>();
      }
      if (!transient_status(res->status)) break;
    }
    throw RemoteError(last_status, last_body);
  }

  std::string name() const override { return "remote"; }

 private:
  GeneratorConfig cfg_;
  std::string token_;
  std::string base_;
  std::string path_;
};

}  // namespace

std::unique_ptr<CompletionBackend> make_simulated_backend(SimProfile profile) {
  return std::make_unique<SimBackend>(std::move(profile));
}

std::unique_ptr<CompletionBackend> make_remote_backend(const GeneratorConfig& cfg) {
  return std::make_unique<RemoteBackend>(cfg);
}

struct Generator::Pending {
  std::mutex mu;
  std::condition_variable cv;
  bool done = false;
  GenerationRecord record;
  std::exception_ptr error;
};

Generator::Generator(GeneratorConfig cfg, std::unique_ptr<CompletionBackend> backend)
    : cfg_(std::move(cfg)), backend_(std::move(backend)) {
  if (!cfg_.cache_dir.empty()) fs::create_directories(cfg_.cache_dir);
}

Generator::Generator(GeneratorConfig cfg)
    : Generator(cfg, cfg.backend == BackendKind::Simulated
                         ? make_simulated_backend(SimProfile{})
                         : make_remote_backend(cfg)) {}

bool Generator::load_from_disk(const std::string& key, GenerationRecord& rec) const {
  if (cfg_.cache_dir.empty()) return false;
  const fs::path p = fs::path(cfg_.cache_dir) / (key + ".json");
  std::ifstream in(p);
  if (!in) return false;
  const json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) return false;
  rec.prompt_hash = j.value("prompt_hash", key);
  rec.output = j.value("output", "");
  rec.backend = j.value("backend", "");
  rec.latency_ms = j.value("latency_ms", 0LL);
  rec.from_cache = true;
  return true;
}

void Generator::store_to_disk(const GenerationRecord& rec) const {
  if (cfg_.cache_dir.empty()) return;
  const json j = {{"prompt_hash", rec.prompt_hash},
                  {"output", rec.output},
                  {"backend", rec.backend},
                  {"latency_ms", rec.latency_ms}};
  const fs::path target = fs::path(cfg_.cache_dir) / (rec.prompt_hash + ".json");
  const fs::path tmp = fs::path(cfg_.cache_dir) /
                       (rec.prompt_hash + ".tmp" + std::to_string(::getpid()));
  {
    std::ofstream out(tmp);
    out << j.dump();
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);  // atomic publish; concurrent writers race benignly
  if (ec) fs::remove(tmp, ec);
}

GenerationRecord Generator::run_backend(const std::string& prompt_text, const std::string& key) {
  // budget check covers backend calls only; cache hits are free
  long long used = backend_calls_.load();
  do {
    if (used >= cfg_.budget_calls) throw BudgetExhausted();
  } while (!backend_calls_.compare_exchange_weak(used, used + 1));

  {
    std::unique_lock lk(inflight_mu_);
    inflight_cv_.wait(lk, [this] { return inflight_ < cfg_.max_inflight; });
    ++inflight_;
  }
  const auto t0 = std::chrono::steady_clock::now();
  GenerationRecord rec;
  try {
    rec.output = backend_->complete(prompt_text);
  } catch (...) {
    {
      std::lock_guard lk(inflight_mu_);
      --inflight_;
    }
    inflight_cv_.notify_one();
    throw;
  }
  {
    std::lock_guard lk(inflight_mu_);
    --inflight_;
  }
  inflight_cv_.notify_one();

  rec.prompt_hash = key;
  rec.backend = backend_->name();
  rec.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
  rec.from_cache = false;
  return rec;
}

GenerationRecord Generator::generate(const std::string& prompt_text) {
  char meta[96];
  std::snprintf(meta, sizeof(meta), "\x1f%s\x1f%.17g\x1f%d", cfg_.model_name.c_str(),
                cfg_.temperature, cfg_.max_output_tokens);
  const std::string key = sha256_hex(prompt_text + meta);

  std::shared_ptr<Pending> pending;
  bool owner = false;
  {
    std::lock_guard lk(mu_);
    if (const auto it = cache_.find(key); it != cache_.end()) {
      cache_hits_.fetch_add(1);
      GenerationRecord rec = it->second;
      rec.from_cache = true;
      return rec;
    }
    GenerationRecord disk;
    if (load_from_disk(key, disk)) {
      cache_hits_.fetch_add(1);
      cache_[key] = disk;
      return disk;
    }
    auto [it, inserted] = pending_.try_emplace(key, std::make_shared<Pending>());
    pending = it->second;
    owner = inserted;
  }

  if (!owner) {
    std::unique_lock lk(pending->mu);
    pending->cv.wait(lk, [&] { return pending->done; });
    if (pending->error) std::rethrow_exception(pending->error);
    cache_hits_.fetch_add(1);
    GenerationRecord rec = pending->record;
    rec.from_cache = true;
    return rec;
  }

  GenerationRecord rec;
  std::exception_ptr error;
  try {
    rec = run_backend(prompt_text, key);
    store_to_disk(rec);
  } catch (...) {
    error = std::current_exception();
  }
  {
    std::lock_guard lk(mu_);
    if (!error) cache_[key] = rec;
    pending_.erase(key);
  }
  {
    std::lock_guard lk(pending->mu);
    pending->done = true;
    pending->record = rec;
    pending->error = error;
  }
  pending->cv.notify_all();
  if (error) std::rethrow_exception(error);
  return rec;
}

}  // namespace prw

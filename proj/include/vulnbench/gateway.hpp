#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace vulnbench::gateway {

/// Per-model sampling parameters. Unset fields mean "provider default".
struct ModelProfile {
    std::string name;
    std::optional<double> temperature;
    std::optional<int> max_output_tokens;
    std::optional<double> top_p;
    std::string notes;

    void validate() const;  // top_p in (0,1], temperature in [0,2] when set

    /// Built-in profiles: claude-3.5-sonnet-v2 (t=0.5), deepseek-r1 (t=0.6),
    /// gpt-* (t=0.7, max 4096, top_p=1), o1 (provider defaults).
    static std::optional<ModelProfile> builtin(const std::string& name);
    /// builtin() when known, otherwise a provider-defaults profile.
    static ModelProfile for_name(const std::string& name);
};

enum class Purpose { forge_phase2, forge_phase3, evaluate };
enum class CachePolicy { use, bypass, record_only };

struct CompletionRequest {
    ModelProfile profile;
    std::string prompt_text;
    Purpose purpose = Purpose::evaluate;
    CachePolicy cache_policy = CachePolicy::use;
    /// Trial-derived sampling seed; part of the effective parameters, so
    /// distinct seeds cache separately.
    std::optional<std::uint64_t> sampling_seed;
};

struct CompletionResult {
    std::string text;
    long prompt_tokens = 0;
    long completion_tokens = 0;
    long latency_ms = 0;
    std::string provider;
    bool cache_hit = false;
    bool truncated = false;
};

/// Retryable transport/provider failure.
class TransientProviderError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Provider {
public:
    virtual ~Provider() = default;
    virtual std::string name() const = 0;
    virtual CompletionResult complete(const CompletionRequest& request) = 0;
};

/// Replays completions from a transcript keyed by sha256(prompt_text).
/// Transcript rows may carry `delay_ms` (simulated latency, also really
/// slept so batch-ordering tests exercise out-of-order completion) and
/// `error` ("transient" or a message) for fault injection.
class MockProvider : public Provider {
public:
    enum class MissingPolicy {
        error,       // unknown prompt hash -> GatewayError
        synthesize,  // derive a deterministic verdict-shaped completion
    };

    explicit MockProvider(MissingPolicy missing = MissingPolicy::error)
        : missing_(missing) {}
    MockProvider(MockProvider&& other) noexcept
        : entries_(std::move(other.entries_)),
          missing_(other.missing_),
          calls_(other.calls_.load()) {}

    static MockProvider from_transcript(const std::filesystem::path& path,
                                        MissingPolicy missing = MissingPolicy::error);

    void add(const std::string& prompt_hash, const std::string& completion_text,
             long delay_ms = 0, const std::string& error = "");
    void add_prompt(const std::string& prompt_text, const std::string& completion_text,
                    long delay_ms = 0);

    std::string name() const override { return "mock"; }
    CompletionResult complete(const CompletionRequest& request) override;

    long calls() const { return calls_.load(); }
    void reset_calls() { calls_.store(0); }

private:
    struct Entry {
        std::string text;
        long delay_ms = 0;
        std::string error;
    };
    std::map<std::string, Entry> entries_;
    MissingPolicy missing_;
    std::atomic<long> calls_{0};
};

/// Refuses every call; backs cache_only mode, where completions must come
/// from the on-disk cache.
class NullProvider : public Provider {
public:
    std::string name() const override { return "none"; }
    CompletionResult complete(const CompletionRequest&) override;
};

/// OpenAI-style chat-completions JSON over HTTP; one user message per call.
/// Reads the key from VULNBENCH_API_KEY_<PROVIDER>.
class HttpProvider : public Provider {
public:
    HttpProvider(std::string provider_name, std::string base_url,
                 std::string path = "/v1/chat/completions");

    std::string name() const override { return provider_name_; }
    CompletionResult complete(const CompletionRequest& request) override;

    /// The wire payload; exposed so the serialized parameters are testable.
    static nlohmann::json build_wire_json(const ModelProfile& profile,
                                          const std::string& prompt_text,
                                          std::optional<std::uint64_t> sampling_seed);
    static CompletionResult parse_wire_response(const nlohmann::json& body,
                                                const std::string& provider_name);
    static std::string api_key_env_var(const std::string& provider_name);

private:
    std::string provider_name_;
    std::string base_url_;
    std::string path_;
};

struct RetryPolicy {
    int max_attempts = 3;
    int base_delay_ms = 25;
    double multiplier = 2.0;
};

struct BatchOutcome {
    std::optional<CompletionResult> result;
    std::string error;
    bool ok() const { return result.has_value(); }
};

/// Uniform completion access with disk caching and retry/backoff. Safe for
/// concurrent use; cache writes are atomic.
class Gateway {
public:
    Gateway(std::shared_ptr<Provider> provider,
            std::optional<std::filesystem::path> cache_dir = std::nullopt,
            RetryPolicy retry = {});

    /// Cache key: sha256 over provider-visible inputs (profile name, effective
    /// parameters, sampling seed, prompt text).
    static std::string cache_key(const CompletionRequest& request);

    CompletionResult complete(const CompletionRequest& request);

    /// Results in request order regardless of completion order; per-item
    /// failures are carried in the outcome, the batch never aborts wholesale.
    std::vector<BatchOutcome> run_batch(const std::vector<CompletionRequest>& requests,
                                        int max_in_flight);

    /// Number of provider calls actually issued (cache hits excluded).
    long provider_calls() const { return provider_calls_.load(); }

    static std::optional<std::filesystem::path> cache_dir_from_env();

private:
    std::optional<CompletionResult> cache_read(const std::string& key) const;
    void cache_write(const std::string& key, const CompletionResult& result) const;

    std::shared_ptr<Provider> provider_;
    std::optional<std::filesystem::path> cache_dir_;
    RetryPolicy retry_;
    std::atomic<long> provider_calls_{0};
};

/// Removes reasoning-model thinking segments (<think>...</think>) so verdict
/// parsing sees only the final answer. Raw text stays in the cache verbatim.
std::string strip_reasoning(const std::string& text);

}  // namespace vulnbench::gateway

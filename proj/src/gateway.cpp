#include "vulnbench/gateway.hpp"

#include <cctype>
#include <chrono>
#include <cstdlib>
#include <sstream>
#include <thread>

#include "vulnbench/common.hpp"
#include "vulnbench/metrics.hpp"

namespace vulnbench::gateway {

namespace detail {
std::string post_json(const std::string& base_url, const std::string& path,
                      const std::string& body, const std::string& api_key);
}

namespace fs = std::filesystem;
using nlohmann::json;

void ModelProfile::validate() const {
    if (name.empty()) {
        throw ValidationError("model profile needs a name");
    }
    if (temperature.has_value() && (*temperature < 0.0 || *temperature > 2.0)) {
        throw ValidationError("temperature out of [0,2]: " + std::to_string(*temperature));
    }
    if (top_p.has_value() && (*top_p <= 0.0 || *top_p > 1.0)) {
        throw ValidationError("top_p out of (0,1]: " + std::to_string(*top_p));
    }
    if (max_output_tokens.has_value() && *max_output_tokens <= 0) {
        throw ValidationError("max_output_tokens must be positive");
    }
}

std::optional<ModelProfile> ModelProfile::builtin(const std::string& name) {
    if (name == "claude-3.5-sonnet-v2") {
        return ModelProfile{name, 0.5, std::nullopt, std::nullopt, ""};
    }
    if (name == "deepseek-r1") {
        return ModelProfile{name, 0.6, std::nullopt, std::nullopt,
                            "671B reasoning model; emits <think> segments"};
    }
    if (starts_with(name, "gpt-")) {
        return ModelProfile{name, 0.7, 4096, 1.0, "chat-completions defaults otherwise"};
    }
    if (name == "o1") {
        return ModelProfile{name, std::nullopt, std::nullopt, std::nullopt,
                            "provider-default sampling"};
    }
    return std::nullopt;
}

ModelProfile ModelProfile::for_name(const std::string& name) {
    if (auto profile = builtin(name)) {
        return *profile;
    }
    return ModelProfile{name, std::nullopt, std::nullopt, std::nullopt, "provider defaults"};
}

// --- mock provider ---

MockProvider MockProvider::from_transcript(const fs::path& path, MissingPolicy missing) {
    MockProvider provider(missing);
    size_t lineno = 0;
    for (const std::string& line : split_lines(read_file(path))) {
        ++lineno;
        if (trim(line).empty()) {
            continue;
        }
        json record;
        try {
            record = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(std::string("bad transcript record: ") + e.what(),
                             "line " + std::to_string(lineno));
        }
        provider.add(record.at("prompt_hash").get<std::string>(),
                     record.value("completion_text", ""), record.value("delay_ms", 0L),
                     record.value("error", ""));
    }
    return provider;
}

void MockProvider::add(const std::string& prompt_hash, const std::string& completion_text,
                       long delay_ms, const std::string& error) {
    entries_[prompt_hash] = Entry{completion_text, delay_ms, error};
}

void MockProvider::add_prompt(const std::string& prompt_text,
                              const std::string& completion_text, long delay_ms) {
    add(sha256_hex(prompt_text), completion_text, delay_ms);
}

CompletionResult MockProvider::complete(const CompletionRequest& request) {
    calls_.fetch_add(1);
    std::string hash = sha256_hex(request.prompt_text);
    auto it = entries_.find(hash);
    std::string text;
    long delay_ms = 0;
    if (it != entries_.end()) {
        if (!it->second.error.empty()) {
            if (it->second.error == "transient") {
                throw TransientProviderError("injected transient failure");
            }
            throw GatewayError("injected failure: " + it->second.error);
        }
        text = it->second.text;
        delay_ms = it->second.delay_ms;
    } else if (missing_ == MissingPolicy::synthesize) {
        // deterministic verdict-shaped completion from (prompt hash, seed)
        std::string material = hash + ":" + std::to_string(request.sampling_seed.value_or(0));
        unsigned byte = static_cast<unsigned char>(sha256_hex(material)[0]);
        text = (byte % 2 == 0) ? "The example is vulnerable." : "The example is non-vulnerable.";
    } else {
        throw GatewayError("mock transcript has no entry for prompt hash " + hash);
    }
    if (delay_ms > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
    }
    CompletionResult result;
    result.text = text;
    result.prompt_tokens = static_cast<long>(metrics::count_tokens(request.prompt_text));
    result.completion_tokens = static_cast<long>(metrics::count_tokens(text));
    result.latency_ms = 0;  // keep records deterministic
    result.provider = name();
    return result;
}

CompletionResult NullProvider::complete(const CompletionRequest& request) {
    throw GatewayError("gateway is disabled (cache_only); no cached completion for prompt hash " +
                       sha256_hex(request.prompt_text));
}

// --- http provider ---

HttpProvider::HttpProvider(std::string provider_name, std::string base_url, std::string path)
    : provider_name_(std::move(provider_name)),
      base_url_(std::move(base_url)),
      path_(std::move(path)) {}

json HttpProvider::build_wire_json(const ModelProfile& profile, const std::string& prompt_text,
                                   std::optional<std::uint64_t> sampling_seed) {
    if (prompt_text.empty()) {
        throw ValidationError("prompt_text is empty");
    }
    profile.validate();
    json body;
    body["model"] = profile.name;
    body["messages"] = json::array({json{{"role", "user"}, {"content", prompt_text}}});
    if (profile.temperature.has_value()) {
        body["temperature"] = *profile.temperature;
    }
    if (profile.top_p.has_value()) {
        body["top_p"] = *profile.top_p;
    }
    if (profile.max_output_tokens.has_value()) {
        body["max_tokens"] = *profile.max_output_tokens;
    }
    if (sampling_seed.has_value()) {
        body["seed"] = *sampling_seed;
    }
    return body;
}

CompletionResult HttpProvider::parse_wire_response(const json& body,
                                                   const std::string& provider_name) {
    CompletionResult result;
    result.provider = provider_name;
    const json& choice = body.at("choices").at(0);
    result.text = choice.at("message").at("content").get<std::string>();
    result.truncated = choice.value("finish_reason", "") == "length";
    if (body.contains("usage")) {
        result.prompt_tokens = body["usage"].value("prompt_tokens", 0L);
        result.completion_tokens = body["usage"].value("completion_tokens", 0L);
    }
    return result;
}

std::string HttpProvider::api_key_env_var(const std::string& provider_name) {
    std::string var = "VULNBENCH_API_KEY_";
    for (char c : provider_name) {
        if (c == '-' || c == '.') {
            var.push_back('_');
        } else {
            var.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
        }
    }
    return var;
}

CompletionResult HttpProvider::complete(const CompletionRequest& request) {
    const char* key = std::getenv(api_key_env_var(provider_name_).c_str());
    if (key == nullptr || *key == '\0') {
        throw EnvironmentError("missing credentials: set " + api_key_env_var(provider_name_));
    }
    json body = build_wire_json(request.profile, request.prompt_text, request.sampling_seed);
    auto started = std::chrono::steady_clock::now();
    std::string response_body = detail::post_json(base_url_, path_, body.dump(), key);
    auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - started);
    CompletionResult result;
    try {
        result = parse_wire_response(json::parse(response_body), provider_name_);
    } catch (const json::exception& e) {
        throw GatewayError("unparsable provider response: " + std::string(e.what()));
    }
    result.latency_ms = elapsed.count();
    return result;
}

// --- gateway ---

Gateway::Gateway(std::shared_ptr<Provider> provider, std::optional<fs::path> cache_dir,
                 RetryPolicy retry)
    : provider_(std::move(provider)), cache_dir_(std::move(cache_dir)), retry_(retry) {
    if (!cache_dir_.has_value()) {
        cache_dir_ = cache_dir_from_env();
    }
}

std::optional<fs::path> Gateway::cache_dir_from_env() {
    if (const char* env = std::getenv("VULNBENCH_CACHE_DIR"); env != nullptr && *env != '\0') {
        return fs::path(env);
    }
    return std::nullopt;
}

std::string Gateway::cache_key(const CompletionRequest& request) {
    // effective parameters, in a fixed order; unset fields hash as "default"
    std::ostringstream material;
    material << request.profile.name << '\x1f';
    material << (request.profile.temperature ? format_fixed(*request.profile.temperature, 4)
                                             : "default")
             << '\x1f';
    material << (request.profile.top_p ? format_fixed(*request.profile.top_p, 4) : "default")
             << '\x1f';
    material << (request.profile.max_output_tokens
                     ? std::to_string(*request.profile.max_output_tokens)
                     : "default")
             << '\x1f';
    material << (request.sampling_seed ? std::to_string(*request.sampling_seed) : "default")
             << '\x1f';
    material << request.prompt_text;
    return sha256_hex(material.str());
}

std::optional<CompletionResult> Gateway::cache_read(const std::string& key) const {
    if (!cache_dir_.has_value()) {
        return std::nullopt;
    }
    auto content = read_file_if_exists(*cache_dir_ / (key + ".json"));
    if (!content.has_value()) {
        return std::nullopt;
    }
    json entry = json::parse(*content);
    CompletionResult result;
    result.text = entry.at("text").get<std::string>();
    result.prompt_tokens = entry.value("prompt_tokens", 0L);
    result.completion_tokens = entry.value("completion_tokens", 0L);
    result.provider = entry.value("provider", "");
    result.truncated = entry.value("truncated", false);
    result.latency_ms = 0;
    result.cache_hit = true;
    return result;
}

void Gateway::cache_write(const std::string& key, const CompletionResult& result) const {
    if (!cache_dir_.has_value()) {
        return;
    }
    json entry = {{"text", result.text},
                  {"prompt_tokens", result.prompt_tokens},
                  {"completion_tokens", result.completion_tokens},
                  {"provider", result.provider},
                  {"truncated", result.truncated}};
    write_file_atomic(*cache_dir_ / (key + ".json"), entry.dump(2));
}

CompletionResult Gateway::complete(const CompletionRequest& request) {
    if (request.prompt_text.empty()) {
        throw ValidationError("prompt_text is empty");
    }
    request.profile.validate();
    std::string key = cache_key(request);
    if (request.cache_policy == CachePolicy::use) {
        if (auto cached = cache_read(key)) {
            return *cached;
        }
    }

    int attempt = 0;
    double delay = retry_.base_delay_ms;
    for (;;) {
        ++attempt;
        try {
            provider_calls_.fetch_add(1);
            CompletionResult result = provider_->complete(request);
            result.cache_hit = false;
            if (request.cache_policy != CachePolicy::bypass) {
                cache_write(key, result);
            }
            return result;
        } catch (const TransientProviderError& e) {
            if (attempt >= retry_.max_attempts) {
                throw GatewayError("retries exhausted after " + std::to_string(attempt) +
                                   " attempts: " + e.what());
            }
            std::this_thread::sleep_for(
                std::chrono::milliseconds(static_cast<long>(delay)));
            delay *= retry_.multiplier;
        }
    }
}

std::vector<BatchOutcome> Gateway::run_batch(const std::vector<CompletionRequest>& requests,
                                             int max_in_flight) {
    if (max_in_flight < 1) {
        throw ValidationError("max_in_flight must be >= 1");
    }
    std::vector<BatchOutcome> outcomes(requests.size());
    if (requests.empty()) {
        return outcomes;
    }
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            size_t index = next.fetch_add(1);
            if (index >= requests.size()) {
                return;
            }
            try {
                outcomes[index].result = complete(requests[index]);
            } catch (const std::exception& e) {
                outcomes[index].error = e.what();
            }
        }
    };
    size_t threads = std::min(static_cast<size_t>(max_in_flight), requests.size());
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (size_t i = 0; i < threads; ++i) {
        pool.emplace_back(worker);
    }
    for (std::thread& t : pool) {
        t.join();
    }
    return outcomes;
}

std::string strip_reasoning(const std::string& text) {
    std::string out = text;
    for (;;) {
        size_t open = out.find("<think>");
        if (open == std::string::npos) {
            break;
        }
        size_t close = out.find("</think>", open);
        if (close == std::string::npos) {
            out.erase(open);
            break;
        }
        out.erase(open, close + 8 - open);
    }
    return trim(out);
}

}  // namespace vulnbench::gateway

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <random>

#include "vulnbench/common.hpp"
#include "vulnbench/gateway.hpp"

using namespace vulnbench;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

gateway::CompletionRequest request_for(const std::string& prompt,
                                       const std::string& model = "mock-model") {
    gateway::CompletionRequest request;
    request.profile = gateway::ModelProfile::for_name(model);
    request.prompt_text = prompt;
    return request;
}

}  // namespace

TEST_CASE("built-in model profiles") {
    auto claude = gateway::ModelProfile::builtin("claude-3.5-sonnet-v2");
    REQUIRE(claude.has_value());
    CHECK(*claude->temperature == doctest::Approx(0.5));

    auto r1 = gateway::ModelProfile::builtin("deepseek-r1");
    REQUIRE(r1.has_value());
    CHECK(*r1->temperature == doctest::Approx(0.6));

    auto gpt = gateway::ModelProfile::builtin("gpt-4o");
    REQUIRE(gpt.has_value());
    CHECK(*gpt->temperature == doctest::Approx(0.7));
    CHECK(*gpt->max_output_tokens == 4096);
    CHECK(*gpt->top_p == doctest::Approx(1.0));

    auto o1 = gateway::ModelProfile::builtin("o1");
    REQUIRE(o1.has_value());
    CHECK_FALSE(o1->temperature.has_value());
    CHECK_FALSE(o1->top_p.has_value());
    CHECK_FALSE(o1->max_output_tokens.has_value());

    CHECK_FALSE(gateway::ModelProfile::builtin("mystery-model").has_value());
    CHECK(gateway::ModelProfile::for_name("mystery-model").name == "mystery-model");

    gateway::ModelProfile bad = gateway::ModelProfile::for_name("gpt-4");
    bad.top_p = 1.5;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad.top_p = 1.0;
    bad.temperature = 3.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("gpt-family profile serializes its parameters on the wire") {
    auto profile = gateway::ModelProfile::for_name("gpt-4");
    auto body = gateway::HttpProvider::build_wire_json(profile, "check this code", std::nullopt);
    CHECK(body.at("model") == "gpt-4");
    CHECK(body.at("temperature").get<double>() == doctest::Approx(0.7));
    CHECK(body.at("top_p").get<double>() == doctest::Approx(1.0));
    CHECK(body.at("max_tokens").get<int>() == 4096);
    REQUIRE(body.at("messages").size() == 1);
    CHECK(body["messages"][0]["role"] == "user");
    CHECK(body["messages"][0]["content"] == "check this code");

    // provider-default profiles leave the sampling fields off the wire
    auto o1_body = gateway::HttpProvider::build_wire_json(
        gateway::ModelProfile::for_name("o1"), "p", std::nullopt);
    CHECK_FALSE(o1_body.contains("temperature"));
    CHECK_FALSE(o1_body.contains("top_p"));
    CHECK_FALSE(o1_body.contains("max_tokens"));
}

TEST_CASE("wire responses parse tokens and truncation") {
    nlohmann::json body = {
        {"choices",
         {{{"message", {{"role", "assistant"}, {"content", "non-vulnerable"}}},
           {"finish_reason", "length"}}}},
        {"usage", {{"prompt_tokens", 321}, {"completion_tokens", 9}}},
    };
    auto result = gateway::HttpProvider::parse_wire_response(body, "openai");
    CHECK(result.text == "non-vulnerable");
    CHECK(result.prompt_tokens == 321);
    CHECK(result.completion_tokens == 9);
    CHECK(result.truncated);
    CHECK(gateway::HttpProvider::api_key_env_var("openai") == "VULNBENCH_API_KEY_OPENAI");
}

TEST_CASE("mock provider replays transcripts; cache makes the second call free") {
    fs::path cache = temp_dir("vulnbench_cache");
    auto provider = std::make_shared<gateway::MockProvider>();
    provider->add_prompt("is this vulnerable?", "non-vulnerable");
    gateway::Gateway gw(provider, cache);

    auto first = gw.complete(request_for("is this vulnerable?"));
    CHECK(first.text == "non-vulnerable");
    CHECK_FALSE(first.cache_hit);
    CHECK(provider->calls() == 1);

    auto second = gw.complete(request_for("is this vulnerable?"));
    CHECK(second.text == "non-vulnerable");
    CHECK(second.cache_hit);
    CHECK(provider->calls() == 1);  // one network call for two identical requests
}

TEST_CASE("cache keys cover profile parameters and sampling seed") {
    auto a = request_for("same prompt", "gpt-4");
    auto b = request_for("same prompt", "o1");
    CHECK(gateway::Gateway::cache_key(a) != gateway::Gateway::cache_key(b));

    auto c = a;
    c.sampling_seed = 7;
    auto d = a;
    d.sampling_seed = 8;
    CHECK(gateway::Gateway::cache_key(c) != gateway::Gateway::cache_key(d));
    CHECK(gateway::Gateway::cache_key(c) == gateway::Gateway::cache_key(c));

    // the gateway never mutates a request
    std::string before = sha256_hex(a.prompt_text);
    auto provider = std::make_shared<gateway::MockProvider>(
        gateway::MockProvider::MissingPolicy::synthesize);
    gateway::Gateway gw(provider);
    gw.complete(a);
    CHECK(sha256_hex(a.prompt_text) == before);
}

TEST_CASE("transcript file loading and cache_policy variants") {
    fs::path dir = temp_dir("vulnbench_transcript");
    std::string hash = sha256_hex("prompt-a");
    {
        std::ofstream out(dir / "transcript.jsonl");
        out << nlohmann::json{{"prompt_hash", hash}, {"completion_text", "vulnerable"}}.dump()
            << "\n";
    }
    auto provider = std::make_shared<gateway::MockProvider>(
        gateway::MockProvider::from_transcript(dir / "transcript.jsonl"));
    fs::path cache = dir / "cache";
    gateway::Gateway gw(provider, cache);

    auto bypass = request_for("prompt-a");
    bypass.cache_policy = gateway::CachePolicy::bypass;
    gw.complete(bypass);
    gw.complete(bypass);
    CHECK(provider->calls() == 2);  // bypass reads nothing and writes nothing
    bool cache_untouched = !fs::exists(cache) || fs::is_empty(cache);
    CHECK(cache_untouched);

    auto record_only = request_for("prompt-a");
    record_only.cache_policy = gateway::CachePolicy::record_only;
    gw.complete(record_only);
    CHECK(provider->calls() == 3);

    auto use = request_for("prompt-a");
    CHECK(gw.complete(use).cache_hit);  // record_only populated the cache
    CHECK(provider->calls() == 3);

    CHECK_THROWS_AS(gw.complete(request_for("unknown prompt")), GatewayError);
    CHECK_THROWS_AS(gw.complete(request_for("")), ValidationError);
}

TEST_CASE("transient failures retry with backoff until the cap") {
    auto provider = std::make_shared<gateway::MockProvider>();
    provider->add(sha256_hex("poisoned"), "", 0, "transient");
    gateway::RetryPolicy retry;
    retry.max_attempts = 3;
    retry.base_delay_ms = 1;
    gateway::Gateway gw(provider, std::nullopt, retry);
    CHECK_THROWS_WITH_AS(gw.complete(request_for("poisoned")),
                         doctest::Contains("retries exhausted"), GatewayError);
    CHECK(provider->calls() == 3);
}

TEST_CASE("run_batch preserves order under shuffled delays") {
    auto provider = std::make_shared<gateway::MockProvider>();
    std::mt19937 rng(5);
    std::uniform_int_distribution<long> delay(0, 20);
    std::vector<gateway::CompletionRequest> requests;
    for (int i = 0; i < 12; ++i) {
        std::string prompt = "prompt-" + std::to_string(i);
        provider->add_prompt(prompt, "answer-" + std::to_string(i), delay(rng));
        requests.push_back(request_for(prompt));
    }
    gateway::Gateway gw(provider);
    auto outcomes = gw.run_batch(requests, 4);
    REQUIRE(outcomes.size() == 12);
    for (int i = 0; i < 12; ++i) {
        REQUIRE(outcomes[i].ok());
        CHECK(outcomes[i].result->text == "answer-" + std::to_string(i));
    }
}

TEST_CASE("run_batch carries per-item failures without aborting") {
    auto provider = std::make_shared<gateway::MockProvider>();
    std::vector<gateway::CompletionRequest> requests;
    for (int i = 0; i < 5; ++i) {
        std::string prompt = "p" + std::to_string(i);
        if (i == 2) {
            provider->add(sha256_hex(prompt), "", 0, "boom");
        } else {
            provider->add_prompt(prompt, "ok" + std::to_string(i));
        }
        requests.push_back(request_for(prompt));
    }
    gateway::Gateway gw(provider);
    auto outcomes = gw.run_batch(requests, 2);
    int failures = 0;
    for (int i = 0; i < 5; ++i) {
        if (!outcomes[i].ok()) {
            ++failures;
            CHECK(i == 2);
            CHECK(outcomes[i].error.find("boom") != std::string::npos);
        } else {
            CHECK(outcomes[i].result->text == "ok" + std::to_string(i));
        }
    }
    CHECK(failures == 1);
    CHECK_THROWS_AS(gw.run_batch(requests, 0), ValidationError);
}

TEST_CASE("reasoning segments are stripped before parsing") {
    CHECK(gateway::strip_reasoning("<think>long deliberation</think>\nvulnerable") ==
          "vulnerable");
    CHECK(gateway::strip_reasoning("a<think>x</think>b<think>y</think>c") == "abc");
    CHECK(gateway::strip_reasoning("no blocks here") == "no blocks here");
    // unterminated block: everything after the opener goes
    CHECK(gateway::strip_reasoning("head<think>never closed") == "head");
}

TEST_CASE("null provider refuses and synthesize mode is deterministic") {
    gateway::Gateway null_gw(std::make_shared<gateway::NullProvider>());
    CHECK_THROWS_AS(null_gw.complete(request_for("anything")), GatewayError);

    auto provider = std::make_shared<gateway::MockProvider>(
        gateway::MockProvider::MissingPolicy::synthesize);
    gateway::Gateway gw(provider);
    auto a = gw.complete(request_for("some new prompt"));
    auto b = gw.complete(request_for("some new prompt"));
    CHECK(a.text == b.text);
    CHECK((a.text.find("vulnerable") != std::string::npos));
}

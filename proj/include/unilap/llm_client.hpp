#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "unilap/corpus.hpp"

namespace unilap::llm {

struct ChatMessage {
    std::string role;
    std::string content;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_tokens = 2048;
};

// Chat-completion backend. Implementations should be deterministic at
// temperature 0; the response cache neutralizes provider nondeterminism.
class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual std::string id() const = 0;  // part of the cache key
    // Returns the completion text; throws BackendError on failure.
    virtual std::string complete(const ChatRequest& request) = 0;
};

struct HttpBackendConfig {
    std::string base_url = "https://api.openai.com";
    std::string model = "gpt-4o";
    std::string api_key_env = "UNILAP_API_KEY";
    int max_retries = 3;          // retries after the first attempt
    double backoff_seconds = 1.0; // doubled after every failed attempt
    int timeout_seconds = 120;
};

// OpenAI-compatible chat-completions client: POST {base_url}/v1/chat/completions
// with bearer-token auth taken from the configured environment variable.
class HttpBackend final : public LlmBackend {
public:
    explicit HttpBackend(HttpBackendConfig config);
    std::string id() const override;
    std::string complete(const ChatRequest& request) override;

private:
    HttpBackendConfig config_;
    std::string api_key_;
};

// Deterministic offline stand-in: stage-1 verdicts come from the
// token-overlap ratio between the fact and each article text; stage 2
// selects the listed article with the highest overlap. Parses the prompts
// produced by the reasoner's builders.
class MockBackend final : public LlmBackend {
public:
    explicit MockBackend(corpus::LabelSpace space);
    std::string id() const override { return "mock"; }
    std::string complete(const ChatRequest& request) override;
    std::size_t call_count() const { return calls_.load(); }

    // Verdict = MATCH iff overlap(fact, article) > this.
    static constexpr double kMatchThreshold = 0.35;
    static double overlap(std::string_view fact, std::string_view article_text);

private:
    corpus::LabelSpace space_;
    std::atomic<std::size_t> calls_{0};
};

// On-disk response cache: one JSON file per content hash of
// (backend id, request), holding both request and response. Write-once per
// key; safe for concurrent readers/writers.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir);
    const std::filesystem::path& dir() const { return dir_; }

    static std::string key_for(const std::string& backend_id, const ChatRequest& request);
    std::optional<std::string> lookup(const std::string& key) const;
    void store(const std::string& key, const std::string& backend_id, const ChatRequest& request,
               const std::string& response);

private:
    std::filesystem::path path_for(const std::string& key) const;
    std::filesystem::path dir_;
    mutable std::mutex mutex_;
};

// Cache-aware completion: a hit never touches the backend.
std::string complete_with_cache(LlmBackend& backend, ResponseCache* cache,
                                const ChatRequest& request);

// Spaces calls so that at most `rpm` requests start per minute.
class RateLimiter {
public:
    explicit RateLimiter(double rpm);
    void acquire();

private:
    std::mutex mutex_;
    std::chrono::steady_clock::time_point next_{};
    std::chrono::nanoseconds interval_{0};
};

std::string sha256_hex(std::string_view data);

}  // namespace unilap::llm

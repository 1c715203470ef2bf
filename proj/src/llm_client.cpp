#include "unilap/llm_client.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <thread>
#include <unordered_set>

#include "httplib.h"
#include "json.hpp"
#include "unilap/errors.hpp"
#include "unilap/features.hpp"
#include "unilap/reasoner.hpp"

namespace unilap::llm {

using nlohmann::json;
using nlohmann::ordered_json;

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw BackendError("SHA-256 digest failed");
    }
    static const char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

namespace {

ordered_json request_to_json(const ChatRequest& request) {
    ordered_json messages = ordered_json::array();
    for (const auto& msg : request.messages) {
        messages.push_back(ordered_json{{"role", msg.role}, {"content", msg.content}});
    }
    return ordered_json{
        {"messages", messages},
        {"temperature", request.temperature},
        {"max_tokens", request.max_tokens},
    };
}

}  // namespace

// ---- HttpBackend ----

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
        throw BackendError("environment variable " + config_.api_key_env +
                           " is not set; the http backend needs an API key");
    }
    api_key_ = key;
}

std::string HttpBackend::id() const { return "http:" + config_.base_url + ":" + config_.model; }

std::string HttpBackend::complete(const ChatRequest& request) {
    ordered_json body = request_to_json(request);
    body["model"] = config_.model;
    const std::string payload = body.dump();

    std::string last_error;
    double backoff = config_.backoff_seconds;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
            backoff *= 2.0;
        }
        httplib::Client client(config_.base_url);
        client.set_connection_timeout(config_.timeout_seconds);
        client.set_read_timeout(config_.timeout_seconds);
        client.set_bearer_token_auth(api_key_);
        auto res = client.Post("/v1/chat/completions", payload, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            throw BackendError("chat completion failed with HTTP " +
                               std::to_string(res->status) + ": " + res->body);
        }
        json reply = json::parse(res->body, nullptr, false);
        if (reply.is_discarded() || !reply.contains("choices") || reply["choices"].empty() ||
            !reply["choices"][0].contains("message")) {
            throw BackendError("malformed chat completion response");
        }
        return reply["choices"][0]["message"].value("content", std::string{});
    }
    throw BackendError("chat completion failed after " +
                       std::to_string(config_.max_retries + 1) + " attempts: " + last_error);
}

// ---- MockBackend ----

MockBackend::MockBackend(corpus::LabelSpace space) : space_(std::move(space)) {}

double MockBackend::overlap(std::string_view fact, std::string_view article_text) {
    // Content tokens only (>= 4 bytes) so stopwords do not inflate ratios.
    auto content_tokens = [](std::string_view text) {
        std::unordered_set<std::string> out;
        for (auto& t : features::tokenize(text, features::TokenizerMode::UnicodeWords)) {
            if (t.size() >= 4) {
                out.insert(std::move(t));
            }
        }
        return out;
    };
    const auto fact_tokens = content_tokens(fact);
    const auto article_tokens = content_tokens(article_text);
    if (article_tokens.empty()) {
        return 0.0;
    }
    std::size_t shared = 0;
    for (const auto& t : article_tokens) {
        shared += fact_tokens.count(t);
    }
    return static_cast<double>(shared) / static_cast<double>(article_tokens.size());
}

namespace {

struct PromptView {
    std::string fact;
    std::vector<reasoner::ArticleRef> articles;  // in listed order
    bool is_stage2 = false;
};

bool starts_with(std::string_view line, std::string_view prefix) {
    return line.substr(0, prefix.size()) == prefix;
}

bool is_section_header(std::string_view line) {
    using namespace reasoner;
    return starts_with(line, kArticlesHeader) || starts_with(line, kMatchedHeader) ||
           starts_with(line, kFactHeader) || starts_with(line, kAnalysisHeader) ||
           starts_with(line, kCandidateOrderHeader) || starts_with(line, kFullSpaceHeader) ||
           starts_with(line, kStage1FooterHeader) || starts_with(line, kStage2FooterHeader);
}

std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) {
            lines.emplace_back(text.substr(start));
            break;
        }
        lines.emplace_back(text.substr(start, end - start));
        start = end + 1;
    }
    return lines;
}

// Reads the builder-generated layout back; only used by the mock.
PromptView parse_prompt(std::string_view prompt) {
    using namespace reasoner;
    PromptView view;
    view.is_stage2 = prompt.find(kFinalPrefix) != std::string_view::npos;
    const auto lines = split_lines(prompt);
    enum class Section { None, Fact, Article } section = Section::None;
    for (const auto& line : lines) {
        if (starts_with(line, "[Article ") && line.size() > 10 && line.back() == ']') {
            view.articles.push_back({line.substr(9, line.size() - 10), ""});
            section = Section::Article;
            continue;
        }
        if (starts_with(line, kFactHeader)) {
            section = Section::Fact;
            continue;
        }
        if (is_section_header(line)) {
            section = Section::None;
            continue;
        }
        if (section == Section::Fact) {
            if (!view.fact.empty()) {
                view.fact += '\n';
            }
            view.fact += line;
        } else if (section == Section::Article && !view.articles.empty()) {
            auto& text = view.articles.back().text;
            if (!text.empty()) {
                text += '\n';
            }
            text += line;
        }
    }
    // trim trailing blank lines captured into sections
    auto rtrim = [](std::string& s) {
        while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) {
            s.pop_back();
        }
    };
    rtrim(view.fact);
    for (auto& a : view.articles) {
        rtrim(a.text);
    }
    return view;
}

std::string format_ratio(double r) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", r);
    return buf;
}

}  // namespace

std::string MockBackend::complete(const ChatRequest& request) {
    calls_.fetch_add(1);
    if (request.messages.empty()) {
        throw BackendError("mock backend received an empty request");
    }
    const auto view = parse_prompt(request.messages.back().content);
    std::string out;
    if (!view.is_stage2) {
        out += "Element-by-element comparison of each candidate article against the fact.\n";
        for (const auto& a : view.articles) {
            const double r = overlap(view.fact, a.text);
            out += "Article " + a.id + ": content overlap " + format_ratio(r) + ", elements " +
                   (r > kMatchThreshold ? "satisfied" : "not satisfied") + ".\n";
        }
        for (const auto& a : view.articles) {
            const double r = overlap(view.fact, a.text);
            out += "VERDICT " + a.id + ": " + (r > kMatchThreshold ? "MATCH" : "NOT MATCH") + "\n";
        }
        return out;
    }
    // Stage 2: pick the listed article with the highest overlap (earlier
    // listing wins ties).
    std::string best_id;
    double best = -1.0;
    for (const auto& a : view.articles) {
        const double r = overlap(view.fact, a.text);
        if (r > best) {
            best = r;
            best_id = a.id;
        }
    }
    if (best_id.empty() && !view.articles.empty()) {
        best_id = view.articles.front().id;
    }
    out += "The most relevant article by overlap " + format_ratio(best) + " is " + best_id + ".\n";
    out += "FINAL: " + best_id + "\n";
    return out;
}

// ---- ResponseCache ----

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::string ResponseCache::key_for(const std::string& backend_id, const ChatRequest& request) {
    ordered_json doc = request_to_json(request);
    return sha256_hex(backend_id + '\0' + doc.dump());
}

std::filesystem::path ResponseCache::path_for(const std::string& key) const {
    return dir_ / (key + ".json");
}

std::optional<std::string> ResponseCache::lookup(const std::string& key) const {
    std::lock_guard<std::mutex> lock(mutex_);
    std::ifstream in(path_for(key), std::ios::binary);
    if (!in) {
        return std::nullopt;
    }
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.contains("response")) {
        return std::nullopt;
    }
    return doc["response"].get<std::string>();
}

void ResponseCache::store(const std::string& key, const std::string& backend_id,
                          const ChatRequest& request, const std::string& response) {
    std::lock_guard<std::mutex> lock(mutex_);
    const auto path = path_for(key);
    if (std::filesystem::exists(path)) {
        return;  // write-once per key
    }
    ordered_json doc{
        {"key", key},
        {"backend", backend_id},
        {"request", request_to_json(request)},
        {"response", response},
    };
    const auto tmp = path_for(key + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) {
            throw DataError("cannot write cache entry: " + tmp.string());
        }
        out << doc.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path);
}

std::string complete_with_cache(LlmBackend& backend, ResponseCache* cache,
                                const ChatRequest& request) {
    if (cache == nullptr) {
        return backend.complete(request);
    }
    const auto key = ResponseCache::key_for(backend.id(), request);
    if (auto hit = cache->lookup(key)) {
        return *hit;
    }
    auto response = backend.complete(request);
    cache->store(key, backend.id(), request, response);
    return response;
}

// ---- RateLimiter ----

RateLimiter::RateLimiter(double rpm) {
    if (rpm > 0.0) {
        interval_ = std::chrono::duration_cast<std::chrono::nanoseconds>(
            std::chrono::duration<double>(60.0 / rpm));
    }
}

void RateLimiter::acquire() {
    if (interval_.count() == 0) {
        return;
    }
    std::chrono::steady_clock::time_point slot;
    {
        std::lock_guard<std::mutex> lock(mutex_);
        const auto now = std::chrono::steady_clock::now();
        slot = next_ > now ? next_ : now;
        next_ = slot + interval_;
    }
    std::this_thread::sleep_until(slot);
}

}  // namespace unilap::llm

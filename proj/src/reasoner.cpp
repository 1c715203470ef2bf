#include "unilap/reasoner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <thread>

#include "json.hpp"
#include "unilap/errors.hpp"
#include "unilap/jsonl.hpp"

namespace unilap::reasoner {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::string_view kSystemMessage =
    "You are an assistant for legal article analysis. Follow the instructions exactly and "
    "end your reply with the requested machine-readable lines.";

std::size_t approx_tokens(std::string_view text) {
    std::size_t count = 0;
    bool in_token = false;
    for (char ch : text) {
        const bool ws = ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r';
        if (!ws && !in_token) {
            ++count;
        }
        in_token = !ws;
    }
    return count;
}

llm::ChatRequest make_request(std::string prompt, const ReasonerConfig& config) {
    llm::ChatRequest req;
    req.messages.push_back({"system", std::string(kSystemMessage)});
    req.messages.push_back({"user", std::move(prompt)});
    req.temperature = config.temperature;
    req.max_tokens = config.max_tokens;
    return req;
}

}  // namespace

ReasoningTrace reason_case(const corpus::Case& c, const scm::CandidateSet& candidates,
                           const corpus::LabelSpace& space, llm::LlmBackend& backend,
                           llm::ResponseCache* cache, const ReasonerConfig& config) {
    ReasoningTrace trace;
    trace.case_id = c.id;
    const auto started = std::chrono::steady_clock::now();

    std::vector<ArticleRef> articles;
    std::vector<std::string> candidate_ids;
    for (const auto& cand : candidates) {
        if (cand.index >= space.size()) {
            trace.error = "candidate index out of label-space range";
            return trace;
        }
        const auto& entry = space.entry(cand.index);
        articles.push_back({entry.article_id, entry.article_text});
        candidate_ids.push_back(entry.article_id);
        trace.candidates.emplace_back(entry.article_id, cand.prob);
    }
    if (articles.empty()) {
        trace.error = "empty candidate set";
        return trace;
    }

    try {
        const std::string stage1_prompt = build_stage1_prompt(c.fact, articles);
        trace.stage1_prompt_tokens = approx_tokens(stage1_prompt);
        trace.stage1_response =
            llm::complete_with_cache(backend, cache, make_request(stage1_prompt, config));
        trace.stage1_response_tokens = approx_tokens(trace.stage1_response);
        trace.verdicts = parse_stage1(trace.stage1_response, candidate_ids);

        std::vector<std::string> matched_ids;
        for (const auto& v : trace.verdicts) {
            if (v.verdict == Verdict::Match) {
                matched_ids.push_back(v.article_id);
            }
        }
        // Zero matches: stage 2 considers the full candidate set with the
        // escape clause active over the whole label space.
        const bool escape = matched_ids.empty();
        const std::vector<std::string>& pool = escape ? candidate_ids : matched_ids;
        std::vector<ArticleRef> pool_articles;
        for (const auto& id : pool) {
            auto it = std::find_if(articles.begin(), articles.end(),
                                   [&](const ArticleRef& a) { return a.id == id; });
            pool_articles.push_back(*it);
        }

        const std::string stage2_prompt =
            build_stage2_prompt(c.fact, pool_articles, trace.stage1_response, candidate_ids,
                                escape ? &space : nullptr);
        trace.stage2_prompt_tokens = approx_tokens(stage2_prompt);
        trace.stage2_response =
            llm::complete_with_cache(backend, cache, make_request(stage2_prompt, config));
        trace.stage2_response_tokens = approx_tokens(trace.stage2_response);
        trace.selection = parse_stage2(trace.stage2_response, space, pool, escape);
    } catch (const std::exception& err) {
        trace.error = err.what();
    }

    trace.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return trace;
}

namespace {

class RateLimitedBackend final : public llm::LlmBackend {
public:
    RateLimitedBackend(llm::LlmBackend& inner, llm::RateLimiter& limiter)
        : inner_(inner), limiter_(limiter) {}
    std::string id() const override { return inner_.id(); }
    std::string complete(const llm::ChatRequest& request) override {
        limiter_.acquire();
        return inner_.complete(request);
    }

private:
    llm::LlmBackend& inner_;
    llm::RateLimiter& limiter_;
};

}  // namespace

std::vector<ReasoningTrace> reason_all(const std::vector<corpus::Case>& cases,
                                       const std::vector<scm::CandidateSet>& candidates,
                                       const corpus::LabelSpace& space, llm::LlmBackend& backend,
                                       llm::ResponseCache* cache, const ReasonerConfig& config) {
    if (cases.size() != candidates.size()) {
        throw DataError("case and candidate counts differ (" + std::to_string(cases.size()) +
                        " vs " + std::to_string(candidates.size()) + ")");
    }
    llm::RateLimiter limiter(config.requests_per_minute);
    RateLimitedBackend limited(backend, limiter);

    std::vector<ReasoningTrace> traces(cases.size());
    const std::size_t workers =
        std::max<std::size_t>(1, std::min(config.concurrency, cases.size()));
    if (workers == 1) {
        for (std::size_t i = 0; i < cases.size(); ++i) {
            traces[i] = reason_case(cases[i], candidates[i], space, limited, cache, config);
        }
        return traces;
    }

    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= cases.size()) {
                    return;
                }
                traces[i] = reason_case(cases[i], candidates[i], space, limited, cache, config);
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    return traces;
}

namespace {

std::string verdict_name(Verdict v) { return v == Verdict::Match ? "match" : "not_match"; }
std::string status_name(ParseStatus s) {
    return s == ParseStatus::Parsed ? "parsed" : "fallback";
}

}  // namespace

void save_traces(const std::filesystem::path& path, const std::vector<ReasoningTrace>& traces) {
    jsonl::Writer out(path);
    for (const auto& t : traces) {
        ordered_json candidates = ordered_json::array();
        for (const auto& [id, prob] : t.candidates) {
            candidates.push_back(ordered_json{{"article_id", id}, {"prob", prob}});
        }
        ordered_json verdicts = ordered_json::array();
        for (const auto& v : t.verdicts) {
            verdicts.push_back(ordered_json{{"article_id", v.article_id},
                                            {"verdict", verdict_name(v.verdict)},
                                            {"parse_status", status_name(v.status)}});
        }
        ordered_json rec{
            {"id", t.case_id},
            {"candidates", candidates},
            {"verdicts", verdicts},
            {"final", t.selection.final_articles},
            {"used_full_label_space", t.selection.used_full_label_space},
            {"stage2_parse_status", status_name(t.selection.status)},
            {"dropped", t.selection.dropped},
            {"stage1_response", t.stage1_response},
            {"stage2_response", t.stage2_response},
            {"tokens",
             ordered_json{{"stage1_prompt", t.stage1_prompt_tokens},
                          {"stage1_response", t.stage1_response_tokens},
                          {"stage2_prompt", t.stage2_prompt_tokens},
                          {"stage2_response", t.stage2_response_tokens}}},
            {"error", t.error},
        };
        out.write(rec);
    }
}

std::vector<ReasoningTrace> load_traces(const std::filesystem::path& path) {
    std::vector<ReasoningTrace> traces;
    jsonl::for_each_line(path, [&](std::size_t lineno, const std::string& line) {
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.is_object() || !rec.contains("id")) {
            throw DataError(path.string() + ":" + std::to_string(lineno) +
                            ": malformed trace record");
        }
        ReasoningTrace t;
        t.case_id = rec["id"].get<std::string>();
        for (const auto& c : rec.value("candidates", json::array())) {
            t.candidates.emplace_back(c.value("article_id", std::string{}),
                                      c.value("prob", 0.0));
        }
        for (const auto& v : rec.value("verdicts", json::array())) {
            StageOneVerdict verdict;
            verdict.article_id = v.value("article_id", std::string{});
            verdict.verdict =
                v.value("verdict", "not_match") == "match" ? Verdict::Match : Verdict::NotMatch;
            verdict.status = v.value("parse_status", "fallback") == "parsed"
                                 ? ParseStatus::Parsed
                                 : ParseStatus::Fallback;
            t.verdicts.push_back(std::move(verdict));
        }
        t.selection.final_articles =
            rec.value("final", std::vector<std::string>{});
        t.selection.used_full_label_space = rec.value("used_full_label_space", false);
        t.selection.status = rec.value("stage2_parse_status", "parsed") == "parsed"
                                 ? ParseStatus::Parsed
                                 : ParseStatus::Fallback;
        t.selection.dropped = rec.value("dropped", std::vector<std::string>{});
        t.stage1_response = rec.value("stage1_response", std::string{});
        t.stage2_response = rec.value("stage2_response", std::string{});
        if (rec.contains("tokens") && rec["tokens"].is_object()) {
            const auto& tok = rec["tokens"];
            t.stage1_prompt_tokens = tok.value("stage1_prompt", std::size_t{0});
            t.stage1_response_tokens = tok.value("stage1_response", std::size_t{0});
            t.stage2_prompt_tokens = tok.value("stage2_prompt", std::size_t{0});
            t.stage2_response_tokens = tok.value("stage2_response", std::size_t{0});
        }
        t.error = rec.value("error", std::string{});
        traces.push_back(std::move(t));
    });
    return traces;
}

}  // namespace unilap::reasoner

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "unilap/corpus.hpp"
#include "unilap/llm_client.hpp"
#include "unilap/scm.hpp"

namespace unilap::reasoner {

struct ArticleRef {
    std::string id;
    std::string text;
};

enum class Verdict { Match, NotMatch };
enum class ParseStatus { Parsed, Fallback };

struct StageOneVerdict {
    std::string article_id;
    Verdict verdict = Verdict::NotMatch;
    ParseStatus status = ParseStatus::Fallback;
};

struct StageTwoSelection {
    std::vector<std::string> final_articles;  // ordered as selected
    bool used_full_label_space = false;
    ParseStatus status = ParseStatus::Parsed;
    std::vector<std::string> dropped;  // ids rejected during parsing
};

// ---- Prompt construction and response parsing (pure functions) ----

// Section markers shared between the builders, the parsers, and the mock
// backend, which navigates its own prompts by them.
inline constexpr std::string_view kArticlesHeader = "Legal articles:";
inline constexpr std::string_view kMatchedHeader = "Matched legal articles (in candidate order):";
inline constexpr std::string_view kFactHeader = "Fact description:";
inline constexpr std::string_view kAnalysisHeader = "Stage 1 analysis:";
inline constexpr std::string_view kCandidateOrderHeader = "Candidate order (earlier has priority):";
inline constexpr std::string_view kFullSpaceHeader = "All legal articles in scope (id: title):";
inline constexpr std::string_view kStage1FooterHeader = "After the analysis,";
inline constexpr std::string_view kStage2FooterHeader = "End your reply";
inline constexpr std::string_view kVerdictPrefix = "VERDICT";
inline constexpr std::string_view kFinalPrefix = "FINAL:";

// One batched prompt covering every candidate article: the three-step
// match analysis (major premise, minor premise, conclusion), the article
// texts, the fact, and one VERDICT footer line per article.
std::string build_stage1_prompt(std::string_view fact, const std::vector<ArticleRef>& articles);

// Total: every expected article receives a verdict; articles without a
// recognizable VERDICT line fall back to NOT MATCH with Fallback status.
// Scanning is case-insensitive and tolerates surrounding prose; the last
// verdict for an article wins.
std::vector<StageOneVerdict> parse_stage1(std::string_view response,
                                          const std::vector<std::string>& expected_ids);

// Final-selection prompt over the matched articles. When `full_space` is
// given the escape clause is active and the prompt carries an id+title
// listing of the whole label space.
std::string build_stage2_prompt(std::string_view fact, const std::vector<ArticleRef>& matched,
                                std::string_view stage1_analysis,
                                const std::vector<std::string>& candidate_order,
                                const corpus::LabelSpace* full_space = nullptr);

// Parses the FINAL footer. Ids outside the label space are dropped, as are
// ids outside `allowed_in_order` unless `allow_full_space`. An empty or
// unparseable response falls back to the first allowed id.
StageTwoSelection parse_stage2(std::string_view response, const corpus::LabelSpace& space,
                               const std::vector<std::string>& allowed_in_order,
                               bool allow_full_space);

// ---- Orchestration ----

struct ReasonerConfig {
    double temperature = 0.0;
    int max_tokens = 2048;
    std::size_t concurrency = 1;
    double requests_per_minute = 0.0;  // 0 disables rate limiting
};

struct ReasoningTrace {
    std::string case_id;
    std::vector<std::pair<std::string, double>> candidates;  // (article_id, prob)
    std::vector<StageOneVerdict> verdicts;
    StageTwoSelection selection;
    std::string stage1_response;
    std::string stage2_response;
    std::size_t stage1_prompt_tokens = 0;
    std::size_t stage1_response_tokens = 0;
    std::size_t stage2_prompt_tokens = 0;
    std::size_t stage2_response_tokens = 0;
    double seconds = 0.0;  // kept out of the serialized trace (see run metadata)
    std::string error;     // empty on success
};

// Two backend calls on the happy path: one batched stage-1 call, one
// stage-2 call. Zero stage-1 matches re-runs stage 2 over the full
// candidate set with the escape clause active. Responses are cached by
// content hash when a cache is given. Backend failures are recorded on the
// trace; they do not throw.
ReasoningTrace reason_case(const corpus::Case& c, const scm::CandidateSet& candidates,
                           const corpus::LabelSpace& space, llm::LlmBackend& backend,
                           llm::ResponseCache* cache, const ReasonerConfig& config);

// Runs cases concurrently (bounded by config.concurrency) under a global
// requests-per-minute limit. Output order matches input order.
std::vector<ReasoningTrace> reason_all(const std::vector<corpus::Case>& cases,
                                       const std::vector<scm::CandidateSet>& candidates,
                                       const corpus::LabelSpace& space, llm::LlmBackend& backend,
                                       llm::ResponseCache* cache, const ReasonerConfig& config);

void save_traces(const std::filesystem::path& path, const std::vector<ReasoningTrace>& traces);
std::vector<ReasoningTrace> load_traces(const std::filesystem::path& path);

}  // namespace unilap::reasoner

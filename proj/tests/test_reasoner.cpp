#include <algorithm>

#include "doctest.h"
#include "test_util.hpp"
#include "unilap/errors.hpp"
#include "unilap/llm_client.hpp"
#include "unilap/reasoner.hpp"

using namespace unilap;
using namespace unilap::reasoner;
using test_util::TempDir;

namespace {

corpus::LabelSpace fixture_space() {
    return corpus::LabelSpace::from_entries({
        {"264", "unlawful seizure vehicle property deprivation"},
        {"6", "judicial remedy denied complaint hearing"},
        {"13", "narcotics trafficking smuggling contraband border"},
    });
}

corpus::Case fixture_case() {
    corpus::Case c;
    c.id = "case-a";
    c.fact = "The unlawful seizure of the vehicle caused property deprivation; judicial remedy "
             "was denied after complaint and hearing.";
    c.gold_articles = {"264"};
    return c;
}

scm::CandidateSet fixture_candidates() {
    return {{0, 0.91}, {1, 0.52}, {2, 0.07}};
}

std::size_t count_lines_with_prefix(const std::string& text, std::string_view prefix) {
    std::size_t count = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto end = text.find('\n', pos);
        const auto line = text.substr(pos, end == std::string::npos ? std::string::npos
                                                                    : end - pos);
        if (line.rfind(prefix, 0) == 0) {
            ++count;
        }
        if (end == std::string::npos) {
            break;
        }
        pos = end + 1;
    }
    return count;
}

}  // namespace

TEST_CASE("stage-1 prompt carries one VERDICT line per article in order") {
    const std::string one = build_stage1_prompt("some fact", {{"264", "text a"}});
    CHECK(count_lines_with_prefix(one, "VERDICT ") == 1);

    const std::string three = build_stage1_prompt(
        "some fact", {{"264", "text a"}, {"6", "text b"}, {"13", "text c"}});
    CHECK(count_lines_with_prefix(three, "VERDICT ") == 3);
    // article texts appear in candidate order
    const auto p264 = three.find("[Article 264]");
    const auto p6 = three.find("[Article 6]");
    const auto p13 = three.find("[Article 13]");
    REQUIRE(p264 != std::string::npos);
    REQUIRE(p6 != std::string::npos);
    REQUIRE(p13 != std::string::npos);
    CHECK(p264 < p6);
    CHECK(p6 < p13);
    CHECK(three.find("behavioral constitutive requirements") != std::string::npos);
    CHECK(three.find("some fact") != std::string::npos);
}

TEST_CASE("stage-1 prompt matches the golden snapshot byte for byte") {
    const std::string prompt = build_stage1_prompt(
        "The applicant's car was seized unlawfully and the seizure report destroyed.",
        {{"P1-1",
          "Protection of property. Every person is entitled to the peaceful enjoyment of his "
          "possessions."},
         {"6",
          "Right to a fair trial. Everyone is entitled to a fair and public hearing within a "
          "reasonable time."}});
    const auto golden = test_util::read_file(std::string(UNILAP_FIXTURE_DIR) +
                                             "/stage1_prompt.golden");
    REQUIRE(!golden.empty());
    CHECK(prompt == golden);
}

TEST_CASE("parse_stage1 reads well-formed and prose-wrapped verdicts") {
    const auto direct = parse_stage1("VERDICT 234: MATCH\nVERDICT 133: NOT MATCH",
                                     {"234", "133"});
    REQUIRE(direct.size() == 2);
    CHECK(direct[0].verdict == Verdict::Match);
    CHECK(direct[0].status == ParseStatus::Parsed);
    CHECK(direct[1].verdict == Verdict::NotMatch);
    CHECK(direct[1].status == ParseStatus::Parsed);

    const auto wrapped = parse_stage1(
        "Thank you for the case. After carefully weighing each element of the articles\n"
        "against the fact description, here are my conclusions.\n"
        "  verdict 234 : match  (the behavioral requirements align)\n"
        "Some more chatter.\n"
        "**VERDICT 133: NOT_MATCH** because the conditions fail.\n",
        {"234", "133"});
    REQUIRE(wrapped.size() == 2);
    CHECK(wrapped[0].verdict == Verdict::Match);
    CHECK(wrapped[0].status == ParseStatus::Parsed);
    CHECK(wrapped[1].verdict == Verdict::NotMatch);
    CHECK(wrapped[1].status == ParseStatus::Parsed);
}

TEST_CASE("parse_stage1 is total on degenerate input") {
    const auto empty = parse_stage1("", {"234", "133"});
    REQUIRE(empty.size() == 2);
    for (const auto& v : empty) {
        CHECK(v.verdict == Verdict::NotMatch);
        CHECK(v.status == ParseStatus::Fallback);
    }

    // later verdicts override earlier ones
    const auto flipped = parse_stage1("VERDICT 9: NOT MATCH\nCorrection:\nVERDICT 9: MATCH",
                                      {"9"});
    CHECK(flipped[0].verdict == Verdict::Match);

    // prefix ids do not capture each other's verdicts
    const auto prefixes = parse_stage1("VERDICT 26: MATCH\nVERDICT 264: NOT MATCH",
                                       {"26", "264"});
    CHECK(prefixes[0].verdict == Verdict::Match);
    CHECK(prefixes[1].verdict == Verdict::NotMatch);
}

TEST_CASE("stage-2 prompt lists matched articles and the priority rule") {
    const std::string prompt = build_stage2_prompt(
        "fact text", {{"264", "article text"}}, "stage one analysis", {"264", "6"});
    CHECK(prompt.find("[Article 264]") != std::string::npos);
    CHECK(prompt.find("priority should be given to the one that appears earlier") !=
          std::string::npos);
    CHECK(prompt.find(kCandidateOrderHeader) != std::string::npos);
    CHECK(prompt.find("264, 6") != std::string::npos);
    CHECK(prompt.find("stage one analysis") != std::string::npos);
    CHECK(prompt.find("FINAL:") != std::string::npos);
    CHECK(prompt.find(kFullSpaceHeader) == std::string::npos);

    const auto space = fixture_space();
    const std::string with_space = build_stage2_prompt(
        "fact text", {{"264", "article text"}}, "analysis", {"264"}, &space);
    CHECK(with_space.find(kFullSpaceHeader) != std::string::npos);
    CHECK(with_space.find("13: narcotics") != std::string::npos);
}

TEST_CASE("stage-2 prompt matches the golden snapshot byte for byte") {
    const std::string prompt = build_stage2_prompt(
        "The applicant's car was seized unlawfully and the seizure report destroyed.",
        {{"P1-1",
          "Protection of property. Every person is entitled to the peaceful enjoyment of his "
          "possessions."}},
        "Article P1-1 aligns with the unlawful seizure of property.", {"P1-1", "6", "13"});
    const auto golden = test_util::read_file(std::string(UNILAP_FIXTURE_DIR) +
                                             "/stage2_prompt.golden");
    REQUIRE(!golden.empty());
    CHECK(prompt == golden);
}

TEST_CASE("parse_stage2 accepts ids, drops unknowns, and falls back") {
    const auto space = corpus::LabelSpace::from_entries(
        {{"P1-1", ""}, {"234", ""}, {"264", ""}, {"6", ""}});

    const auto single = parse_stage2("FINAL: P1-1", space, {"P1-1", "6"}, false);
    CHECK(single.final_articles == std::vector<std::string>{"P1-1"});
    CHECK(single.status == ParseStatus::Parsed);

    const auto pair = parse_stage2("Reasoning...\nFINAL: 234, 264\n", space, {"264", "234"},
                                   false);
    CHECK(pair.final_articles == std::vector<std::string>{"234", "264"});

    const auto unknown = parse_stage2("FINAL: 234, bogus, 264", space, {"234", "264"}, false);
    CHECK(unknown.final_articles == std::vector<std::string>{"234", "264"});
    CHECK(unknown.dropped == std::vector<std::string>{"bogus"});

    const auto garbage = parse_stage2("no structured output at all", space, {"264", "234"},
                                      false);
    CHECK(garbage.final_articles == std::vector<std::string>{"264"});
    CHECK(garbage.status == ParseStatus::Fallback);

    // outside the matched pool is dropped unless the full space is active
    const auto outside = parse_stage2("FINAL: 6", space, {"234"}, false);
    CHECK(outside.final_articles == std::vector<std::string>{"234"});
    CHECK(outside.status == ParseStatus::Fallback);
    const auto full = parse_stage2("FINAL: 6", space, {"234"}, true);
    CHECK(full.final_articles == std::vector<std::string>{"6"});
    CHECK(full.used_full_label_space);

    // "Article" prefixes and decorations are tolerated
    const auto decorated = parse_stage2("FINAL: Article 234, *264*.", space, {"234", "264"},
                                        false);
    CHECK(decorated.final_articles == std::vector<std::string>{"234", "264"});
}

TEST_CASE("mock backend verdicts follow token overlap") {
    const auto space = fixture_space();
    llm::MockBackend backend(space);

    // article text copied into the fact -> overlap 1 -> MATCH
    const std::string copied = build_stage1_prompt(
        "He committed unlawful seizure vehicle property deprivation yesterday.",
        {{"264", space.entry(0).article_text}});
    llm::ChatRequest req;
    req.messages = {{"user", copied}};
    const auto response = backend.complete(req);
    const auto verdicts = parse_stage1(response, {"264"});
    CHECK(verdicts[0].verdict == Verdict::Match);

    // disjoint vocabularies -> NOT MATCH
    const std::string disjoint = build_stage1_prompt(
        "Entirely different topic about gardening and weather.",
        {{"13", space.entry(2).article_text}});
    llm::ChatRequest req2;
    req2.messages = {{"user", disjoint}};
    const auto verdicts2 = parse_stage1(backend.complete(req2), {"13"});
    CHECK(verdicts2[0].verdict == Verdict::NotMatch);

    // determinism
    CHECK(backend.complete(req) == response);
}

TEST_CASE("reason_case produces a full trace with two backend calls") {
    const auto space = fixture_space();
    llm::MockBackend backend(space);
    const auto trace = reason_case(fixture_case(), fixture_candidates(), space, backend,
                                   nullptr, ReasonerConfig{});

    CHECK(trace.error.empty());
    CHECK(backend.call_count() == 2);
    REQUIRE(trace.verdicts.size() == 3);
    CHECK(trace.verdicts[0].verdict == Verdict::Match);      // 264 overlaps the fact
    CHECK(trace.verdicts[1].verdict == Verdict::Match);      // 6 overlaps the fact
    CHECK(trace.verdicts[2].verdict == Verdict::NotMatch);   // 13 is disjoint
    CHECK(!trace.selection.used_full_label_space);
    REQUIRE(!trace.selection.final_articles.empty());
    // selection stays inside the matched pool
    for (const auto& id : trace.selection.final_articles) {
        CHECK((id == "264" || id == "6"));
    }
    CHECK(trace.stage1_prompt_tokens > 0);
    CHECK(trace.stage2_prompt_tokens > 0);
}

TEST_CASE("zero stage-1 matches re-runs stage 2 with the full label space") {
    const auto space = fixture_space();
    llm::MockBackend backend(space);
    corpus::Case c;
    c.id = "case-b";
    c.fact = "Completely unrelated gibberish text mentioning nothing relevant.";
    c.gold_articles = {"264"};

    const auto trace = reason_case(c, fixture_candidates(), space, backend, nullptr,
                                   ReasonerConfig{});
    CHECK(trace.error.empty());
    CHECK(backend.call_count() == 2);
    for (const auto& v : trace.verdicts) {
        CHECK(v.verdict == Verdict::NotMatch);
    }
    CHECK(trace.selection.used_full_label_space);
    CHECK(!trace.selection.final_articles.empty());
}

TEST_CASE("warm cache serves repeat runs without backend calls") {
    TempDir dir;
    const auto space = fixture_space();
    llm::MockBackend backend(space);
    llm::ResponseCache cache(dir.path() / "cache");
    const ReasonerConfig config;

    const auto first = reason_case(fixture_case(), fixture_candidates(), space, backend,
                                   &cache, config);
    CHECK(backend.call_count() == 2);

    const auto second = reason_case(fixture_case(), fixture_candidates(), space, backend,
                                    &cache, config);
    CHECK(backend.call_count() == 2);  // unchanged: everything came from cache
    CHECK(second.stage1_response == first.stage1_response);
    CHECK(second.stage2_response == first.stage2_response);
    CHECK(second.selection.final_articles == first.selection.final_articles);
}

TEST_CASE("cache stores one file per key and survives reopening") {
    TempDir dir;
    llm::ChatRequest req;
    req.messages = {{"user", "prompt body"}};
    const auto key = llm::ResponseCache::key_for("mock", req);
    CHECK(key.size() == 64);

    {
        llm::ResponseCache cache(dir.path() / "cache");
        CHECK(!cache.lookup(key));
        cache.store(key, "mock", req, "a response");
        cache.store(key, "mock", req, "a different response");  // write-once
    }
    llm::ResponseCache reopened(dir.path() / "cache");
    const auto hit = reopened.lookup(key);
    REQUIRE(hit.has_value());
    CHECK(*hit == "a response");
}

TEST_CASE("reason_all preserves input order under concurrency") {
    const auto space = fixture_space();
    llm::MockBackend backend(space);
    std::vector<corpus::Case> cases;
    std::vector<scm::CandidateSet> candidates;
    for (int i = 0; i < 9; ++i) {
        auto c = fixture_case();
        c.id = "case-" + std::to_string(i);
        cases.push_back(std::move(c));
        candidates.push_back(fixture_candidates());
    }
    ReasonerConfig config;
    config.concurrency = 3;
    const auto traces = reason_all(cases, candidates, space, backend, nullptr, config);
    REQUIRE(traces.size() == cases.size());
    for (std::size_t i = 0; i < traces.size(); ++i) {
        CHECK(traces[i].case_id == cases[i].id);
        CHECK(traces[i].error.empty());
    }
    CHECK(backend.call_count() == 2 * cases.size());
}

TEST_CASE("traces round-trip through JSONL") {
    TempDir dir;
    const auto space = fixture_space();
    llm::MockBackend backend(space);
    std::vector<corpus::Case> cases{fixture_case()};
    std::vector<scm::CandidateSet> candidates{fixture_candidates()};
    const auto traces =
        reason_all(cases, candidates, space, backend, nullptr, ReasonerConfig{});

    save_traces(dir.file("traces.jsonl"), traces);
    const auto loaded = load_traces(dir.file("traces.jsonl"));
    REQUIRE(loaded.size() == 1);
    CHECK(loaded[0].case_id == traces[0].case_id);
    CHECK(loaded[0].selection.final_articles == traces[0].selection.final_articles);
    CHECK(loaded[0].verdicts.size() == traces[0].verdicts.size());
    for (std::size_t i = 0; i < loaded[0].verdicts.size(); ++i) {
        CHECK(loaded[0].verdicts[i].article_id == traces[0].verdicts[i].article_id);
        CHECK((loaded[0].verdicts[i].verdict == traces[0].verdicts[i].verdict));
    }
    CHECK(loaded[0].stage1_response == traces[0].stage1_response);

    // serialization itself is deterministic
    save_traces(dir.file("traces2.jsonl"), loaded);
    CHECK(test_util::read_file(dir.file("traces.jsonl")) ==
          test_util::read_file(dir.file("traces2.jsonl")));
}

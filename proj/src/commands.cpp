#include "unilap/commands.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <iostream>
#include <memory>
#include <unordered_map>

#include "json.hpp"
#include "unilap/errors.hpp"
#include "unilap/eval.hpp"
#include "unilap/jsonl.hpp"
#include "unilap/kernels.hpp"
#include "unilap/llm_client.hpp"
#include "unilap/reasoner.hpp"

namespace unilap::cli {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::size_t count_codepoints(const std::string& s) {
    std::size_t n = 0;
    for (unsigned char ch : s) {
        if ((ch & 0xC0) != 0x80) {
            ++n;
        }
    }
    return n;
}

struct SplitStats {
    std::size_t cases = 0;
    double fact_chars = 0.0;
    double articles = 0.0;

    void add(const corpus::Case& c) {
        ++cases;
        fact_chars += static_cast<double>(count_codepoints(c.fact));
        articles += static_cast<double>(c.gold_articles.size());
    }
    ordered_json to_json() const {
        return ordered_json{
            {"cases", cases},
            {"avg_fact_chars", cases == 0 ? 0.0 : fact_chars / static_cast<double>(cases)},
            {"avg_articles_per_case",
             cases == 0 ? 0.0 : articles / static_cast<double>(cases)},
        };
    }
};

void write_run_meta(const RunPaths& paths, const std::string& command, double seconds,
                    std::size_t backend_calls) {
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    ordered_json meta{
        {"command", command},
        {"finished_unix_ms",
         std::chrono::duration_cast<std::chrono::milliseconds>(now).count()},
        {"duration_seconds", seconds},
        {"kernels", kernels::active_name()},
    };
    if (command == "reason" || command == "pipeline") {
        meta["backend_calls"] = backend_calls;
    }
    std::ofstream out(paths.run_meta(), std::ios::binary);
    if (out) {
        out << meta.dump(2) << '\n';
    }
}

class Timer {
public:
    Timer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

std::vector<corpus::Case> load_raw_split(const std::filesystem::path& path,
                                         corpus::CaseFormat format, const char* split_name) {
    if (path.empty()) {
        throw UsageError(std::string("data path for split '") + split_name +
                         "' is not configured");
    }
    auto result = corpus::load_cases(path, format);
    for (const auto& issue : result.issues) {
        std::cerr << path.string() << ":" << issue.line << ": skipped record: " << issue.message
                  << "\n";
    }
    return std::move(result.cases);
}

struct CleanCounters {
    std::size_t empty_fact = 0;
    std::size_t empty_labels = 0;
    std::size_t leakage = 0;
};

std::vector<corpus::Case> clean_split(std::vector<corpus::Case> cases, CleanCounters& counters) {
    std::vector<corpus::Case> out;
    out.reserve(cases.size());
    for (auto& c : cases) {
        auto cleaned = corpus::clean_leading_noise(std::move(c));
        if (cleaned.fact.empty()) {
            ++counters.empty_fact;
            continue;
        }
        out.push_back(std::move(cleaned));
    }
    const std::size_t before = out.size();
    out = corpus::filter_empty_labels(std::move(out));
    counters.empty_labels += before - out.size();
    return out;
}

std::vector<corpus::Case> load_prepared_split(const std::filesystem::path& path,
                                              const char* split_name) {
    auto result = corpus::load_cases(path, corpus::CaseFormat::GenericJsonl);
    if (!result.issues.empty()) {
        throw DataError(path.string() + ": prepared " + split_name +
                        " split contains malformed records; rerun prepare");
    }
    return std::move(result.cases);
}

struct CandidateRow {
    std::string id;
    std::vector<std::pair<std::string, double>> candidates;
    std::vector<std::string> above_threshold;
};

std::vector<CandidateRow> load_candidate_rows(const std::filesystem::path& path) {
    std::vector<CandidateRow> rows;
    jsonl::for_each_line(path, [&](std::size_t lineno, const std::string& line) {
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.is_object() || !rec.contains("id") ||
            !rec.contains("candidates")) {
            throw DataError(path.string() + ":" + std::to_string(lineno) +
                            ": malformed candidate record");
        }
        CandidateRow row;
        row.id = rec["id"].get<std::string>();
        for (const auto& c : rec["candidates"]) {
            row.candidates.emplace_back(c.value("article_id", std::string{}),
                                        c.value("prob", 0.0));
        }
        row.above_threshold = rec.value("above_threshold", std::vector<std::string>{});
        rows.push_back(std::move(row));
    });
    return rows;
}

std::vector<std::size_t> ids_to_indices(const std::vector<std::string>& ids,
                                        const corpus::LabelSpace& space,
                                        const std::string& context) {
    std::vector<std::size_t> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        auto idx = space.index_of(id);
        if (!idx) {
            throw DataError(context + ": unknown article id '" + id + "'");
        }
        out.push_back(*idx);
    }
    return out;
}

}  // namespace

void cmd_prepare(const RunConfig& config) {
    Timer timer;
    const RunPaths paths(config.output_dir);
    std::filesystem::create_directories(config.output_dir);

    auto train = load_raw_split(config.data.train, config.data.format, "train");
    auto validation = load_raw_split(config.data.validation, config.data.format, "validation");
    auto test = load_raw_split(config.data.test, config.data.format, "test");

    CleanCounters counters;
    train = clean_split(std::move(train), counters);
    validation = clean_split(std::move(validation), counters);
    test = clean_split(std::move(test), counters);
    if (train.empty()) {
        throw DataError("training split is empty after cleaning");
    }

    corpus::ArticleTexts texts;
    if (!config.data.articles.empty()) {
        texts = corpus::load_article_texts(config.data.articles);
    }

    // The label space is derived from the training split only.
    auto filtered = corpus::filter_by_frequency(std::move(train), config.data.min_label_count,
                                                texts);
    train = std::move(filtered.cases);
    corpus::LabelSpace space = std::move(filtered.label_space);
    if (space.size() < 2) {
        throw DataError("label space needs at least 2 articles, got " +
                        std::to_string(space.size()));
    }

    const std::size_t val_before = validation.size();
    const std::size_t test_before = test.size();
    validation = corpus::restrict_to_label_space(std::move(validation), space);
    test = corpus::restrict_to_label_space(std::move(test), space);
    const std::size_t out_of_space =
        (val_before - validation.size()) + (test_before - test.size());

    if (config.data.leakage_filter) {
        auto run = [&](std::vector<corpus::Case> cases) {
            auto result =
                corpus::filter_leakage(std::move(cases), space, config.data.leakage_patterns);
            counters.leakage += result.removed;
            return std::move(result.cases);
        };
        train = run(std::move(train));
        validation = run(std::move(validation));
        test = run(std::move(test));
        if (train.empty()) {
            throw DataError("training split is empty after leakage filtering");
        }
    }

    corpus::save_cases(paths.train_cases(), train);
    corpus::save_cases(paths.validation_cases(), validation);
    corpus::save_cases(paths.test_cases(), test);
    space.save(paths.label_space());

    SplitStats train_stats, val_stats, test_stats, overall;
    for (const auto& c : train) {
        train_stats.add(c);
        overall.add(c);
    }
    for (const auto& c : validation) {
        val_stats.add(c);
        overall.add(c);
    }
    for (const auto& c : test) {
        test_stats.add(c);
        overall.add(c);
    }
    ordered_json stats{
        {"classes", space.size()},
        {"splits",
         ordered_json{{"train", train_stats.to_json()},
                      {"validation", val_stats.to_json()},
                      {"test", test_stats.to_json()}}},
        {"overall", overall.to_json()},
        {"removed",
         ordered_json{{"empty_fact", counters.empty_fact},
                      {"empty_labels", counters.empty_labels},
                      {"out_of_label_space", out_of_space},
                      {"leakage", counters.leakage}}},
    };
    std::ofstream stats_out(paths.prepare_stats(), std::ios::binary);
    if (!stats_out) {
        throw DataError("cannot write stats: " + paths.prepare_stats().string());
    }
    stats_out << stats.dump(2) << '\n';

    std::cout << "prepare: " << train.size() << " train / " << validation.size()
              << " validation / " << test.size() << " test cases, " << space.size()
              << " articles\n";
    write_run_meta(paths, "prepare", timer.seconds(), 0);
}

void cmd_train(const RunConfig& config) {
    Timer timer;
    const RunPaths paths(config.output_dir);

    corpus::DatasetSplit splits;
    splits.train = load_prepared_split(paths.train_cases(), "train");
    splits.validation = load_prepared_split(paths.validation_cases(), "validation");
    splits.label_space = corpus::LabelSpace::load(paths.label_space());

    auto vocab = features::Vocabulary::fit(splits.train, config.encoder);

    scm::TrainConfig train_config = config.train;
    train_config.seed = config.train_seed();
    auto result = scm::train(splits, vocab, train_config);

    vocab.save(paths.vocabulary());
    scm::save_checkpoint(paths.checkpoint(), result.model, train_config);
    {
        jsonl::Writer log(paths.training_log());
        for (const auto& e : result.log) {
            ordered_json rec{{"epoch", e.epoch},
                             {"bce", e.bce},
                             {"topk", e.topk},
                             {"overall", e.overall}};
            if (e.val_topk_acc) {
                rec["val_topk_acc"] = *e.val_topk_acc;
            } else {
                rec["val_topk_acc"] = nullptr;
            }
            log.write(rec);
        }
    }

    std::cout << "train: d=" << vocab.dim() << " m=" << splits.label_space.size() << " epochs="
              << result.log.size();
    if (result.best_val_topk_acc) {
        std::cout << " best_epoch=" << result.best_epoch << " val_topk_acc="
                  << *result.best_val_topk_acc;
    }
    std::cout << "\n";
    write_run_meta(paths, "train", timer.seconds(), 0);
}

void cmd_predict(const RunConfig& config) {
    Timer timer;
    const RunPaths paths(config.output_dir);

    const auto space = corpus::LabelSpace::load(paths.label_space());
    const auto vocab = features::Vocabulary::load(paths.vocabulary());
    const auto ckpt = scm::load_checkpoint(paths.checkpoint());
    const auto test = load_prepared_split(paths.test_cases(), "test");
    if (ckpt.model.label_count() != space.size()) {
        throw DataError("checkpoint label count does not match the label space");
    }
    scm::TrainConfig predict_config = config.train;
    predict_config.seed = config.train_seed();
    predict_config.validate(space.size());

    jsonl::Writer out(paths.candidates());
    for (const auto& c : test) {
        const auto probs = scm::forward(ckpt.model, features::encode(c.fact, vocab));
        const auto topk = scm::select_topk(probs, predict_config.k);
        const auto above = scm::threshold_select(probs, predict_config.threshold);
        ordered_json candidates = ordered_json::array();
        for (const auto& cand : topk) {
            candidates.push_back(ordered_json{
                {"article_id", space.entry(cand.index).article_id}, {"prob", cand.prob}});
        }
        std::vector<std::string> above_ids;
        above_ids.reserve(above.size());
        for (auto idx : above) {
            above_ids.push_back(space.entry(idx).article_id);
        }
        out.write(ordered_json{
            {"id", c.id}, {"candidates", candidates}, {"above_threshold", above_ids}});
    }
    std::cout << "predict: " << test.size() << " cases, k=" << predict_config.k << "\n";
    write_run_meta(paths, "predict", timer.seconds(), 0);
}

namespace {

class CountingBackend final : public llm::LlmBackend {
public:
    explicit CountingBackend(llm::LlmBackend& inner) : inner_(inner) {}
    std::string id() const override { return inner_.id(); }
    std::string complete(const llm::ChatRequest& request) override {
        calls_.fetch_add(1);
        return inner_.complete(request);
    }
    std::size_t calls() const { return calls_.load(); }

private:
    llm::LlmBackend& inner_;
    std::atomic<std::size_t> calls_{0};
};

}  // namespace

std::size_t cmd_reason(const RunConfig& config) {
    Timer timer;
    const RunPaths paths(config.output_dir);

    const auto space = corpus::LabelSpace::load(paths.label_space());
    const auto test = load_prepared_split(paths.test_cases(), "test");
    const auto rows = load_candidate_rows(paths.candidates());

    std::unordered_map<std::string, const CandidateRow*> by_id;
    for (const auto& row : rows) {
        by_id.emplace(row.id, &row);
    }
    std::vector<scm::CandidateSet> candidate_sets;
    candidate_sets.reserve(test.size());
    for (const auto& c : test) {
        auto it = by_id.find(c.id);
        if (it == by_id.end()) {
            throw DataError("no candidate set for case " + c.id + "; rerun predict");
        }
        scm::CandidateSet set;
        for (const auto& [article_id, prob] : it->second->candidates) {
            auto idx = space.index_of(article_id);
            if (!idx) {
                throw DataError("candidate article '" + article_id +
                                "' is not in the label space");
            }
            set.push_back({*idx, prob});
        }
        candidate_sets.push_back(std::move(set));
    }

    std::unique_ptr<llm::LlmBackend> backend;
    if (config.backend.kind == "mock") {
        backend = std::make_unique<llm::MockBackend>(space);
    } else {
        llm::HttpBackendConfig http;
        http.base_url = config.backend.base_url;
        http.model = config.backend.model;
        http.max_retries = config.backend.max_retries;
        backend = std::make_unique<llm::HttpBackend>(http);
    }
    CountingBackend counting(*backend);
    llm::ResponseCache cache(config.cache_directory());

    reasoner::ReasonerConfig rc;
    rc.temperature = config.backend.temperature;
    rc.max_tokens = config.backend.max_tokens;
    rc.concurrency = config.backend.concurrency;
    rc.requests_per_minute = config.backend.requests_per_minute;

    const auto traces = reasoner::reason_all(test, candidate_sets, space, counting, &cache, rc);
    reasoner::save_traces(paths.traces(), traces);

    std::size_t errors = 0;
    for (const auto& t : traces) {
        if (!t.error.empty()) {
            ++errors;
        }
    }
    std::cout << "reason: " << traces.size() << " cases, " << counting.calls()
              << " backend calls, " << errors << " errors\n";
    write_run_meta(paths, "reason", timer.seconds(), counting.calls());
    return counting.calls();
}

void cmd_eval(const RunConfig& config) {
    Timer timer;
    const RunPaths paths(config.output_dir);

    const auto space = corpus::LabelSpace::load(paths.label_space());
    const auto test = load_prepared_split(paths.test_cases(), "test");
    const auto rows = load_candidate_rows(paths.candidates());
    std::unordered_map<std::string, const CandidateRow*> rows_by_id;
    for (const auto& row : rows) {
        rows_by_id.emplace(row.id, &row);
    }

    const bool have_traces = std::filesystem::exists(paths.traces());
    std::unordered_map<std::string, const reasoner::ReasoningTrace*> traces_by_id;
    std::vector<reasoner::ReasoningTrace> traces;
    if (have_traces) {
        traces = reasoner::load_traces(paths.traces());
        for (const auto& t : traces) {
            traces_by_id.emplace(t.case_id, &t);
        }
    } else {
        std::cerr << "eval: no traces found, evaluating the SCM-only threshold selection\n";
    }

    std::vector<eval::PredictionRecord> records;
    std::size_t stage1_fallbacks = 0;
    std::size_t stage2_fallbacks = 0;
    records.reserve(test.size());
    for (const auto& c : test) {
        auto row_it = rows_by_id.find(c.id);
        if (row_it == rows_by_id.end()) {
            throw DataError("no candidate set for case " + c.id + "; rerun predict");
        }
        eval::PredictionRecord rec;
        rec.case_id = c.id;
        rec.gold = ids_to_indices(c.gold_articles, space, "case " + c.id);
        std::vector<std::string> candidate_ids;
        for (const auto& [article_id, prob] : row_it->second->candidates) {
            candidate_ids.push_back(article_id);
        }
        rec.candidates = ids_to_indices(candidate_ids, space, "case " + c.id);
        if (have_traces) {
            auto trace_it = traces_by_id.find(c.id);
            if (trace_it == traces_by_id.end()) {
                throw DataError("no reasoning trace for case " + c.id + "; rerun reason");
            }
            const auto& t = *trace_it->second;
            rec.has_stage_info = true;
            std::vector<std::string> matched;
            for (const auto& v : t.verdicts) {
                if (v.status == reasoner::ParseStatus::Fallback) {
                    ++stage1_fallbacks;
                }
                if (v.verdict == reasoner::Verdict::Match) {
                    matched.push_back(v.article_id);
                }
            }
            if (t.selection.status == reasoner::ParseStatus::Fallback) {
                ++stage2_fallbacks;
            }
            rec.stage1_matched = ids_to_indices(matched, space, "case " + c.id);
            if (t.error.empty()) {
                rec.predicted =
                    ids_to_indices(t.selection.final_articles, space, "case " + c.id);
            }
        } else {
            rec.predicted = ids_to_indices(row_it->second->above_threshold, space,
                                           "case " + c.id);
        }
        eval::normalize(rec);
        records.push_back(std::move(rec));
    }

    auto report = eval::evaluate(records, space.size());
    report.stage1_fallbacks = stage1_fallbacks;
    report.stage2_fallbacks = stage2_fallbacks;
    eval::emit_report(report, space, paths.report(), paths.per_label_csv());

    std::cout << "eval: acc=" << report.accuracy << " ma_f=" << report.macro_f1
              << " topk_acc=" << report.topk_acc << " (" << report.record_count << " cases)\n";
    write_run_meta(paths, "eval", timer.seconds(), 0);
}

std::size_t cmd_pipeline(const RunConfig& config) {
    Timer timer;
    cmd_prepare(config);
    cmd_train(config);
    cmd_predict(config);
    const std::size_t calls = cmd_reason(config);
    cmd_eval(config);
    write_run_meta(RunPaths(config.output_dir), "pipeline", timer.seconds(), calls);
    return calls;
}

}  // namespace unilap::cli

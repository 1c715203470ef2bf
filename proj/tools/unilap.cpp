// unilap: legal article prediction pipeline.
//
// Subcommands: prepare, train, predict, reason, eval, pipeline. A JSON
// config file drives a run; individual flags override config fields.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "unilap/commands.hpp"
#include "unilap/errors.hpp"

namespace {

struct Overrides {
    std::optional<std::string> output_dir;
    std::optional<std::string> cache_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> train_path;
    std::optional<std::string> validation_path;
    std::optional<std::string> test_path;
    std::optional<std::string> articles_path;
    std::optional<std::string> format;
    std::optional<std::size_t> min_label_count;
    std::optional<bool> leakage_filter;
    std::optional<std::string> tokenizer;
    std::optional<int> ngram;
    std::optional<std::size_t> min_df;
    std::optional<std::size_t> max_features;
    std::optional<double> lambda1;
    std::optional<double> lambda2;
    std::optional<std::size_t> k;
    std::optional<double> learning_rate;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> batch_size;
    std::optional<double> threshold;
    std::optional<std::string> backend_kind;
    std::optional<std::string> base_url;
    std::optional<std::string> model;
    std::optional<std::size_t> concurrency;
    std::optional<double> requests_per_minute;
};

void add_override_flags(CLI::App* cmd, Overrides& ov) {
    cmd->add_option("--output-dir", ov.output_dir, "Output directory");
    cmd->add_option("--cache-dir", ov.cache_dir, "LLM response cache directory");
    cmd->add_option("--seed", ov.seed, "Root seed for every stochastic component");
    cmd->add_option("--train", ov.train_path, "Raw training split (prepare)");
    cmd->add_option("--validation", ov.validation_path, "Raw validation split (prepare)");
    cmd->add_option("--test", ov.test_path, "Raw test split (prepare)");
    cmd->add_option("--articles", ov.articles_path, "Article texts JSONL (prepare)");
    cmd->add_option("--format", ov.format, "Input format: generic-jsonl or cail-json");
    cmd->add_option("--min-label-count", ov.min_label_count,
                    "Keep articles with more than this many training appearances");
    cmd->add_flag("--leakage-filter,!--no-leakage-filter", ov.leakage_filter,
                  "Filter cases whose facts leak label mentions");
    cmd->add_option("--tokenizer", ov.tokenizer, "unicode-words or char-ngrams");
    cmd->add_option("--ngram", ov.ngram, "Character n-gram size (char-ngrams mode)");
    cmd->add_option("--min-df", ov.min_df, "Minimum document frequency");
    cmd->add_option("--max-features", ov.max_features, "Vocabulary size cap");
    cmd->add_option("--lambda1", ov.lambda1, "BCE loss weight");
    cmd->add_option("--lambda2", ov.lambda2, "Top-K loss weight");
    cmd->add_option("-k,--top-k", ov.k, "Candidate set size");
    cmd->add_option("--learning-rate", ov.learning_rate, "Gradient descent step size");
    cmd->add_option("--epochs", ov.epochs, "Training epochs");
    cmd->add_option("--batch-size", ov.batch_size, "Mini-batch size");
    cmd->add_option("--threshold", ov.threshold, "SCM-only selection threshold");
    cmd->add_option("--backend", ov.backend_kind, "LLM backend: mock or http");
    cmd->add_option("--base-url", ov.base_url, "Chat-completions base URL (http backend)");
    cmd->add_option("--model", ov.model, "Model name (http backend)");
    cmd->add_option("--concurrency", ov.concurrency, "Concurrent cases in reason");
    cmd->add_option("--rpm", ov.requests_per_minute, "Backend requests per minute (0 = off)");
}

unilap::cli::RunConfig resolve_config(const std::string& config_path, const Overrides& ov) {
    unilap::cli::RunConfig config;
    if (!config_path.empty()) {
        config = unilap::cli::load_run_config(config_path);
    }
    if (ov.output_dir) config.output_dir = *ov.output_dir;
    if (ov.cache_dir) config.cache_dir = *ov.cache_dir;
    if (ov.seed) {
        config.seed = *ov.seed;
        if (!config.train_seed_set) {
            config.train.seed = *ov.seed;
        }
    }
    if (ov.train_path) config.data.train = *ov.train_path;
    if (ov.validation_path) config.data.validation = *ov.validation_path;
    if (ov.test_path) config.data.test = *ov.test_path;
    if (ov.articles_path) config.data.articles = *ov.articles_path;
    if (ov.format) {
        if (*ov.format == "generic-jsonl") {
            config.data.format = unilap::corpus::CaseFormat::GenericJsonl;
        } else if (*ov.format == "cail-json") {
            config.data.format = unilap::corpus::CaseFormat::CailJson;
        } else {
            throw unilap::UsageError("unknown --format '" + *ov.format + "'");
        }
    }
    if (ov.min_label_count) config.data.min_label_count = *ov.min_label_count;
    if (ov.leakage_filter) config.data.leakage_filter = *ov.leakage_filter;
    if (ov.tokenizer) {
        if (*ov.tokenizer == "unicode-words") {
            config.encoder.mode = unilap::features::TokenizerMode::UnicodeWords;
        } else if (*ov.tokenizer == "char-ngrams") {
            config.encoder.mode = unilap::features::TokenizerMode::CharNgrams;
        } else {
            throw unilap::UsageError("unknown --tokenizer '" + *ov.tokenizer + "'");
        }
    }
    if (ov.ngram) config.encoder.ngram = *ov.ngram;
    if (ov.min_df) config.encoder.min_df = *ov.min_df;
    if (ov.max_features) config.encoder.max_features = *ov.max_features;
    if (ov.lambda1) config.train.lambda1 = *ov.lambda1;
    if (ov.lambda2) config.train.lambda2 = *ov.lambda2;
    if (ov.k) config.train.k = *ov.k;
    if (ov.learning_rate) config.train.learning_rate = *ov.learning_rate;
    if (ov.epochs) config.train.epochs = *ov.epochs;
    if (ov.batch_size) config.train.batch_size = *ov.batch_size;
    if (ov.threshold) config.train.threshold = *ov.threshold;
    if (ov.backend_kind) {
        if (*ov.backend_kind != "mock" && *ov.backend_kind != "http") {
            throw unilap::UsageError("unknown --backend '" + *ov.backend_kind + "'");
        }
        config.backend.kind = *ov.backend_kind;
    }
    if (ov.base_url) config.backend.base_url = *ov.base_url;
    if (ov.model) config.backend.model = *ov.model;
    if (ov.concurrency) config.backend.concurrency = *ov.concurrency;
    if (ov.requests_per_minute) config.backend.requests_per_minute = *ov.requests_per_minute;
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Legal article prediction: classifier candidates + two-stage LLM selection"};
    app.require_subcommand(1);

    std::string config_path;
    Overrides ov;
    app.add_option("-c,--config", config_path, "JSON run configuration")->expected(1);

    auto* prepare = app.add_subcommand("prepare", "Clean datasets and build the label space");
    auto* train = app.add_subcommand("train", "Fit the classifier on the prepared splits");
    auto* predict = app.add_subcommand("predict", "Emit candidate sets for the test split");
    auto* reason = app.add_subcommand("reason", "Run the two-stage LLM selection");
    auto* eval = app.add_subcommand("eval", "Score predictions and emit the report");
    auto* pipeline = app.add_subcommand("pipeline", "prepare-train-predict-reason-eval");
    for (auto* cmd : {prepare, train, predict, reason, eval, pipeline}) {
        add_override_flags(cmd, ov);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? unilap::kExitOk : unilap::kExitUsage;
    }

    try {
        const auto config = resolve_config(config_path, ov);
        if (prepare->parsed()) {
            unilap::cli::cmd_prepare(config);
        } else if (train->parsed()) {
            unilap::cli::cmd_train(config);
        } else if (predict->parsed()) {
            unilap::cli::cmd_predict(config);
        } else if (reason->parsed()) {
            unilap::cli::cmd_reason(config);
        } else if (eval->parsed()) {
            unilap::cli::cmd_eval(config);
        } else if (pipeline->parsed()) {
            unilap::cli::cmd_pipeline(config);
        }
        return unilap::kExitOk;
    } catch (const unilap::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return unilap::kExitUsage;
    } catch (const unilap::BackendError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return unilap::kExitBackend;
    } catch (const unilap::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return unilap::kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return unilap::kExitData;
    }
}

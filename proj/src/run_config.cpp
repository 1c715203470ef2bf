#include "unilap/run_config.hpp"

#include <fstream>

#include "json.hpp"
#include "unilap/errors.hpp"

namespace unilap::cli {

using nlohmann::json;

namespace {

corpus::CaseFormat parse_format(const std::string& name) {
    if (name == "generic-jsonl") {
        return corpus::CaseFormat::GenericJsonl;
    }
    if (name == "cail-json") {
        return corpus::CaseFormat::CailJson;
    }
    throw UsageError("unknown case format '" + name + "' (expected generic-jsonl or cail-json)");
}

features::TokenizerMode parse_tokenizer(const std::string& name) {
    if (name == "unicode-words") {
        return features::TokenizerMode::UnicodeWords;
    }
    if (name == "char-ngrams") {
        return features::TokenizerMode::CharNgrams;
    }
    throw UsageError("unknown tokenizer mode '" + name +
                     "' (expected unicode-words or char-ngrams)");
}

}  // namespace

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw UsageError("cannot open config file: " + path.string());
    }
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw UsageError("config file is not a JSON object: " + path.string());
    }

    RunConfig config;
    config.seed = doc.value("seed", std::uint64_t{42});
    config.output_dir = doc.value("output_dir", std::string{"out"});
    config.cache_dir = doc.value("cache_dir", std::string{});

    if (doc.contains("data")) {
        const auto& d = doc["data"];
        config.data.train = d.value("train", std::string{});
        config.data.validation = d.value("validation", std::string{});
        config.data.test = d.value("test", std::string{});
        config.data.format = parse_format(d.value("format", std::string{"generic-jsonl"}));
        config.data.articles = d.value("articles", std::string{});
        config.data.min_label_count = d.value("min_label_count", std::size_t{0});
        config.data.leakage_filter = d.value("leakage_filter", false);
        config.data.leakage_patterns =
            d.value("leakage_patterns", std::vector<std::string>{});
    }

    if (doc.contains("encoder")) {
        const auto& e = doc["encoder"];
        config.encoder.mode = parse_tokenizer(e.value("mode", std::string{"unicode-words"}));
        config.encoder.ngram = e.value("ngram", 2);
        config.encoder.min_df = e.value("min_df", std::size_t{1});
        config.encoder.max_features = e.value("max_features", std::size_t{50000});
        config.encoder.smooth_idf = e.value("smooth_idf", true);
    }

    if (doc.contains("train")) {
        const auto& t = doc["train"];
        config.train.lambda1 = t.value("lambda1", 1.0);
        config.train.lambda2 = t.value("lambda2", 1.0);
        config.train.k = t.value("k", std::size_t{3});
        config.train.learning_rate = t.value("learning_rate", 0.5);
        config.train.epochs = t.value("epochs", std::size_t{30});
        config.train.batch_size = t.value("batch_size", std::size_t{32});
        config.train.threshold = t.value("threshold", 0.3);
        if (t.contains("seed")) {
            config.train.seed = t["seed"].get<std::uint64_t>();
            config.train_seed_set = true;
        }
    }
    if (!config.train_seed_set) {
        config.train.seed = config.seed;
    }

    if (doc.contains("backend")) {
        const auto& b = doc["backend"];
        config.backend.kind = b.value("kind", std::string{"mock"});
        config.backend.base_url = b.value("base_url", std::string{"https://api.openai.com"});
        config.backend.model = b.value("model", std::string{"gpt-4o"});
        config.backend.temperature = b.value("temperature", 0.0);
        config.backend.max_tokens = b.value("max_tokens", 2048);
        config.backend.max_retries = b.value("max_retries", 3);
        config.backend.requests_per_minute = b.value("requests_per_minute", 0.0);
        config.backend.concurrency = b.value("concurrency", std::size_t{1});
        if (config.backend.kind != "mock" && config.backend.kind != "http") {
            throw UsageError("backend.kind must be 'mock' or 'http', got '" +
                             config.backend.kind + "'");
        }
    }

    return config;
}

}  // namespace unilap::cli

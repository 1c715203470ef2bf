#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "unilap/corpus.hpp"
#include "unilap/features.hpp"
#include "unilap/scm.hpp"

namespace unilap::cli {

struct DataConfig {
    std::filesystem::path train;
    std::filesystem::path validation;
    std::filesystem::path test;
    corpus::CaseFormat format = corpus::CaseFormat::GenericJsonl;
    std::filesystem::path articles;  // label-space texts (article_id, article_text)
    std::size_t min_label_count = 0;
    bool leakage_filter = false;
    std::vector<std::string> leakage_patterns;  // empty = derive from label space
};

struct BackendConfig {
    std::string kind = "mock";  // "mock" or "http"
    std::string base_url = "https://api.openai.com";
    std::string model = "gpt-4o";
    double temperature = 0.0;
    int max_tokens = 2048;
    int max_retries = 3;
    double requests_per_minute = 0.0;
    std::size_t concurrency = 1;
};

// One config file fully determines a run; CLI flags override single fields.
// Every stochastic component derives from `seed` unless train.seed is set
// explicitly.
struct RunConfig {
    std::uint64_t seed = 42;
    std::filesystem::path output_dir = "out";
    std::filesystem::path cache_dir;  // empty = <output_dir>/cache
    DataConfig data;
    features::EncoderConfig encoder;
    scm::TrainConfig train;
    bool train_seed_set = false;
    BackendConfig backend;

    std::filesystem::path cache_directory() const {
        return cache_dir.empty() ? output_dir / "cache" : cache_dir;
    }
    std::uint64_t train_seed() const { return train_seed_set ? train.seed : seed; }
};

RunConfig load_run_config(const std::filesystem::path& path);

// Fixed file names inside output_dir; every command reads its inputs from
// the previous command's outputs.
struct RunPaths {
    explicit RunPaths(const std::filesystem::path& out) : root(out) {}
    std::filesystem::path root;
    std::filesystem::path train_cases() const { return root / "train.jsonl"; }
    std::filesystem::path validation_cases() const { return root / "validation.jsonl"; }
    std::filesystem::path test_cases() const { return root / "test.jsonl"; }
    std::filesystem::path label_space() const { return root / "label_space.jsonl"; }
    std::filesystem::path prepare_stats() const { return root / "prepare_stats.json"; }
    std::filesystem::path vocabulary() const { return root / "vocabulary.jsonl"; }
    std::filesystem::path checkpoint() const { return root / "model.json"; }
    std::filesystem::path training_log() const { return root / "training_log.jsonl"; }
    std::filesystem::path candidates() const { return root / "candidates.jsonl"; }
    std::filesystem::path traces() const { return root / "traces.jsonl"; }
    std::filesystem::path report() const { return root / "report.json"; }
    std::filesystem::path per_label_csv() const { return root / "per_label.csv"; }
    std::filesystem::path run_meta() const { return root / "run_meta.json"; }
};

}  // namespace unilap::cli

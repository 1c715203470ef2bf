#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "unilap/corpus.hpp"

namespace unilap::features {

enum class TokenizerMode { UnicodeWords, CharNgrams };

struct EncoderConfig {
    TokenizerMode mode = TokenizerMode::UnicodeWords;
    int ngram = 2;                    // used by CharNgrams, must be in [1, 4]
    std::size_t min_df = 1;           // minimum document frequency
    std::size_t max_features = 50000; // vocabulary size cap
    bool smooth_idf = true;

    void validate() const;
};

// Deterministic tokenization. UnicodeWords lowercases ASCII and splits on
// non-letter/non-digit boundaries; CharNgrams emits overlapping n-grams of
// codepoints within whitespace-separated runs (serves scripts without word
// spacing).
std::vector<std::string> tokenize(std::string_view text, TokenizerMode mode, int ngram = 2);

// Sparse tf-idf representation of one fact. Indices strictly increasing;
// L2 norm is 1, or 0 for an all-out-of-vocabulary input.
struct FeatureVector {
    std::vector<std::size_t> indices;
    std::vector<double> weights;

    std::size_t nnz() const { return indices.size(); }
    double l2_norm() const;
};

class Vocabulary {
public:
    struct TermEntry {
        std::string term;
        std::size_t df = 0;
    };

    // Terms with document frequency >= min_df, truncated to the
    // max_features most frequent (ties broken by lexicographic term
    // order). Throws DataError when nothing survives.
    static Vocabulary fit(const std::vector<corpus::Case>& corpus, const EncoderConfig& config);

    std::size_t dim() const { return terms_.size(); }
    std::size_t doc_count() const { return doc_count_; }
    const EncoderConfig& config() const { return config_; }
    const std::vector<TermEntry>& terms() const { return terms_; }
    std::optional<std::size_t> index_of(const std::string& term) const;

    // JSONL: one metadata line, then (term, index, df) per line.
    void save(const std::filesystem::path& path) const;
    static Vocabulary load(const std::filesystem::path& path);

private:
    std::vector<TermEntry> terms_;  // position = feature index
    std::unordered_map<std::string, std::size_t> index_;
    std::size_t doc_count_ = 0;
    EncoderConfig config_;
};

// tf-idf encoding: weight(t) = tf(t) * (1 + ln((1+N)/(1+df(t)))) with the
// smoothing flag on (ln(N/df) otherwise), L2-normalized. Out-of-vocabulary
// tokens are ignored; an all-OOV fact yields the zero vector.
FeatureVector encode(std::string_view fact, const Vocabulary& vocab);

}  // namespace unilap::features

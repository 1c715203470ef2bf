#include "unilap/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "json.hpp"
#include "unilap/errors.hpp"
#include "unilap/jsonl.hpp"
#include "unilap/kernels.hpp"

namespace unilap::features {

using nlohmann::json;
using nlohmann::ordered_json;

void EncoderConfig::validate() const {
    if (ngram < 1 || ngram > 4) {
        throw UsageError("encoder ngram must be in [1, 4], got " + std::to_string(ngram));
    }
    if (max_features < 1) {
        throw UsageError("encoder max_features must be >= 1");
    }
}

namespace {

// Decodes the UTF-8 codepoint at `pos`; byte length written to `len`.
// Malformed bytes decode as U+FFFD with length 1, keeping tokenization
// total on arbitrary input.
char32_t decode_utf8(std::string_view s, std::size_t pos, std::size_t* len) {
    const auto byte = [&](std::size_t i) { return static_cast<unsigned char>(s[i]); };
    unsigned char b0 = byte(pos);
    if (b0 < 0x80) {
        *len = 1;
        return b0;
    }
    auto cont = [&](std::size_t i) { return i < s.size() && (byte(i) & 0xC0) == 0x80; };
    if ((b0 & 0xE0) == 0xC0 && cont(pos + 1)) {
        *len = 2;
        return ((b0 & 0x1Fu) << 6) | (byte(pos + 1) & 0x3Fu);
    }
    if ((b0 & 0xF0) == 0xE0 && cont(pos + 1) && cont(pos + 2)) {
        *len = 3;
        return ((b0 & 0x0Fu) << 12) | ((byte(pos + 1) & 0x3Fu) << 6) | (byte(pos + 2) & 0x3Fu);
    }
    if ((b0 & 0xF8) == 0xF0 && cont(pos + 1) && cont(pos + 2) && cont(pos + 3)) {
        *len = 4;
        return ((b0 & 0x07u) << 18) | ((byte(pos + 1) & 0x3Fu) << 12) |
               ((byte(pos + 2) & 0x3Fu) << 6) | (byte(pos + 3) & 0x3Fu);
    }
    *len = 1;
    return 0xFFFD;
}

bool is_space_cp(char32_t cp) {
    return cp == U' ' || cp == U'\t' || cp == U'\n' || cp == U'\r' || cp == U'\f' ||
           cp == U'\v' || cp == 0x00A0 || (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 ||
           cp == 0x2029 || cp == 0x205F || cp == 0x3000;
}

// Word characters: ASCII alphanumerics plus any non-ASCII codepoint outside
// the common punctuation/space blocks. Fullwidth letters and digits stay in.
bool is_word_cp(char32_t cp) {
    if (cp < 0x80) {
        return (cp >= U'0' && cp <= U'9') || (cp >= U'a' && cp <= U'z') ||
               (cp >= U'A' && cp <= U'Z');
    }
    if (is_space_cp(cp)) {
        return false;
    }
    if (cp >= 0x00A0 && cp <= 0x00BF) {  // Latin-1 punctuation and signs
        return false;
    }
    if (cp == 0x00D7 || cp == 0x00F7) {
        return false;
    }
    if (cp >= 0x2000 && cp <= 0x206F) {  // general punctuation
        return false;
    }
    if (cp >= 0x3001 && cp <= 0x303F) {  // CJK symbols and punctuation
        return false;
    }
    if ((cp >= 0xFF01 && cp <= 0xFF0F) || (cp >= 0xFF1A && cp <= 0xFF20) ||
        (cp >= 0xFF3B && cp <= 0xFF40) || (cp >= 0xFF5B && cp <= 0xFF65)) {
        return false;  // fullwidth punctuation
    }
    return true;
}

void append_cp(std::string& out, std::string_view src, std::size_t pos, std::size_t len,
               char32_t cp) {
    if (cp < 0x80 && cp >= U'A' && cp <= U'Z') {
        out.push_back(static_cast<char>(cp - U'A' + U'a'));
    } else {
        out.append(src.substr(pos, len));
    }
}

std::vector<std::string> tokenize_words(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t len = 0;
        char32_t cp = decode_utf8(text, pos, &len);
        if (is_word_cp(cp)) {
            append_cp(current, text, pos, len, cp);
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
        pos += len;
    }
    if (!current.empty()) {
        tokens.push_back(std::move(current));
    }
    return tokens;
}

std::vector<std::string> tokenize_char_ngrams(std::string_view text, int n) {
    std::vector<std::string> tokens;
    // Byte offsets of codepoints in the current non-whitespace run; the
    // final entry is one-past-the-end.
    std::vector<std::size_t> offsets;
    auto flush = [&](std::size_t end) {
        offsets.push_back(end);
        if (offsets.size() > static_cast<std::size_t>(n)) {
            for (std::size_t i = 0; i + n < offsets.size(); ++i) {
                tokens.emplace_back(text.substr(offsets[i], offsets[i + n] - offsets[i]));
            }
        }
        offsets.clear();
    };
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t len = 0;
        char32_t cp = decode_utf8(text, pos, &len);
        if (is_space_cp(cp)) {
            if (!offsets.empty()) {
                flush(pos);
            }
        } else {
            offsets.push_back(pos);
        }
        pos += len;
    }
    if (!offsets.empty()) {
        flush(text.size());
    }
    return tokens;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text, TokenizerMode mode, int ngram) {
    if (mode == TokenizerMode::UnicodeWords) {
        return tokenize_words(text);
    }
    return tokenize_char_ngrams(text, ngram);
}

double FeatureVector::l2_norm() const {
    return std::sqrt(kernels::active().dot(weights.size(), weights.data(), weights.data()));
}

Vocabulary Vocabulary::fit(const std::vector<corpus::Case>& corpus, const EncoderConfig& config) {
    config.validate();
    if (corpus.empty()) {
        throw DataError("cannot fit a vocabulary on an empty corpus");
    }
    // std::map keeps terms ordered, which the (df desc, term asc) sort
    // below relies on for a stable tie-break.
    std::map<std::string, std::size_t> df;
    for (const auto& c : corpus) {
        auto tokens = tokenize(c.fact, config.mode, config.ngram);
        std::sort(tokens.begin(), tokens.end());
        tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
        for (auto& t : tokens) {
            ++df[t];
        }
    }
    std::vector<TermEntry> entries;
    for (auto& [term, count] : df) {
        if (count >= config.min_df) {
            entries.push_back({term, count});
        }
    }
    if (entries.empty()) {
        throw DataError("vocabulary is empty after document-frequency filtering");
    }
    std::stable_sort(entries.begin(), entries.end(),
                     [](const TermEntry& a, const TermEntry& b) { return a.df > b.df; });
    if (entries.size() > config.max_features) {
        entries.resize(config.max_features);
    }

    Vocabulary vocab;
    vocab.terms_ = std::move(entries);
    vocab.doc_count_ = corpus.size();
    vocab.config_ = config;
    for (std::size_t i = 0; i < vocab.terms_.size(); ++i) {
        vocab.index_.emplace(vocab.terms_[i].term, i);
    }
    return vocab;
}

std::optional<std::size_t> Vocabulary::index_of(const std::string& term) const {
    auto it = index_.find(term);
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

void Vocabulary::save(const std::filesystem::path& path) const {
    jsonl::Writer out(path);
    out.write(ordered_json{
        {"doc_count", doc_count_},
        {"mode", config_.mode == TokenizerMode::UnicodeWords ? "unicode-words" : "char-ngrams"},
        {"ngram", config_.ngram},
        {"min_df", config_.min_df},
        {"max_features", config_.max_features},
        {"smooth_idf", config_.smooth_idf},
    });
    for (std::size_t i = 0; i < terms_.size(); ++i) {
        out.write(ordered_json{{"term", terms_[i].term}, {"index", i}, {"df", terms_[i].df}});
    }
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    Vocabulary vocab;
    bool have_meta = false;
    jsonl::for_each_line(path, [&](std::size_t lineno, const std::string& line) {
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.is_object()) {
            throw DataError(path.string() + ":" + std::to_string(lineno) +
                            ": malformed vocabulary record");
        }
        if (!have_meta) {
            if (!rec.contains("doc_count")) {
                throw DataError(path.string() + ": first line must carry vocabulary metadata");
            }
            vocab.doc_count_ = rec["doc_count"].get<std::size_t>();
            vocab.config_.mode = rec.value("mode", "unicode-words") == std::string("char-ngrams")
                                     ? TokenizerMode::CharNgrams
                                     : TokenizerMode::UnicodeWords;
            vocab.config_.ngram = rec.value("ngram", 2);
            vocab.config_.min_df = rec.value("min_df", std::size_t{1});
            vocab.config_.max_features = rec.value("max_features", std::size_t{50000});
            vocab.config_.smooth_idf = rec.value("smooth_idf", true);
            have_meta = true;
            return;
        }
        if (!rec.contains("term") || !rec.contains("index") || !rec.contains("df")) {
            throw DataError(path.string() + ":" + std::to_string(lineno) +
                            ": malformed vocabulary term record");
        }
        const auto index = rec["index"].get<std::size_t>();
        if (index != vocab.terms_.size()) {
            throw DataError(path.string() + ":" + std::to_string(lineno) +
                            ": vocabulary indices must be contiguous");
        }
        vocab.terms_.push_back({rec["term"].get<std::string>(), rec["df"].get<std::size_t>()});
    });
    if (!have_meta || vocab.terms_.empty()) {
        throw DataError(path.string() + ": vocabulary file is empty");
    }
    for (std::size_t i = 0; i < vocab.terms_.size(); ++i) {
        vocab.index_.emplace(vocab.terms_[i].term, i);
    }
    return vocab;
}

FeatureVector encode(std::string_view fact, const Vocabulary& vocab) {
    const auto& config = vocab.config();
    std::map<std::size_t, double> tf;  // ordered: indices come out increasing
    for (const auto& token : tokenize(fact, config.mode, config.ngram)) {
        if (auto idx = vocab.index_of(token)) {
            tf[*idx] += 1.0;
        }
    }
    FeatureVector fv;
    fv.indices.reserve(tf.size());
    fv.weights.reserve(tf.size());
    const double n_docs = static_cast<double>(vocab.doc_count());
    for (const auto& [idx, count] : tf) {
        const double df = static_cast<double>(vocab.terms()[idx].df);
        const double idf = config.smooth_idf ? 1.0 + std::log((1.0 + n_docs) / (1.0 + df))
                                             : 1.0 + std::log(n_docs / df);
        fv.indices.push_back(idx);
        fv.weights.push_back(count * idf);
    }
    const double norm = fv.l2_norm();
    if (norm > 0.0) {
        for (auto& w : fv.weights) {
            w /= norm;
        }
    }
    return fv;
}

}  // namespace unilap::features

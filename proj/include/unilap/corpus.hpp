#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace unilap::corpus {

// One legal case: identifier, fact description, gold article labels.
// Labels are kept duplicate-free in first-occurrence order.
struct Case {
    std::string id;
    std::string fact;
    std::vector<std::string> gold_articles;
};

struct LabelSpaceEntry {
    std::string article_id;
    std::string article_text;
};

// Bidirectional mapping article_id <-> dense index [0, m). The entry order
// defines the indices.
class LabelSpace {
public:
    LabelSpace() = default;
    static LabelSpace from_entries(std::vector<LabelSpaceEntry> entries);

    std::size_t size() const { return entries_.size(); }
    const LabelSpaceEntry& entry(std::size_t index) const { return entries_.at(index); }
    const std::vector<LabelSpaceEntry>& entries() const { return entries_; }
    std::optional<std::size_t> index_of(const std::string& article_id) const;
    bool contains(const std::string& article_id) const { return index_.count(article_id) > 0; }

    void save(const std::filesystem::path& path) const;
    static LabelSpace load(const std::filesystem::path& path);

private:
    std::vector<LabelSpaceEntry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct DatasetSplit {
    std::vector<Case> train;
    std::vector<Case> validation;
    std::vector<Case> test;
    LabelSpace label_space;
};

enum class CaseFormat { GenericJsonl, CailJson };

struct LoadIssue {
    std::size_t line = 0;
    std::string message;
};

struct LoadResult {
    std::vector<Case> cases;
    std::vector<LoadIssue> issues;  // one per malformed record, in file order
};

// Reads cases from JSONL. Generic records carry id/fact/articles; CAIL-style
// records carry fact and meta.relevant_articles (ids synthesized from the
// line ordinal when absent). Malformed records are reported in `issues` and
// skipped; an unreadable file throws DataError.
LoadResult load_cases(const std::filesystem::path& path, CaseFormat format);

// Canonical generic-JSONL serialization (keys id, fact, articles).
void save_cases(const std::filesystem::path& path, const std::vector<Case>& cases);

// Strips leading whitespace and leading enumeration tokens (a run of ASCII
// digits followed by '.', ')' or '、'), repeatedly. Everything after the
// stripped prefix is preserved byte for byte.
Case clean_leading_noise(Case c);

// Keeps exactly the cases with at least one gold label, order preserved.
std::vector<Case> filter_empty_labels(std::vector<Case> cases);

using ArticleTexts = std::unordered_map<std::string, std::string>;

// Label-space file: JSONL with keys article_id, article_text.
ArticleTexts load_article_texts(const std::filesystem::path& path);

struct FrequencyFilterResult {
    std::vector<Case> cases;
    LabelSpace label_space;
    std::unordered_map<std::string, std::size_t> counts;  // pre-filter label counts
};

// Retains only articles appearing strictly more than `min_count` times in
// `cases` (the training portion, by convention). Case labels are restricted
// to the retained set, de-duplicated, and label-less cases are dropped.
// The resulting label space is ordered lexicographically by article_id;
// texts are attached from `texts` when available. Throws DataError when no
// label survives.
FrequencyFilterResult filter_by_frequency(std::vector<Case> cases, std::size_t min_count,
                                          const ArticleTexts& texts = {});

// Restricts case labels to `space` (dedup included) and drops cases left
// without labels. Used to apply a train-derived space to other splits.
std::vector<Case> restrict_to_label_space(std::vector<Case> cases, const LabelSpace& space);

// Article-number and identifier mentions derived from the label space; the
// stand-in leakage detector used when no explicit patterns are configured.
std::vector<std::string> default_leakage_patterns(const LabelSpace& space);

struct LeakageFilterResult {
    std::vector<Case> cases;
    std::size_t removed = 0;
};

// Removes cases whose fact matches any of the given ECMAScript regexes.
// Throws DataError if a pattern does not compile.
LeakageFilterResult filter_leakage(std::vector<Case> cases, const LabelSpace& space,
                                   const std::vector<std::string>& patterns);

}  // namespace unilap::corpus

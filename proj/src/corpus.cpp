#include "unilap/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <unordered_set>

#include "json.hpp"
#include "unilap/errors.hpp"
#include "unilap/jsonl.hpp"

namespace unilap::corpus {

using nlohmann::json;
using nlohmann::ordered_json;

LabelSpace LabelSpace::from_entries(std::vector<LabelSpaceEntry> entries) {
    if (entries.empty()) {
        throw DataError("label space is empty");
    }
    LabelSpace space;
    space.entries_ = std::move(entries);
    for (std::size_t i = 0; i < space.entries_.size(); ++i) {
        const auto& id = space.entries_[i].article_id;
        if (id.empty()) {
            throw DataError("label space entry " + std::to_string(i) + " has an empty article_id");
        }
        if (!space.index_.emplace(id, i).second) {
            throw DataError("duplicate article_id in label space: " + id);
        }
    }
    return space;
}

std::optional<std::size_t> LabelSpace::index_of(const std::string& article_id) const {
    auto it = index_.find(article_id);
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

void LabelSpace::save(const std::filesystem::path& path) const {
    jsonl::Writer out(path);
    for (const auto& e : entries_) {
        out.write(ordered_json{{"article_id", e.article_id}, {"article_text", e.article_text}});
    }
}

LabelSpace LabelSpace::load(const std::filesystem::path& path) {
    std::vector<LabelSpaceEntry> entries;
    jsonl::for_each_line(path, [&](std::size_t lineno, const std::string& line) {
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.is_object() || !rec.contains("article_id") ||
            !rec["article_id"].is_string()) {
            throw DataError(path.string() + ":" + std::to_string(lineno) +
                            ": malformed label-space record");
        }
        LabelSpaceEntry e;
        e.article_id = rec["article_id"].get<std::string>();
        if (rec.contains("article_text") && rec["article_text"].is_string()) {
            e.article_text = rec["article_text"].get<std::string>();
        }
        entries.push_back(std::move(e));
    });
    return from_entries(std::move(entries));
}

namespace {

std::vector<std::string> dedup_keep_order(const std::vector<std::string>& labels) {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& l : labels) {
        if (seen.insert(l).second) {
            out.push_back(l);
        }
    }
    return out;
}

std::optional<Case> parse_generic(const json& rec, std::size_t lineno, std::string* error) {
    if (!rec.is_object()) {
        *error = "record is not a JSON object";
        return std::nullopt;
    }
    Case c;
    if (rec.contains("id")) {
        if (!rec["id"].is_string()) {
            *error = "field 'id' is not a string";
            return std::nullopt;
        }
        c.id = rec["id"].get<std::string>();
    } else {
        c.id = "case-" + std::to_string(lineno);
    }
    if (!rec.contains("fact") || !rec["fact"].is_string()) {
        *error = "missing or non-string field 'fact'";
        return std::nullopt;
    }
    c.fact = rec["fact"].get<std::string>();
    if (!rec.contains("articles") || !rec["articles"].is_array()) {
        *error = "missing or non-array field 'articles'";
        return std::nullopt;
    }
    std::vector<std::string> labels;
    for (const auto& a : rec["articles"]) {
        if (a.is_string()) {
            labels.push_back(a.get<std::string>());
        } else if (a.is_number_integer()) {
            labels.push_back(std::to_string(a.get<long long>()));
        } else {
            *error = "entry of 'articles' is neither string nor integer";
            return std::nullopt;
        }
    }
    c.gold_articles = dedup_keep_order(labels);
    return c;
}

std::optional<Case> parse_cail(const json& rec, std::size_t lineno, std::string* error) {
    if (!rec.is_object()) {
        *error = "record is not a JSON object";
        return std::nullopt;
    }
    Case c;
    c.id = "case-" + std::to_string(lineno);
    if (!rec.contains("fact") || !rec["fact"].is_string()) {
        *error = "missing or non-string field 'fact'";
        return std::nullopt;
    }
    c.fact = rec["fact"].get<std::string>();
    if (!rec.contains("meta") || !rec["meta"].is_object() ||
        !rec["meta"].contains("relevant_articles") || !rec["meta"]["relevant_articles"].is_array()) {
        *error = "missing meta.relevant_articles array";
        return std::nullopt;
    }
    std::vector<std::string> labels;
    for (const auto& a : rec["meta"]["relevant_articles"]) {
        if (a.is_string()) {
            labels.push_back(a.get<std::string>());
        } else if (a.is_number_integer()) {
            labels.push_back(std::to_string(a.get<long long>()));
        } else {
            *error = "entry of meta.relevant_articles is neither string nor integer";
            return std::nullopt;
        }
    }
    c.gold_articles = dedup_keep_order(labels);
    return c;
}

}  // namespace

LoadResult load_cases(const std::filesystem::path& path, CaseFormat format) {
    LoadResult result;
    jsonl::for_each_line(path, [&](std::size_t lineno, const std::string& line) {
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded()) {
            result.issues.push_back({lineno, "invalid JSON"});
            return;
        }
        std::string error;
        auto parsed = format == CaseFormat::GenericJsonl ? parse_generic(rec, lineno, &error)
                                                         : parse_cail(rec, lineno, &error);
        if (!parsed) {
            result.issues.push_back({lineno, error});
            return;
        }
        result.cases.push_back(std::move(*parsed));
    });
    return result;
}

void save_cases(const std::filesystem::path& path, const std::vector<Case>& cases) {
    jsonl::Writer out(path);
    for (const auto& c : cases) {
        out.write(ordered_json{{"id", c.id}, {"fact", c.fact}, {"articles", c.gold_articles}});
    }
}

namespace {

// ASCII whitespace plus the ideographic space U+3000.
std::size_t skip_whitespace(const std::string& s, std::size_t pos) {
    while (pos < s.size()) {
        unsigned char ch = static_cast<unsigned char>(s[pos]);
        if (std::isspace(ch)) {
            ++pos;
        } else if (pos + 3 <= s.size() && ch == 0xE3 &&
                   static_cast<unsigned char>(s[pos + 1]) == 0x80 &&
                   static_cast<unsigned char>(s[pos + 2]) == 0x80) {
            pos += 3;
        } else {
            break;
        }
    }
    return pos;
}

// Recognizes "<digits><separator>" where separator is '.', ')' or '、'.
// Returns the position just past the separator, or `pos` if no match.
std::size_t skip_enumeration(const std::string& s, std::size_t pos) {
    std::size_t p = pos;
    while (p < s.size() && std::isdigit(static_cast<unsigned char>(s[p]))) {
        ++p;
    }
    if (p == pos) {
        return pos;
    }
    if (p < s.size() && (s[p] == '.' || s[p] == ')')) {
        return p + 1;
    }
    if (p + 3 <= s.size() && static_cast<unsigned char>(s[p]) == 0xE3 &&
        static_cast<unsigned char>(s[p + 1]) == 0x80 &&
        static_cast<unsigned char>(s[p + 2]) == 0x81) {
        return p + 3;
    }
    return pos;
}

}  // namespace

Case clean_leading_noise(Case c) {
    std::size_t pos = 0;
    while (true) {
        pos = skip_whitespace(c.fact, pos);
        std::size_t next = skip_enumeration(c.fact, pos);
        if (next == pos) {
            break;
        }
        pos = next;
    }
    if (pos > 0) {
        c.fact.erase(0, pos);
    }
    return c;
}

std::vector<Case> filter_empty_labels(std::vector<Case> cases) {
    std::vector<Case> out;
    out.reserve(cases.size());
    for (auto& c : cases) {
        if (!c.gold_articles.empty()) {
            out.push_back(std::move(c));
        }
    }
    return out;
}

ArticleTexts load_article_texts(const std::filesystem::path& path) {
    ArticleTexts texts;
    jsonl::for_each_line(path, [&](std::size_t lineno, const std::string& line) {
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.is_object() || !rec.contains("article_id") ||
            !rec["article_id"].is_string()) {
            throw DataError(path.string() + ":" + std::to_string(lineno) +
                            ": malformed article-text record");
        }
        std::string text;
        if (rec.contains("article_text") && rec["article_text"].is_string()) {
            text = rec["article_text"].get<std::string>();
        }
        texts[rec["article_id"].get<std::string>()] = std::move(text);
    });
    return texts;
}

FrequencyFilterResult filter_by_frequency(std::vector<Case> cases, std::size_t min_count,
                                          const ArticleTexts& texts) {
    FrequencyFilterResult result;
    for (auto& c : cases) {
        c.gold_articles = dedup_keep_order(c.gold_articles);
        for (const auto& l : c.gold_articles) {
            ++result.counts[l];
        }
    }
    std::vector<std::string> retained;
    for (const auto& [label, count] : result.counts) {
        if (count > min_count) {
            retained.push_back(label);
        }
    }
    if (retained.empty()) {
        throw DataError("no label survives frequency filtering (min_count=" +
                        std::to_string(min_count) + ")");
    }
    std::sort(retained.begin(), retained.end());

    std::vector<LabelSpaceEntry> entries;
    entries.reserve(retained.size());
    for (const auto& id : retained) {
        auto it = texts.find(id);
        entries.push_back({id, it != texts.end() ? it->second : std::string{}});
    }
    result.label_space = LabelSpace::from_entries(std::move(entries));
    result.cases = restrict_to_label_space(std::move(cases), result.label_space);
    return result;
}

std::vector<Case> restrict_to_label_space(std::vector<Case> cases, const LabelSpace& space) {
    std::vector<Case> out;
    out.reserve(cases.size());
    for (auto& c : cases) {
        std::vector<std::string> kept;
        for (const auto& l : dedup_keep_order(c.gold_articles)) {
            if (space.contains(l)) {
                kept.push_back(l);
            }
        }
        if (kept.empty()) {
            continue;
        }
        c.gold_articles = std::move(kept);
        out.push_back(std::move(c));
    }
    return out;
}

namespace {

std::string regex_escape(const std::string& s) {
    static const std::string special = R"(\^$.|?*+()[]{})";
    std::string out;
    out.reserve(s.size());
    for (char ch : s) {
        if (special.find(ch) != std::string::npos) {
            out.push_back('\\');
        }
        out.push_back(ch);
    }
    return out;
}

bool all_digits(const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) {
        return std::isdigit(c) != 0;
    });
}

}  // namespace

std::vector<std::string> default_leakage_patterns(const LabelSpace& space) {
    std::vector<std::string> patterns;
    for (const auto& e : space.entries()) {
        const std::string escaped = regex_escape(e.article_id);
        if (all_digits(e.article_id)) {
            // Article-number mentions in English and Chinese drafting styles.
            patterns.push_back("[Aa]rticle[ \\t]*" + escaped + "\\b");
            patterns.push_back("第[ \\t]*" + escaped + "[ \\t]*条");
        } else {
            // Non-numeric identifiers (charge-style names) leak as literals.
            patterns.push_back(escaped);
        }
    }
    return patterns;
}

LeakageFilterResult filter_leakage(std::vector<Case> cases, const LabelSpace& space,
                                   const std::vector<std::string>& patterns) {
    const std::vector<std::string>& sources =
        patterns.empty() ? default_leakage_patterns(space) : patterns;
    std::vector<std::regex> compiled;
    compiled.reserve(sources.size());
    for (const auto& src : sources) {
        try {
            compiled.emplace_back(src, std::regex::ECMAScript);
        } catch (const std::regex_error& err) {
            throw DataError("leakage pattern does not compile: '" + src + "': " + err.what());
        }
    }
    LeakageFilterResult result;
    for (auto& c : cases) {
        bool leaked = std::any_of(compiled.begin(), compiled.end(), [&](const std::regex& re) {
            return std::regex_search(c.fact, re);
        });
        if (leaked) {
            ++result.removed;
        } else {
            result.cases.push_back(std::move(c));
        }
    }
    return result;
}

}  // namespace unilap::corpus

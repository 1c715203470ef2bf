#include <algorithm>
#include <regex>
#include <sstream>
#include <unordered_set>

#include "unilap/reasoner.hpp"

namespace unilap::reasoner {

namespace {

// Stage-1 instructions: extract the article's key elements (major
// premise), map the fact onto them (minor premise), then conclude
// match / not match.
constexpr std::string_view kStage1Intro =
    "You will decide, for each legal article listed below, whether it matches the case. "
    "Work through the following three steps for every article.";

constexpr std::string_view kStage1Step1 =
    "Step 1 (major premise): Please extract the following key elements from the legal "
    "article: behavioral conditions, behavioral commands, and behavioral constitutive "
    "requirements. Behavioral conditions describe the prerequisites for applying the legal "
    "article, including the qualifications of the actor and the specific context in which "
    "the behavior occurs; behavioral commands clarify the requirements that the actor must "
    "follow and can be categorized as 'mandatory actions', 'prohibited actions', and "
    "'permissible actions'; behavioral constitutive requirements specify the particular "
    "behavior patterns or events defined by the legal article.";

constexpr std::string_view kStage1Step2 =
    "Step 2 (minor premise): According to the fact description, please identify the text "
    "segments related to the three key elements, i.e., behavioral conditions, behavioral "
    "commands, and behavioral constitutive requirements.";

constexpr std::string_view kStage1Step3 =
    "Step 3 (conclusion): First, compare the text segments related to the three key "
    "elements with the corresponding elements in the legal article. Specifically, as "
    "follows: First, compare the behavioral conditions in the fact descriptions with those "
    "defined in the legal article to determine whether the facts fall within the specified "
    "context of the article. Next, check whether the fact descriptions involve behaviors "
    "prohibited, required, or permitted by the legal article. Third, verify whether the "
    "behaviors in the fact descriptions constitute the behavioral constitutive requirements "
    "in the legal article. It is important to note that when examining the fact "
    "descriptions, you should check whether the fact descriptions match the content of the "
    "legal article in terms of semantics rather than relying solely on literal similarity. "
    "Second, evaluate whether the legal article matches the case. The conclusion must be "
    "either 'match' or 'not match'. Please assess whether an article matches the case "
    "according to the following criteria: If the fact descriptions meet all the conditions "
    "of the legal article (behavioral conditions, behavioral commands, and behavioral "
    "constitutive requirements), the article is matched. If any key element in the fact "
    "description does not align with the legal article, the article is not matched.";

constexpr std::string_view kStage2Instruction =
    "Based on the matched legal articles and the specific legal analysis generated in "
    "Stage 1, the objective is to identify the most relevant legal articles. When two "
    "articles share the same scope of application, priority should be given to the one "
    "that appears earlier in the candidate set predicted by the SCM. If all identified "
    "articles are deemed irrelevant, the selection should then consider the entire set of "
    "criminal legal articles.";

void append_article(std::ostringstream& out, const ArticleRef& article) {
    out << "[Article " << article.id << "]\n" << article.text << "\n\n";
}

std::string join_ids(const std::vector<std::string>& ids) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i > 0) {
            out += ", ";
        }
        out += ids[i];
    }
    return out;
}

std::string regex_escape(const std::string& s) {
    static const std::string special = R"(\^$.|?*+()[]{})";
    std::string out;
    for (char ch : s) {
        if (special.find(ch) != std::string::npos) {
            out.push_back('\\');
        }
        out.push_back(ch);
    }
    return out;
}

// First line of the article text, shortened; used as the article "title"
// in the full-label-space listing (full texts would not fit a prompt).
std::string article_title(const std::string& text, std::size_t max_bytes = 100) {
    std::string line = text.substr(0, text.find('\n'));
    if (line.size() <= max_bytes) {
        return line;
    }
    // cut at a UTF-8 boundary
    std::size_t cut = max_bytes;
    while (cut > 0 && (static_cast<unsigned char>(line[cut]) & 0xC0) == 0x80) {
        --cut;
    }
    return line.substr(0, cut) + "...";
}

}  // namespace

std::string build_stage1_prompt(std::string_view fact, const std::vector<ArticleRef>& articles) {
    std::ostringstream out;
    out << kStage1Intro << "\n\n"
        << kStage1Step1 << "\n\n"
        << kStage1Step2 << "\n\n"
        << kStage1Step3 << "\n\n";
    out << kArticlesHeader << "\n\n";
    for (const auto& a : articles) {
        append_article(out, a);
    }
    out << kFactHeader << "\n" << fact << "\n\n";
    out << kStage1FooterHeader
        << " end your reply with one line per article, writing MATCH or NOT MATCH after the "
           "colon:\n";
    for (const auto& a : articles) {
        out << kVerdictPrefix << " " << a.id << ": <MATCH or NOT MATCH>\n";
    }
    return out.str();
}

std::vector<StageOneVerdict> parse_stage1(std::string_view response,
                                          const std::vector<std::string>& expected_ids) {
    const std::string text(response);
    std::vector<StageOneVerdict> verdicts;
    verdicts.reserve(expected_ids.size());
    for (const auto& id : expected_ids) {
        StageOneVerdict v;
        v.article_id = id;
        // Last occurrence wins; "not" optionally separated by space or '_'.
        const std::regex pattern("verdict\\s*" + regex_escape(id) + "\\s*:\\s*(not[\\s_]*match|match)",
                                 std::regex::ECMAScript | std::regex::icase);
        auto begin = std::sregex_iterator(text.begin(), text.end(), pattern);
        auto end = std::sregex_iterator();
        for (auto it = begin; it != end; ++it) {
            const std::string token = (*it)[1].str();
            const bool negated = token[0] == 'n' || token[0] == 'N';
            v.verdict = negated ? Verdict::NotMatch : Verdict::Match;
            v.status = ParseStatus::Parsed;
        }
        verdicts.push_back(std::move(v));
    }
    return verdicts;
}

std::string build_stage2_prompt(std::string_view fact, const std::vector<ArticleRef>& matched,
                                std::string_view stage1_analysis,
                                const std::vector<std::string>& candidate_order,
                                const corpus::LabelSpace* full_space) {
    std::ostringstream out;
    out << kStage2Instruction << "\n\n";
    out << kFactHeader << "\n" << fact << "\n\n";
    out << kMatchedHeader << "\n\n";
    for (const auto& a : matched) {
        append_article(out, a);
    }
    out << kAnalysisHeader << "\n" << stage1_analysis << "\n\n";
    out << kCandidateOrderHeader << " " << join_ids(candidate_order) << "\n\n";
    if (full_space != nullptr) {
        out << kFullSpaceHeader << "\n";
        for (const auto& e : full_space->entries()) {
            out << e.article_id << ": " << article_title(e.article_text) << "\n";
        }
        out << "\n";
    }
    out << kStage2FooterHeader << " with exactly one line of the form:\n"
        << kFinalPrefix << " <comma-separated article ids>\n";
    return out.str();
}

namespace {

std::string trim_token(std::string s) {
    const auto junk = [](unsigned char c) {
        return std::isspace(c) != 0 || c == '*' || c == '"' || c == '\'' || c == '`' ||
               c == '.' || c == ';' || c == '[' || c == ']';
    };
    while (!s.empty() && junk(static_cast<unsigned char>(s.front()))) {
        s.erase(s.begin());
    }
    while (!s.empty() && junk(static_cast<unsigned char>(s.back()))) {
        s.pop_back();
    }
    // tolerate an "Article " prefix before the id
    static const std::regex article_prefix("^article\\s+", std::regex::icase);
    s = std::regex_replace(s, article_prefix, "");
    return s;
}

}  // namespace

StageTwoSelection parse_stage2(std::string_view response, const corpus::LabelSpace& space,
                               const std::vector<std::string>& allowed_in_order,
                               bool allow_full_space) {
    StageTwoSelection selection;
    selection.used_full_label_space = allow_full_space;

    // Last FINAL line wins.
    const std::string text(response);
    static const std::regex final_line("final\\s*:\\s*([^\n]*)", std::regex::ECMAScript | std::regex::icase);
    std::string payload;
    bool found = false;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), final_line);
         it != std::sregex_iterator(); ++it) {
        payload = (*it)[1].str();
        found = true;
    }

    std::unordered_set<std::string> allowed(allowed_in_order.begin(), allowed_in_order.end());
    std::unordered_set<std::string> taken;
    if (found) {
        std::stringstream ss(payload);
        std::string token;
        while (std::getline(ss, token, ',')) {
            token = trim_token(std::move(token));
            if (token.empty()) {
                continue;
            }
            if (!space.contains(token)) {
                selection.dropped.push_back(token);
                continue;
            }
            if (!allow_full_space && allowed.count(token) == 0) {
                selection.dropped.push_back(token);
                continue;
            }
            if (taken.insert(token).second) {
                selection.final_articles.push_back(token);
            }
        }
    }

    if (selection.final_articles.empty()) {
        if (!allowed_in_order.empty()) {
            selection.final_articles.push_back(allowed_in_order.front());
        }
        selection.status = ParseStatus::Fallback;
    }
    return selection;
}

}  // namespace unilap::reasoner

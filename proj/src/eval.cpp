#include "unilap/eval.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"
#include "unilap/errors.hpp"

namespace unilap::eval {

using nlohmann::ordered_json;

namespace {

void sort_unique(std::vector<std::size_t>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

bool contains(const std::vector<std::size_t>& sorted, std::size_t value) {
    return std::binary_search(sorted.begin(), sorted.end(), value);
}

}  // namespace

void normalize(PredictionRecord& record) {
    sort_unique(record.gold);
    sort_unique(record.candidates);
    sort_unique(record.predicted);
    sort_unique(record.stage1_matched);
}

double subset_accuracy(const std::vector<PredictionRecord>& records) {
    if (records.empty()) {
        throw DataError("subset_accuracy on an empty record set");
    }
    std::size_t exact = 0;
    for (const auto& r : records) {
        if (r.predicted == r.gold) {
            ++exact;
        }
    }
    return static_cast<double>(exact) / static_cast<double>(records.size());
}

std::vector<LabelCounts> per_label_counts(const std::vector<PredictionRecord>& records,
                                          std::size_t label_count) {
    std::vector<LabelCounts> counts(label_count);
    for (const auto& r : records) {
        for (auto j : r.predicted) {
            if (j >= label_count) {
                throw DataError("predicted label index out of range");
            }
            if (contains(r.gold, j)) {
                ++counts[j].tp;
            } else {
                ++counts[j].fp;
            }
        }
        for (auto j : r.gold) {
            if (j >= label_count) {
                throw DataError("gold label index out of range");
            }
            if (!contains(r.predicted, j)) {
                ++counts[j].fn;
            }
        }
    }
    return counts;
}

namespace {

double safe_ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MacroScores macro_prf(const std::vector<PredictionRecord>& records, std::size_t label_count) {
    if (records.empty()) {
        throw DataError("macro_prf on an empty record set");
    }
    const auto counts = per_label_counts(records, label_count);
    MacroScores macro;
    for (const auto& c : counts) {
        const double p = safe_ratio(c.tp, c.tp + c.fp);
        const double r = safe_ratio(c.tp, c.tp + c.fn);
        const double f1 = (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
        macro.precision += p;
        macro.recall += r;
        macro.f1 += f1;
    }
    const double m = static_cast<double>(label_count);
    macro.precision /= m;
    macro.recall /= m;
    macro.f1 /= m;
    return macro;
}

double topk_acc(const std::vector<PredictionRecord>& records) {
    if (records.empty()) {
        throw DataError("topk_acc on an empty record set");
    }
    std::size_t covered = 0;
    std::size_t total = 0;
    for (const auto& r : records) {
        total += r.gold.size();
        for (auto j : r.gold) {
            if (contains(r.candidates, j)) {
                ++covered;
            }
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(total);
}

ErrorCategory categorize_case(const PredictionRecord& record) {
    if (record.predicted == record.gold) {
        return ErrorCategory::Correct;
    }
    for (auto j : record.gold) {
        if (!contains(record.candidates, j)) {
            return ErrorCategory::ScmInduced;
        }
    }
    for (auto j : record.gold) {
        if (!contains(record.stage1_matched, j)) {
            return ErrorCategory::Stage1Error;
        }
    }
    return ErrorCategory::Stage2Error;
}

ErrorBreakdown categorize_errors(const std::vector<PredictionRecord>& records) {
    ErrorBreakdown breakdown;
    for (const auto& r : records) {
        switch (categorize_case(r)) {
            case ErrorCategory::Correct: ++breakdown.correct; break;
            case ErrorCategory::ScmInduced: ++breakdown.scm_induced; break;
            case ErrorCategory::Stage1Error: ++breakdown.stage1_error; break;
            case ErrorCategory::Stage2Error: ++breakdown.stage2_error; break;
        }
    }
    return breakdown;
}

EvaluationReport evaluate(const std::vector<PredictionRecord>& records, std::size_t label_count) {
    EvaluationReport report;
    report.record_count = records.size();
    report.label_count = label_count;
    report.accuracy = subset_accuracy(records);
    const auto macro = macro_prf(records, label_count);
    report.macro_precision = macro.precision;
    report.macro_recall = macro.recall;
    report.macro_f1 = macro.f1;
    report.topk_acc = topk_acc(records);
    report.per_label = per_label_counts(records, label_count);
    report.has_stage_info =
        std::all_of(records.begin(), records.end(),
                    [](const PredictionRecord& r) { return r.has_stage_info; });
    if (report.has_stage_info) {
        report.errors = categorize_errors(records);
    }
    return report;
}

void emit_report(const EvaluationReport& report, const corpus::LabelSpace& space,
                 const std::filesystem::path& json_path, const std::filesystem::path& csv_path) {
    ordered_json doc{
        {"schema_version", 1},
        {"mode", report.has_stage_info ? "full" : "scm_only"},
        {"records", report.record_count},
        {"labels", report.label_count},
        {"metrics",
         ordered_json{{"accuracy", report.accuracy},
                      {"macro_precision", report.macro_precision},
                      {"macro_recall", report.macro_recall},
                      {"macro_f1", report.macro_f1},
                      {"topk_acc", report.topk_acc}}},
    };
    if (report.has_stage_info) {
        const auto& e = report.errors;
        const std::size_t total = e.total();
        ordered_json buckets{
            {"correct", e.correct},
            {"scm_induced", e.scm_induced},
            {"stage1_error", e.stage1_error},
            {"stage2_error", e.stage2_error},
        };
        ordered_json ratios{
            {"correct", safe_ratio(e.correct, total)},
            {"scm_induced", safe_ratio(e.scm_induced, total)},
            {"stage1_error", safe_ratio(e.stage1_error, total)},
            {"stage2_error", safe_ratio(e.stage2_error, total)},
        };
        // Shares in the style of the error analysis: per stage over
        // LLM-induced errors and over all errors.
        ordered_json shares{
            {"llm_induced_of_errors", safe_ratio(e.llm_induced(), e.errors())},
            {"stage1_of_llm_induced", safe_ratio(e.stage1_error, e.llm_induced())},
            {"stage2_of_llm_induced", safe_ratio(e.stage2_error, e.llm_induced())},
            {"stage1_of_errors", safe_ratio(e.stage1_error, e.errors())},
            {"stage2_of_errors", safe_ratio(e.stage2_error, e.errors())},
        };
        doc["error_breakdown"] = ordered_json{
            {"counts", buckets}, {"ratios", ratios}, {"shares", shares}};
        doc["stage1_fallbacks"] = report.stage1_fallbacks;
        doc["stage2_fallbacks"] = report.stage2_fallbacks;
    }

    std::ofstream json_out(json_path, std::ios::binary);
    if (!json_out) {
        throw DataError("cannot write report: " + json_path.string());
    }
    json_out << doc.dump(2) << '\n';

    std::ofstream csv_out(csv_path, std::ios::binary);
    if (!csv_out) {
        throw DataError("cannot write per-label CSV: " + csv_path.string());
    }
    csv_out << "label_id,tp,fp,fn,precision,recall,f1\n";
    for (std::size_t j = 0; j < report.per_label.size(); ++j) {
        const auto& c = report.per_label[j];
        const double p = safe_ratio(c.tp, c.tp + c.fp);
        const double r = safe_ratio(c.tp, c.tp + c.fn);
        const double f1 = (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
        std::string label = j < space.size() ? space.entry(j).article_id : std::to_string(j);
        // Quote the label if it could break the CSV.
        if (label.find(',') != std::string::npos || label.find('"') != std::string::npos) {
            std::string quoted = "\"";
            for (char ch : label) {
                if (ch == '"') {
                    quoted += '"';
                }
                quoted += ch;
            }
            quoted += '"';
            label = quoted;
        }
        csv_out << label << ',' << c.tp << ',' << c.fp << ',' << c.fn << ',' << p << ',' << r
                << ',' << f1 << '\n';
    }
}

}  // namespace unilap::eval

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "unilap/corpus.hpp"

namespace unilap::eval {

// Per-case prediction record. All label fields are sets of label-space
// indices, kept sorted and duplicate-free.
struct PredictionRecord {
    std::string case_id;
    std::vector<std::size_t> gold;
    std::vector<std::size_t> candidates;      // the top-k set handed to the LLM
    std::vector<std::size_t> predicted;       // final selection
    std::vector<std::size_t> stage1_matched;  // candidates accepted at stage 1
    bool has_stage_info = false;
};

// Sorts and dedups the label fields in place.
void normalize(PredictionRecord& record);

// Fraction of cases whose predicted set equals the gold set exactly.
// Throws DataError on empty input.
double subset_accuracy(const std::vector<PredictionRecord>& records);

struct LabelCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
};

struct MacroScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

std::vector<LabelCounts> per_label_counts(const std::vector<PredictionRecord>& records,
                                          std::size_t label_count);

// Unweighted mean over all labels of per-label P, R, F1 with the 0/0 -> 0
// convention.
MacroScores macro_prf(const std::vector<PredictionRecord>& records, std::size_t label_count);

// Coverage of gold labels by the candidate sets:
// sum_i |gold_i ∩ candidates_i| / sum_i |gold_i|.
double topk_acc(const std::vector<PredictionRecord>& records);

enum class ErrorCategory { Correct, ScmInduced, Stage1Error, Stage2Error };

// Per-case bucket: correct when predicted == gold; otherwise scm_induced
// when some gold label is outside the candidate set; otherwise stage1_error
// when a gold candidate was rejected at stage 1; otherwise stage2_error.
ErrorCategory categorize_case(const PredictionRecord& record);

struct ErrorBreakdown {
    std::size_t correct = 0;
    std::size_t scm_induced = 0;
    std::size_t stage1_error = 0;
    std::size_t stage2_error = 0;

    std::size_t total() const { return correct + scm_induced + stage1_error + stage2_error; }
    std::size_t errors() const { return scm_induced + stage1_error + stage2_error; }
    std::size_t llm_induced() const { return stage1_error + stage2_error; }
};

ErrorBreakdown categorize_errors(const std::vector<PredictionRecord>& records);

struct EvaluationReport {
    std::size_t record_count = 0;
    std::size_t label_count = 0;
    double accuracy = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    double topk_acc = 0.0;
    std::vector<LabelCounts> per_label;
    bool has_stage_info = false;
    ErrorBreakdown errors;
    std::size_t stage1_fallbacks = 0;
    std::size_t stage2_fallbacks = 0;
};

EvaluationReport evaluate(const std::vector<PredictionRecord>& records, std::size_t label_count);

// JSON report plus a per-label CSV
// (label_id,tp,fp,fn,precision,recall,f1). Throws DataError on an
// unwritable path.
void emit_report(const EvaluationReport& report, const corpus::LabelSpace& space,
                 const std::filesystem::path& json_path, const std::filesystem::path& csv_path);

}  // namespace unilap::eval

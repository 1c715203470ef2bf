// Acceptance suite: nine checks, one pass/fail line each. Exit code equals
// the number of failed checks.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "unilap/commands.hpp"
#include "unilap/errors.hpp"
#include "unilap/eval.hpp"
#include "unilap/features.hpp"
#include "unilap/jsonl.hpp"
#include "unilap/reasoner.hpp"
#include "unilap/scm.hpp"

using namespace unilap;

namespace {

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// ---------------------------------------------------------------------
// Shared random-instance helpers
// ---------------------------------------------------------------------

scm::TrainingBatch random_batch(std::mt19937_64& rng, std::size_t n, std::size_t m,
                                std::size_t d) {
    std::uniform_real_distribution<double> weight(-1.0, 1.0);
    scm::TrainingBatch batch;
    batch.label_count = m;
    batch.y.assign(n * m, 0);
    for (std::size_t i = 0; i < n; ++i) {
        features::FeatureVector fv;
        for (std::size_t t = 0; t < d; ++t) {
            if (rng() % 3 != 0) {
                fv.indices.push_back(t);
                fv.weights.push_back(weight(rng));
            }
        }
        batch.x.push_back(std::move(fv));
        bool any = false;
        for (std::size_t j = 0; j < m; ++j) {
            if (rng() % 4 == 0) {
                batch.y[i * m + j] = 1;
                any = true;
            }
        }
        if (!any) {
            batch.y[i * m + rng() % m] = 1;
        }
    }
    return batch;
}

std::vector<std::vector<double>> random_probs(std::mt19937_64& rng, std::size_t n,
                                              std::size_t m) {
    std::uniform_real_distribution<double> dist(0.001, 0.999);
    std::vector<std::vector<double>> probs(n, std::vector<double>(m));
    for (auto& row : probs) {
        for (auto& p : row) {
            p = dist(rng);
        }
    }
    return probs;
}

scm::LinearModel random_model(std::mt19937_64& rng, std::size_t m, std::size_t d) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    scm::LinearModel model(m, d);
    for (auto& w : model.raw_weights()) {
        w = dist(rng);
    }
    for (auto& b : model.raw_bias()) {
        b = dist(rng);
    }
    return model;
}

// Brute-force loss evaluation, straight from the definitions.
double brute_bce(const scm::TrainingBatch& batch,
                 const std::vector<std::vector<double>>& probs) {
    const double eps = 1e-12;
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        for (std::size_t j = 0; j < batch.label_count; ++j) {
            const double p = std::min(std::max(probs[i][j], eps), 1.0 - eps);
            const double y = batch.label(i, j);
            total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
        }
    }
    return total / static_cast<double>(batch.size());
}

std::vector<bool> brute_topk_members(const std::vector<double>& probs, std::size_t k) {
    std::vector<bool> in(probs.size(), false);
    for (std::size_t round = 0; round < k; ++round) {
        std::size_t best = probs.size();
        for (std::size_t j = 0; j < probs.size(); ++j) {
            if (!in[j] && (best == probs.size() || probs[j] > probs[best])) {
                best = j;
            }
        }
        in[best] = true;
    }
    return in;
}

double brute_topk(const scm::TrainingBatch& batch,
                  const std::vector<std::vector<double>>& probs, std::size_t k) {
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto in = brute_topk_members(probs[i], k);
        for (std::size_t j = 0; j < batch.label_count; ++j) {
            if (batch.label(i, j) != 0 && !in[j]) {
                total += probs[i][j];
            }
        }
    }
    return total / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------
// Synthetic corpora
// ---------------------------------------------------------------------

std::string term_name(std::size_t t) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "w%03zu", t);
    return buf;
}

std::string label_name(std::size_t l) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "L%02zu", l);
    return buf;
}

// Separable: each label owns 15 exclusive signature terms out of a
// 500-term vocabulary; facts mix signature terms of their labels with
// shared noise terms.
std::vector<corpus::Case> separable_cases(std::mt19937_64& rng, std::size_t count,
                                          std::size_t m, const char* prefix) {
    const std::size_t terms_per_label = 15;
    const std::size_t noise_base = m * terms_per_label;  // 300..499 are noise
    std::vector<corpus::Case> cases;
    cases.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        corpus::Case c;
        c.id = std::string(prefix) + std::to_string(i);
        const std::size_t label_count = 1 + rng() % 3;
        std::set<std::size_t> labels;
        while (labels.size() < label_count) {
            labels.insert(rng() % m);
        }
        std::string fact;
        for (auto l : labels) {
            c.gold_articles.push_back(label_name(l));
            for (int w = 0; w < 6; ++w) {
                fact += term_name(l * terms_per_label + rng() % terms_per_label) + " ";
            }
        }
        for (int w = 0; w < 4; ++w) {
            fact += term_name(noise_base + rng() % 200) + " ";
        }
        c.fact = std::move(fact);
        cases.push_back(std::move(c));
    }
    return cases;
}

corpus::LabelSpace synthetic_space(std::size_t m) {
    std::vector<corpus::LabelSpaceEntry> entries;
    for (std::size_t l = 0; l < m; ++l) {
        entries.push_back({label_name(l), "synthetic label " + label_name(l)});
    }
    return corpus::LabelSpace::from_entries(std::move(entries));
}

// Confusable pairs: labels 2p and 2p+1 share a 12-term pool and keep only
// 3 distinctive terms each; a fraction of cases carries misleading
// distinctive terms from the pair sibling.
std::vector<corpus::Case> confusable_cases(std::mt19937_64& rng, std::size_t count,
                                           std::size_t m, const char* prefix) {
    const std::size_t shared_per_pair = 12;
    const std::size_t distinct_per_label = 3;
    const std::size_t pair_block = shared_per_pair + 2 * distinct_per_label;
    std::vector<corpus::Case> cases;
    cases.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        corpus::Case c;
        c.id = std::string(prefix) + std::to_string(i);
        const std::size_t label = rng() % m;
        const std::size_t pair = label / 2;
        const std::size_t sibling = pair * 2 + (label % 2 == 0 ? 1 : 0);
        c.gold_articles.push_back(label_name(label));
        if (rng() % 5 == 0) {  // a second label from another pair
            const std::size_t extra = rng() % m;
            if (extra != label) {
                c.gold_articles.push_back(label_name(extra));
            }
        }
        std::string fact;
        auto shared_term = [&](std::size_t p) {
            return term_name(p * pair_block + rng() % shared_per_pair);
        };
        auto distinct_term = [&](std::size_t l) {
            return term_name((l / 2) * pair_block + shared_per_pair +
                             (l % 2) * distinct_per_label + rng() % distinct_per_label);
        };
        for (const auto& gold : c.gold_articles) {
            const std::size_t l = std::stoul(gold.substr(1));
            for (int w = 0; w < 5; ++w) {
                fact += shared_term(l / 2) + " ";
            }
            // hard positives: distinctive evidence points at the sibling
            const bool misleading = rng() % 100 < 30;
            for (int w = 0; w < 2; ++w) {
                fact += distinct_term(misleading && gold == c.gold_articles.front() ? sibling
                                                                                    : l) +
                        " ";
            }
        }
        c.fact = std::move(fact);
        cases.push_back(std::move(c));
    }
    return cases;
}

double held_out_topk_acc(const scm::LinearModel& model, const scm::TrainingBatch& test,
                         std::size_t k) {
    return scm::topk_accuracy(model, test, k);
}

// ---------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------

bool criterion_loss_oracle(std::string& detail) {
    Stopwatch watch;
    std::mt19937_64 rng(1001);
    double max_err = 0.0;
    for (int round = 0; round < 500; ++round) {
        const std::size_t n = 1 + rng() % 8;
        const std::size_t m = 2 + rng() % 9;  // up to 10
        const std::size_t k = 1 + rng() % m;
        const auto batch = random_batch(rng, n, m, 5);
        const auto probs = random_probs(rng, n, m);
        max_err = std::max(max_err,
                           std::abs(scm::bce_loss(batch, probs) - brute_bce(batch, probs)));
        max_err = std::max(
            max_err, std::abs(scm::topk_loss(batch, probs, k) - brute_topk(batch, probs, k)));
    }
    const double elapsed = watch.seconds();
    detail = "max |err| = " + fmt(max_err) + ", " + fmt(elapsed) + " s";
    return max_err <= 1e-12 && elapsed < 5.0;
}

bool criterion_gradient_check(std::string& detail) {
    Stopwatch watch;
    std::mt19937_64 rng(2002);
    double worst = 0.0;
    for (int round = 0; round < 100; ++round) {
        const std::size_t n = 1 + rng() % 8;
        const std::size_t m = 2 + rng() % 9;
        const std::size_t d = 2 + rng() % 11;  // up to 12
        const auto batch = random_batch(rng, n, m, d);
        auto model = random_model(rng, m, d);
        scm::TrainConfig config;
        config.lambda1 = 0.5 + (rng() % 100) / 100.0;
        config.lambda2 = 0.5 + (rng() % 100) / 100.0;
        config.k = 1 + rng() % m;

        std::vector<std::vector<std::uint8_t>> masks;
        for (std::size_t i = 0; i < n; ++i) {
            masks.push_back(scm::topk_mask(scm::forward(model, batch.x[i]), config.k));
        }
        auto frozen_loss = [&]() {
            std::vector<std::vector<double>> probs;
            for (std::size_t i = 0; i < n; ++i) {
                probs.push_back(scm::forward(model, batch.x[i]));
            }
            double topk_term = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < m; ++j) {
                    if (batch.label(i, j) != 0 && masks[i][j] == 0) {
                        topk_term += probs[i][j];
                    }
                }
            }
            topk_term /= static_cast<double>(n);
            return config.lambda1 * scm::bce_loss(batch, probs) + config.lambda2 * topk_term;
        };

        const auto grads = scm::gradient(batch, model, config);
        const double h = 1e-6;
        double num = 0.0;
        double den = 0.0;
        auto probe = [&](double& param, double analytic) {
            const double saved = param;
            param = saved + h;
            const double up = frozen_loss();
            param = saved - h;
            const double down = frozen_loss();
            param = saved;
            const double fd = (up - down) / (2.0 * h);
            num += (analytic - fd) * (analytic - fd);
            den += fd * fd;
        };
        for (std::size_t t = 0; t < d; ++t) {
            for (std::size_t j = 0; j < m; ++j) {
                probe(model.weight(j, t), grads.dw[t * m + j]);
            }
        }
        for (std::size_t j = 0; j < m; ++j) {
            probe(model.bias(j), grads.db[j]);
        }
        worst = std::max(worst, std::sqrt(num) / std::max(std::sqrt(den), 1e-12));
    }
    const double elapsed = watch.seconds();
    detail = "worst rel err = " + fmt(worst) + ", " + fmt(elapsed) + " s";
    return worst <= 1e-5 && elapsed < 30.0;
}

std::vector<eval::PredictionRecord> random_records(std::mt19937_64& rng, std::size_t count,
                                                   std::size_t m) {
    std::vector<eval::PredictionRecord> records;
    for (std::size_t i = 0; i < count; ++i) {
        eval::PredictionRecord r;
        r.case_id = "case-" + std::to_string(i);
        for (std::size_t j = 0; j < m; ++j) {
            if (rng() % 3 == 0) r.gold.push_back(j);
            if (rng() % 3 == 0) r.predicted.push_back(j);
            if (rng() % 2 == 0) r.candidates.push_back(j);
        }
        if (r.gold.empty()) {
            r.gold.push_back(rng() % m);
        }
        for (auto j : r.candidates) {
            if (rng() % 2 == 0) r.stage1_matched.push_back(j);
        }
        r.has_stage_info = true;
        eval::normalize(r);
        records.push_back(std::move(r));
    }
    return records;
}

bool criterion_metric_oracle(std::string& detail) {
    std::mt19937_64 rng(3003);
    double max_err = 0.0;
    for (int round = 0; round < 200; ++round) {
        const std::size_t m = 2 + rng() % 9;
        const std::size_t count = 1 + rng() % 20;
        const auto records = random_records(rng, count, m);

        // exact-match accuracy
        std::size_t exact = 0;
        for (const auto& r : records) {
            if (std::set<std::size_t>(r.predicted.begin(), r.predicted.end()) ==
                std::set<std::size_t>(r.gold.begin(), r.gold.end())) {
                ++exact;
            }
        }
        const double acc_ref = double(exact) / double(count);
        max_err = std::max(max_err, std::abs(eval::subset_accuracy(records) - acc_ref));

        // per-label confusion counting
        double sp = 0, sr = 0, sf = 0;
        for (std::size_t j = 0; j < m; ++j) {
            std::size_t tp = 0, fp = 0, fn = 0;
            for (const auto& r : records) {
                const bool pred =
                    std::find(r.predicted.begin(), r.predicted.end(), j) != r.predicted.end();
                const bool gold =
                    std::find(r.gold.begin(), r.gold.end(), j) != r.gold.end();
                if (pred && gold) ++tp;
                if (pred && !gold) ++fp;
                if (!pred && gold) ++fn;
            }
            const double p = tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp);
            const double rr = tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn);
            sp += p;
            sr += rr;
            sf += (p + rr) == 0.0 ? 0.0 : 2 * p * rr / (p + rr);
        }
        const auto macro = eval::macro_prf(records, m);
        max_err = std::max(max_err, std::abs(macro.precision - sp / double(m)));
        max_err = std::max(max_err, std::abs(macro.recall - sr / double(m)));
        max_err = std::max(max_err, std::abs(macro.f1 - sf / double(m)));

        // candidate coverage
        std::size_t hit = 0, total = 0;
        for (const auto& r : records) {
            for (auto j : r.gold) {
                ++total;
                hit += std::find(r.candidates.begin(), r.candidates.end(), j) !=
                               r.candidates.end()
                           ? 1
                           : 0;
            }
        }
        const double topk_ref = total == 0 ? 0.0 : double(hit) / double(total);
        max_err = std::max(max_err, std::abs(eval::topk_acc(records) - topk_ref));
    }
    detail = "max |err| = " + fmt(max_err) + " over 200 record sets";
    return max_err <= 1e-12;
}

bool criterion_worked_example(std::string& detail) {
    scm::TrainingBatch batch;
    batch.label_count = 4;
    batch.y = {1, 0, 0, 1};
    batch.x.resize(1);
    const double loss = scm::topk_loss(batch, {{0.9, 0.8, 0.7, 0.1}}, 2);
    detail = "topk_loss = " + fmt(loss);
    return std::abs(loss - 0.1) <= 1e-15;
}

bool criterion_synthetic_convergence(std::string& detail) {
    Stopwatch watch;
    std::mt19937_64 rng(42);
    const std::size_t m = 20;

    corpus::DatasetSplit splits;
    splits.train = separable_cases(rng, 2000, m, "train-");
    splits.validation = separable_cases(rng, 200, m, "val-");
    splits.test = separable_cases(rng, 500, m, "test-");
    splits.label_space = synthetic_space(m);

    features::EncoderConfig encoder;
    encoder.max_features = 500;
    const auto vocab = features::Vocabulary::fit(splits.train, encoder);

    scm::TrainConfig config;
    config.lambda1 = 1.0;
    config.lambda2 = 1.0;
    config.k = 3;
    config.epochs = 50;
    config.learning_rate = 2.0;
    config.batch_size = 32;
    config.seed = 42;

    const auto result = scm::train(splits, vocab, config);
    const auto test_batch = scm::encode_dataset(splits.test, vocab, splits.label_space);
    const double acc = held_out_topk_acc(result.model, test_batch, config.k);
    const double elapsed = watch.seconds();
    detail = "held-out TopK-ACC = " + fmt(acc) + " (vocab " + std::to_string(vocab.dim()) +
             ", best epoch " + std::to_string(result.best_epoch) + "), " + fmt(elapsed) + " s";
    return acc >= 0.95 && elapsed < 60.0;
}

bool criterion_direction(std::string& detail) {
    const std::size_t m = 10;
    std::size_t joint_wins_or_ties = 0;
    double joint_mean = 0.0;
    double bce_mean = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        std::mt19937_64 rng(9000 + seed);
        corpus::DatasetSplit splits;
        splits.train = confusable_cases(rng, 1200, m, "train-");
        splits.validation = confusable_cases(rng, 200, m, "val-");
        splits.test = confusable_cases(rng, 400, m, "test-");
        splits.label_space = synthetic_space(m);

        features::EncoderConfig encoder;
        encoder.max_features = 500;
        const auto vocab = features::Vocabulary::fit(splits.train, encoder);
        const auto test_batch = scm::encode_dataset(splits.test, vocab, splits.label_space);

        scm::TrainConfig joint;
        joint.lambda1 = 1.0;
        joint.lambda2 = 1.0;
        joint.k = 3;
        joint.epochs = 30;
        joint.learning_rate = 2.0;
        joint.batch_size = 32;
        joint.seed = seed;

        scm::TrainConfig bce_only = joint;
        bce_only.lambda2 = 0.0;

        const auto joint_model = scm::train(splits, vocab, joint);
        const auto bce_model = scm::train(splits, vocab, bce_only);
        const double joint_acc = held_out_topk_acc(joint_model.model, test_batch, joint.k);
        const double bce_acc = held_out_topk_acc(bce_model.model, test_batch, joint.k);
        joint_mean += joint_acc;
        bce_mean += bce_acc;
        if (joint_acc >= bce_acc) {
            ++joint_wins_or_ties;
        }
    }
    joint_mean /= 10.0;
    bce_mean /= 10.0;
    detail = "joint >= bce in " + std::to_string(joint_wins_or_ties) +
             "/10 seeds; mean TopK-ACC joint " + fmt(joint_mean) + " vs bce " + fmt(bce_mean);
    return joint_wins_or_ties >= 7;
}

std::map<std::string, std::string> snapshot_dir(const std::filesystem::path& out) {
    std::map<std::string, std::string> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(out)) {
        if (!entry.is_regular_file()) {
            continue;
        }
        const auto rel = std::filesystem::relative(entry.path(), out).string();
        if (rel == "run_meta.json" || rel.rfind("cache/", 0) == 0) {
            continue;
        }
        std::ifstream in(entry.path(), std::ios::binary);
        files[rel] = std::string(std::istreambuf_iterator<char>(in),
                                 std::istreambuf_iterator<char>());
    }
    return files;
}

bool criterion_offline_pipeline(std::string& detail) {
    const std::filesystem::path fixtures = UNILAP_FIXTURE_DIR;
    const auto corpus_dir = fixtures / "corpus50";
    const auto work = std::filesystem::temp_directory_path() /
                      ("unilap_acceptance_" + std::to_string(::getpid()));
    std::filesystem::remove_all(work);

    cli::RunConfig config;
    config.seed = 42;
    config.output_dir = work / "out1";
    config.data.train = corpus_dir / "train.jsonl";
    config.data.validation = corpus_dir / "validation.jsonl";
    config.data.test = corpus_dir / "test.jsonl";
    config.data.articles = corpus_dir / "articles.jsonl";
    config.train.k = 3;
    config.train.epochs = 20;
    config.train.learning_rate = 1.0;
    config.train.batch_size = 16;
    config.backend.kind = "mock";

    const std::size_t calls = cli::cmd_pipeline(config);

    std::size_t test_cases = 0;
    jsonl::for_each_line(cli::RunPaths(config.output_dir).test_cases(),
                         [&](std::size_t, const std::string&) { ++test_cases; });

    // validity of the evaluation report
    std::ifstream report_in(cli::RunPaths(config.output_dir).report());
    nlohmann::json report = nlohmann::json::parse(report_in, nullptr, false);
    bool report_ok = !report.is_discarded() && report["mode"] == "full";
    for (const char* metric :
         {"accuracy", "macro_precision", "macro_recall", "macro_f1", "topk_acc"}) {
        const double v = report["metrics"].value(metric, -1.0);
        report_ok = report_ok && v >= 0.0 && v <= 1.0;
    }
    std::size_t bucket_sum = 0;
    for (const char* bucket : {"correct", "scm_induced", "stage1_error", "stage2_error"}) {
        bucket_sum += report["error_breakdown"]["counts"].value(bucket, std::size_t{0});
    }
    report_ok = report_ok && bucket_sum == test_cases;

    // rerun against the warm cache into a fresh directory
    auto rerun = config;
    rerun.output_dir = work / "out2";
    rerun.cache_dir = config.cache_directory();
    const std::size_t rerun_calls = cli::cmd_pipeline(rerun);
    const bool reproducible =
        snapshot_dir(config.output_dir) == snapshot_dir(rerun.output_dir);

    detail = std::to_string(test_cases) + " test cases, " + std::to_string(calls) +
             " cold-cache calls, " + std::to_string(rerun_calls) +
             " warm-cache calls, report " + (report_ok ? "valid" : "INVALID") +
             (reproducible ? ", byte-identical rerun" : ", rerun DIFFERS");
    std::filesystem::remove_all(work);
    return test_cases == 50 && calls == 2 * test_cases && rerun_calls == 0 && report_ok &&
           reproducible;
}

bool criterion_parser_totality(std::string& detail) {
    const std::vector<std::string> expected{"234", "133", "P1-1"};
    const std::vector<std::string> transcripts{
        // clean
        "VERDICT 234: MATCH\nVERDICT 133: NOT MATCH\nVERDICT P1-1: MATCH",
        // chatty preamble and postamble
        "Let me think this through step by step.\nThe first article clearly applies.\n"
        "VERDICT 234: MATCH\nVERDICT 133: NOT MATCH\nVERDICT P1-1: NOT MATCH\n"
        "I hope this helps!",
        // re-ordered
        "VERDICT P1-1: MATCH\nVERDICT 234: NOT MATCH\nVERDICT 133: MATCH",
        // truncated mid-way
        "VERDICT 234: MATCH\nVERDICT 133: NOT MA",
        // empty
        "",
        // whitespace only
        "   \n\t\n",
        // markdown decorations
        "**VERDICT 234: MATCH**\n* VERDICT 133: NOT MATCH\n`VERDICT P1-1: MATCH`",
        // lowercase
        "verdict 234: match\nverdict 133: not match\nverdict p1-1: match",
        // extra spacing and underscores
        "VERDICT  234 :  MATCH\nVERDICT 133:NOT_MATCH\nVERDICT P1-1 : NOT  MATCH",
        // duplicated with self-correction
        "VERDICT 234: NOT MATCH\nOn reflection:\nVERDICT 234: MATCH",
        // prose verdicts without the footer
        "Article 234 matches. Article 133 does not match. P1-1 matches.",
        // JSON-ish response
        "{\"234\": \"match\", \"133\": \"not match\"}",
        // unrelated ids
        "VERDICT 999: MATCH\nVERDICT 6: NOT MATCH",
        // footer buried in code fences
        "```\nVERDICT 234: MATCH\nVERDICT 133: NOT MATCH\nVERDICT P1-1: NOT MATCH\n```",
        // repeated block twice
        "VERDICT 234: MATCH\nVERDICT 133: MATCH\nVERDICT P1-1: MATCH\n"
        "VERDICT 234: MATCH\nVERDICT 133: NOT MATCH\nVERDICT P1-1: MATCH",
        // refusal
        "I cannot make a legal determination in this matter.",
        // very long padding
        std::string(5000, 'x') + "\nVERDICT 234: MATCH",
        // null bytes and control characters
        std::string("VERDICT 234: MATCH\0\x01\x02garbage", 26),
        // line-wrapped verdict (id and verdict split across lines)
        "VERDICT 234:\nMATCH\nVERDICT 133: NOT MATCH",
        // CRLF endings
        "VERDICT 234: MATCH\r\nVERDICT 133: NOT MATCH\r\nVERDICT P1-1: NOT MATCH\r\n",
    };

    std::size_t fallbacks = 0;
    std::size_t verdicts = 0;
    for (const auto& transcript : transcripts) {
        const auto parsed = reasoner::parse_stage1(transcript, expected);
        if (parsed.size() != expected.size()) {
            detail = "verdict count mismatch";
            return false;
        }
        for (std::size_t i = 0; i < parsed.size(); ++i) {
            if (parsed[i].article_id != expected[i]) {
                detail = "verdict order mismatch";
                return false;
            }
            ++verdicts;
            if (parsed[i].status == reasoner::ParseStatus::Fallback) {
                ++fallbacks;
            }
        }
    }

    // stage-2 parsing is total as well: any text yields a non-empty selection
    const auto space = corpus::LabelSpace::from_entries({{"234", ""}, {"133", ""}});
    for (const auto& transcript : transcripts) {
        const auto sel = reasoner::parse_stage2(transcript, space, {"234"}, false);
        if (sel.final_articles.empty()) {
            detail = "stage-2 selection came back empty";
            return false;
        }
    }

    detail = std::to_string(transcripts.size()) + " transcripts, " + std::to_string(verdicts) +
             " verdicts, " + std::to_string(fallbacks) + " fallbacks";
    return transcripts.size() == 20;
}

bool criterion_taxonomy_partition(std::string& detail) {
    std::mt19937_64 rng(4004);
    std::size_t checked = 0;
    for (int round = 0; round < 300; ++round) {
        const std::size_t m = 2 + rng() % 9;
        const std::size_t count = 1 + rng() % 20;
        const auto records = random_records(rng, count, m);
        const auto breakdown = eval::categorize_errors(records);
        if (breakdown.total() != records.size()) {
            detail = "buckets do not sum to the record count";
            return false;
        }
        for (const auto& r : records) {
            // written-out definitions, case by case
            const std::set<std::size_t> gold(r.gold.begin(), r.gold.end());
            const std::set<std::size_t> predicted(r.predicted.begin(), r.predicted.end());
            const std::set<std::size_t> candidates(r.candidates.begin(), r.candidates.end());
            const std::set<std::size_t> matched(r.stage1_matched.begin(),
                                                r.stage1_matched.end());
            eval::ErrorCategory expected;
            if (predicted == gold) {
                expected = eval::ErrorCategory::Correct;
            } else if (!std::includes(candidates.begin(), candidates.end(), gold.begin(),
                                      gold.end())) {
                expected = eval::ErrorCategory::ScmInduced;
            } else if (!std::includes(matched.begin(), matched.end(), gold.begin(),
                                      gold.end())) {
                expected = eval::ErrorCategory::Stage1Error;
            } else {
                expected = eval::ErrorCategory::Stage2Error;
            }
            if (eval::categorize_case(r) != expected) {
                detail = "case-level category mismatch";
                return false;
            }
            ++checked;
        }
    }
    detail = std::to_string(checked) + " cases across 300 record sets agree";
    return true;
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<bool(std::string&)> run;
    };
    const std::vector<Criterion> criteria{
        {"loss-oracle", criterion_loss_oracle},
        {"gradient-check", criterion_gradient_check},
        {"metric-oracle", criterion_metric_oracle},
        {"topk-loss-worked-example", criterion_worked_example},
        {"synthetic-convergence", criterion_synthetic_convergence},
        {"joint-loss-direction", criterion_direction},
        {"offline-pipeline", criterion_offline_pipeline},
        {"parser-totality", criterion_parser_totality},
        {"error-taxonomy-partition", criterion_taxonomy_partition},
    };

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        std::string detail;
        bool ok = false;
        try {
            ok = criteria[i].run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        if (!ok) {
            ++failed;
        }
        std::printf("[%zu/%zu] %-26s %s (%s)\n", i + 1, criteria.size(), criteria[i].name,
                    ok ? "PASS" : "FAIL", detail.c_str());
        std::fflush(stdout);
    }
    return failed;
}

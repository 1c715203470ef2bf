#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "unilap/corpus.hpp"
#include "unilap/features.hpp"

namespace unilap::scm {

// Sigmoid classification head: probs = sigmoid(W x + b), W is m x d.
// Weights are stored feature-major (d contiguous columns of length m) so
// that accumulating a sparse input is a run of dense axpys over the label
// axis; the on-disk checkpoint stays row-major.
class LinearModel {
public:
    LinearModel() = default;
    LinearModel(std::size_t label_count, std::size_t feature_dim);

    std::size_t label_count() const { return m_; }
    std::size_t feature_dim() const { return d_; }

    double weight(std::size_t label, std::size_t feature) const {
        return w_[feature * m_ + label];
    }
    double& weight(std::size_t label, std::size_t feature) { return w_[feature * m_ + label]; }
    double bias(std::size_t label) const { return b_[label]; }
    double& bias(std::size_t label) { return b_[label]; }

    const double* column(std::size_t feature) const { return w_.data() + feature * m_; }
    double* column(std::size_t feature) { return w_.data() + feature * m_; }
    std::vector<double>& raw_weights() { return w_; }
    const std::vector<double>& raw_weights() const { return w_; }
    std::vector<double>& raw_bias() { return b_; }
    const std::vector<double>& raw_bias() const { return b_; }

    bool finite() const;

private:
    std::size_t m_ = 0;
    std::size_t d_ = 0;
    std::vector<double> w_;  // feature-major, size d*m
    std::vector<double> b_;  // size m
};

struct TrainConfig {
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    std::size_t k = 3;
    double learning_rate = 0.5;
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    std::uint64_t seed = 42;
    double threshold = 0.3;

    void validate(std::size_t label_count) const;
};

// n samples: sparse features plus a flat n x m binary label matrix.
struct TrainingBatch {
    std::vector<features::FeatureVector> x;
    std::vector<std::uint8_t> y;  // size n * label_count
    std::size_t label_count = 0;

    std::size_t size() const { return x.size(); }
    std::uint8_t label(std::size_t i, std::size_t j) const { return y[i * label_count + j]; }
};

struct Candidate {
    std::size_t index = 0;
    double prob = 0.0;
};

// Exactly k entries, probabilities non-increasing, ties resolved toward the
// lower label index.
using CandidateSet = std::vector<Candidate>;

// Probabilities sigmoid(W x + b), clamped into [1e-12, 1 - 1e-12] so every
// entry is strictly inside (0, 1). Throws DataError on dimension mismatch.
std::vector<double> forward(const LinearModel& model, const features::FeatureVector& x);

// Mean over samples of the summed per-label binary cross-entropy;
// probabilities are clamped to [1e-12, 1 - 1e-12] before the logs.
double bce_loss(const TrainingBatch& batch, const std::vector<std::vector<double>>& probs);

// M[j] = 1 exactly for the k largest probabilities (ties: lower index
// first).
std::vector<std::uint8_t> topk_mask(const std::vector<double>& probs, std::size_t k);

// (1/n) sum_i sum_j y_ij * p_ij * (1 - M_ij): the relaxation penalty on
// true labels missing from the per-sample top-k.
double topk_loss(const TrainingBatch& batch, const std::vector<std::vector<double>>& probs,
                 std::size_t k);

// lambda1 * bce + lambda2 * topk.
double overall_loss(const TrainingBatch& batch, const std::vector<std::vector<double>>& probs,
                    const TrainConfig& config);

struct Gradients {
    std::vector<double> dw;  // feature-major, same layout as LinearModel
    std::vector<double> db;
};

// Exact gradient of overall_loss with the top-k indicator frozen at the
// forward pass (no gradient flows through the selection). Per logit:
// lambda1*(p - y)/n + lambda2*y*(1 - M)*p*(1 - p)/n.
Gradients gradient(const TrainingBatch& batch, const LinearModel& model,
                   const TrainConfig& config);

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    double bce = 0.0;
    double topk = 0.0;
    double overall = 0.0;
    std::optional<double> val_topk_acc;
};

struct TrainResult {
    LinearModel model;
    std::vector<EpochStats> log;
    std::size_t best_epoch = 0;
    std::optional<double> best_val_topk_acc;
};

// Cases encoded against a vocabulary and label space, ready for training.
TrainingBatch encode_dataset(const std::vector<corpus::Case>& cases,
                             const features::Vocabulary& vocab,
                             const corpus::LabelSpace& space);

// Mini-batch gradient descent with a seeded per-epoch shuffle. Returns the
// parameters with the best validation TopK-ACC across epochs (final
// parameters when the validation set is empty). Throws DataError when the
// loss goes non-finite, naming the epoch.
TrainResult train_encoded(const TrainingBatch& train_set, const TrainingBatch& validation_set,
                          const TrainConfig& config);

TrainResult train(const corpus::DatasetSplit& splits, const features::Vocabulary& vocab,
                  const TrainConfig& config);

// The k highest-probability labels, ordered by descending probability,
// ties toward the lower index; agrees with topk_mask on membership.
CandidateSet select_topk(const std::vector<double>& probs, std::size_t k);

// Indices with probability strictly above the threshold, ascending. The
// SCM-only selection rule.
std::vector<std::size_t> threshold_select(const std::vector<double>& probs, double threshold);

// Fraction of gold labels covered by the per-sample top-k prediction.
double topk_accuracy(const LinearModel& model, const TrainingBatch& data, std::size_t k);

void save_checkpoint(const std::filesystem::path& path, const LinearModel& model,
                     const TrainConfig& config);

struct Checkpoint {
    LinearModel model;
    TrainConfig config;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace unilap::scm

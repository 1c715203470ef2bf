#include "unilap/scm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "json.hpp"
#include "unilap/errors.hpp"
#include "unilap/kernels.hpp"

namespace unilap::scm {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr double kProbEps = 1e-12;

double clamp_prob(double p) { return std::clamp(p, kProbEps, 1.0 - kProbEps); }

}  // namespace

LinearModel::LinearModel(std::size_t label_count, std::size_t feature_dim)
    : m_(label_count), d_(feature_dim), w_(label_count * feature_dim, 0.0),
      b_(label_count, 0.0) {}

bool LinearModel::finite() const {
    auto ok = [](double v) { return std::isfinite(v); };
    return std::all_of(w_.begin(), w_.end(), ok) && std::all_of(b_.begin(), b_.end(), ok);
}

void TrainConfig::validate(std::size_t label_count) const {
    if (lambda1 < 0.0 || lambda2 < 0.0) {
        throw UsageError("loss weights lambda1/lambda2 must be >= 0");
    }
    if (k < 1 || k > label_count) {
        throw UsageError("top-k size must be in [1, label_count], got " + std::to_string(k));
    }
    if (learning_rate <= 0.0) {
        throw UsageError("learning_rate must be > 0");
    }
    if (epochs < 1) {
        throw UsageError("epochs must be >= 1");
    }
    if (batch_size < 1) {
        throw UsageError("batch_size must be >= 1");
    }
    if (threshold <= 0.0 || threshold >= 1.0) {
        throw UsageError("threshold must be inside (0, 1)");
    }
}

std::vector<double> forward(const LinearModel& model, const features::FeatureVector& x) {
    const std::size_t m = model.label_count();
    const auto& ops = kernels::active();
    std::vector<double> logits(model.raw_bias());
    for (std::size_t i = 0; i < x.nnz(); ++i) {
        if (x.indices[i] >= model.feature_dim()) {
            throw DataError("feature index " + std::to_string(x.indices[i]) +
                            " out of range for model dimension " +
                            std::to_string(model.feature_dim()));
        }
        ops.axpy(m, x.weights[i], model.column(x.indices[i]), logits.data());
    }
    std::vector<double> probs(m);
    ops.sigmoid(m, logits.data(), probs.data());
    for (auto& p : probs) {
        p = clamp_prob(p);
    }
    return probs;
}

double bce_loss(const TrainingBatch& batch, const std::vector<std::vector<double>>& probs) {
    const std::size_t n = batch.size();
    const std::size_t m = batch.label_count;
    if (probs.size() != n) {
        throw DataError("probability rows do not match batch size");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (probs[i].size() != m) {
            throw DataError("probability row has wrong label count");
        }
        double sample = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double p = clamp_prob(probs[i][j]);
            sample += batch.label(i, j) != 0 ? std::log(p) : std::log(1.0 - p);
        }
        total -= sample;
    }
    return total / static_cast<double>(n);
}

std::vector<std::uint8_t> topk_mask(const std::vector<double>& probs, std::size_t k) {
    const std::size_t m = probs.size();
    if (k < 1 || k > m) {
        throw UsageError("topk_mask: k must be in [1, m]");
    }
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (probs[a] != probs[b]) {
                              return probs[a] > probs[b];
                          }
                          return a < b;
                      });
    std::vector<std::uint8_t> mask(m, 0);
    for (std::size_t i = 0; i < k; ++i) {
        mask[order[i]] = 1;
    }
    return mask;
}

double topk_loss(const TrainingBatch& batch, const std::vector<std::vector<double>>& probs,
                 std::size_t k) {
    const std::size_t n = batch.size();
    const std::size_t m = batch.label_count;
    if (probs.size() != n) {
        throw DataError("probability rows do not match batch size");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto mask = topk_mask(probs[i], k);
        for (std::size_t j = 0; j < m; ++j) {
            if (batch.label(i, j) != 0 && mask[j] == 0) {
                total += probs[i][j];
            }
        }
    }
    return total / static_cast<double>(n);
}

double overall_loss(const TrainingBatch& batch, const std::vector<std::vector<double>>& probs,
                    const TrainConfig& config) {
    return config.lambda1 * bce_loss(batch, probs) +
           config.lambda2 * topk_loss(batch, probs, config.k);
}

namespace {

// Per-logit gradient of the joint loss with the indicator frozen.
void logit_gradient(const TrainingBatch& batch, std::size_t i, const std::vector<double>& probs,
                    const std::vector<std::uint8_t>& mask, const TrainConfig& config,
                    double inv_n, std::vector<double>& out) {
    const std::size_t m = batch.label_count;
    for (std::size_t j = 0; j < m; ++j) {
        const double p = probs[j];
        const double y = batch.label(i, j) != 0 ? 1.0 : 0.0;
        double g = config.lambda1 * (p - y);
        if (mask[j] == 0) {
            g += config.lambda2 * y * p * (1.0 - p);
        }
        out[j] = g * inv_n;
    }
}

}  // namespace

Gradients gradient(const TrainingBatch& batch, const LinearModel& model,
                   const TrainConfig& config) {
    const std::size_t n = batch.size();
    const std::size_t m = model.label_count();
    const auto& ops = kernels::active();
    Gradients grads;
    grads.dw.assign(model.raw_weights().size(), 0.0);
    grads.db.assign(m, 0.0);
    std::vector<double> g(m);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto probs = forward(model, batch.x[i]);
        const auto mask = topk_mask(probs, config.k);
        logit_gradient(batch, i, probs, mask, config, inv_n, g);
        ops.axpy(m, 1.0, g.data(), grads.db.data());
        for (std::size_t t = 0; t < batch.x[i].nnz(); ++t) {
            ops.axpy(m, batch.x[i].weights[t], g.data(),
                     grads.dw.data() + batch.x[i].indices[t] * m);
        }
    }
    return grads;
}

TrainingBatch encode_dataset(const std::vector<corpus::Case>& cases,
                             const features::Vocabulary& vocab,
                             const corpus::LabelSpace& space) {
    TrainingBatch batch;
    batch.label_count = space.size();
    batch.x.reserve(cases.size());
    batch.y.assign(cases.size() * space.size(), 0);
    for (std::size_t i = 0; i < cases.size(); ++i) {
        batch.x.push_back(features::encode(cases[i].fact, vocab));
        for (const auto& label : cases[i].gold_articles) {
            auto idx = space.index_of(label);
            if (!idx) {
                throw DataError("case " + cases[i].id + " references unknown article " + label);
            }
            batch.y[i * space.size() + *idx] = 1;
        }
    }
    return batch;
}

namespace {

// std::shuffle is implementation-defined; this one is pinned so identical
// seeds reproduce identical batch orders on any platform.
void deterministic_shuffle(std::vector<std::size_t>& items, std::mt19937_64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(items[i - 1], items[j]);
    }
}

double coverage_at_k(const LinearModel& model, const TrainingBatch& data, std::size_t k) {
    std::size_t covered = 0;
    std::size_t total = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto probs = forward(model, data.x[i]);
        const auto mask = topk_mask(probs, k);
        for (std::size_t j = 0; j < data.label_count; ++j) {
            if (data.label(i, j) != 0) {
                ++total;
                covered += mask[j];
            }
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(total);
}

}  // namespace

double topk_accuracy(const LinearModel& model, const TrainingBatch& data, std::size_t k) {
    return coverage_at_k(model, data, k);
}

TrainResult train_encoded(const TrainingBatch& train_set, const TrainingBatch& validation_set,
                          const TrainConfig& config) {
    const std::size_t n = train_set.size();
    const std::size_t m = train_set.label_count;
    if (n == 0) {
        throw DataError("training split is empty");
    }
    config.validate(m);

    std::size_t d = 0;
    for (const auto& fv : train_set.x) {
        for (auto idx : fv.indices) {
            d = std::max(d, idx + 1);
        }
    }
    for (const auto& fv : validation_set.x) {
        for (auto idx : fv.indices) {
            d = std::max(d, idx + 1);
        }
    }
    d = std::max<std::size_t>(d, 1);

    LinearModel model(m, d);
    const auto& ops = kernels::active();
    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    double best_acc = -1.0;
    LinearModel best_model = model;
    std::vector<double> g(m);
    std::vector<double> dw(m * d);
    std::vector<double> db(m);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        deterministic_shuffle(order, rng);
        double epoch_bce = 0.0;
        double epoch_topk = 0.0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t end = std::min(n, start + config.batch_size);
            const double inv_nb = 1.0 / static_cast<double>(end - start);
            std::fill(dw.begin(), dw.end(), 0.0);
            std::fill(db.begin(), db.end(), 0.0);
            for (std::size_t pos = start; pos < end; ++pos) {
                const std::size_t i = order[pos];
                const auto probs = forward(model, train_set.x[i]);
                const auto mask = topk_mask(probs, config.k);
                for (std::size_t j = 0; j < m; ++j) {
                    const double p = probs[j];
                    const double y = train_set.label(i, j) != 0 ? 1.0 : 0.0;
                    epoch_bce -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
                    if (y != 0.0 && mask[j] == 0) {
                        epoch_topk += p;
                    }
                    double grad = config.lambda1 * (p - y);
                    if (mask[j] == 0) {
                        grad += config.lambda2 * y * p * (1.0 - p);
                    }
                    g[j] = grad * inv_nb;
                }
                ops.axpy(m, 1.0, g.data(), db.data());
                const auto& fv = train_set.x[i];
                for (std::size_t t = 0; t < fv.nnz(); ++t) {
                    ops.axpy(m, fv.weights[t], g.data(), dw.data() + fv.indices[t] * m);
                }
            }
            ops.axpy(m * d, -config.learning_rate, dw.data(), model.raw_weights().data());
            ops.axpy(m, -config.learning_rate, db.data(), model.raw_bias().data());
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.bce = epoch_bce / static_cast<double>(n);
        stats.topk = epoch_topk / static_cast<double>(n);
        stats.overall = config.lambda1 * stats.bce + config.lambda2 * stats.topk;
        if (!std::isfinite(stats.overall) || !model.finite()) {
            throw DataError("training diverged at epoch " + std::to_string(epoch) +
                            " (non-finite loss)");
        }
        if (validation_set.size() > 0) {
            const double acc = coverage_at_k(model, validation_set, config.k);
            stats.val_topk_acc = acc;
            if (acc > best_acc) {
                best_acc = acc;
                best_model = model;
                result.best_epoch = epoch;
            }
        }
        result.log.push_back(stats);
    }

    if (validation_set.size() > 0) {
        result.model = std::move(best_model);
        result.best_val_topk_acc = best_acc;
    } else {
        result.model = std::move(model);
        result.best_epoch = config.epochs;
    }
    return result;
}

TrainResult train(const corpus::DatasetSplit& splits, const features::Vocabulary& vocab,
                  const TrainConfig& config) {
    const auto train_set = encode_dataset(splits.train, vocab, splits.label_space);
    const auto val_set = encode_dataset(splits.validation, vocab, splits.label_space);
    return train_encoded(train_set, val_set, config);
}

CandidateSet select_topk(const std::vector<double>& probs, std::size_t k) {
    const std::size_t m = probs.size();
    if (k < 1 || k > m) {
        throw UsageError("select_topk: k must be in [1, m]");
    }
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (probs[a] != probs[b]) {
                              return probs[a] > probs[b];
                          }
                          return a < b;
                      });
    CandidateSet out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        out.push_back({order[i], probs[order[i]]});
    }
    return out;
}

std::vector<std::size_t> threshold_select(const std::vector<double>& probs, double threshold) {
    if (threshold <= 0.0 || threshold >= 1.0) {
        throw UsageError("threshold_select: threshold must be inside (0, 1)");
    }
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < probs.size(); ++j) {
        if (probs[j] > threshold) {
            out.push_back(j);
        }
    }
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const LinearModel& model,
                     const TrainConfig& config) {
    const std::size_t m = model.label_count();
    const std::size_t d = model.feature_dim();
    std::vector<double> data;
    data.reserve(m * d + m);
    for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t t = 0; t < d; ++t) {
            data.push_back(model.weight(j, t));
        }
    }
    for (std::size_t j = 0; j < m; ++j) {
        data.push_back(model.bias(j));
    }
    ordered_json doc{
        {"m", m},
        {"d", d},
        {"config",
         ordered_json{{"lambda1", config.lambda1},
                      {"lambda2", config.lambda2},
                      {"k", config.k},
                      {"learning_rate", config.learning_rate},
                      {"epochs", config.epochs},
                      {"batch_size", config.batch_size},
                      {"seed", config.seed},
                      {"threshold", config.threshold}}},
        {"data", data},
    };
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open checkpoint for writing: " + path.string());
    }
    out << doc.dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open checkpoint: " + path.string());
    }
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("m") || !doc.contains("d") ||
        !doc.contains("data")) {
        throw DataError("malformed checkpoint: " + path.string());
    }
    Checkpoint ckpt;
    const auto m = doc["m"].get<std::size_t>();
    const auto d = doc["d"].get<std::size_t>();
    const auto& data = doc["data"];
    if (!data.is_array() || data.size() != m * d + m) {
        throw DataError("checkpoint data length does not match dimensions");
    }
    ckpt.model = LinearModel(m, d);
    std::size_t pos = 0;
    for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t t = 0; t < d; ++t) {
            ckpt.model.weight(j, t) = data[pos++].get<double>();
        }
    }
    for (std::size_t j = 0; j < m; ++j) {
        ckpt.model.bias(j) = data[pos++].get<double>();
    }
    if (doc.contains("config") && doc["config"].is_object()) {
        const auto& c = doc["config"];
        ckpt.config.lambda1 = c.value("lambda1", 1.0);
        ckpt.config.lambda2 = c.value("lambda2", 1.0);
        ckpt.config.k = c.value("k", std::size_t{3});
        ckpt.config.learning_rate = c.value("learning_rate", 0.5);
        ckpt.config.epochs = c.value("epochs", std::size_t{30});
        ckpt.config.batch_size = c.value("batch_size", std::size_t{32});
        ckpt.config.seed = c.value("seed", std::uint64_t{42});
        ckpt.config.threshold = c.value("threshold", 0.3);
    }
    if (!ckpt.model.finite()) {
        throw DataError("checkpoint contains non-finite parameters");
    }
    return ckpt;
}

}  // namespace unilap::scm

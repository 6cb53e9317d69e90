#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "asdcap/embedding.hpp"
#include "asdcap/embedding_store.hpp"
#include "asdcap/knn.hpp"

namespace asdcap {

struct ScoringConfig {
    std::size_t k = 4;
    double threshold_percentile = 0.90;
    /// L2-normalize query and reference embeddings before the k-NN search.
    bool normalize_embeddings = false;

    /// Throws InvalidInput on k == 0 or a percentile outside (0, 1].
    void validate() const;
};

enum class Decision { Unscored, Normal, Anomalous };

std::string_view to_string(Decision d);

struct AnomalyResult {
    std::string sample_id;
    double score = 0.0;
    std::vector<Neighbor> neighbors;
    std::optional<double> threshold;
    Decision decision = Decision::Unscored;

    std::vector<std::string> neighbor_ids() const;
};

/// Mean Euclidean distance from `query` to its k nearest references.
/// The train store is expected to hold only normal-labeled records.
AnomalyResult anomaly_score(const Embedding& query, const EmbeddingStore& train_store,
                            const ScoringConfig& config, std::string_view sample_id = {});

/// Leave-one-out scores of every training record against the rest.
std::vector<double> leave_one_out_scores(const EmbeddingStore& train_store,
                                         const ScoringConfig& config);

/// Linear interpolation between order statistics, `fraction` in (0, 1].
double percentile(std::span<const double> values, double fraction);

/// Percentile of the leave-one-out scores. Needs at least k + 1 records.
double calibrate_threshold(const EmbeddingStore& train_store, const ScoringConfig& config);

/// anomalous iff score > threshold.
AnomalyResult classify(AnomalyResult result, double threshold);

/// Holds the (optionally normalized) reference set so many queries can be
/// scored without re-normalizing the store each time.
class AnomalyScorer {
public:
    AnomalyScorer(EmbeddingStore train_store, ScoringConfig config);

    /// Store the search runs over: normalized when the config asks for it.
    const EmbeddingStore& references() const noexcept {
        return normalized_ ? *normalized_ : raw_;
    }
    /// Embeddings exactly as stored, for decoding and similarity.
    const EmbeddingStore& raw_references() const noexcept { return raw_; }
    const ScoringConfig& config() const noexcept { return config_; }

    AnomalyResult score(const Embedding& query, std::string_view sample_id = {}) const;
    std::vector<double> leave_one_out_scores() const;
    double calibrate() const;

private:
    EmbeddingStore raw_;
    std::optional<EmbeddingStore> normalized_;
    ScoringConfig config_;
};

}  // namespace asdcap

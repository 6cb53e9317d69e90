#include "asdcap/anomaly.hpp"

#include <algorithm>
#include <cmath>

#include "asdcap/error.hpp"
#include "asdcap/parallel.hpp"

namespace asdcap {

void ScoringConfig::validate() const
{
    if (k == 0) {
        throw Error(ErrorCode::InvalidInput, "k must be at least 1");
    }
    if (!(threshold_percentile > 0.0 && threshold_percentile <= 1.0)) {
        throw Error(ErrorCode::InvalidInput, "threshold_percentile must lie in (0, 1]");
    }
}

std::string_view to_string(Decision d)
{
    switch (d) {
    case Decision::Unscored: return "unscored";
    case Decision::Normal: return "normal";
    case Decision::Anomalous: return "anomalous";
    }
    return "unscored";
}

std::vector<std::string> AnomalyResult::neighbor_ids() const
{
    std::vector<std::string> ids;
    ids.reserve(neighbors.size());
    for (const auto& n : neighbors) {
        ids.push_back(n.sample_id);
    }
    return ids;
}

namespace {

double mean_distance(const std::vector<Neighbor>& neighbors)
{
    double sum = 0.0;
    for (const auto& n : neighbors) {
        sum += n.distance;
    }
    return sum / static_cast<double>(neighbors.size());
}

}  // namespace

AnomalyScorer::AnomalyScorer(EmbeddingStore train_store, ScoringConfig config)
    : raw_(std::move(train_store)),
      config_(config)
{
    config_.validate();
    if (config_.normalize_embeddings) {
        normalized_ = raw_.l2_normalized();
    }
}

AnomalyResult AnomalyScorer::score(const Embedding& query, std::string_view sample_id) const
{
    const Embedding q = config_.normalize_embeddings ? l2_normalized(query) : query;
    AnomalyResult result;
    result.sample_id = std::string(sample_id);
    result.neighbors = knn_search(references(), q, config_.k);
    result.score = mean_distance(result.neighbors);
    return result;
}

std::vector<double> AnomalyScorer::leave_one_out_scores() const
{
    const auto& refs = references();
    if (refs.size() < config_.k + 1) {
        throw Error(ErrorCode::InsufficientReferences,
                    "leave-one-out scoring needs k+1=" + std::to_string(config_.k + 1) +
                        " training records, have " + std::to_string(refs.size()));
    }
    std::vector<double> scores(refs.size());
    parallel_for(refs.size(), [&](std::size_t i) {
        const auto& r = refs[i];
        scores[i] = mean_distance(knn_search(refs, r.embedding, config_.k, r.sample_id));
    });
    return scores;
}

double AnomalyScorer::calibrate() const
{
    return percentile(leave_one_out_scores(), config_.threshold_percentile);
}

AnomalyResult anomaly_score(const Embedding& query, const EmbeddingStore& train_store,
                            const ScoringConfig& config, std::string_view sample_id)
{
    return AnomalyScorer(train_store, config).score(query, sample_id);
}

std::vector<double> leave_one_out_scores(const EmbeddingStore& train_store,
                                         const ScoringConfig& config)
{
    return AnomalyScorer(train_store, config).leave_one_out_scores();
}

double percentile(std::span<const double> values, double fraction)
{
    if (values.empty()) {
        throw Error(ErrorCode::InvalidInput, "percentile of an empty set");
    }
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw Error(ErrorCode::InvalidInput, "percentile fraction must lie in (0, 1]");
    }
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double pos = fraction * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double calibrate_threshold(const EmbeddingStore& train_store, const ScoringConfig& config)
{
    return AnomalyScorer(train_store, config).calibrate();
}

AnomalyResult classify(AnomalyResult result, double threshold)
{
    result.threshold = threshold;
    result.decision = result.score > threshold ? Decision::Anomalous : Decision::Normal;
    return result;
}

}  // namespace asdcap

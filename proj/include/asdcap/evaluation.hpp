#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "asdcap/anomaly.hpp"
#include "asdcap/embedding_store.hpp"

namespace asdcap {

/// Mann-Whitney AUC: fraction of (anomalous, normal) pairs where the
/// anomalous score is higher, ties counted as one half.
double roc_auc(std::span<const double> normal_scores, std::span<const double> anomalous_scores);

struct RocResult {
    std::string machine_type;
    std::string machine_id;
    double auc = 0.0;
    std::size_t n_normal = 0;
    std::size_t n_anomalous = 0;
};

struct TypeAverage {
    std::string machine_type;
    double auc = 0.0;  // unweighted mean over IDs
    std::size_t n_ids = 0;
    std::size_t n_normal = 0;
    std::size_t n_anomalous = 0;
};

struct SkippedId {
    std::string machine_type;
    std::string machine_id;
    std::string reason;
};

struct EvaluationReport {
    ScoringConfig config;
    std::string provider;
    std::vector<RocResult> results;
    std::vector<TypeAverage> averages;
    std::vector<SkippedId> skipped;
};

/// Per machine_type/machine_id AUC, each ID scored only against its own
/// normal training records. IDs without enough data are reported as skipped.
EvaluationReport evaluate_machine(const EmbeddingStore& train, const EmbeddingStore& test,
                                  const ScoringConfig& config);

std::vector<TypeAverage> average_by_type(std::span<const RocResult> results);

inline constexpr std::string_view kReportHeader =
    "machine_type,machine_id,auc_percent,n_normal,n_anomalous";

/// Comma-separated table: '#' comment lines echoing the configuration and
/// skipped IDs, the header, per-ID rows, then one "Average" row per type.
void write_report_csv(const EvaluationReport& report, std::ostream& out);

}  // namespace asdcap

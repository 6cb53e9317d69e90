#include "asdcap/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "asdcap/error.hpp"
#include "asdcap/parallel.hpp"

namespace asdcap {

double roc_auc(std::span<const double> normal_scores, std::span<const double> anomalous_scores)
{
    if (normal_scores.empty() || anomalous_scores.empty()) {
        throw Error(ErrorCode::InvalidInput, "AUC needs at least one normal and one anomalous score");
    }
    const auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(normal_scores.begin(), normal_scores.end(), finite) ||
        !std::all_of(anomalous_scores.begin(), anomalous_scores.end(), finite)) {
        throw Error(ErrorCode::InvalidInput, "AUC scores must be finite");
    }

    std::vector<double> normals(normal_scores.begin(), normal_scores.end());
    std::sort(normals.begin(), normals.end());

    // Twice the Mann-Whitney U, kept integral so the ratio is exact.
    std::uint64_t twice_u = 0;
    for (double a : anomalous_scores) {
        const auto lower = std::lower_bound(normals.begin(), normals.end(), a);
        const auto upper = std::upper_bound(lower, normals.end(), a);
        twice_u += 2 * static_cast<std::uint64_t>(lower - normals.begin()) +
                   static_cast<std::uint64_t>(upper - lower);
    }
    const double pairs = static_cast<double>(normals.size()) * static_cast<double>(anomalous_scores.size());
    return static_cast<double>(twice_u) / (2.0 * pairs);
}

std::vector<TypeAverage> average_by_type(std::span<const RocResult> results)
{
    std::vector<TypeAverage> out;
    for (const auto& r : results) {
        auto it = std::find_if(out.begin(), out.end(),
                               [&](const TypeAverage& a) { return a.machine_type == r.machine_type; });
        if (it == out.end()) {
            out.push_back({r.machine_type, 0.0, 0, 0, 0});
            it = std::prev(out.end());
        }
        it->auc += r.auc;
        it->n_ids += 1;
        it->n_normal += r.n_normal;
        it->n_anomalous += r.n_anomalous;
    }
    for (auto& a : out) {
        a.auc /= static_cast<double>(a.n_ids);
    }
    return out;
}

EvaluationReport evaluate_machine(const EmbeddingStore& train, const EmbeddingStore& test,
                                  const ScoringConfig& config)
{
    config.validate();
    if (!train.empty() && !test.empty()) {
        require_same_dim(train.dim(), test.dim(), "train vs test store");
    }

    std::set<std::pair<std::string, std::string>> ids;
    for (const auto& r : train.records()) {
        if (r.split == Split::Train) ids.emplace(r.machine_type, r.machine_id);
    }
    for (const auto& r : test.records()) {
        if (r.split == Split::Test) ids.emplace(r.machine_type, r.machine_id);
    }
    const std::vector<std::pair<std::string, std::string>> order(ids.begin(), ids.end());

    struct Slot {
        std::optional<RocResult> result;
        std::optional<std::string> skip_reason;
    };
    std::vector<Slot> slots(order.size());

    parallel_for(order.size(), [&](std::size_t i) {
        const auto& [type, id] = order[i];
        const EmbeddingStore refs =
            train.filter({.machine_type = type, .machine_id = id, .split = Split::Train, .label = Label::Normal});
        const EmbeddingStore normals =
            test.filter({.machine_type = type, .machine_id = id, .split = Split::Test, .label = Label::Normal});
        const EmbeddingStore anomalies =
            test.filter({.machine_type = type, .machine_id = id, .split = Split::Test, .label = Label::Anomalous});

        if (refs.size() < config.k) {
            slots[i].skip_reason = "only " + std::to_string(refs.size()) +
                                   " normal training records for k=" + std::to_string(config.k);
            return;
        }
        if (normals.empty() || anomalies.empty()) {
            slots[i].skip_reason = "test split needs normal and anomalous records (have " +
                                   std::to_string(normals.size()) + " normal and " +
                                   std::to_string(anomalies.size()) + " anomalous)";
            return;
        }

        const AnomalyScorer scorer(refs, config);
        const auto scores_of = [&](const EmbeddingStore& s) {
            std::vector<double> out;
            out.reserve(s.size());
            for (const auto& r : s.records()) {
                out.push_back(scorer.score(r.embedding, r.sample_id).score);
            }
            return out;
        };
        const auto n = scores_of(normals);
        const auto a = scores_of(anomalies);
        slots[i].result = RocResult{type, id, roc_auc(n, a), n.size(), a.size()};
    });

    EvaluationReport report;
    report.config = config;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (slots[i].result) {
            report.results.push_back(*slots[i].result);
        } else {
            report.skipped.push_back({order[i].first, order[i].second, *slots[i].skip_reason});
        }
    }
    report.averages = average_by_type(report.results);
    return report;
}

namespace {

std::string percent2(double auc)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", auc * 100.0);
    return buf;
}

}  // namespace

void write_report_csv(const EvaluationReport& report, std::ostream& out)
{
    out << "# k=" << report.config.k
        << ",normalize_embeddings=" << (report.config.normalize_embeddings ? "true" : "false")
        << ",provider=" << (report.provider.empty() ? "unknown" : report.provider) << '\n';
    for (const auto& s : report.skipped) {
        out << "# skipped," << s.machine_type << ',' << s.machine_id << ',' << s.reason << '\n';
    }
    out << kReportHeader << '\n';
    for (const auto& r : report.results) {
        out << r.machine_type << ',' << r.machine_id << ',' << percent2(r.auc) << ','
            << r.n_normal << ',' << r.n_anomalous << '\n';
    }
    for (const auto& a : report.averages) {
        out << a.machine_type << ",Average," << percent2(a.auc) << ',' << a.n_normal << ','
            << a.n_anomalous << '\n';
    }
}

}  // namespace asdcap

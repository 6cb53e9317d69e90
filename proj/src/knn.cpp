#include "asdcap/knn.hpp"

#include <algorithm>

#include "asdcap/error.hpp"

namespace asdcap {

std::vector<Neighbor> knn_search(const EmbeddingStore& store, const Embedding& query,
                                 std::size_t k, std::string_view exclude_id)
{
    if (k == 0) {
        throw Error(ErrorCode::InvalidInput, "k must be at least 1");
    }
    if (!store.empty()) {
        require_same_dim(query.dim(), store.dim(), "knn query");
    }

    struct Candidate {
        double distance;
        const std::string* id;
    };
    std::vector<Candidate> candidates;
    candidates.reserve(store.size());
    for (const auto& r : store.records()) {
        if (!exclude_id.empty() && r.sample_id == exclude_id) {
            continue;
        }
        candidates.push_back({l2_distance(query.values(), r.embedding.values()), &r.sample_id});
    }
    if (candidates.size() < k) {
        throw Error(ErrorCode::InsufficientReferences,
                    "k=" + std::to_string(k) + " but only " + std::to_string(candidates.size()) +
                        " reference records");
    }

    const auto closer = [](const Candidate& a, const Candidate& b) {
        if (a.distance != b.distance) {
            return a.distance < b.distance;
        }
        return *a.id < *b.id;
    };
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                      candidates.end(), closer);

    std::vector<Neighbor> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        out.push_back({*candidates[i].id, candidates[i].distance});
    }
    return out;
}

}  // namespace asdcap

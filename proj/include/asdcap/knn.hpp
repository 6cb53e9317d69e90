#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "asdcap/embedding.hpp"
#include "asdcap/embedding_store.hpp"

namespace asdcap {

struct Neighbor {
    std::string sample_id;
    double distance = 0.0;

    bool operator==(const Neighbor&) const = default;
};

/// Exact k nearest neighbors by Euclidean distance, ascending, ties broken by
/// ascending sample_id. Records whose id equals `exclude_id` are skipped.
///
/// Throws InsufficientReferences when fewer than k candidates remain and
/// DimensionMismatch when the query does not match the store.
std::vector<Neighbor> knn_search(const EmbeddingStore& store, const Embedding& query,
                                 std::size_t k, std::string_view exclude_id = {});

}  // namespace asdcap

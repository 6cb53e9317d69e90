#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "asdcap/embedding.hpp"

namespace asdcap {

class EmbeddingProvider;

/// dot(a, b) / (|a| |b|), clamped to [-1, 1].
double cosine_similarity(const Embedding& a, const Embedding& b);

/// The eight malfunction-characteristic probes used by default.
const std::vector<std::string>& default_reference_texts();

/// One text per line, order kept, blank lines skipped.
std::vector<std::string> load_reference_texts(const std::filesystem::path& path);

class ReferenceTextSet {
public:
    ReferenceTextSet(std::vector<std::string> texts, std::vector<Embedding> embeddings);

    std::size_t size() const noexcept { return texts_.size(); }
    std::size_t dim() const noexcept { return embeddings_.front().dim(); }
    const std::vector<std::string>& texts() const noexcept { return texts_; }
    const std::vector<Embedding>& embeddings() const noexcept { return embeddings_; }

private:
    std::vector<std::string> texts_;
    std::vector<Embedding> embeddings_;
};

ReferenceTextSet embed_reference_texts(std::vector<std::string> texts,
                                       EmbeddingProvider& provider);

struct SimilarityMatrix {
    std::vector<std::string> row_ids;
    std::vector<std::string> col_texts;
    std::vector<double> values;  // row-major

    std::size_t rows() const noexcept { return row_ids.size(); }
    std::size_t cols() const noexcept { return col_texts.size(); }
    double at(std::size_t row, std::size_t col) const { return values[row * cols() + col]; }
    std::span<const double> row(std::size_t r) const {
        return std::span<const double>(values).subspan(r * cols(), cols());
    }
};

using LabeledEmbedding = std::pair<std::string, Embedding>;

SimilarityMatrix similarity_matrix(std::span<const LabeledEmbedding> sounds,
                                   const ReferenceTextSet& texts);

}  // namespace asdcap

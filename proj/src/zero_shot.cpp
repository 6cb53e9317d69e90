#include "asdcap/zero_shot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "asdcap/error.hpp"
#include "asdcap/providers.hpp"

namespace asdcap {

double cosine_similarity(const Embedding& a, const Embedding& b)
{
    require_same_dim(a.dim(), b.dim(), "cosine similarity");
    double dot = 0.0;
    double aa = 0.0;
    double bb = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        const double x = a[i];
        const double y = b[i];
        dot += x * y;
        aa += x * x;
        bb += y * y;
    }
    if (aa == 0.0 || bb == 0.0) {
        throw Error(ErrorCode::DegenerateVector, "cosine similarity of a zero vector");
    }
    return std::clamp(dot / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

const std::vector<std::string>& default_reference_texts()
{
    static const std::vector<std::string> texts = {
        "Vibration",
        "High-frequency Squealing or Screeching",
        "Popping or Knocking Sounds",
        "Rhythmic Clicking or Tapping",
        "Grinding Sounds",
        "Irregular Patterns",
        "Low-frequency Humming",
        "Unexpected Silence",
    };
    return texts;
}

std::vector<std::string> load_reference_texts(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::NotFound, "cannot open reference text file " + path.string());
    }
    std::vector<std::string> texts;
    std::string line;
    while (std::getline(in, line)) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) {
            continue;
        }
        const auto last = line.find_last_not_of(" \t\r");
        texts.push_back(line.substr(first, last - first + 1));
    }
    if (texts.empty()) {
        throw Error(ErrorCode::InvalidInput, path.string() + " holds no reference texts");
    }
    return texts;
}

ReferenceTextSet::ReferenceTextSet(std::vector<std::string> texts, std::vector<Embedding> embeddings)
    : texts_(std::move(texts)),
      embeddings_(std::move(embeddings))
{
    if (texts_.empty()) {
        throw Error(ErrorCode::InvalidInput, "reference text set is empty");
    }
    if (texts_.size() != embeddings_.size()) {
        throw Error(ErrorCode::InvalidInput, "reference texts and embeddings differ in count");
    }
    for (std::size_t i = 0; i < texts_.size(); ++i) {
        if (texts_[i].empty()) {
            throw Error(ErrorCode::InvalidInput, "reference text " + std::to_string(i) + " is empty");
        }
        require_same_dim(embeddings_[i].dim(), embeddings_.front().dim(), "reference text embedding");
    }
}

ReferenceTextSet embed_reference_texts(std::vector<std::string> texts, EmbeddingProvider& provider)
{
    std::vector<Embedding> embeddings;
    embeddings.reserve(texts.size());
    for (const auto& t : texts) {
        embeddings.push_back(provider.embed_text(t));
    }
    return ReferenceTextSet(std::move(texts), std::move(embeddings));
}

SimilarityMatrix similarity_matrix(std::span<const LabeledEmbedding> sounds,
                                   const ReferenceTextSet& texts)
{
    SimilarityMatrix m;
    m.col_texts = texts.texts();
    m.row_ids.reserve(sounds.size());
    m.values.reserve(sounds.size() * texts.size());
    for (const auto& [id, emb] : sounds) {
        m.row_ids.push_back(id);
        for (const auto& t : texts.embeddings()) {
            m.values.push_back(cosine_similarity(emb, t));
        }
    }
    return m;
}

}  // namespace asdcap

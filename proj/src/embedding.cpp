#include "asdcap/embedding.hpp"

#include <cmath>
#include <string>

#include "asdcap/error.hpp"

namespace asdcap {

Embedding::Embedding(std::vector<float> values)
    : values_(std::move(values))
{
    if (values_.empty()) {
        throw Error(ErrorCode::InvalidInput, "embedding must have at least one component");
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!std::isfinite(values_[i])) {
            throw Error(ErrorCode::InvalidInput,
                        "embedding component " + std::to_string(i) + " is not finite");
        }
    }
}

double squared_l2_distance(std::span<const float> a, std::span<const float> b)
{
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        sum += d * d;
    }
    return sum;
}

double l2_distance(std::span<const float> a, std::span<const float> b)
{
    return std::sqrt(squared_l2_distance(a, b));
}

double l2_norm(std::span<const float> a)
{
    double sum = 0.0;
    for (float v : a) {
        sum += static_cast<double>(v) * static_cast<double>(v);
    }
    return std::sqrt(sum);
}

Embedding l2_normalized(const Embedding& e)
{
    const double norm = l2_norm(e.values());
    if (norm == 0.0) {
        throw Error(ErrorCode::DegenerateVector, "cannot normalize an all-zero embedding");
    }
    std::vector<float> out(e.dim());
    for (std::size_t i = 0; i < e.dim(); ++i) {
        out[i] = static_cast<float>(static_cast<double>(e[i]) / norm);
    }
    return Embedding(std::move(out));
}

void require_same_dim(std::size_t a, std::size_t b, const char* what)
{
    if (a != b) {
        throw Error(ErrorCode::DimensionMismatch, std::string(what) + ": dimension " +
                                                      std::to_string(a) + " vs " +
                                                      std::to_string(b));
    }
}

}  // namespace asdcap

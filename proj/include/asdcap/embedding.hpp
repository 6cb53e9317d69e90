#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace asdcap {

/// Fixed-dimension float32 vector. Always non-empty and finite.
class Embedding {
public:
    Embedding() = default;
    explicit Embedding(std::vector<float> values);

    std::size_t dim() const noexcept { return values_.size(); }
    std::span<const float> values() const noexcept { return values_; }
    const float& operator[](std::size_t i) const { return values_[i]; }

    bool operator==(const Embedding&) const = default;

private:
    std::vector<float> values_;
};

double squared_l2_distance(std::span<const float> a, std::span<const float> b);
double l2_distance(std::span<const float> a, std::span<const float> b);
double l2_norm(std::span<const float> a);

/// Unit-length copy. Throws DegenerateVector for an all-zero input.
Embedding l2_normalized(const Embedding& e);

/// Throws DimensionMismatch unless a == b.
void require_same_dim(std::size_t a, std::size_t b, const char* what);

}  // namespace asdcap

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hymirec {

// Error taxonomy; the CLI maps these onto exit codes (2/3/4).
struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};
struct data_error : std::runtime_error {
    explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};
struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

using VecView = std::span<const double>;

/// Flat row-major store of same-dimension embeddings.
struct EmbeddingArray {
    int dim = 0;
    std::vector<double> data;

    EmbeddingArray() = default;
    explicit EmbeddingArray(int d) : dim(d) {}
    EmbeddingArray(int d, std::size_t n) : dim(d), data(static_cast<std::size_t>(d) * n) {}

    std::size_t size() const { return dim == 0 ? 0 : data.size() / static_cast<std::size_t>(dim); }
    const double* ptr(std::size_t i) const { return data.data() + i * static_cast<std::size_t>(dim); }
    double* ptr(std::size_t i) { return data.data() + i * static_cast<std::size_t>(dim); }
    VecView operator[](std::size_t i) const { return {ptr(i), static_cast<std::size_t>(dim)}; }

    void push_back(VecView v) {
        if (static_cast<int>(v.size()) != dim) throw data_error("EmbeddingArray: dimension mismatch");
        data.insert(data.end(), v.begin(), v.end());
    }
};

/// Time-ordered interaction history of one user.
struct UserSequence {
    std::uint64_t user_id = 0;
    std::vector<std::uint64_t> item_ids;
};

inline bool all_finite(VecView v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace hymirec

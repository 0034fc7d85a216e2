#ifndef CORRBOOT_SAMPLE_HPP
#define CORRBOOT_SAMPLE_HPP

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace corrboot {

/// n observed pairs of nonnegative counts.
struct PairedSample {
    std::vector<std::int64_t> xs;
    std::vector<std::int64_t> ys;

    std::size_t size() const noexcept { return xs.size(); }

    void reserve(std::size_t n) {
        xs.reserve(n);
        ys.reserve(n);
    }

    void push_back(std::int64_t x, std::int64_t y) {
        xs.push_back(x);
        ys.push_back(y);
    }

    void clear() noexcept {
        xs.clear();
        ys.clear();
    }

    friend bool operator==(const PairedSample&, const PairedSample&) = default;
};

/// Checks the data-level invariants: equal lengths, n >= 2, nonnegative values.
inline void validate(const PairedSample& sample) {
    if (sample.xs.size() != sample.ys.size()) {
        throw std::invalid_argument("paired sample: columns have different lengths");
    }
    if (sample.size() < 2) {
        throw std::invalid_argument("paired sample: at least two pairs are required");
    }
    for (std::size_t i = 0; i < sample.size(); ++i) {
        if (sample.xs[i] < 0 || sample.ys[i] < 0) {
            throw std::invalid_argument("paired sample: observations must be nonnegative");
        }
    }
}

} // namespace corrboot

#endif

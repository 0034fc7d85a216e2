#ifndef CORRBOOT_RNG_HPP
#define CORRBOOT_RNG_HPP

#include <bit>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <string_view>

namespace corrboot {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Folds a sequence of words into a single stream key. Order matters.
constexpr std::uint64_t derive_key(std::initializer_list<std::uint64_t> words) noexcept {
    std::uint64_t h = 0x6A09E667F3BCC909ULL;
    for (const auto w : words) {
        h = mix64(h ^ mix64(w + 0x9E3779B97F4A7C15ULL));
    }
    return h;
}

constexpr std::uint64_t key_of(double value) noexcept {
    return std::bit_cast<std::uint64_t>(value);
}

/// FNV-1a, used to turn labels into key words.
constexpr std::uint64_t key_of(std::string_view text) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const char ch : text) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Counter-based random stream (keyed SplitMix64).
///
/// Streams are cheap to construct, so every unit of work (dataset, bootstrap
/// replicate) gets its own stream derived from a key, and results never
/// depend on which worker ran it or in which order.
class Stream {
public:
    using result_type = std::uint64_t;

    explicit constexpr Stream(std::uint64_t key) noexcept : state_(mix64(key)) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() noexcept {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix64(state_);
    }

private:
    std::uint64_t state_;
};

} // namespace corrboot

#endif

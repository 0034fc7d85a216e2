#ifndef CORRBOOT_RESAMPLING_HPP
#define CORRBOOT_RESAMPLING_HPP

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "corrboot/errors.hpp"
#include "corrboot/normal.hpp"
#include "corrboot/rng.hpp"
#include "corrboot/sample.hpp"

namespace corrboot {

/// A statistic maps a sample to a value, or nullopt where it is undefined.
template <typename F>
concept Statistic = std::invocable<F&, const PairedSample&> &&
                    std::convertible_to<std::invoke_result_t<F&, const PairedSample&>, std::optional<double>>;

struct BootstrapDistribution {
    double theta_hat = 0.0;
    std::vector<double> replicates; ///< in draw order
    std::vector<double> sorted;     ///< ascending copy of replicates
    std::size_t redraw_count = 0;   ///< degenerate resamples discarded and redrawn

    std::size_t size() const noexcept { return replicates.size(); }

    /// Builds a distribution from precomputed replicates.
    static BootstrapDistribution from_replicates(double theta_hat, std::vector<double> replicates,
                                                 std::size_t redraw_count = 0) {
        if (replicates.empty()) {
            throw std::invalid_argument("bootstrap distribution: need at least one replicate");
        }
        BootstrapDistribution d;
        d.theta_hat = theta_hat;
        d.replicates = std::move(replicates);
        d.sorted = d.replicates;
        std::sort(d.sorted.begin(), d.sorted.end());
        d.redraw_count = redraw_count;
        return d;
    }
};

namespace detail {

inline void draw_resample(const PairedSample& source, PairedSample& out, Stream& rng) {
    const std::size_t n = source.size();
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    out.xs.resize(n);
    out.ys.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = pick(rng);
        out.xs[i] = source.xs[j];
        out.ys[i] = source.ys[j];
    }
}

} // namespace detail

/// Draws one with-replacement resample of the pairs from `rng`, redrawing
/// while the statistic is undefined. Redraws are added to `redraws`; going
/// past `budget` throws.
template <Statistic Stat>
double draw_replicate(const PairedSample& sample, Stat& stat, Stream& rng, PairedSample& scratch,
                      std::size_t& redraws, std::size_t budget) {
    for (;;) {
        detail::draw_resample(sample, scratch, rng);
        if (const std::optional<double> value = stat(scratch)) {
            return *value;
        }
        if (++redraws > budget) {
            throw RedrawBudgetExhausted("bootstrap: redraw budget exhausted");
        }
    }
}

/// B bootstrap replicates of `stat`. Replicate b draws from the stream keyed
/// by (key, b), so the result is a pure function of the inputs.
template <Statistic Stat>
BootstrapDistribution bootstrap_replicates(const PairedSample& sample, Stat&& stat, std::size_t B,
                                           std::uint64_t key) {
    if (B < 1) {
        throw std::invalid_argument("bootstrap: B must be at least 1");
    }
    const std::optional<double> theta = stat(sample);
    if (!theta) {
        throw DegenerateSample("bootstrap: statistic undefined on the original sample");
    }
    std::vector<double> values(B);
    std::size_t redraws = 0;
    PairedSample scratch;
    for (std::size_t b = 0; b < B; ++b) {
        Stream rng(derive_key({key, b}));
        values[b] = draw_replicate(sample, stat, rng, scratch, redraws, 100 * B);
    }
    return BootstrapDistribution::from_replicates(*theta, std::move(values), redraws);
}

/// Copy of `dist` in which every replicate failing `keep` is replaced by a
/// fresh draw from streams keyed (key, B), (key, B + 1), ... that passes both
/// the statistic and `keep`. Replacements count as redraws.
template <Statistic Stat, typename Keep>
BootstrapDistribution redraw_replicates_where(const BootstrapDistribution& dist, const PairedSample& sample,
                                              Stat&& stat, Keep&& keep, std::uint64_t key) {
    const std::size_t B = dist.size();
    const std::size_t budget = 100 * B;
    std::vector<double> values = dist.replicates;
    std::size_t redraws = dist.redraw_count;
    std::size_t extra = 0;
    PairedSample scratch;
    auto checked = [&](const PairedSample& s) -> std::optional<double> {
        const std::optional<double> v = stat(s);
        if (v && keep(*v)) {
            return v;
        }
        return std::nullopt;
    };
    for (auto& v : values) {
        if (keep(v)) {
            continue;
        }
        ++redraws;
        if (redraws > budget) {
            throw RedrawBudgetExhausted("bootstrap: redraw budget exhausted");
        }
        Stream rng(derive_key({key, B + extra++}));
        v = draw_replicate(sample, checked, rng, scratch, redraws, budget);
    }
    return BootstrapDistribution::from_replicates(dist.theta_hat, std::move(values), redraws);
}

/// Generalized inverse of the bootstrap CDF: the k-th order statistic with
/// k = ceil(q B) clamped to [1, B].
inline double ecdf_quantile(const BootstrapDistribution& dist, double q) {
    if (!(q > 0.0 && q < 1.0)) {
        throw std::domain_error("ecdf_quantile: q must lie in (0, 1)");
    }
    const std::size_t B = dist.sorted.size();
    // The 1e-9 slack keeps q = b / B (and Phi(Phi^-1(q))) on order statistic b.
    const double pos = std::ceil(q * static_cast<double>(B) - 1e-9);
    const auto k = static_cast<std::size_t>(std::clamp(pos, 1.0, static_cast<double>(B)));
    return dist.sorted[k - 1];
}

/// Fraction of replicates <= t.
inline double ecdf(const BootstrapDistribution& dist, double t) {
    const auto it = std::upper_bound(dist.sorted.begin(), dist.sorted.end(), t);
    return static_cast<double>(it - dist.sorted.begin()) / static_cast<double>(dist.sorted.size());
}

enum class InfluenceKind { NegativeJackknife, PositiveJackknife, InfinitesimalNumeric };

struct InfluenceValues {
    std::vector<double> values;
    InfluenceKind kind = InfluenceKind::NegativeJackknife;
};

/// I_i = (n - 1) * (stat(full) - stat(without i)).
template <Statistic Stat>
InfluenceValues jackknife_influence_negative(const PairedSample& sample, Stat&& stat) {
    const std::size_t n = sample.size();
    const std::optional<double> full = stat(sample);
    if (!full) {
        throw DegenerateSample("jackknife: statistic undefined on the full sample");
    }
    InfluenceValues out{std::vector<double>(n), InfluenceKind::NegativeJackknife};
    PairedSample sub;
    sub.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        sub.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                sub.push_back(sample.xs[j], sample.ys[j]);
            }
        }
        const std::optional<double> v = stat(sub);
        if (!v) {
            throw DegenerateSubsample(i);
        }
        out.values[i] = static_cast<double>(n - 1) * (*full - *v);
    }
    return out;
}

/// I_i = (n + 1) * (stat(full with x_i duplicated) - stat(full)).
template <Statistic Stat>
InfluenceValues jackknife_influence_positive(const PairedSample& sample, Stat&& stat) {
    const std::size_t n = sample.size();
    const std::optional<double> full = stat(sample);
    if (!full) {
        throw DegenerateSample("jackknife: statistic undefined on the full sample");
    }
    InfluenceValues out{std::vector<double>(n), InfluenceKind::PositiveJackknife};
    PairedSample sup = sample;
    sup.push_back(0, 0);
    for (std::size_t i = 0; i < n; ++i) {
        sup.xs[n] = sample.xs[i];
        sup.ys[n] = sample.ys[i];
        const std::optional<double> v = stat(sup);
        if (!v) {
            throw DegenerateSubsample(i);
        }
        out.values[i] = static_cast<double>(n + 1) * (*v - *full);
    }
    return out;
}

/// Acceleration constant: one sixth of the standardized skewness of the
/// influence values, sum(I^3) / (6 * sum(I^2)^1.5).
inline double acceleration(const InfluenceValues& influence) {
    double s2 = 0.0;
    double s3 = 0.0;
    for (const double v : influence.values) {
        s2 += v * v;
        s3 += v * v * v;
    }
    if (!(s2 > 0.0)) {
        throw ZeroSpread("acceleration: all influence values are zero");
    }
    return s3 / (6.0 * std::pow(s2, 1.5));
}

struct BiasCorrection {
    double z0 = 0.0;
    bool clamped = false;
};

/// z0 = Phi^-1(#{theta* < theta_hat} / B), the proportion clamped into
/// [1 / (2B), 1 - 1 / (2B)]. Ties with theta_hat do not count as below.
inline BiasCorrection bias_correction_z0(const BootstrapDistribution& dist) {
    const double B = static_cast<double>(dist.sorted.size());
    const auto below = std::lower_bound(dist.sorted.begin(), dist.sorted.end(), dist.theta_hat) -
                       dist.sorted.begin();
    double p = static_cast<double>(below) / B;
    const double lo = 1.0 / (2.0 * B);
    const double hi = 1.0 - lo;
    BiasCorrection out;
    if (p < lo) {
        p = lo;
        out.clamped = true;
    } else if (p > hi) {
        p = hi;
        out.clamped = true;
    }
    out.z0 = p == 0.5 ? 0.0 : normal_quantile(p);
    return out;
}

} // namespace corrboot

#endif

#ifndef CORRBOOT_DISTRIBUTIONS_HPP
#define CORRBOOT_DISTRIBUTIONS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "corrboot/errors.hpp"
#include "corrboot/sample.hpp"

namespace corrboot {

struct BivariatePoissonParams {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double lambda3 = 0.0; ///< shared component; the covariance of X and Y

    friend bool operator==(const BivariatePoissonParams&, const BivariatePoissonParams&) = default;
};

struct BivariateNegBinParams {
    int r = 1;
    double p1 = 0.0;
    double p2 = 0.0;

    friend bool operator==(const BivariateNegBinParams&, const BivariateNegBinParams&) = default;
};

using DistributionSpec = std::variant<BivariatePoissonParams, BivariateNegBinParams>;

inline void validate(const BivariatePoissonParams& p) {
    if (!(p.lambda1 >= 0.0 && p.lambda2 >= 0.0 && p.lambda3 >= 0.0) || !std::isfinite(p.lambda1) ||
        !std::isfinite(p.lambda2) || !std::isfinite(p.lambda3)) {
        throw std::invalid_argument("bivariate Poisson: rates must be finite and nonnegative");
    }
}

inline void validate(const BivariateNegBinParams& p) {
    if (p.r < 1) {
        throw std::invalid_argument("bivariate negative binomial: r must be a positive integer");
    }
    if (!(p.p1 >= 0.0 && p.p2 >= 0.0 && p.p1 + p.p2 < 1.0)) {
        throw std::invalid_argument("bivariate negative binomial: need p1, p2 >= 0 and p1 + p2 < 1");
    }
}

inline void validate(const DistributionSpec& spec) {
    std::visit([](const auto& p) { validate(p); }, spec);
}

inline std::string family_name(const DistributionSpec& spec) {
    return std::holds_alternative<BivariatePoissonParams>(spec) ? "poisson" : "negbin";
}

/// log(k!) from a table for k <= cap, lgamma beyond it.
class LogFactorialTable {
public:
    explicit LogFactorialTable(std::size_t cap = 10000) : table_(cap + 1, 0.0) {
        for (std::size_t k = 2; k <= cap; ++k) {
            table_[k] = table_[k - 1] + std::log(static_cast<double>(k));
        }
    }

    double operator()(std::int64_t k) const {
        if (k < 0) {
            throw std::domain_error("log factorial of a negative integer");
        }
        const auto idx = static_cast<std::size_t>(k);
        if (idx < table_.size()) {
            return table_[idx];
        }
        return std::lgamma(static_cast<double>(k) + 1.0);
    }

    std::size_t cap() const noexcept { return table_.size() - 1; }

    static const LogFactorialTable& shared() {
        static const LogFactorialTable table;
        return table;
    }

private:
    std::vector<double> table_;
};

namespace detail {

// k * log(rate) with the convention 0 * log(0) = 0.
inline double log_power(double rate, std::int64_t k) {
    if (k == 0) {
        return 0.0;
    }
    if (rate <= 0.0) {
        return -std::numeric_limits<double>::infinity();
    }
    return static_cast<double>(k) * std::log(rate);
}

} // namespace detail

inline double pmf_bivariate_poisson(const BivariatePoissonParams& params, std::int64_t x, std::int64_t y,
                                    const LogFactorialTable& log_fact = LogFactorialTable::shared()) {
    validate(params);
    if (x < 0 || y < 0) {
        return 0.0;
    }
    const double log_norm = -(params.lambda1 + params.lambda2 + params.lambda3);
    const std::int64_t top = std::min(x, y);

    std::vector<double> terms;
    terms.reserve(static_cast<std::size_t>(top) + 1);
    double peak = -std::numeric_limits<double>::infinity();
    for (std::int64_t delta = 0; delta <= top; ++delta) {
        const double t = detail::log_power(params.lambda1, x - delta) +
                         detail::log_power(params.lambda2, y - delta) +
                         detail::log_power(params.lambda3, delta) - log_fact(x - delta) -
                         log_fact(y - delta) - log_fact(delta);
        terms.push_back(t);
        peak = std::max(peak, t);
    }
    if (peak == -std::numeric_limits<double>::infinity()) {
        return 0.0;
    }
    double acc = 0.0;
    for (const double t : terms) {
        acc += std::exp(t - peak);
    }
    return std::exp(log_norm + peak + std::log(acc));
}

inline double pmf_bivariate_negbin(const BivariateNegBinParams& params, std::int64_t x, std::int64_t y,
                                   const LogFactorialTable& log_fact = LogFactorialTable::shared()) {
    validate(params);
    if (x < 0 || y < 0) {
        return 0.0;
    }
    const double log_p = log_fact(params.r + x + y - 1) - log_fact(params.r - 1) - log_fact(x) -
                         log_fact(y) + detail::log_power(params.p1, x) +
                         detail::log_power(params.p2, y) +
                         static_cast<double>(params.r) * std::log1p(-(params.p1 + params.p2));
    return std::exp(log_p);
}

inline double pmf(const DistributionSpec& spec, std::int64_t x, std::int64_t y) {
    return std::visit(
        [&](const auto& p) {
            if constexpr (std::is_same_v<std::decay_t<decltype(p)>, BivariatePoissonParams>) {
                return pmf_bivariate_poisson(p, x, y);
            } else {
                return pmf_bivariate_negbin(p, x, y);
            }
        },
        spec);
}

inline double poisson_correlation(const BivariatePoissonParams& params) {
    validate(params);
    const double vx = params.lambda1 + params.lambda3;
    const double vy = params.lambda2 + params.lambda3;
    if (vx <= 0.0 || vy <= 0.0) {
        throw std::domain_error("bivariate Poisson: a marginal variance is zero");
    }
    return params.lambda3 / std::sqrt(vx * vy);
}

inline double negbin_correlation(const BivariateNegBinParams& params) {
    validate(params);
    return std::sqrt(params.p1 * params.p2) / std::sqrt((1.0 - params.p1) * (1.0 - params.p2));
}

inline double correlation(const DistributionSpec& spec) {
    return std::visit(
        [](const auto& p) {
            if constexpr (std::is_same_v<std::decay_t<decltype(p)>, BivariatePoissonParams>) {
                return poisson_correlation(p);
            } else {
                return negbin_correlation(p);
            }
        },
        spec);
}

namespace detail {

// Bisection for an increasing function on [lo, hi] with f(lo) <= target <= f(hi).
template <typename F>
double bisect_increasing(F&& f, double target, double lo, double hi, double tol = 1e-12,
                         int max_iter = 200) {
    for (int it = 0; it < max_iter && hi - lo > tol; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (f(mid) < target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

} // namespace detail

/// Covariance rate that gives the requested correlation for fixed lambda1, lambda2.
inline double solve_poisson_lambda3(double rho, double lambda1, double lambda2) {
    if (!(rho >= 0.0 && rho < 1.0)) {
        throw NoSolution("bivariate Poisson: correlation must lie in [0, 1)");
    }
    if (!(lambda1 > 0.0 && lambda2 > 0.0)) {
        throw std::invalid_argument("bivariate Poisson: lambda1 and lambda2 must be positive");
    }
    if (rho == 0.0) {
        return 0.0;
    }
    auto corr = [&](double l3) { return poisson_correlation({lambda1, lambda2, l3}); };
    double hi = 1.0;
    while (corr(hi) < rho) {
        hi *= 2.0;
        if (!std::isfinite(hi)) {
            throw NoSolution("bivariate Poisson: failed to bracket lambda3");
        }
    }
    return detail::bisect_increasing(corr, rho, 0.0, hi);
}

/// (p1, p2) on the line p2 = ratio * p1 with the requested correlation.
inline std::pair<double, double> solve_negbin_p(double rho, double ratio) {
    if (!(ratio > 0.0) || !std::isfinite(ratio)) {
        throw std::invalid_argument("bivariate negative binomial: ratio must be positive");
    }
    if (!(rho > 0.0 && rho < 1.0)) {
        throw NoSolution("bivariate negative binomial: correlation must lie in (0, 1)");
    }
    // p1 + p2 < 1 bounds p1 below 1 / (1 + ratio); correlation tends to 1 there.
    const double upper = 1.0 / (1.0 + ratio);
    auto corr = [&](double p1) {
        const double p2 = ratio * p1;
        return std::sqrt(p1 * p2) / std::sqrt((1.0 - p1) * (1.0 - p2));
    };
    const double p1 = detail::bisect_increasing(corr, rho, 0.0, upper);
    if (!(p1 > 0.0 && p1 + ratio * p1 < 1.0)) {
        throw NoSolution("bivariate negative binomial: correlation unreachable on the constraint line");
    }
    return {p1, ratio * p1};
}

/// X = U + W, Y = V + W with independent Poisson U, V, W (trivariate reduction).
template <typename Rng>
PairedSample sample_bivariate_poisson(const BivariatePoissonParams& params, std::size_t n, Rng& rng) {
    validate(params);
    if (n < 1) {
        throw std::invalid_argument("sample size must be at least 1");
    }
    using Poisson = std::poisson_distribution<std::int64_t>;
    auto make = [](double rate) { return Poisson(rate > 0.0 ? rate : 1.0); };
    Poisson u = make(params.lambda1);
    Poisson v = make(params.lambda2);
    Poisson w = make(params.lambda3);
    auto draw = [&rng](Poisson& dist, double rate) -> std::int64_t { return rate > 0.0 ? dist(rng) : 0; };

    PairedSample out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::int64_t common = draw(w, params.lambda3);
        out.push_back(draw(u, params.lambda1) + common, draw(v, params.lambda2) + common);
    }
    return out;
}

/// Gamma-Poisson compounding: G ~ Gamma(r, 1), X | G ~ Poisson(G p1 / q),
/// Y | G ~ Poisson(G p2 / q), q = 1 - p1 - p2. The joint pgf is
/// (q / (1 - p1 s - p2 t))^r, i.e. exactly the bivariate negative binomial.
template <typename Rng>
PairedSample sample_bivariate_negbin(const BivariateNegBinParams& params, std::size_t n, Rng& rng) {
    validate(params);
    if (n < 1) {
        throw std::invalid_argument("sample size must be at least 1");
    }
    const double q = 1.0 - params.p1 - params.p2;
    const double scale1 = params.p1 / q;
    const double scale2 = params.p2 / q;
    std::gamma_distribution<double> mixing(static_cast<double>(params.r), 1.0);
    std::poisson_distribution<std::int64_t> count;
    auto draw = [&](double mean) -> std::int64_t {
        if (!(mean > 0.0)) {
            return 0;
        }
        return count(rng, std::poisson_distribution<std::int64_t>::param_type(mean));
    };

    PairedSample out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double g = mixing(rng);
        const std::int64_t x = draw(g * scale1);
        const std::int64_t y = draw(g * scale2);
        out.push_back(x, y);
    }
    return out;
}

template <typename Rng>
PairedSample sample(const DistributionSpec& spec, std::size_t n, Rng& rng) {
    return std::visit(
        [&](const auto& p) {
            if constexpr (std::is_same_v<std::decay_t<decltype(p)>, BivariatePoissonParams>) {
                return sample_bivariate_poisson(p, n, rng);
            } else {
                return sample_bivariate_negbin(p, n, rng);
            }
        },
        spec);
}

} // namespace corrboot

#endif

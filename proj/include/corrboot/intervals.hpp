#ifndef CORRBOOT_INTERVALS_HPP
#define CORRBOOT_INTERVALS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "corrboot/errors.hpp"
#include "corrboot/estimators.hpp"
#include "corrboot/normal.hpp"
#include "corrboot/resampling.hpp"
#include "corrboot/sample.hpp"

namespace corrboot {

enum class Method { Normal, Basic, Percentile, BCaNeg, BCaPos, ABC, Studentized, Fisher };

inline constexpr std::array<Method, 8> all_methods{Method::Normal,  Method::Basic,  Method::Percentile,
                                                   Method::ABC,     Method::BCaNeg, Method::BCaPos,
                                                   Method::Studentized, Method::Fisher};

inline std::string_view to_string(Method m) {
    switch (m) {
    case Method::Normal: return "normal";
    case Method::Basic: return "basic";
    case Method::Percentile: return "percentile";
    case Method::BCaNeg: return "bca_neg";
    case Method::BCaPos: return "bca_pos";
    case Method::ABC: return "abc";
    case Method::Studentized: return "studentized";
    case Method::Fisher: return "fisher";
    }
    return "?";
}

inline Method parse_method(std::string_view name) {
    for (const Method m : all_methods) {
        if (to_string(m) == name) {
            return m;
        }
    }
    throw std::invalid_argument("unknown interval method '" + std::string(name) + "'");
}

/// True for the methods that consume a Monte Carlo bootstrap distribution.
constexpr bool uses_bootstrap(Method m) {
    return m != Method::ABC && m != Method::Fisher;
}

struct ConfidenceInterval {
    double lower = 0.0;
    double upper = 0.0;
    Method method = Method::Percentile;
    double nominal = 0.95; ///< 1 - 2 alpha
    double alpha = 0.025;
    bool exceeds_range = false; ///< [lower, upper] not inside [-1, 1]
    bool clamped_z0 = false;

    double length() const noexcept { return upper - lower; }
    bool contains(double value) const noexcept { return lower <= value && value <= upper; }
};

namespace detail {

inline void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha <= 0.5)) {
        throw std::domain_error("alpha must lie in (0, 0.5]");
    }
}

inline ConfidenceInterval make_interval(double lower, double upper, Method method, double alpha) {
    ConfidenceInterval ci;
    ci.lower = lower;
    ci.upper = upper;
    ci.method = method;
    ci.alpha = alpha;
    ci.nominal = 1.0 - 2.0 * alpha;
    ci.exceeds_range = lower < -1.0 || upper > 1.0;
    return ci;
}

} // namespace detail

/// theta_hat +/- z_{1-alpha} * SE, SE the standard deviation of the replicates.
inline ConfidenceInterval ci_normal(const BootstrapDistribution& dist, double alpha) {
    detail::check_alpha(alpha);
    const std::size_t B = dist.size();
    if (B < 2) {
        throw std::domain_error("normal interval: need at least two replicates");
    }
    if (dist.sorted.front() == dist.sorted.back()) {
        throw ZeroSpread("normal interval: all replicates are equal");
    }
    double mean = 0.0;
    for (const double v : dist.replicates) {
        mean += v;
    }
    mean /= static_cast<double>(B);
    double ss = 0.0;
    for (const double v : dist.replicates) {
        ss += (v - mean) * (v - mean);
    }
    const double se = std::sqrt(ss / static_cast<double>(B - 1));
    if (!(se > 0.0)) {
        throw ZeroSpread("normal interval: all replicates are equal");
    }
    const double half = normal_quantile(1.0 - alpha) * se;
    return detail::make_interval(dist.theta_hat - half, dist.theta_hat + half, Method::Normal, alpha);
}

inline ConfidenceInterval ci_percentile(const BootstrapDistribution& dist, double alpha) {
    detail::check_alpha(alpha);
    return detail::make_interval(ecdf_quantile(dist, alpha), ecdf_quantile(dist, 1.0 - alpha),
                                 Method::Percentile, alpha);
}

/// Reflected percentile interval [2 theta_hat - Q(1-alpha), 2 theta_hat - Q(alpha)].
inline ConfidenceInterval ci_basic(const BootstrapDistribution& dist, double alpha) {
    detail::check_alpha(alpha);
    const double twice = 2.0 * dist.theta_hat;
    return detail::make_interval(twice - ecdf_quantile(dist, 1.0 - alpha), twice - ecdf_quantile(dist, alpha),
                                 Method::Basic, alpha);
}

struct BCaConstants {
    double z0 = 0.0;
    double acceleration = 0.0;
    bool clamped_z0 = false;
};

/// Adjusted percentile level Phi(z0 + (z0 + z) / (1 - a (z0 + z))), z = Phi^-1(level).
inline double bca_level(double level, double z0, double a) {
    const double w = z0 + normal_quantile(level);
    const double denom = 1.0 - a * w;
    if (std::abs(denom) < 1e-12) {
        throw SingularDenominator("BCa: 1 - a (z0 + z) vanishes");
    }
    const double adjusted = normal_cdf(z0 + w / denom);
    return std::clamp(adjusted, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
}

inline ConfidenceInterval ci_bca(const BootstrapDistribution& dist, const BCaConstants& constants, double alpha,
                                 Method tag = Method::BCaNeg) {
    detail::check_alpha(alpha);
    const double lo = bca_level(alpha, constants.z0, constants.acceleration);
    const double hi = bca_level(1.0 - alpha, constants.z0, constants.acceleration);
    auto ci = detail::make_interval(ecdf_quantile(dist, lo), ecdf_quantile(dist, hi), tag, alpha);
    ci.clamped_z0 = constants.clamped_z0;
    return ci;
}

/// BCa interval with z0 from the replicates and acceleration from `influence`.
/// The method tag follows the influence kind.
inline ConfidenceInterval ci_bca(const BootstrapDistribution& dist, const InfluenceValues& influence,
                                 double alpha) {
    const BiasCorrection bc = bias_correction_z0(dist);
    const BCaConstants constants{bc.z0, acceleration(influence), bc.clamped};
    const Method tag = influence.kind == InfluenceKind::PositiveJackknife ? Method::BCaPos : Method::BCaNeg;
    return ci_bca(dist, constants, alpha, tag);
}

// ---------------------------------------------------------------------------
// ABC

struct AbcDetails {
    double theta_hat = 0.0;
    double sigma = 0.0;        ///< delta-method standard error
    double acceleration = 0.0;
    double z0 = 0.0;
    double curvature = 0.0;
    std::vector<double> influence; ///< numeric first-order influence components
    std::size_t quadratic_endpoints = 0; ///< endpoints taken from the quadratic form
};

/// Approximate bootstrap confidence interval for a statistic of the
/// resampling weight vector.
///
/// `tt(w)` evaluates the statistic at weights w (length n, summing to one);
/// the uniform vector reproduces theta_hat. Derivatives use central
/// differences with step eps / n. Where the statistic is undefined at an
/// endpoint weight vector (large steps can make weights negative), that
/// endpoint uses the quadratic form theta_hat + sigma * lam * (1 + cq * lam).
template <typename WeightedStat>
ConfidenceInterval abc_interval(WeightedStat&& tt, std::size_t n, double alpha, AbcDetails* details = nullptr,
                                double eps = 0.01) {
    detail::check_alpha(alpha);
    if (n < 2) {
        throw std::domain_error("ABC: need at least two observations");
    }
    const double nd = static_cast<double>(n);
    const double h = eps / nd;
    std::vector<double> p0(n, 1.0 / nd);
    std::vector<double> w(n);

    auto eval = [&](const std::vector<double>& weights) {
        const std::optional<double> v = tt(std::span<const double>(weights));
        if (!v) {
            throw DegenerateSample("ABC: weighted statistic undefined at a perturbation point");
        }
        return *v;
    };
    auto along = [&](std::span<const double> dir, double step) {
        for (std::size_t i = 0; i < n; ++i) {
            w[i] = p0[i] + step * dir[i];
        }
        return eval(w);
    };

    const double t0 = eval(p0);
    std::vector<double> t1(n);
    double t2_sum = 0.0;
    std::vector<double> dir(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            dir[j] = (i == j ? 1.0 : 0.0) - p0[j];
        }
        const double tp = along(dir, h);
        const double tm = along(dir, -h);
        t1[i] = (tp - tm) / (2.0 * h);
        t2_sum += (tp - 2.0 * t0 + tm) / (h * h);
    }

    double s2 = 0.0;
    double s3 = 0.0;
    for (const double v : t1) {
        s2 += v * v;
        s3 += v * v * v;
    }
    const double sigma = std::sqrt(s2) / nd;
    // Below this the components are difference noise around exact zeros.
    if (!(sigma > 1e-9 * std::max(1.0, std::abs(t0)))) {
        throw ZeroSpread("ABC: all influence components are zero");
    }
    const double a = s3 / (6.0 * std::pow(s2, 1.5));

    std::vector<double> delta(n);
    for (std::size_t i = 0; i < n; ++i) {
        delta[i] = t1[i] / (nd * nd * sigma);
    }
    const double cq = (along(delta, h) - 2.0 * t0 + along(delta, -h)) / (2.0 * sigma * h * h);
    const double bias = t2_sum / (2.0 * nd * nd);
    const double curvature = bias / sigma - cq;
    // 2 Phi(a) Phi(-c) can leave (0, 1) for extreme a and c; clamp as for BCa.
    const double z0_level = 2.0 * normal_cdf(a) * normal_cdf(-curvature);
    const bool clamped_z0 = !(z0_level > 0.0 && z0_level < 1.0);
    const double z0 =
        normal_quantile(std::clamp(z0_level, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0)));

    std::size_t quadratic = 0;
    auto endpoint = [&](double level) {
        const double z = z0 + normal_quantile(level);
        const double denom = 1.0 - a * z;
        if (std::abs(denom) < 1e-12) {
            throw SingularDenominator("ABC: 1 - a z vanishes");
        }
        const double lam = z / (denom * denom);
        for (std::size_t i = 0; i < n; ++i) {
            w[i] = p0[i] + lam * delta[i];
        }
        if (const std::optional<double> v = tt(std::span<const double>(w))) {
            return *v;
        }
        ++quadratic;
        return t0 + sigma * lam * (1.0 + cq * lam);
    };
    const double lower = endpoint(alpha);
    const double upper = endpoint(1.0 - alpha);

    if (details != nullptr) {
        *details = AbcDetails{t0, sigma, a, z0, curvature, t1, quadratic};
    }
    auto ci = detail::make_interval(std::min(lower, upper), std::max(lower, upper), Method::ABC, alpha);
    ci.clamped_z0 = clamped_z0;
    return ci;
}

/// ABC interval for Pearson's r, or for Spearman's rho as the weighted
/// Pearson correlation of the (fixed) mid-ranks.
inline ConfidenceInterval ci_abc(const PairedSample& sample, EstimatorKind estimator, double alpha,
                                 AbcDetails* details = nullptr) {
    const std::size_t n = sample.size();
    if (n < 4) {
        throw std::domain_error("ABC: need n >= 4");
    }
    std::vector<double> xs;
    std::vector<double> ys;
    if (estimator == EstimatorKind::Pearson) {
        xs.assign(sample.xs.begin(), sample.xs.end());
        ys.assign(sample.ys.begin(), sample.ys.end());
    } else {
        xs = midranks(std::span<const std::int64_t>(sample.xs));
        ys = midranks(std::span<const std::int64_t>(sample.ys));
    }
    auto tt = [&](std::span<const double> weights) { return weighted_pearson(xs, ys, weights); };
    return abc_interval(tt, n, alpha, details);
}

// ---------------------------------------------------------------------------
// Studentized

/// Per-replicate (1 - r*^2) / sqrt(n - 3).
struct PearsonAnalytic {};

/// One simulated standard error used for both theta_hat and every replicate.
struct SpearmanSimulated {
    double se = 0.0;
};

using StudentizedSEPolicy = std::variant<PearsonAnalytic, SpearmanSimulated>;

/// Bootstrap-t interval [theta_hat - Gs^-1(1-alpha) SE, theta_hat - Gs^-1(alpha) SE]
/// built from t*_b = (theta*_b - theta_hat) / SE(theta*_b).
///
/// Under PearsonAnalytic a replicate with |theta*| = 1 has zero SE and is
/// rejected with DegenerateReplicate (see redraw_replicates_where), unless
/// SE(theta_hat) is itself zero, in which case the interval is the point theta_hat.
inline ConfidenceInterval ci_studentized(std::size_t n, const BootstrapDistribution& dist,
                                         const StudentizedSEPolicy& policy, double alpha) {
    detail::check_alpha(alpha);
    const double theta = dist.theta_hat;
    double se_hat = 0.0;
    bool analytic = false;
    double root = 0.0;
    if (std::holds_alternative<PearsonAnalytic>(policy)) {
        if (n < 4) {
            throw std::domain_error("studentized interval: need n >= 4");
        }
        analytic = true;
        root = std::sqrt(static_cast<double>(n) - 3.0);
        se_hat = (1.0 - theta * theta) / root;
    } else {
        se_hat = std::get<SpearmanSimulated>(policy).se;
        if (!(se_hat > 0.0)) {
            throw std::domain_error("studentized interval: simulated SE must be positive");
        }
    }
    if (se_hat == 0.0) {
        return detail::make_interval(theta, theta, Method::Studentized, alpha);
    }

    std::vector<double> pivots(dist.size());
    for (std::size_t b = 0; b < dist.size(); ++b) {
        const double r = dist.replicates[b];
        const double se = analytic ? (1.0 - r * r) / root : se_hat;
        if (!(se > 0.0)) {
            throw DegenerateReplicate("studentized interval: replicate with |r*| = 1 has zero SE");
        }
        pivots[b] = (r - theta) / se;
    }
    const auto pivot_dist = BootstrapDistribution::from_replicates(0.0, std::move(pivots));
    const double lower = theta - ecdf_quantile(pivot_dist, 1.0 - alpha) * se_hat;
    const double upper = theta - ecdf_quantile(pivot_dist, alpha) * se_hat;
    return detail::make_interval(lower, upper, Method::Studentized, alpha);
}

// ---------------------------------------------------------------------------
// Fisher

inline constexpr double fisher_clamp_margin = 1e-12;

/// Classical z-transform interval; |r| is clamped to 1 - 1e-12 first.
inline ConfidenceInterval ci_fisher(double r, std::size_t n, double alpha) {
    detail::check_alpha(alpha);
    if (n < 4) {
        throw std::domain_error("Fisher interval: need n >= 4");
    }
    const double bound = 1.0 - fisher_clamp_margin;
    const double phi = fisher_z(std::clamp(r, -bound, bound));
    const double half = normal_quantile(1.0 - alpha) / std::sqrt(static_cast<double>(n) - 3.0);
    // tanh rounds to +/-1 for very large arguments; keep the endpoints open.
    const double edge = std::nextafter(1.0, 0.0);
    return detail::make_interval(std::clamp(fisher_z_inv(phi - half), -edge, edge),
                                 std::clamp(fisher_z_inv(phi + half), -edge, edge), Method::Fisher, alpha);
}

} // namespace corrboot

#endif

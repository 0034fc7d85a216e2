#ifndef CORRBOOT_ESTIMATORS_HPP
#define CORRBOOT_ESTIMATORS_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "corrboot/distributions.hpp"
#include "corrboot/errors.hpp"
#include "corrboot/parallel.hpp"
#include "corrboot/rng.hpp"
#include "corrboot/sample.hpp"

namespace corrboot {

enum class EstimatorKind { Pearson, Spearman };

inline std::string_view to_string(EstimatorKind kind) {
    return kind == EstimatorKind::Pearson ? "pearson" : "spearman";
}

inline EstimatorKind parse_estimator(std::string_view name) {
    if (name == "pearson") {
        return EstimatorKind::Pearson;
    }
    if (name == "spearman") {
        return EstimatorKind::Spearman;
    }
    throw std::invalid_argument("unknown estimator '" + std::string(name) + "'");
}

namespace detail {

enum class Degeneracy { None, X, Y, Size };

template <typename T, typename U>
double pearson_kernel(std::span<const T> xs, std::span<const U> ys, Degeneracy& why) {
    const std::size_t n = xs.size();
    why = Degeneracy::None;
    if (n != ys.size() || n < 2) {
        why = Degeneracy::Size;
        return 0.0;
    }
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += static_cast<double>(xs[i]);
        my += static_cast<double>(ys[i]);
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0;
    double syy = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = static_cast<double>(xs[i]) - mx;
        const double dy = static_cast<double>(ys[i]) - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0) {
        why = Degeneracy::X;
        return 0.0;
    }
    if (syy == 0.0) {
        why = Degeneracy::Y;
        return 0.0;
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

} // namespace detail

/// Product-moment correlation, or nullopt when n < 2 or a column is constant.
template <typename T, typename U>
std::optional<double> try_pearson(std::span<const T> xs, std::span<const U> ys) {
    detail::Degeneracy why{};
    const double r = detail::pearson_kernel(xs, ys, why);
    if (why != detail::Degeneracy::None) {
        return std::nullopt;
    }
    return r;
}

template <typename T, typename U>
double pearson_r(std::span<const T> xs, std::span<const U> ys) {
    detail::Degeneracy why{};
    const double r = detail::pearson_kernel(xs, ys, why);
    switch (why) {
    case detail::Degeneracy::None:
        return r;
    case detail::Degeneracy::X:
        throw ZeroVariance("x");
    case detail::Degeneracy::Y:
        throw ZeroVariance("y");
    case detail::Degeneracy::Size:
        break;
    }
    throw std::invalid_argument("pearson_r: need two equal-length columns with n >= 2");
}

inline std::optional<double> try_pearson(const PairedSample& s) {
    return try_pearson(std::span<const std::int64_t>(s.xs), std::span<const std::int64_t>(s.ys));
}

inline double pearson_r(const PairedSample& s) {
    return pearson_r(std::span<const std::int64_t>(s.xs), std::span<const std::int64_t>(s.ys));
}

/// Average ranks (1-based); tied observations share the mean of their positions.
template <typename T>
std::vector<double> midranks(std::span<const T> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i + 1;
        while (j < n && values[order[j]] == values[order[i]]) {
            ++j;
        }
        // positions i+1 .. j share the rank (i + 1 + j) / 2
        const double rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            ranks[order[k]] = rank;
        }
        i = j;
    }
    return ranks;
}

inline std::optional<double> try_spearman(const PairedSample& s) {
    const auto rx = midranks(std::span<const std::int64_t>(s.xs));
    const auto ry = midranks(std::span<const std::int64_t>(s.ys));
    return try_pearson(std::span<const double>(rx), std::span<const double>(ry));
}

/// Spearman's rho: Pearson's r on the mid-rank transforms.
inline double spearman_rho(const PairedSample& s) {
    const auto rx = midranks(std::span<const std::int64_t>(s.xs));
    const auto ry = midranks(std::span<const std::int64_t>(s.ys));
    return pearson_r(std::span<const double>(rx), std::span<const double>(ry));
}

inline std::optional<double> try_estimate(EstimatorKind kind, const PairedSample& s) {
    return kind == EstimatorKind::Pearson ? try_pearson(s) : try_spearman(s);
}

inline double estimate(EstimatorKind kind, const PairedSample& s) {
    return kind == EstimatorKind::Pearson ? pearson_r(s) : spearman_rho(s);
}

/// Normal-theory standard error of Pearson's r, (1 - r^2) / sqrt(n - 3).
inline double pearson_se(double r, std::size_t n) {
    if (n < 4) {
        throw std::domain_error("pearson_se: n must be at least 4");
    }
    if (!(std::abs(r) < 1.0)) {
        throw std::domain_error("pearson_se: |r| must be below 1");
    }
    return (1.0 - r * r) / std::sqrt(static_cast<double>(n) - 3.0);
}

inline double fisher_z(double r) {
    if (!(std::abs(r) < 1.0)) {
        throw std::domain_error("fisher_z: |r| must be below 1");
    }
    return std::atanh(r);
}

inline double fisher_z_inv(double phi) { return std::tanh(phi); }

/// Pearson correlation under observation weights (normalized internally).
/// Returns nullopt when a weighted variance is not positive.
inline std::optional<double> weighted_pearson(std::span<const double> xs, std::span<const double> ys,
                                              std::span<const double> weights) {
    const std::size_t n = xs.size();
    if (ys.size() != n || weights.size() != n || n == 0) {
        throw std::invalid_argument("weighted_pearson: length mismatch");
    }
    double total = 0.0;
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        total += weights[i];
        mx += weights[i] * xs[i];
        my += weights[i] * ys[i];
    }
    if (total == 0.0) {
        return std::nullopt;
    }
    mx /= total;
    my /= total;
    double sxx = 0.0;
    double syy = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxx += weights[i] * dx * dx;
        syy += weights[i] * dy * dy;
        sxy += weights[i] * dx * dy;
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) {
        return std::nullopt;
    }
    return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------
// Simulated standard error of Spearman's rho

/// Standard deviation of spearman_rho over `reps` independent datasets of size n.
///
/// Datasets on which the statistic is undefined are redrawn from the same
/// per-dataset stream; more than 100 * reps redraws in total is an error.
inline double build_spearman_se(const DistributionSpec& spec, std::size_t n, std::size_t reps,
                                std::uint64_t key, std::size_t workers = 1) {
    validate(spec);
    if (reps < 2) {
        throw std::invalid_argument("spearman SE: need at least two replications");
    }
    const std::size_t budget = 100 * reps;
    std::vector<double> values(reps);
    std::atomic<std::size_t> redraws{0};
    parallel_for(reps, workers, [&](std::size_t rep) {
        Stream rng(derive_key({key, rep}));
        for (;;) {
            const auto data = sample(spec, n, rng);
            if (const auto rho = try_spearman(data)) {
                values[rep] = *rho;
                return;
            }
            if (redraws.fetch_add(1) + 1 > budget) {
                throw RedrawBudgetExhausted("spearman SE: every simulated dataset had a constant column");
            }
        }
    });
    double mean = 0.0;
    for (const double v : values) {
        mean += v;
    }
    mean /= static_cast<double>(reps);
    double ss = 0.0;
    for (const double v : values) {
        ss += (v - mean) * (v - mean);
    }
    const double se = std::sqrt(ss / static_cast<double>(reps - 1));
    if (!(se > 0.0)) {
        throw ZeroSpread("spearman SE: simulated estimates have zero spread");
    }
    return se;
}

/// Cache of simulated Spearman standard errors keyed by (distribution, n).
class SpearmanSETable {
public:
    struct Entry {
        DistributionSpec spec;
        std::size_t n = 0;
        std::size_t reps = 0;
        std::uint64_t seed = 0;
        double se = 0.0;
    };

    std::optional<double> find(const DistributionSpec& spec, std::size_t n) const {
        const auto it = entries_.find(key(spec, n));
        if (it == entries_.end()) {
            return std::nullopt;
        }
        return it->second.se;
    }

    void insert(Entry entry) {
        if (!(entry.se > 0.0)) {
            throw std::invalid_argument("spearman SE table: entries must be positive");
        }
        entries_.insert_or_assign(key(entry.spec, entry.n), std::move(entry));
    }

    /// Returns the cached SE or simulates and stores it.
    double get_or_build(const DistributionSpec& spec, std::size_t n, std::size_t reps, std::uint64_t seed,
                        std::size_t workers = 1) {
        if (const auto se = find(spec, n)) {
            return *se;
        }
        const double se = build_spearman_se(spec, n, reps, seed, workers);
        insert({spec, n, reps, seed, se});
        return se;
    }

    std::size_t size() const noexcept { return entries_.size(); }

    static constexpr std::string_view csv_header = "distribution,param1,param2,param3,n,reps,seed,se";

    void save_csv(const std::string& path) const {
        std::ofstream out(path);
        if (!out) {
            throw std::runtime_error("cannot write " + path);
        }
        out << csv_header << '\n';
        out << std::setprecision(17);
        for (const auto& [k, e] : entries_) {
            const auto [a, b, c] = param_triple(e.spec);
            out << family_name(e.spec) << ',' << a << ',' << b << ',' << c << ',' << e.n << ',' << e.reps
                << ',' << e.seed << ',' << e.se << '\n';
        }
    }

    static SpearmanSETable load_csv(const std::string& path) {
        std::ifstream in(path);
        if (!in) {
            throw std::runtime_error("cannot read " + path);
        }
        SpearmanSETable table;
        std::string line;
        std::getline(in, line);
        if (line != csv_header) {
            throw std::runtime_error(path + ": unexpected header '" + line + "'");
        }
        std::size_t line_no = 1;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) {
                continue;
            }
            std::stringstream ss(line);
            std::string field;
            std::vector<std::string> f;
            while (std::getline(ss, field, ',')) {
                f.push_back(field);
            }
            if (f.size() != 8) {
                throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected 8 fields");
            }
            DistributionSpec spec;
            if (f[0] == "poisson") {
                spec = BivariatePoissonParams{std::stod(f[1]), std::stod(f[2]), std::stod(f[3])};
            } else if (f[0] == "negbin") {
                spec = BivariateNegBinParams{static_cast<int>(std::stod(f[1])), std::stod(f[2]), std::stod(f[3])};
            } else {
                throw std::runtime_error(path + ":" + std::to_string(line_no) + ": unknown distribution");
            }
            table.insert({spec, static_cast<std::size_t>(std::stoull(f[4])),
                          static_cast<std::size_t>(std::stoull(f[5])), std::stoull(f[6]), std::stod(f[7])});
        }
        return table;
    }

private:
    using Key = std::tuple<int, double, double, double, std::size_t>;

    static std::tuple<double, double, double> param_triple(const DistributionSpec& spec) {
        if (const auto* p = std::get_if<BivariatePoissonParams>(&spec)) {
            return {p->lambda1, p->lambda2, p->lambda3};
        }
        const auto& nb = std::get<BivariateNegBinParams>(spec);
        return {static_cast<double>(nb.r), nb.p1, nb.p2};
    }

    static Key key(const DistributionSpec& spec, std::size_t n) {
        const auto [a, b, c] = param_triple(spec);
        return {static_cast<int>(spec.index()), a, b, c, n};
    }

    std::map<Key, Entry> entries_;
};

} // namespace corrboot

#endif

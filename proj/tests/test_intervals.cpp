#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "corrboot/distributions.hpp"
#include "corrboot/intervals.hpp"
#include "corrboot/rng.hpp"

using namespace corrboot;

namespace {

const boost::math::normal_distribution<double> std_normal;

BootstrapDistribution sequence_dist(double theta, std::size_t B) {
    std::vector<double> v(B);
    std::iota(v.begin(), v.end(), 1.0);
    return BootstrapDistribution::from_replicates(theta, v);
}

BootstrapDistribution random_dist(std::mt19937_64& gen, std::size_t B) {
    std::gamma_distribution<double> skewed(2.0, 0.1);
    std::vector<double> v(B);
    for (auto& x : v) {
        x = skewed(gen) - 0.2;
    }
    const double theta = v[B / 3];
    return BootstrapDistribution::from_replicates(theta, v);
}

// Order statistic by definition: the smallest replicate t with #{x <= t} / B >= q.
double quantile_by_scan(const std::vector<double>& values, double q) {
    std::vector<double> s = values;
    std::sort(s.begin(), s.end());
    const double B = static_cast<double>(s.size());
    for (const double t : s) {
        const auto count = std::count_if(s.begin(), s.end(), [&](double x) { return x <= t; });
        if (static_cast<double>(count) / B >= q - 1e-12) {
            return t;
        }
    }
    return s.back();
}

std::optional<double> pearson_stat(const PairedSample& s) { return try_pearson(s); }

} // namespace

TEST_CASE("normal interval", "[normal]") {
    const double a = 0.1 / std::sqrt(2.0);
    const auto d = BootstrapDistribution::from_replicates(0.5, {0.5 - a, 0.5 + a});
    const auto ci = ci_normal(d, 0.025);
    CHECK(ci.lower == Catch::Approx(0.5 - 0.1959963984540054).margin(1e-12));
    CHECK(ci.upper == Catch::Approx(0.5 + 0.1959963984540054).margin(1e-12));
    CHECK(ci.lower == Catch::Approx(0.304).margin(5e-4));
    CHECK(ci.nominal == Catch::Approx(0.95));
    CHECK(ci.method == Method::Normal);

    const auto half = ci_normal(d, 0.5);
    CHECK(half.lower == 0.5);
    CHECK(half.upper == 0.5);

    CHECK_THROWS_AS(ci_normal(BootstrapDistribution::from_replicates(0.2, {0.2, 0.2, 0.2}), 0.025), ZeroSpread);
    CHECK_THROWS_AS(ci_normal(BootstrapDistribution::from_replicates(0.2, {0.2}), 0.025), std::domain_error);
}

TEST_CASE("percentile interval", "[percentile]") {
    const auto d = sequence_dist(10.0, 20);
    const auto ci = ci_percentile(d, 0.05);
    CHECK(ci.lower == 1.0);
    CHECK(ci.upper == 19.0);

    const auto flat = BootstrapDistribution::from_replicates(0.3, std::vector<double>(40, 0.3));
    CHECK(ci_percentile(flat, 0.025).lower == 0.3);
    CHECK(ci_percentile(flat, 0.025).upper == 0.3);
}

TEST_CASE("percentile interval respects monotone transformations", "[percentile][property]") {
    std::mt19937_64 gen(4);
    auto cube = [](double x) { return x * x * x; };
    auto th = [](double x) { return std::tanh(x); };
    for (int rep = 0; rep < 50; ++rep) {
        const auto d = random_dist(gen, 100 + rep);
        const auto ci = ci_percentile(d, 0.025);
        for (const auto g : {+cube, +th}) {
            std::vector<double> mapped;
            for (const double v : d.replicates) {
                mapped.push_back(g(v));
            }
            const auto md = BootstrapDistribution::from_replicates(g(d.theta_hat), mapped);
            const auto mci = ci_percentile(md, 0.025);
            CHECK(mci.lower == g(ci.lower));
            CHECK(mci.upper == g(ci.upper));
        }
    }
}

TEST_CASE("basic interval", "[basic]") {
    std::vector<double> v(20, 0.6);
    v[0] = 0.4;
    v[18] = 0.9;
    v[19] = 0.95;
    const auto d = BootstrapDistribution::from_replicates(0.5, v);
    const auto ci = ci_basic(d, 0.05);
    CHECK(ci.lower == Catch::Approx(0.1).margin(1e-15));
    CHECK(ci.upper == Catch::Approx(0.6).margin(1e-15));

    std::vector<double> sym(20);
    for (std::size_t i = 0; i < 20; ++i) {
        sym[i] = 0.5 + (static_cast<double>(i) - 9.5) * 0.02;
    }
    const auto sd = BootstrapDistribution::from_replicates(0.5, sym);
    const auto p = ci_percentile(sd, 0.05);
    const auto b = ci_basic(sd, 0.05);
    CHECK(b.lower == 2.0 * 0.5 - p.upper);
    CHECK(b.upper == 2.0 * 0.5 - p.lower);
}

TEST_CASE("basic endpoints reflect percentile endpoints", "[basic][property]") {
    std::mt19937_64 gen(12);
    for (int rep = 0; rep < 100; ++rep) {
        const auto d = random_dist(gen, 50 + rep);
        const auto p = ci_percentile(d, 0.025);
        const auto b = ci_basic(d, 0.025);
        CHECK(b.lower == 2.0 * d.theta_hat - p.upper);
        CHECK(b.upper == 2.0 * d.theta_hat - p.lower);
        CHECK(b.lower + p.upper == Catch::Approx(2.0 * d.theta_hat).margin(1e-15));
        CHECK(b.upper + p.lower == Catch::Approx(2.0 * d.theta_hat).margin(1e-15));
    }
}

TEST_CASE("normal and basic intervals are not transformation respecting", "[property]") {
    const std::vector<double> v{0.1, 0.15, 0.2, 0.22, 0.25, 0.3, 0.4, 0.55, 0.7, 0.9};
    const auto d = BootstrapDistribution::from_replicates(0.25, v);
    std::vector<double> cubed;
    for (const double x : v) {
        cubed.push_back(x * x * x);
    }
    const auto dc = BootstrapDistribution::from_replicates(0.25 * 0.25 * 0.25, cubed);
    const auto b = ci_basic(d, 0.1);
    const auto bc = ci_basic(dc, 0.1);
    CHECK(bc.upper != Catch::Approx(b.upper * b.upper * b.upper).margin(1e-6));
    const auto n = ci_normal(d, 0.1);
    const auto nc = ci_normal(dc, 0.1);
    CHECK(nc.upper != Catch::Approx(n.upper * n.upper * n.upper).margin(1e-6));
}

TEST_CASE("BCa with zero constants is the percentile interval", "[bca][property]") {
    std::mt19937_64 gen(21);
    for (int rep = 0; rep < 100; ++rep) {
        const auto d = random_dist(gen, 20 + 13 * rep);
        for (const double alpha : {0.025, 0.05, 0.1}) {
            const auto bca = ci_bca(d, BCaConstants{0.0, 0.0, false}, alpha);
            const auto pct = ci_percentile(d, alpha);
            CHECK(bca.lower == pct.lower);
            CHECK(bca.upper == pct.upper);
        }
    }
}

TEST_CASE("BC interval uses levels Phi(2 z0 + z)", "[bca]") {
    std::mt19937_64 gen(3);
    const auto d = random_dist(gen, 1000);
    const double z0 = 0.3;
    const auto ci = ci_bca(d, BCaConstants{z0, 0.0, false}, 0.025);
    const double lo = boost::math::cdf(std_normal, 2.0 * z0 + boost::math::quantile(std_normal, 0.025));
    const double hi = boost::math::cdf(std_normal, 2.0 * z0 + boost::math::quantile(std_normal, 0.975));
    CHECK(ci.lower == quantile_by_scan(d.replicates, lo));
    CHECK(ci.upper == quantile_by_scan(d.replicates, hi));
}

TEST_CASE("BCa matches an independent evaluation on a frozen case", "[bca]") {
    const std::vector<double> v{0.12, 0.31, 0.05, 0.44, 0.27, 0.38, 0.51, 0.19, 0.33, 0.29, 0.41, 0.36,
                                0.22, 0.47, 0.30, 0.58, 0.25, 0.35, 0.40, 0.16, 0.62, 0.34, 0.28, 0.45,
                                0.37, 0.21, 0.39, 0.31, 0.55, 0.43};
    const auto d = BootstrapDistribution::from_replicates(0.33, v);
    const InfluenceValues infl{{0.8, -0.4, 1.9, -0.7, 0.2, -1.1, 0.5, -0.3, 0.1, -1.0}};

    // Independent route: z0 and a by definition, endpoints via boost's normal.
    const double below = static_cast<double>(std::count_if(v.begin(), v.end(), [](double x) { return x < 0.33; }));
    const double z0 = boost::math::quantile(std_normal, below / 30.0);
    double s2 = 0.0;
    double s3 = 0.0;
    for (const double i : infl.values) {
        s2 += i * i;
        s3 += i * i * i;
    }
    const double a = s3 / 6.0 / std::pow(s2, 1.5);
    auto level = [&](double alpha) {
        const double z = boost::math::quantile(std_normal, alpha);
        return boost::math::cdf(std_normal, z0 + (z0 + z) / (1.0 - a * (z0 + z)));
    };
    const auto ci = ci_bca(d, infl, 0.05);
    CHECK(ci.method == Method::BCaNeg);
    CHECK(ci.lower == quantile_by_scan(v, level(0.05)));
    CHECK(ci.upper == quantile_by_scan(v, level(0.95)));
    CHECK_FALSE(ci.clamped_z0);
}

TEST_CASE("BCa singular denominator", "[bca]") {
    const auto d = sequence_dist(10.0, 20);
    // a * (z0 + z) = 1 exactly at the upper level
    const double z = normal_quantile(0.95);
    CHECK_THROWS_AS(ci_bca(d, BCaConstants{0.0, 1.0 / z, false}, 0.05), SingularDenominator);
}

TEST_CASE("ABC of a linear statistic on a symmetric sample is symmetric", "[abc]") {
    const std::vector<double> x{-3.0, -1.0, 0.0, 1.0, 3.0, -2.0, 2.0};
    auto weighted_mean = [&](std::span<const double> w) -> std::optional<double> {
        double s = 0.0;
        double t = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            s += w[i] * x[i];
            t += w[i];
        }
        return s / t;
    };
    AbcDetails info;
    const auto ci = abc_interval(weighted_mean, x.size(), 0.025, &info);
    CHECK(info.theta_hat == Catch::Approx(0.0).margin(1e-15));
    CHECK(ci.lower == Catch::Approx(-ci.upper).margin(1e-6));
    CHECK(info.acceleration == Catch::Approx(0.0).margin(1e-12));
    // sigma is the plug-in standard error of the mean
    double ss = 0.0;
    for (const double v : x) {
        ss += v * v;
    }
    CHECK(info.sigma == Catch::Approx(std::sqrt(ss) / 7.0).epsilon(1e-6));
}

TEST_CASE("ABC falls back to the quadratic endpoint outside the domain", "[abc]") {
    const std::vector<double> x{0.0, 1.0, 5.0, 2.0, 1.0, 3.0};
    const double n = 6.0;
    // defined only close to the uniform weights
    auto local_mean = [&](std::span<const double> w) -> std::optional<double> {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (std::abs(w[i] - 1.0 / n) > 0.1 / n) {
                return std::nullopt;
            }
            s += w[i] * x[i];
        }
        return s;
    };
    AbcDetails info;
    const auto ci = abc_interval(local_mean, x.size(), 0.025, &info);
    CHECK(info.quadratic_endpoints == 2);
    // linear statistic: no curvature, endpoints theta_hat -/+ z sigma with a from the skewness
    const double z = 1.959963984540054;
    auto lam = [&](double zz) {
        const double w = info.z0 + zz;
        return w / ((1.0 - info.acceleration * w) * (1.0 - info.acceleration * w));
    };
    CHECK(ci.lower == Catch::Approx(info.theta_hat + info.sigma * lam(-z)).margin(1e-6));
    CHECK(ci.upper == Catch::Approx(info.theta_hat + info.sigma * lam(z)).margin(1e-6));
}

TEST_CASE("ABC acceleration agrees with the jackknife estimate", "[abc]") {
    Stream rng(derive_key({2, 50}));
    const BivariatePoissonParams p{0.5, 1.0, solve_poisson_lambda3(0.5, 0.5, 1.0)};
    for (int rep = 0; rep < 5; ++rep) {
        const auto s = sample_bivariate_poisson(p, 50, rng);
        AbcDetails info;
        (void)ci_abc(s, EstimatorKind::Pearson, 0.025, &info);
        const double a_jack = acceleration(jackknife_influence_negative(s, pearson_stat));
        CHECK(std::abs(info.acceleration - a_jack) <= 0.25 * std::abs(a_jack) + 0.01);
    }
}

TEST_CASE("ABC is close to large-B BCa", "[abc][slow]") {
    Stream rng(derive_key({3, 50}));
    const BivariatePoissonParams p{0.5, 1.0, solve_poisson_lambda3(0.5, 0.5, 1.0)};
    const auto s = sample_bivariate_poisson(p, 50, rng);
    const auto abc = ci_abc(s, EstimatorKind::Pearson, 0.025);
    const auto d = bootstrap_replicates(s, pearson_stat, 20000, 5);
    const auto bca = ci_bca(d, jackknife_influence_negative(s, pearson_stat), 0.025);
    CHECK(abc.lower == Catch::Approx(bca.lower).margin(0.02));
    CHECK(abc.upper == Catch::Approx(bca.upper).margin(0.02));
}

TEST_CASE("ABC for Spearman works on frozen mid-ranks", "[abc]") {
    const PairedSample s{{0, 1, 1, 2, 0, 3, 1, 2, 4, 0}, {1, 1, 2, 2, 0, 3, 0, 4, 3, 1}};
    const auto ci = ci_abc(s, EstimatorKind::Spearman, 0.025);
    CHECK(ci.lower < spearman_rho(s));
    CHECK(ci.upper > spearman_rho(s));
    CHECK_THROWS_AS(ci_abc(PairedSample{{0, 1, 2}, {0, 1, 2}}, EstimatorKind::Pearson, 0.025), std::domain_error);
}

TEST_CASE("studentized interval", "[studentized]") {
    const auto flat = BootstrapDistribution::from_replicates(0.4, std::vector<double>(30, 0.4));
    const auto point = ci_studentized(10, flat, PearsonAnalytic{}, 0.025);
    CHECK(point.lower == 0.4);
    CHECK(point.upper == 0.4);

    std::mt19937_64 gen(17);
    for (int rep = 0; rep < 50; ++rep) {
        const auto d = random_dist(gen, 40 + rep);
        const auto st = ci_studentized(10, d, SpearmanSimulated{1.0}, 0.025);
        const auto b = ci_basic(d, 0.025);
        CHECK(st.lower == Catch::Approx(b.lower).margin(1e-15));
        CHECK(st.upper == Catch::Approx(b.upper).margin(1e-15));
    }
}

TEST_CASE("studentized interval by hand, Pearson SE", "[studentized]") {
    // n = 10, theta_hat = 0.5, B = 10; alpha = 0.1 picks order statistics 1 and 9.
    const std::vector<double> v{0.2, 0.8, 0.45, 0.6, 0.3, 0.7, 0.55, 0.5, 0.65, 0.35};
    const auto d = BootstrapDistribution::from_replicates(0.5, v);
    std::vector<double> t;
    for (const double r : v) {
        t.push_back((r - 0.5) / ((1.0 - r * r) / std::sqrt(7.0)));
    }
    std::sort(t.begin(), t.end());
    const double se = 0.75 / std::sqrt(7.0);
    const auto ci = ci_studentized(10, d, PearsonAnalytic{}, 0.1);
    CHECK(ci.lower == Catch::Approx(0.5 - t[8] * se).margin(1e-14));
    CHECK(ci.upper == Catch::Approx(0.5 - t[0] * se).margin(1e-14));
    // the largest pivot comes from 0.8, the ninth from 0.7
    CHECK(t[9] == Catch::Approx(0.3 * std::sqrt(7.0) / 0.36).epsilon(1e-14));
    CHECK(t[8] == Catch::Approx(0.2 * std::sqrt(7.0) / 0.51).epsilon(1e-14));
}

TEST_CASE("studentized interval can leave [-1, 1]", "[studentized]") {
    const auto d = BootstrapDistribution::from_replicates(0.1, {-0.95, -0.9, 0.1, 0.2, 0.3, 0.97, 0.98, 0.99});
    const auto ci = ci_studentized(10, d, PearsonAnalytic{}, 0.125);
    CHECK(ci.exceeds_range == (ci.lower < -1.0 || ci.upper > 1.0));
    CHECK(ci.exceeds_range);

    const auto unit = BootstrapDistribution::from_replicates(0.1, {-0.5, 1.0, 0.3});
    CHECK_THROWS_AS(ci_studentized(10, unit, PearsonAnalytic{}, 0.025), DegenerateReplicate);
    // zero SE at theta_hat collapses the interval
    const auto perfect = BootstrapDistribution::from_replicates(1.0, {1.0, 1.0, 1.0});
    CHECK(ci_studentized(10, perfect, PearsonAnalytic{}, 0.025).length() == 0.0);
    CHECK_THROWS_AS(ci_studentized(3, d, PearsonAnalytic{}, 0.025), std::domain_error);
}

TEST_CASE("Fisher interval", "[fisher]") {
    const auto ci = ci_fisher(0.0, 103, 0.025);
    CHECK(ci.lower == Catch::Approx(-0.19352466479167996).margin(1e-12));
    CHECK(ci.upper == Catch::Approx(0.19352466479167996).margin(1e-12));
    for (const std::size_t n : {4u, 10u, 57u}) {
        const auto sym = ci_fisher(0.0, n, 0.05);
        CHECK(sym.lower == -sym.upper);
    }
    CHECK_THROWS_AS(ci_fisher(0.2, 3, 0.025), std::domain_error);

    const auto perfect = ci_fisher(1.0, 10, 0.025);
    CHECK(perfect.upper < 1.0);
    CHECK(perfect.lower > -1.0);
    CHECK_FALSE(perfect.exceeds_range);
}

TEST_CASE("Fisher endpoints stay inside (-1, 1)", "[fisher][property]") {
    std::mt19937_64 gen(55);
    std::uniform_real_distribution<double> r(-1.0, 1.0);
    std::uniform_int_distribution<std::size_t> n(4, 200);
    std::uniform_real_distribution<double> alpha(0.0005, 0.5);
    for (int i = 0; i < 1000; ++i) {
        const double value = i % 10 == 0 ? (i % 20 == 0 ? 1.0 : -1.0) : r(gen);
        const auto ci = ci_fisher(value, n(gen), alpha(gen));
        CHECK(ci.lower > -1.0);
        CHECK(ci.upper < 1.0);
        CHECK(ci.lower <= ci.upper);
    }
}

TEST_CASE("intervals nest as alpha shrinks", "[property]") {
    std::mt19937_64 gen(77);
    for (int rep = 0; rep < 30; ++rep) {
        const auto d = random_dist(gen, 500);
        for (const auto f : {&ci_normal, &ci_percentile, &ci_basic}) {
            const auto wide = f(d, 0.005);
            const auto narrow = f(d, 0.05);
            CHECK(wide.lower <= narrow.lower);
            CHECK(narrow.upper <= wide.upper);
        }
        const auto fw = ci_fisher(d.theta_hat, 25, 0.005);
        const auto fn = ci_fisher(d.theta_hat, 25, 0.05);
        CHECK(fw.lower <= fn.lower);
        CHECK(fn.upper <= fw.upper);
    }
}

TEST_CASE("method names round trip", "[methods]") {
    for (const Method m : all_methods) {
        CHECK(parse_method(to_string(m)) == m);
    }
    CHECK_THROWS_AS(parse_method("bogus"), std::invalid_argument);
}

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "corrboot/distributions.hpp"
#include "corrboot/rng.hpp"
#include "support/oracles.hpp"

using namespace corrboot;

namespace {

template <typename Pmf>
double grid_mass(Pmf&& pmf, std::int64_t grid) {
    double total = 0.0;
    for (std::int64_t x = 0; x <= grid; ++x) {
        for (std::int64_t y = 0; y <= grid; ++y) {
            total += pmf(x, y);
        }
    }
    return total;
}

// Parameter sets of the simulation design.
std::vector<BivariatePoissonParams> design_poisson() {
    std::vector<BivariatePoissonParams> out;
    for (const double rho : {0.25, 0.5, 0.75, 0.9}) {
        out.push_back({0.5, 1.0, solve_poisson_lambda3(rho, 0.5, 1.0)});
    }
    return out;
}

std::vector<BivariateNegBinParams> design_negbin() {
    return {{5, 0.1393, 0.2786}, {5, 0.2287, 0.4574}, {5, 0.2898, 0.5796}};
}

} // namespace

TEST_CASE("bivariate Poisson pmf at the origin", "[pmf]") {
    CHECK(pmf_bivariate_poisson({0.5, 1.0, 0.0}, 0, 0) == Catch::Approx(std::exp(-1.5)).epsilon(1e-14));
    CHECK(pmf_bivariate_poisson({0.5, 1.0, 0.24}, 0, 0) == Catch::Approx(0.17552040061699686).epsilon(1e-13));
    CHECK(pmf_bivariate_poisson({0.0, 0.0, 0.0}, 0, 0) == 1.0);
    CHECK(pmf_bivariate_poisson({0.0, 0.0, 0.0}, 1, 0) == 0.0);
}

TEST_CASE("bivariate Poisson pmf with independent components factorizes", "[pmf]") {
    const BivariatePoissonParams p{0.5, 1.0, 0.0};
    for (int x = 0; x < 8; ++x) {
        for (int y = 0; y < 8; ++y) {
            const double px = std::exp(-0.5) * std::pow(0.5, x) / std::tgamma(x + 1.0);
            const double py = std::exp(-1.0) * std::pow(1.0, y) / std::tgamma(y + 1.0);
            CHECK(pmf_bivariate_poisson(p, x, y) == Catch::Approx(px * py).epsilon(1e-12));
        }
    }
}

TEST_CASE("bivariate Poisson pmf handles large counts without overflow", "[pmf]") {
    const double v = pmf_bivariate_poisson({0.5, 1.0, 6.71}, 200, 210);
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
    CHECK(v < 1e-100);
}

TEST_CASE("bivariate Poisson pmf normalizes", "[pmf]") {
    auto pmf = [](std::int64_t x, std::int64_t y) { return pmf_bivariate_poisson({0.5, 1.0, 6.71}, x, y); };
    CHECK(grid_mass(pmf, 60) == Catch::Approx(1.0).margin(1e-9));
    for (const auto& p : design_poisson()) {
        auto f = [&](std::int64_t x, std::int64_t y) { return pmf_bivariate_poisson(p, x, y); };
        CHECK(grid_mass(f, 60) == Catch::Approx(1.0).margin(1e-8));
    }
}

TEST_CASE("bivariate negative binomial pmf", "[pmf]") {
    CHECK(pmf_bivariate_negbin({5, 0.1393, 0.2786}, 0, 0) == Catch::Approx(0.06683254452964436).epsilon(1e-12));
    // r = 1, p2 = 0 degenerates to a geometric law in x
    for (int k = 0; k < 10; ++k) {
        CHECK(pmf_bivariate_negbin({1, 0.3, 0.0}, k, 0) == Catch::Approx(0.7 * std::pow(0.3, k)).epsilon(1e-12));
        CHECK(pmf_bivariate_negbin({1, 0.3, 0.0}, k, 1) == 0.0);
    }
}

TEST_CASE("bivariate negative binomial pmf normalizes", "[pmf]") {
    // Mass on [0,120]^2 for the rho = 0.75 design; the missing tail, 2.70068e-7,
    // was computed independently with scipy's gammaln. Its tail is too heavy
    // for that grid to reach 1 - 1e-8, so normalization is checked on [0,200]^2.
    auto heavy = [](std::int64_t x, std::int64_t y) { return pmf_bivariate_negbin({5, 0.2898, 0.5796}, x, y); };
    CHECK(grid_mass(heavy, 120) == Catch::Approx(1.0 - 2.70068052699024e-07).margin(1e-11));
    for (const auto& p : design_negbin()) {
        auto f = [&](std::int64_t x, std::int64_t y) { return pmf_bivariate_negbin(p, x, y); };
        CHECK(grid_mass(f, 200) == Catch::Approx(1.0).margin(1e-8));
    }
}

TEST_CASE("parameter validation", "[params]") {
    CHECK_THROWS_AS(pmf_bivariate_poisson({-0.1, 1.0, 0.0}, 0, 0), std::invalid_argument);
    CHECK_THROWS_AS(pmf_bivariate_negbin({5, 0.6, 0.5}, 0, 0), std::invalid_argument);
    CHECK_THROWS_AS(pmf_bivariate_negbin({0, 0.1, 0.1}, 0, 0), std::invalid_argument);
}

TEST_CASE("closed-form correlations", "[correlation]") {
    CHECK(poisson_correlation({0.5, 1.0, 0.0}) == 0.0);
    CHECK(poisson_correlation({0.5, 1.0, 0.24}) == Catch::Approx(0.2505).margin(5e-4));
    CHECK(poisson_correlation({0.5, 1.0, 6.71}) == Catch::Approx(0.900).margin(5e-4));
    CHECK_THROWS_AS(poisson_correlation({0.0, 0.0, 0.0}), std::domain_error);

    CHECK(negbin_correlation({5, 0.1393, 0.2786}) == Catch::Approx(0.25).margin(1e-4));
    CHECK(negbin_correlation({5, 0.2898, 0.5796}) == Catch::Approx(0.75).margin(1e-4));
    const double tiny = 1e-9;
    CHECK(negbin_correlation({5, tiny, tiny}) == Catch::Approx(tiny / (1.0 - tiny)).epsilon(1e-9));
}

TEST_CASE("parameter solvers reproduce the design values", "[solver]") {
    CHECK(solve_poisson_lambda3(0.0, 0.5, 1.0) == 0.0);
    CHECK(solve_poisson_lambda3(0.25, 0.5, 1.0) == Catch::Approx(0.24).margin(0.005));
    CHECK(solve_poisson_lambda3(0.5, 0.5, 1.0) == Catch::Approx(0.73).margin(0.005));
    CHECK(solve_poisson_lambda3(0.75, 0.5, 1.0) == Catch::Approx(2.22).margin(0.005));
    CHECK(solve_poisson_lambda3(0.9, 0.5, 1.0) == Catch::Approx(6.71).margin(0.005));
    CHECK_THROWS_AS(solve_poisson_lambda3(1.0, 0.5, 1.0), NoSolution);

    const std::vector<std::pair<double, std::pair<double, double>>> nb{
        {0.25, {0.1393, 0.2786}}, {0.5, {0.2287, 0.4574}}, {0.75, {0.2898, 0.5796}}};
    for (const auto& [rho, expect] : nb) {
        const auto [p1, p2] = solve_negbin_p(rho, 2.0);
        CHECK(p1 == Catch::Approx(expect.first).margin(1e-4));
        CHECK(p2 == Catch::Approx(expect.second).margin(2e-4));
        CHECK(p2 == 2.0 * p1);
    }
    CHECK_THROWS_AS(solve_negbin_p(1.0, 2.0), NoSolution);
    CHECK_THROWS_AS(solve_negbin_p(0.0, 2.0), NoSolution);
}

TEST_CASE("solver round trip over the correlation grid", "[solver]") {
    for (int i = 5; i <= 95; ++i) {
        const double rho = i / 100.0;
        const double l3 = solve_poisson_lambda3(rho, 0.5, 1.0);
        CHECK(poisson_correlation({0.5, 1.0, l3}) == Catch::Approx(rho).margin(1e-10));
        const auto [p1, p2] = solve_negbin_p(rho, 2.0);
        CHECK(p1 + p2 < 1.0);
        CHECK(negbin_correlation({5, p1, p2}) == Catch::Approx(rho).margin(1e-10));
    }
}

TEST_CASE("samplers: degenerate parameters give zeros", "[sampler]") {
    Stream rng(1);
    const auto s = sample_bivariate_poisson({0.0, 0.0, 0.0}, 5, rng);
    CHECK(s.xs == std::vector<std::int64_t>(5, 0));
    CHECK(s.ys == std::vector<std::int64_t>(5, 0));

    const auto t = sample_bivariate_negbin({5, 1e-9, 1e-9}, 1000, rng);
    std::size_t origin = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        origin += (t.xs[i] == 0 && t.ys[i] == 0) ? 1 : 0;
    }
    CHECK(origin >= 999);
}

TEST_CASE("samplers are deterministic for a key", "[sampler]") {
    Stream a(42);
    Stream b(42);
    CHECK(sample_bivariate_negbin({5, 0.2, 0.3}, 50, a) == sample_bivariate_negbin({5, 0.2, 0.3}, 50, b));
}

TEST_CASE("sample correlation matches the closed form", "[sampler][slow]") {
    Stream rng(derive_key({7, 1}));
    const auto pois = sample_bivariate_poisson({0.5, 1.0, 0.24}, 1000000, rng);
    CHECK(oracle::pearson_raw_moments(pois.xs, pois.ys) == Catch::Approx(0.25).margin(0.01));

    const auto indep = sample_bivariate_poisson({0.5, 1.0, 0.0}, 1000000, rng);
    CHECK(oracle::pearson_raw_moments(indep.xs, indep.ys) == Catch::Approx(0.0).margin(0.01));

    const auto nb = sample_bivariate_negbin({5, 0.1393, 0.2786}, 1000000, rng);
    CHECK(oracle::pearson_raw_moments(nb.xs, nb.ys) == Catch::Approx(0.25).margin(0.01));
    std::size_t origin = 0;
    for (std::size_t i = 0; i < nb.size(); ++i) {
        origin += (nb.xs[i] == 0 && nb.ys[i] == 0) ? 1 : 0;
    }
    CHECK(static_cast<double>(origin) / 1e6 == Catch::Approx(0.06683254452964436).margin(0.001));
}

TEST_CASE("sampled pairs agree with the pmf (chi-square)", "[sampler][slow]") {
    std::uint64_t k = 100;
    for (const auto& p : design_poisson()) {
        Stream rng(derive_key({11, k++}));
        const auto s = sample_bivariate_poisson(p, 100000, rng);
        const double pv = oracle::chi_square_gof(
            s, [&](std::int64_t x, std::int64_t y) { return pmf_bivariate_poisson(p, x, y); }, 60);
        CHECK(pv > 0.001);
    }
    for (const auto& p : design_negbin()) {
        Stream rng(derive_key({11, k++}));
        const auto s = sample_bivariate_negbin(p, 100000, rng);
        const double pv = oracle::chi_square_gof(
            s, [&](std::int64_t x, std::int64_t y) { return pmf_bivariate_negbin(p, x, y); }, 200);
        CHECK(pv > 0.001);
    }
}

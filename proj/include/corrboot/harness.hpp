#ifndef CORRBOOT_HARNESS_HPP
#define CORRBOOT_HARNESS_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "corrboot/distributions.hpp"
#include "corrboot/errors.hpp"
#include "corrboot/estimators.hpp"
#include "corrboot/intervals.hpp"
#include "corrboot/parallel.hpp"
#include "corrboot/resampling.hpp"
#include "corrboot/rng.hpp"

namespace corrboot {

enum class Family { Poisson, NegBin };

inline std::string_view to_string(Family f) { return f == Family::Poisson ? "poisson" : "negbin"; }

inline Family parse_family(std::string_view name) {
    if (name == "poisson") {
        return Family::Poisson;
    }
    if (name == "negbin") {
        return Family::NegBin;
    }
    throw std::invalid_argument("unknown distribution '" + std::string(name) + "'");
}

/// Formats a real for CSV output: shortest of up to 12 significant digits.
inline std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

struct StudyConfig {
    std::vector<Family> families{Family::Poisson};
    std::vector<double> rhos{0.25, 0.5, 0.75, 0.9};
    std::vector<std::size_t> sample_sizes{10, 20, 50, 100};
    std::vector<EstimatorKind> estimators{EstimatorKind::Pearson, EstimatorKind::Spearman};
    std::vector<Method> methods{all_methods.begin(), all_methods.end()};
    std::size_t n_sims = 2000;
    std::size_t B = 1000;
    double alpha = 0.025;
    std::uint64_t seed = 20100501;
    std::size_t workers = 1;

    // Fixed family parameters; the free one is solved from the target correlation.
    double poisson_lambda1 = 0.5;
    double poisson_lambda2 = 1.0;
    int negbin_r = 5;
    double negbin_ratio = 2.0;
    bool allow_negbin_high_rho = false; ///< negative binomial rho >= 0.9 in coverage/bias studies

    std::size_t se_reps = 1000;        ///< datasets per simulated Spearman SE
    std::string se_cache_path;         ///< optional CSV cache for those SEs

    std::size_t pairs_per_rep = 1000000; ///< bias study
    std::size_t reps = 1000;             ///< bias and MSE studies

    std::string checkpoint_path; ///< JSON-lines checkpoint for the coverage study
    bool resume = false;
};

inline void to_json(nlohmann::json& j, const StudyConfig& c) {
    std::vector<std::string> fam;
    for (const auto f : c.families) {
        fam.emplace_back(to_string(f));
    }
    std::vector<std::string> est;
    for (const auto e : c.estimators) {
        est.emplace_back(to_string(e));
    }
    std::vector<std::string> met;
    for (const auto m : c.methods) {
        met.emplace_back(to_string(m));
    }
    j = nlohmann::json{{"distributions", fam},
                       {"rhos", c.rhos},
                       {"sample_sizes", c.sample_sizes},
                       {"estimators", est},
                       {"methods", met},
                       {"n_sims", c.n_sims},
                       {"B", c.B},
                       {"alpha", c.alpha},
                       {"seed", c.seed},
                       {"workers", c.workers},
                       {"poisson_lambda1", c.poisson_lambda1},
                       {"poisson_lambda2", c.poisson_lambda2},
                       {"negbin_r", c.negbin_r},
                       {"negbin_ratio", c.negbin_ratio},
                       {"allow_negbin_high_rho", c.allow_negbin_high_rho},
                       {"se_reps", c.se_reps},
                       {"se_cache_path", c.se_cache_path},
                       {"pairs_per_rep", c.pairs_per_rep},
                       {"reps", c.reps},
                       {"checkpoint_path", c.checkpoint_path},
                       {"resume", c.resume}};
}

/// Distribution with the free parameter solved for the target correlation.
inline DistributionSpec resolve_distribution(Family family, double rho, const StudyConfig& config) {
    if (family == Family::Poisson) {
        return BivariatePoissonParams{config.poisson_lambda1, config.poisson_lambda2,
                                      solve_poisson_lambda3(rho, config.poisson_lambda1, config.poisson_lambda2)};
    }
    const auto [p1, p2] = solve_negbin_p(rho, config.negbin_ratio);
    return BivariateNegBinParams{config.negbin_r, p1, p2};
}

inline std::string params_label(const DistributionSpec& spec) {
    if (const auto* p = std::get_if<BivariatePoissonParams>(&spec)) {
        return "lambda1=" + format_real(p->lambda1) + ";lambda2=" + format_real(p->lambda2) +
               ";lambda3=" + format_real(p->lambda3);
    }
    const auto& nb = std::get<BivariateNegBinParams>(spec);
    return "r=" + std::to_string(nb.r) + ";p1=" + format_real(nb.p1) + ";p2=" + format_real(nb.p2);
}

// ---------------------------------------------------------------------------
// Result rows

struct StudyResultRow {
    std::string distribution;
    std::string params;
    double rho_true = 0.0;
    std::size_t n = 0;
    EstimatorKind estimator = EstimatorKind::Pearson;
    Method method = Method::Percentile;
    double coverage = 0.0;
    double mean_length = 0.0;
    std::size_t degenerate_count = 0;
    std::size_t exceeds_range_count = 0;
    std::size_t n_sims = 0;
    std::size_t B = 0;
    std::uint64_t seed = 0;

    static constexpr std::string_view csv_header =
        "distribution,params,rho_true,n,estimator,method,coverage,mean_length,degenerate_count,"
        "exceeds_range_count,n_sims,B,seed";

    std::string csv() const {
        return distribution + ',' + params + ',' + format_real(rho_true) + ',' + std::to_string(n) + ',' +
               std::string(to_string(estimator)) + ',' + std::string(to_string(method)) + ',' +
               format_real(coverage) + ',' + format_real(mean_length) + ',' + std::to_string(degenerate_count) +
               ',' + std::to_string(exceeds_range_count) + ',' + std::to_string(n_sims) + ',' +
               std::to_string(B) + ',' + std::to_string(seed);
    }

    auto sort_key() const {
        return std::make_tuple(distribution, rho_true, n, static_cast<int>(estimator), static_cast<int>(method));
    }
};

struct BiasResultRow {
    std::string distribution;
    double rho_true = 0.0;
    EstimatorKind estimator = EstimatorKind::Pearson;
    double mean_estimate = 0.0;
    double variance = 0.0;
    double bias = 0.0;
    std::size_t pairs_per_rep = 0;
    std::size_t reps = 0;
    std::uint64_t seed = 0;

    static constexpr std::string_view csv_header =
        "distribution,rho_true,estimator,mean_estimate,variance,bias,pairs_per_rep,reps,seed";

    std::string csv() const {
        return distribution + ',' + format_real(rho_true) + ',' + std::string(to_string(estimator)) + ',' +
               format_real(mean_estimate) + ',' + format_real(variance) + ',' + format_real(bias) + ',' +
               std::to_string(pairs_per_rep) + ',' + std::to_string(reps) + ',' + std::to_string(seed);
    }

    auto sort_key() const { return std::make_tuple(distribution, rho_true, static_cast<int>(estimator)); }
};

struct MseResultRow {
    std::string distribution;
    double rho_true = 0.0;
    std::size_t n = 0;
    EstimatorKind estimator = EstimatorKind::Pearson;
    double mse = 0.0;
    std::size_t reps = 0;
    std::uint64_t seed = 0;

    static constexpr std::string_view csv_header = "distribution,rho_true,n,estimator,mse,reps,seed";

    std::string csv() const {
        return distribution + ',' + format_real(rho_true) + ',' + std::to_string(n) + ',' +
               std::string(to_string(estimator)) + ',' + format_real(mse) + ',' + std::to_string(reps) + ',' +
               std::to_string(seed);
    }

    auto sort_key() const { return std::make_tuple(distribution, rho_true, n, static_cast<int>(estimator)); }
};

/// Writes rows sorted by their combination key, header first.
template <typename Row>
void write_csv(std::ostream& out, std::vector<Row> rows) {
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.sort_key() < b.sort_key(); });
    out << Row::csv_header << '\n';
    for (const auto& row : rows) {
        out << row.csv() << '\n';
    }
}

template <typename Row>
void write_csv(const std::string& path, std::vector<Row> rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    write_csv(out, std::move(rows));
}

/// Error raised by a study, carrying the combination it failed on.
class StudyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct StudySummary {
    std::size_t rows_written = 0;
    double wall_seconds = 0.0;
    std::size_t total_redraws = 0;
    std::size_t combinations_resumed = 0;
};

// ---------------------------------------------------------------------------
// Dataset helpers

/// A simulated dataset is usable when the estimator is defined on it and on
/// every leave-one-out subsample, i.e. no column has a value repeated n - 1
/// or more times. This is the same condition for Pearson and Spearman.
inline bool dataset_usable(const PairedSample& sample) {
    const std::size_t n = sample.size();
    if (n < 3) {
        return false;
    }
    auto max_multiplicity = [](std::span<const std::int64_t> col) {
        std::vector<std::int64_t> v(col.begin(), col.end());
        std::sort(v.begin(), v.end());
        std::size_t best = 0;
        std::size_t run = 0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            run = (i > 0 && v[i] == v[i - 1]) ? run + 1 : 1;
            best = std::max(best, run);
        }
        return best;
    };
    return max_multiplicity(sample.xs) + 2 <= n && max_multiplicity(sample.ys) + 2 <= n;
}

namespace detail {

template <typename Accept>
PairedSample draw_dataset(const DistributionSpec& spec, std::size_t n, std::uint64_t key, Accept&& accept,
                          std::size_t& redraws) {
    Stream rng(key);
    for (std::size_t attempt = 0;; ++attempt) {
        PairedSample data = sample(spec, n, rng);
        if (accept(data)) {
            return data;
        }
        ++redraws;
        if (attempt >= 100) {
            throw RedrawBudgetExhausted("simulated datasets are persistently degenerate");
        }
    }
}

inline std::uint64_t combination_key(std::uint64_t seed, std::string_view study, Family family, double rho,
                                     std::size_t n) {
    return derive_key({seed, key_of(study), key_of(to_string(family)), key_of(rho), n});
}

inline std::string describe(Family family, double rho, std::size_t n) {
    return std::string(to_string(family)) + " rho=" + format_real(rho) + " n=" + std::to_string(n);
}

inline void check_rho_allowed(Family family, double rho, const StudyConfig& config) {
    if (family == Family::NegBin && rho >= 0.9 && !config.allow_negbin_high_rho) {
        throw std::invalid_argument(
            "negative binomial with rho >= 0.9 is excluded by default; pass the override flag to run it");
    }
}

template <typename T>
double mean_of(const std::vector<T>& v) {
    double s = 0.0;
    for (const auto x : v) {
        s += static_cast<double>(x);
    }
    return s / static_cast<double>(v.size());
}

inline double variance_of(const std::vector<double>& v, double mean) {
    double ss = 0.0;
    for (const double x : v) {
        ss += (x - mean) * (x - mean);
    }
    return ss / static_cast<double>(v.size() - 1);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Coverage study

/// Intervals for every requested method on one dataset.
struct DatasetIntervals {
    double theta_hat = 0.0;
    std::vector<ConfidenceInterval> intervals; ///< parallel to the method list
    std::vector<std::size_t> redraws;          ///< per method: redraws and fallbacks
    std::size_t bootstrap_redraws = 0;         ///< redraws of the shared distribution
};

struct MethodContext {
    std::size_t B = 1000;
    double alpha = 0.025;
    std::optional<double> spearman_se; ///< required for Spearman studentized
};

/// Computes all requested intervals for one dataset, sharing a single
/// bootstrap distribution among the Monte Carlo methods. A method whose
/// spread is exactly zero (all replicates or influence values equal) yields
/// the point interval [theta_hat, theta_hat], counted as a degenerate event.
inline DatasetIntervals compute_intervals(const PairedSample& data, EstimatorKind estimator,
                                          std::span<const Method> methods, const MethodContext& ctx,
                                          std::uint64_t bootstrap_key) {
    auto stat = [estimator](const PairedSample& s) { return try_estimate(estimator, s); };
    const std::optional<double> theta = stat(data);
    if (!theta) {
        throw DegenerateSample("estimator undefined on the dataset");
    }
    DatasetIntervals out;
    out.theta_hat = *theta;
    out.intervals.resize(methods.size());
    out.redraws.assign(methods.size(), 0);

    const bool need_boot = std::any_of(methods.begin(), methods.end(), uses_bootstrap);
    std::optional<BootstrapDistribution> dist;
    if (need_boot) {
        dist = bootstrap_replicates(data, stat, ctx.B, bootstrap_key);
        out.bootstrap_redraws = dist->redraw_count;
    }

    auto point = [&](Method m) { return detail::make_interval(*theta, *theta, m, ctx.alpha); };

    for (std::size_t k = 0; k < methods.size(); ++k) {
        const Method m = methods[k];
        std::size_t extra = uses_bootstrap(m) ? dist->redraw_count : 0;
        ConfidenceInterval ci;
        try {
            switch (m) {
            case Method::Normal:
                ci = ci_normal(*dist, ctx.alpha);
                break;
            case Method::Basic:
                ci = ci_basic(*dist, ctx.alpha);
                break;
            case Method::Percentile:
                ci = ci_percentile(*dist, ctx.alpha);
                break;
            case Method::BCaNeg:
                ci = ci_bca(*dist, jackknife_influence_negative(data, stat), ctx.alpha);
                break;
            case Method::BCaPos:
                ci = ci_bca(*dist, jackknife_influence_positive(data, stat), ctx.alpha);
                break;
            case Method::ABC: {
                AbcDetails info;
                ci = ci_abc(data, estimator, ctx.alpha, &info);
                extra += info.quadratic_endpoints;
                break;
            }
            case Method::Studentized: {
                if (estimator == EstimatorKind::Pearson) {
                    const BootstrapDistribution* use = &*dist;
                    std::optional<BootstrapDistribution> redrawn;
                    const bool any_unit = std::any_of(dist->replicates.begin(), dist->replicates.end(),
                                                      [](double r) { return !(std::abs(r) < 1.0); });
                    if (any_unit && std::abs(*theta) < 1.0) {
                        redrawn = redraw_replicates_where(
                            *dist, data, stat, [](double r) { return std::abs(r) < 1.0; },
                            derive_key({bootstrap_key, key_of("studentized")}));
                        use = &*redrawn;
                        extra = redrawn->redraw_count;
                    }
                    ci = ci_studentized(data.size(), *use, PearsonAnalytic{}, ctx.alpha);
                } else {
                    if (!ctx.spearman_se) {
                        throw std::invalid_argument("studentized Spearman interval needs a simulated SE");
                    }
                    ci = ci_studentized(data.size(), *dist, SpearmanSimulated{*ctx.spearman_se}, ctx.alpha);
                }
                break;
            }
            case Method::Fisher:
                ci = ci_fisher(*theta, data.size(), ctx.alpha);
                break;
            }
        } catch (const ZeroSpread&) {
            ci = point(m);
            ++extra;
        }
        out.intervals[k] = ci;
        out.redraws[k] = extra;
    }
    return out;
}

namespace detail {

inline std::string coverage_checkpoint_key(const StudyConfig& c, Family family, double rho, std::size_t n,
                                           EstimatorKind est) {
    std::string methods;
    for (const auto m : c.methods) {
        methods += std::string(to_string(m)) + "+";
    }
    return "coverage|" + std::string(to_string(family)) + "|" + format_real(rho) + "|" + std::to_string(n) +
           "|" + std::string(to_string(est)) + "|" + methods + "|" + std::to_string(c.n_sims) + "|" +
           std::to_string(c.B) + "|" + format_real(c.alpha) + "|" + std::to_string(c.seed) + "|" +
           format_real(c.poisson_lambda1) + "|" + format_real(c.poisson_lambda2) + "|" +
           std::to_string(c.negbin_r) + "|" + format_real(c.negbin_ratio) + "|" + std::to_string(c.se_reps);
}

inline nlohmann::json row_to_json(const StudyResultRow& r) {
    return nlohmann::json{{"distribution", r.distribution},
                          {"params", r.params},
                          {"rho_true", r.rho_true},
                          {"n", r.n},
                          {"estimator", to_string(r.estimator)},
                          {"method", to_string(r.method)},
                          {"coverage", r.coverage},
                          {"mean_length", r.mean_length},
                          {"degenerate_count", r.degenerate_count},
                          {"exceeds_range_count", r.exceeds_range_count},
                          {"n_sims", r.n_sims},
                          {"B", r.B},
                          {"seed", r.seed}};
}

inline StudyResultRow row_from_json(const nlohmann::json& j) {
    StudyResultRow r;
    r.distribution = j.at("distribution").get<std::string>();
    r.params = j.at("params").get<std::string>();
    r.rho_true = j.at("rho_true").get<double>();
    r.n = j.at("n").get<std::size_t>();
    r.estimator = parse_estimator(j.at("estimator").get<std::string>());
    r.method = parse_method(j.at("method").get<std::string>());
    r.coverage = j.at("coverage").get<double>();
    r.mean_length = j.at("mean_length").get<double>();
    r.degenerate_count = j.at("degenerate_count").get<std::size_t>();
    r.exceeds_range_count = j.at("exceeds_range_count").get<std::size_t>();
    r.n_sims = j.at("n_sims").get<std::size_t>();
    r.B = j.at("B").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    return r;
}

inline std::unordered_map<std::string, std::vector<StudyResultRow>> load_checkpoint(const std::string& path) {
    std::unordered_map<std::string, std::vector<StudyResultRow>> done;
    std::ifstream in(path);
    if (!in) {
        return done;
    }
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error&) {
            continue; // a partially written trailing line from an interrupted run
        }
        std::vector<StudyResultRow> rows;
        for (const auto& r : j.at("rows")) {
            rows.push_back(row_from_json(r));
        }
        done[j.at("key").get<std::string>()] = std::move(rows);
    }
    return done;
}

} // namespace detail

using CoverageSink = std::function<void(const StudyResultRow&)>;

/// Coverage and mean length of every requested interval method for each
/// (distribution, rho, n, estimator) combination.
///
/// Dataset s of a combination is drawn from a stream keyed by (seed,
/// distribution, rho, n, s), so both estimators see the same datasets and
/// results do not depend on the worker count or on which other
/// combinations are in the config.
inline StudySummary run_coverage_study(const StudyConfig& config, const CoverageSink& sink) {
    const auto start = std::chrono::steady_clock::now();
    if (config.n_sims < 1 || config.B < 1) {
        throw std::invalid_argument("coverage study: n_sims and B must be at least 1");
    }
    if (config.methods.empty() || config.estimators.empty()) {
        throw std::invalid_argument("coverage study: need at least one method and one estimator");
    }
    for (const auto n : config.sample_sizes) {
        if (n < 4) {
            throw std::invalid_argument("coverage study: sample sizes must be at least 4");
        }
    }
    // Solve every parameter set before any work starts.
    for (const auto family : config.families) {
        for (const double rho : config.rhos) {
            detail::check_rho_allowed(family, rho, config);
            (void)resolve_distribution(family, rho, config);
        }
    }

    std::unordered_map<std::string, std::vector<StudyResultRow>> done;
    if (config.resume && !config.checkpoint_path.empty()) {
        done = detail::load_checkpoint(config.checkpoint_path);
    }
    std::ofstream checkpoint;
    if (!config.checkpoint_path.empty()) {
        checkpoint.open(config.checkpoint_path, config.resume ? std::ios::app : std::ios::trunc);
        if (!checkpoint) {
            throw std::runtime_error("cannot open checkpoint " + config.checkpoint_path);
        }
    }

    SpearmanSETable se_table;
    if (!config.se_cache_path.empty() && std::filesystem::exists(config.se_cache_path)) {
        se_table = SpearmanSETable::load_csv(config.se_cache_path);
    }
    const bool need_spearman_se =
        std::find(config.methods.begin(), config.methods.end(), Method::Studentized) != config.methods.end() &&
        std::find(config.estimators.begin(), config.estimators.end(), EstimatorKind::Spearman) !=
            config.estimators.end();

    StudySummary summary;
    const std::size_t M = config.methods.size();

    for (const auto family : config.families) {
        for (const double rho : config.rhos) {
            const DistributionSpec spec = resolve_distribution(family, rho, config);
            for (const std::size_t n : config.sample_sizes) {
                const std::uint64_t combo = detail::combination_key(config.seed, "coverage", family, rho, n);

                std::optional<double> spearman_se;
                if (need_spearman_se) {
                    const std::size_t before = se_table.size();
                    spearman_se = se_table.get_or_build(
                        spec, n, config.se_reps, detail::combination_key(config.seed, "spearman-se", family, rho, n),
                        config.workers);
                    if (se_table.size() != before && !config.se_cache_path.empty()) {
                        se_table.save_csv(config.se_cache_path);
                    }
                }

                for (const EstimatorKind estimator : config.estimators) {
                    const std::string ck = detail::coverage_checkpoint_key(config, family, rho, n, estimator);
                    if (const auto it = done.find(ck); it != done.end()) {
                        for (const auto& row : it->second) {
                            sink(row);
                            ++summary.rows_written;
                        }
                        ++summary.combinations_resumed;
                        continue;
                    }

                    MethodContext ctx{config.B, config.alpha, spearman_se};
                    std::vector<DatasetIntervals> results(config.n_sims);
                    std::vector<std::size_t> dataset_redraws(config.n_sims, 0);
                    try {
                        parallel_for(config.n_sims, config.workers, [&](std::size_t sim) {
                            const std::uint64_t dkey = derive_key({combo, sim});
                            const PairedSample data = detail::draw_dataset(
                                spec, n, dkey, [](const PairedSample& s) { return dataset_usable(s); },
                                dataset_redraws[sim]);
                            results[sim] = compute_intervals(data, estimator, config.methods, ctx,
                                                             derive_key({dkey, key_of("bootstrap")}));
                        });
                    } catch (const std::exception& e) {
                        throw StudyError("coverage study failed at " + detail::describe(family, rho, n) +
                                         " estimator=" + std::string(to_string(estimator)) + ": " + e.what());
                    }

                    std::vector<StudyResultRow> rows;
                    for (std::size_t k = 0; k < M; ++k) {
                        StudyResultRow row;
                        row.distribution = std::string(to_string(family));
                        row.params = params_label(spec);
                        row.rho_true = rho;
                        row.n = n;
                        row.estimator = estimator;
                        row.method = config.methods[k];
                        row.n_sims = config.n_sims;
                        row.B = config.B;
                        row.seed = config.seed;
                        std::size_t covered = 0;
                        double length_sum = 0.0;
                        for (std::size_t s = 0; s < config.n_sims; ++s) {
                            const auto& ci = results[s].intervals[k];
                            covered += ci.contains(rho) ? 1 : 0;
                            length_sum += ci.length();
                            row.exceeds_range_count += ci.exceeds_range ? 1 : 0;
                            row.degenerate_count += dataset_redraws[s] + results[s].redraws[k];
                        }
                        row.coverage = static_cast<double>(covered) / static_cast<double>(config.n_sims);
                        row.mean_length = length_sum / static_cast<double>(config.n_sims);
                        rows.push_back(row);
                    }
                    for (std::size_t s = 0; s < config.n_sims; ++s) {
                        summary.total_redraws += dataset_redraws[s] + results[s].bootstrap_redraws;
                    }

                    if (checkpoint.is_open()) {
                        nlohmann::json line{{"key", ck}, {"rows", nlohmann::json::array()}};
                        for (const auto& row : rows) {
                            line["rows"].push_back(detail::row_to_json(row));
                        }
                        checkpoint << line.dump() << '\n' << std::flush;
                    }
                    for (const auto& row : rows) {
                        sink(row);
                        ++summary.rows_written;
                    }
                }
            }
        }
    }
    summary.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return summary;
}

/// Convenience overload collecting rows in memory.
inline std::vector<StudyResultRow> run_coverage_study(const StudyConfig& config, StudySummary* summary = nullptr) {
    std::vector<StudyResultRow> rows;
    const StudySummary s = run_coverage_study(config, [&](const StudyResultRow& r) { rows.push_back(r); });
    if (summary != nullptr) {
        *summary = s;
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Bias study

/// Mean, variance and bias of each estimator over `reps` datasets of
/// `pairs_per_rep` pairs, per (distribution, rho).
inline std::vector<BiasResultRow> run_bias_study(const StudyConfig& config, StudySummary* summary = nullptr) {
    const auto start = std::chrono::steady_clock::now();
    if (config.reps < 2) {
        throw std::invalid_argument("bias study: reps must be at least 2");
    }
    if (config.pairs_per_rep < 3) {
        throw std::invalid_argument("bias study: pairs_per_rep must be at least 3");
    }
    for (const auto family : config.families) {
        for (const double rho : config.rhos) {
            detail::check_rho_allowed(family, rho, config);
            (void)resolve_distribution(family, rho, config);
        }
    }
    std::vector<BiasResultRow> rows;
    std::size_t redraws_total = 0;
    const std::size_t E = config.estimators.size();
    for (const auto family : config.families) {
        for (const double rho : config.rhos) {
            const DistributionSpec spec = resolve_distribution(family, rho, config);
            const std::uint64_t combo =
                detail::combination_key(config.seed, "bias", family, rho, config.pairs_per_rep);
            std::vector<std::vector<double>> estimates(E, std::vector<double>(config.reps));
            std::vector<std::size_t> redraws(config.reps, 0);
            try {
                parallel_for(config.reps, config.workers, [&](std::size_t rep) {
                    const PairedSample data = detail::draw_dataset(
                        spec, config.pairs_per_rep, derive_key({combo, rep}),
                        [](const PairedSample& s) { return try_pearson(s).has_value(); }, redraws[rep]);
                    for (std::size_t e = 0; e < E; ++e) {
                        estimates[e][rep] = estimate(config.estimators[e], data);
                    }
                });
            } catch (const std::exception& ex) {
                throw StudyError("bias study failed at " + detail::describe(family, rho, config.pairs_per_rep) +
                                 ": " + ex.what());
            }
            for (const auto r : redraws) {
                redraws_total += r;
            }
            for (std::size_t e = 0; e < E; ++e) {
                BiasResultRow row;
                row.distribution = std::string(to_string(family));
                row.rho_true = rho;
                row.estimator = config.estimators[e];
                row.mean_estimate = detail::mean_of(estimates[e]);
                row.variance = detail::variance_of(estimates[e], row.mean_estimate);
                row.bias = row.mean_estimate - rho;
                row.pairs_per_rep = config.pairs_per_rep;
                row.reps = config.reps;
                row.seed = config.seed;
                rows.push_back(row);
            }
        }
    }
    if (summary != nullptr) {
        summary->rows_written = rows.size();
        summary->total_redraws = redraws_total;
        summary->wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    return rows;
}

// ---------------------------------------------------------------------------
// MSE study

/// Grid lo, lo + step, ..., hi (inclusive, robust to rounding).
inline std::vector<double> rho_grid(double lo, double hi, double step) {
    if (!(step > 0.0) || hi < lo) {
        throw std::invalid_argument("rho grid: need lo <= hi and step > 0");
    }
    const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    std::vector<double> grid;
    grid.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        // round to 12 decimals so that labels are clean (0.05 + 0.01 * 3 = 0.08)
        grid.push_back(std::round((lo + static_cast<double>(i) * step) * 1e12) / 1e12);
    }
    return grid;
}

/// MSE = variance + bias^2 of each estimator over `reps` fresh datasets of
/// size n, per (distribution, rho, n). Both estimators use the same datasets.
inline std::vector<MseResultRow> run_mse_study(const StudyConfig& config, StudySummary* summary = nullptr) {
    const auto start = std::chrono::steady_clock::now();
    if (config.reps < 2) {
        throw std::invalid_argument("MSE study: reps must be at least 2");
    }
    if (config.rhos.empty()) {
        throw std::invalid_argument("MSE study: the correlation grid is empty");
    }
    for (const auto n : config.sample_sizes) {
        if (n < 2) {
            throw std::invalid_argument("MSE study: sample sizes must be at least 2");
        }
    }
    for (const auto family : config.families) {
        for (const double rho : config.rhos) {
            (void)resolve_distribution(family, rho, config);
        }
    }
    std::vector<MseResultRow> rows;
    std::size_t redraws_total = 0;
    const std::size_t E = config.estimators.size();
    for (const auto family : config.families) {
        for (const double rho : config.rhos) {
            const DistributionSpec spec = resolve_distribution(family, rho, config);
            for (const std::size_t n : config.sample_sizes) {
                const std::uint64_t combo = detail::combination_key(config.seed, "mse", family, rho, n);
                std::vector<std::vector<double>> estimates(E, std::vector<double>(config.reps));
                std::vector<std::size_t> redraws(config.reps, 0);
                try {
                    parallel_for(config.reps, config.workers, [&](std::size_t rep) {
                        const PairedSample data = detail::draw_dataset(
                            spec, n, derive_key({combo, rep}),
                            [](const PairedSample& s) { return try_pearson(s).has_value(); }, redraws[rep]);
                        for (std::size_t e = 0; e < E; ++e) {
                            estimates[e][rep] = estimate(config.estimators[e], data);
                        }
                    });
                } catch (const std::exception& ex) {
                    throw StudyError("MSE study failed at " + detail::describe(family, rho, n) + ": " + ex.what());
                }
                for (const auto r : redraws) {
                    redraws_total += r;
                }
                for (std::size_t e = 0; e < E; ++e) {
                    const double mean = detail::mean_of(estimates[e]);
                    const double var = detail::variance_of(estimates[e], mean);
                    const double bias = mean - rho;
                    rows.push_back(MseResultRow{std::string(to_string(family)), rho, n, config.estimators[e],
                                                var + bias * bias, config.reps, config.seed});
                }
            }
        }
    }
    if (summary != nullptr) {
        summary->rows_written = rows.size();
        summary->total_redraws = redraws_total;
        summary->wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    return rows;
}

} // namespace corrboot

#endif

// corrboot: bootstrap confidence intervals for correlation coefficients of
// bivariate count data, and the simulation studies built on them.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "corrboot/corrboot.hpp"

namespace {

using namespace corrboot;
using nlohmann::json;

constexpr int exit_ok = 0;
constexpr int exit_failure = 1;
constexpr int exit_usage = 2;

/// Invalid flags or flag combinations; maps to the usage exit code.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed input data; reported with the offending line.
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    // shared
    std::vector<std::string> dists{"poisson"};
    std::vector<double> rhos;
    std::string rho_grid;
    std::vector<std::size_t> sizes{10, 20, 50, 100};
    std::vector<std::string> estimators{"pearson", "spearman"};
    std::vector<std::string> methods{"all"};
    std::size_t sims = 2000;
    std::size_t B = 1000;
    double alpha = 0.025;
    std::uint64_t seed = 20100501;
    std::size_t workers = 1;
    std::string out;
    std::string checkpoint;
    bool resume = false;
    bool allow_negbin_high_rho = false;
    std::string se_cache;
    std::size_t se_reps = 1000;
    std::size_t pairs = 1000000;
    std::size_t reps = 1000;
    double lambda1 = 0.5;
    double lambda2 = 1.0;
    int negbin_r = 5;
    double negbin_ratio = 2.0;

    // ci
    std::string input;
    std::string estimator = "pearson";
    std::optional<double> spearman_se;
};

PairedSample read_pairs(std::istream& in) {
    PairedSample s;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        for (char& c : line) {
            if (c == ',' || c == '\t' || c == '\r') {
                c = ' ';
            }
        }
        std::istringstream fields(line);
        std::vector<std::string> tokens;
        for (std::string tok; fields >> tok;) {
            tokens.push_back(tok);
        }
        if (tokens.empty()) {
            continue;
        }
        if (tokens.size() != 2) {
            throw InputError("line " + std::to_string(lineno) + ": expected two columns, found " +
                             std::to_string(tokens.size()));
        }
        std::int64_t v[2];
        for (int k = 0; k < 2; ++k) {
            const auto& t = tokens[k];
            const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v[k]);
            if (ec != std::errc() || ptr != t.data() + t.size()) {
                throw InputError("line " + std::to_string(lineno) + ": '" + t + "' is not an integer");
            }
            if (v[k] < 0) {
                throw InputError("line " + std::to_string(lineno) + ": counts must be nonnegative");
            }
        }
        s.push_back(v[0], v[1]);
    }
    if (s.size() < 2) {
        throw InputError("need at least two pairs, found " + std::to_string(s.size()));
    }
    return s;
}

std::vector<Method> resolve_methods(const std::vector<std::string>& names) {
    std::vector<Method> out;
    for (const auto& name : names) {
        if (name == "all") {
            out.assign(all_methods.begin(), all_methods.end());
            continue;
        }
        const Method m = parse_method(name);
        if (std::find(out.begin(), out.end(), m) == out.end()) {
            out.push_back(m);
        }
    }
    return out;
}

std::vector<double> parse_grid(const std::string& spec) {
    double v[3];
    std::size_t start = 0;
    for (int k = 0; k < 3; ++k) {
        const std::size_t colon = k < 2 ? spec.find(':', start) : spec.size();
        if (colon == std::string::npos) {
            throw UsageError("--rho-grid expects lo:hi:step, got '" + spec + "'");
        }
        const std::string part = spec.substr(start, colon - start);
        try {
            std::size_t used = 0;
            v[k] = std::stod(part, &used);
            if (used != part.size()) {
                throw std::invalid_argument(part);
            }
        } catch (const std::exception&) {
            throw UsageError("--rho-grid: '" + part + "' is not a number");
        }
        start = colon + 1;
    }
    return rho_grid(v[0], v[1], v[2]);
}

StudyConfig build_config(const Options& o, const std::string& command) {
    StudyConfig c;
    c.families.clear();
    for (const auto& d : o.dists) {
        c.families.push_back(parse_family(d));
    }
    if (!o.rho_grid.empty() && !o.rhos.empty()) {
        throw UsageError("--rho and --rho-grid are mutually exclusive");
    }
    if (!o.rho_grid.empty()) {
        c.rhos = parse_grid(o.rho_grid);
    } else if (!o.rhos.empty()) {
        c.rhos = o.rhos;
    } else if (command == "mse") {
        c.rhos = rho_grid(0.05, 0.95, 0.01);
    } else if (command == "bias") {
        c.rhos = {0.25, 0.5, 0.75};
    }
    c.sample_sizes = o.sizes;
    c.estimators.clear();
    for (const auto& e : o.estimators) {
        c.estimators.push_back(parse_estimator(e));
    }
    c.methods = resolve_methods(o.methods);
    c.n_sims = o.sims;
    c.B = o.B;
    c.alpha = o.alpha;
    c.seed = o.seed;
    c.workers = o.workers;
    c.poisson_lambda1 = o.lambda1;
    c.poisson_lambda2 = o.lambda2;
    c.negbin_r = o.negbin_r;
    c.negbin_ratio = o.negbin_ratio;
    c.allow_negbin_high_rho = o.allow_negbin_high_rho;
    c.se_reps = o.se_reps;
    c.se_cache_path = o.se_cache;
    c.pairs_per_rep = o.pairs;
    c.reps = o.reps;
    c.checkpoint_path = o.checkpoint;
    c.resume = o.resume;

    if (c.resume && c.checkpoint_path.empty()) {
        throw UsageError("--resume requires --checkpoint");
    }
    if (c.workers < 1) {
        throw UsageError("--workers must be at least 1");
    }
    if (c.families.empty() || c.rhos.empty() || c.sample_sizes.empty() || c.estimators.empty()) {
        throw UsageError("empty distribution, correlation, size or estimator list");
    }
    // Every parameter set must be solvable before any work starts.
    for (const auto family : c.families) {
        for (const double rho : c.rhos) {
            if (command != "mse" && command != "se-table" && family == Family::NegBin && rho >= 0.9 &&
                !c.allow_negbin_high_rho) {
                throw UsageError("negative binomial with rho >= 0.9 needs --allow-negbin-high-rho");
            }
            try {
                validate(resolve_distribution(family, rho, c));
            } catch (const std::exception& e) {
                throw UsageError(std::string(to_string(family)) + " rho=" + format_real(rho) + ": " + e.what());
            }
        }
    }
    return c;
}

void echo_config(const json& meta, const std::string& out) {
    std::cout << "config: " << meta.dump() << '\n';
    if (!out.empty() && out != "-") {
        std::ofstream side(out + ".meta.json");
        if (!side) {
            throw std::runtime_error("cannot write " + out + ".meta.json");
        }
        side << meta.dump(2) << '\n';
    }
}

template <typename Row>
void emit_rows(const std::vector<Row>& rows, const std::string& out) {
    if (out.empty() || out == "-") {
        write_csv(std::cout, rows);
    } else {
        write_csv(out, rows);
    }
}

void print_summary(const StudySummary& s) {
    std::cout << "rows: " << s.rows_written << "  wall_seconds: " << format_real(s.wall_seconds)
              << "  redraws: " << s.total_redraws;
    if (s.combinations_resumed > 0) {
        std::cout << "  resumed: " << s.combinations_resumed;
    }
    std::cout << '\n';
}

std::string format_endpoint(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10f", v);
    return buf;
}

int cmd_ci(const Options& o) {
    const EstimatorKind estimator = parse_estimator(o.estimator);
    const std::vector<Method> methods = resolve_methods(o.methods);
    if (o.B < 1) {
        throw UsageError("--B must be at least 1");
    }
    if (estimator == EstimatorKind::Spearman && !o.spearman_se &&
        std::find(methods.begin(), methods.end(), Method::Studentized) != methods.end()) {
        throw UsageError("studentized Spearman intervals need --spearman-se");
    }

    PairedSample data;
    if (o.input == "-") {
        data = read_pairs(std::cin);
    } else {
        std::ifstream in(o.input);
        if (!in) {
            throw InputError("cannot open " + o.input);
        }
        data = read_pairs(in);
    }

    json meta{{"command", "ci"},          {"input", o.input},   {"estimator", o.estimator},
              {"methods", json::array()}, {"alpha", o.alpha},   {"B", o.B},
              {"seed", o.seed},           {"n", data.size()}};
    for (const Method m : methods) {
        meta["methods"].push_back(to_string(m));
    }
    if (o.spearman_se) {
        meta["spearman_se"] = *o.spearman_se;
    }

    std::ostringstream report;
    report << "config: " << meta.dump() << '\n';
    const double r = pearson_r(data);
    const std::optional<double> rs = try_spearman(data);
    report << "theta_hat pearson " << format_endpoint(r) << '\n';
    report << "theta_hat spearman " << (rs ? format_endpoint(*rs) : std::string("undefined")) << '\n';

    const MethodContext ctx{o.B, o.alpha, o.spearman_se};
    const DatasetIntervals res = compute_intervals(data, estimator, methods, ctx, o.seed);
    report << "method lower upper flags\n";
    for (std::size_t k = 0; k < methods.size(); ++k) {
        const auto& ci = res.intervals[k];
        std::vector<std::string> flags;
        if (ci.exceeds_range) {
            flags.emplace_back("exceeds_range");
        }
        if (ci.clamped_z0) {
            flags.emplace_back("clamped_z0");
        }
        if (res.redraws[k] > 0) {
            flags.emplace_back("redraws=" + std::to_string(res.redraws[k]));
        }
        std::string joined = flags.empty() ? "-" : flags.front();
        for (std::size_t i = 1; i < flags.size(); ++i) {
            joined += ';' + flags[i];
        }
        report << to_string(methods[k]) << ' ' << format_endpoint(ci.lower) << ' ' << format_endpoint(ci.upper)
               << ' ' << joined << '\n';
    }

    if (o.out.empty() || o.out == "-") {
        std::cout << report.str();
    } else {
        std::ofstream out(o.out, std::ios::binary);
        if (!out) {
            throw std::runtime_error("cannot write " + o.out);
        }
        out << report.str();
    }
    return exit_ok;
}

int cmd_study(const Options& o, const std::string& command) {
    const StudyConfig config = build_config(o, command);
    json meta = config;
    meta["command"] = command;
    meta["out"] = o.out;
    echo_config(meta, o.out);

    StudySummary summary;
    if (command == "coverage") {
        const auto rows = run_coverage_study(config, &summary);
        emit_rows(rows, o.out);
    } else if (command == "bias") {
        const auto rows = run_bias_study(config, &summary);
        emit_rows(rows, o.out);
    } else {
        const auto rows = run_mse_study(config, &summary);
        emit_rows(rows, o.out);
    }
    print_summary(summary);
    return exit_ok;
}

int cmd_se_table(const Options& o) {
    StudyConfig config = build_config(o, "se-table");
    json meta{{"command", "se-table"}, {"distributions", json::array()}, {"rhos", config.rhos},
              {"sample_sizes", config.sample_sizes}, {"se_reps", config.se_reps}, {"seed", config.seed},
              {"workers", config.workers}, {"out", o.out}};
    for (const auto f : config.families) {
        meta["distributions"].push_back(to_string(f));
    }
    echo_config(meta, o.out);

    SpearmanSETable table;
    if (!o.out.empty() && o.out != "-" && std::filesystem::exists(o.out)) {
        table = SpearmanSETable::load_csv(o.out);
    }
    // Keys match the coverage study so the file doubles as its --se-cache.
    for (const auto family : config.families) {
        for (const double rho : config.rhos) {
            const DistributionSpec spec = resolve_distribution(family, rho, config);
            for (const std::size_t n : config.sample_sizes) {
                const double se = table.get_or_build(
                    spec, n, config.se_reps, detail::combination_key(config.seed, "spearman-se", family, rho, n),
                    config.workers);
                std::cout << to_string(family) << " rho=" << format_real(rho) << " n=" << n
                          << " se=" << format_real(se) << '\n';
            }
        }
    }
    if (!o.out.empty() && o.out != "-") {
        table.save_csv(o.out);
    }
    return exit_ok;
}

void add_study_flags(CLI::App* sub, Options& o, bool with_methods) {
    sub->add_option("--dist", o.dists, "Distribution families: poisson, negbin")->delimiter(',');
    sub->add_option("--rho", o.rhos, "Target correlations")->delimiter(',');
    sub->add_option("--rho-grid", o.rho_grid, "Correlation grid lo:hi:step");
    sub->add_option("--estimators", o.estimators, "pearson, spearman")->delimiter(',');
    if (with_methods) {
        sub->add_option("--methods", o.methods, "Interval methods, or 'all'")->delimiter(',');
        sub->add_option("--sims", o.sims, "Simulated datasets per combination")->capture_default_str();
        sub->add_option("--B", o.B, "Bootstrap replicates")->capture_default_str();
        sub->add_option("--alpha", o.alpha, "Tail probability; nominal coverage is 1 - 2 alpha")
            ->capture_default_str();
        sub->add_option("--checkpoint", o.checkpoint, "JSON-lines checkpoint file");
        sub->add_flag("--resume", o.resume, "Skip combinations already in the checkpoint");
        sub->add_option("--se-cache", o.se_cache, "CSV cache of simulated Spearman standard errors");
    }
    sub->add_option("--se-reps", o.se_reps, "Datasets per simulated Spearman SE")->capture_default_str();
    sub->add_option("--seed", o.seed, "Master seed")->capture_default_str();
    sub->add_option("--workers", o.workers, "Worker threads")->envname("CORRBOOT_WORKERS")->capture_default_str();
    sub->add_option("--out", o.out, "Output CSV path ('-' for stdout)");
    sub->add_flag("--allow-negbin-high-rho", o.allow_negbin_high_rho,
                  "Permit negative binomial with rho >= 0.9");
    sub->add_option("--lambda1", o.lambda1, "Poisson lambda1")->capture_default_str();
    sub->add_option("--lambda2", o.lambda2, "Poisson lambda2")->capture_default_str();
    sub->add_option("--negbin-r", o.negbin_r, "Negative binomial r")->capture_default_str();
    sub->add_option("--negbin-ratio", o.negbin_ratio, "Negative binomial p2 / p1")->capture_default_str();
}

} // namespace

int main(int argc, char** argv) {
    Options o;
    CLI::App app{"Bootstrap confidence intervals for correlations of bivariate count data"};
    app.require_subcommand(1);

    auto* ci = app.add_subcommand("ci", "Confidence intervals for a two-column data file");
    ci->add_option("input", o.input, "Data file with two integer columns ('-' for stdin)")->required();
    ci->add_option("--estimator", o.estimator, "pearson or spearman")->capture_default_str();
    ci->add_option("--methods", o.methods, "Interval methods, or 'all'")->delimiter(',');
    ci->add_option("--B", o.B, "Bootstrap replicates")->capture_default_str();
    ci->add_option("--alpha", o.alpha, "Tail probability")->capture_default_str();
    ci->add_option("--seed", o.seed, "Seed for the bootstrap")->capture_default_str();
    ci->add_option("--spearman-se", o.spearman_se, "Standard error for studentized Spearman intervals");
    ci->add_option("--out", o.out, "Report path (default stdout)");

    auto* coverage = app.add_subcommand("coverage", "Coverage and length study");
    add_study_flags(coverage, o, true);
    coverage->add_option("--n", o.sizes, "Sample sizes")->delimiter(',');

    auto* bias = app.add_subcommand("bias", "Bias and variance for large samples");
    add_study_flags(bias, o, false);
    bias->add_option("--pairs", o.pairs, "Pairs per replication")->capture_default_str();
    bias->add_option("--reps", o.reps, "Replications")->capture_default_str();

    auto* mse = app.add_subcommand("mse", "Mean squared error over a correlation grid");
    add_study_flags(mse, o, false);
    mse->add_option("--n", o.sizes, "Sample sizes")->delimiter(',');
    mse->add_option("--reps", o.reps, "Replications")->capture_default_str();

    auto* se = app.add_subcommand("se-table", "Simulated standard errors of Spearman's rho");
    add_study_flags(se, o, false);
    se->add_option("--n", o.sizes, "Sample sizes")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_usage;
    }

    try {
        if (*ci) {
            return cmd_ci(o);
        }
        if (*se) {
            return cmd_se_table(o);
        }
        return cmd_study(o, app.get_subcommands().front()->get_name());
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return exit_usage;
    } catch (const std::invalid_argument& e) {
        // unknown names in list flags (methods, estimators, distributions)
        std::cerr << "usage error: " << e.what() << '\n';
        return exit_usage;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return exit_failure;
    } catch (const ZeroVariance& e) {
        std::cerr << "error: column " << e.column() << " is constant; the correlation is undefined\n";
        return exit_failure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_failure;
    }
}

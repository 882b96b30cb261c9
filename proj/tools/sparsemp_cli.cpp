// sparsemp: command-line front end for the sparse sample covariance laboratory.
//
// Exit codes: 0 ok, 1 invariant violation or runtime failure, 2 bad
// parameters, 64 usage error.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <sparsemp.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sparsemp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvariant = 1;
constexpr int kExitParameters = 2;
constexpr int kExitUsage = 64;

/// Flag values; unset options leave the config file (or default) untouched.
struct Overrides {
    std::string config_path;
    std::optional<std::size_t> threads;
    std::optional<std::size_t> n, m, replications, grid_u, grid_v, bins, max_entry_stride;
    std::optional<double> p, np, alpha, delta, c0, mu, a0, V, threshold_C, u, v, tol, gamma, s0;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> dist, domain, out, deviant_rule;
    std::optional<std::vector<std::size_t>> sweep;
    std::optional<std::vector<double>> candidate_K;
    std::optional<std::vector<int>> q_values;
    bool no_columns = false;
    // concentration
    std::optional<std::string> mode, matrix, xi, eta, a2_reading;
    std::optional<std::size_t> k, samples, trials;
    std::optional<int> q;
};

template <class T>
void apply(T& target, const std::optional<T>& value) {
    if (value) target = *value;
}

ExperimentConfig build_config(const Overrides& o) {
    ExperimentConfig c;
    if (!o.config_path.empty()) {
        try {
            c = io::read_json(o.config_path).get<ExperimentConfig>();
        } catch (const nlohmann::json::exception& e) {
            throw ParameterError("invalid config '" + o.config_path + "': " + e.what());
        }
    }
    apply(c.model.n, o.n);
    apply(c.model.m, o.m);
    apply(c.model.p, o.p);
    apply(c.model.delta, o.delta);
    apply(c.model.seed, o.seed);
    if (o.dist || o.alpha)
        c.model.dist = EntryDistribution::from_name(o.dist.value_or(c.model.dist.name()),
                                                    o.alpha.value_or(c.model.dist.alpha()));
    if (o.domain) {
        if (*o.domain == "D_mu") c.domain.kind = DomainSpec::Kind::d_mu;
        else if (*o.domain == "D_a0") c.domain.kind = DomainSpec::Kind::d_a0;
        else throw ParameterError("unknown domain '" + *o.domain + "'");
    }
    apply(c.domain.mu, o.mu);
    apply(c.domain.a0, o.a0);
    apply(c.domain.V, o.V);
    apply(c.domain.grid_u, o.grid_u);
    apply(c.domain.grid_v, o.grid_v);
    apply(c.c0, o.c0);
    apply(c.replications, o.replications);
    apply(c.sweep_n, o.sweep);
    apply(c.np, o.np);
    apply(c.threshold_C, o.threshold_C);
    apply(c.deviant_rule, o.deviant_rule);
    apply(c.max_entry_stride, o.max_entry_stride);
    apply(c.candidate_K, o.candidate_K);
    apply(c.z.u, o.u);
    apply(c.z.v, o.v);
    apply(c.tol, o.tol);
    if (o.no_columns) c.include_columns = false;
    apply(c.q_values, o.q_values);
    apply(c.gamma, o.gamma);
    apply(c.s0, o.s0);
    apply(c.bins, o.bins);
    apply(c.output_dir, o.out);
    apply(c.concentration.mode, o.mode);
    apply(c.concentration.matrix, o.matrix);
    apply(c.concentration.xi, o.xi);
    apply(c.concentration.eta, o.eta);
    apply(c.concentration.a2_reading, o.a2_reading);
    apply(c.concentration.k, o.k);
    apply(c.concentration.samples, o.samples);
    apply(c.concentration.trials, o.trials);
    apply(c.concentration.q, o.q);
    return c;
}

std::size_t thread_count(const Overrides& o) {
    return o.threads && *o.threads > 0 ? *o.threads : default_thread_count();
}

void write_text(const fs::path& path, const std::function<void(std::ostream&)>& body) {
    auto os = io::open_output(path);
    body(os);
}

// ---------------------------------------------------------------------------

int cmd_spectrum(const ExperimentConfig& c, std::size_t /*threads*/) {
    const ModelParams& params = c.model;
    params.require_subcritical();
    detail::require(c.bins >= 1, "bins must be at least 1");
    const double y = params.y();
    const SampledMatrix x = sample_matrix(params, 0);
    const SpectrumResult spec = singular_values_only(x);
    const auto edges = mp_edges(y);
    const double hi = 1.05 * std::max(edges.upper, spec.singulars.maxCoeff());
    const Histogram h = esd_histogram(spec, -hi, hi, c.bins);

    const fs::path out = c.output_dir;
    write_text(out / "singular_values.csv", [&](std::ostream& os) { write_spectrum_csv(os, spec); });

    double sup_gap = 0.0;
    std::size_t interior = 0;
    std::vector<double> mp_avg(c.bins);
    for (std::size_t i = 0; i < c.bins; ++i) {
        const double lo = h.edges[i], up = h.edges[i + 1];
        mp_avg[i] = (mp_cdf(up, y) - mp_cdf(lo, y)) / h.width(i);
        const bool inside = (lo > edges.lower && up < edges.upper) ||
                            (lo > -edges.upper && up < -edges.lower);
        if (inside) {
            ++interior;
            sup_gap = std::max(sup_gap, std::abs(h.density(i) - mp_avg[i]));
        }
    }
    write_text(out / "esd_histogram.csv", [&](std::ostream& os) {
        io::CsvWriter csv(os);
        csv.row("bin_lo", "bin_hi", "count", "density");
        for (std::size_t i = 0; i < c.bins; ++i)
            csv.row(h.edges[i], h.edges[i + 1], h.counts[i], h.density(i));
    });
    write_text(out / "mp_overlay.csv", [&](std::ostream& os) {
        io::CsvWriter csv(os);
        csv.row("bin_lo", "bin_hi", "mp_density_bin_mean", "mp_density_center");
        for (std::size_t i = 0; i < c.bins; ++i)
            csv.row(h.edges[i], h.edges[i + 1], mp_avg[i],
                    mp_density(0.5 * (h.edges[i] + h.edges[i + 1]), y));
    });
    json params_json = params;
    io::write_json(out / "spectrum.json",
                   {{"schema_version", 1},
                    {"params", params_json},
                    {"bins", c.bins},
                    {"range", {-hi, hi}},
                    {"support", {edges.lower, edges.upper}},
                    {"interior_bins", interior},
                    {"sup_gap_interior", sup_gap},
                    {"singular_value_count", spec.singulars.size()}});
    return kExitOk;
}

int cmd_locallaw(const ExperimentConfig& c, std::size_t threads) {
    const fs::path out = c.output_dir;
    ScanOptions opts;
    opts.threads = threads;
    opts.max_entry_stride = c.max_entry_stride;
    opts.candidate_K = c.candidate_K;
    std::vector<LocalLawReport> reports;
    for (std::size_t n : c.sweep()) {
        const ModelParams params = c.params_for(n);
        DomainSpec domain = c.domain;
        domain.n = n;
        LocalLawReport r = locallaw_scan(params, domain, c.replications, c.c0, opts);
        const std::string stem = "locallaw_n" + std::to_string(n);
        io::write_json(out / (stem + ".json"), to_json_value(r));
        write_text(out / (stem + ".csv"), [&](std::ostream& os) { write_locallaw_csv(os, r); });
        reports.push_back(std::move(r));
    }
    write_text(out / "summary.csv", [&](std::ostream& os) {
        io::CsvWriter csv(os);
        csv.row("n", "sup_ratio", "fitted_K", "median_sup_lambda", "max_entry_max");
        for (const auto& r : reports) {
            csv.field(r.params.n).field(r.sup_ratio).field(r.fitted_K).field(r.median_sup_lambda);
            if (std::isnan(r.max_entry_max)) csv.field(std::string_view{});
            else csv.field(r.max_entry_max);
            csv.end_row();
        }
    });
    std::size_t nonfinite = 0;
    for (const auto& r : reports) nonfinite += r.nonfinite_count;
    if (nonfinite > 0) {
        std::cerr << "sparsemp: " << nonfinite << " non-finite |Lambda_n| values\n";
        return kExitInvariant;
    }
    return kExitOk;
}

int cmd_config_analyze(const ExperimentConfig& c, std::size_t threads) {
    const fs::path out = c.output_dir;
    const DeviantRule rule = c.rule();
    std::vector<InadmissibilityEstimate> rows;
    json estimates = json::array();
    for (std::size_t n : c.sweep()) {
        const ModelParams params = c.params_for(n);
        const SampledMatrix x = sample_matrix(params, 0);
        const ConfigurationMatrix cm = build_configuration(x, params, c.threshold_C);
        json report = to_json_value(classify(cm, params.n, params.m, rule));
        report["params"] = params;
        report["threshold_C"] = c.threshold_C;
        report["link_threshold"] = cm.threshold;
        report["link_count"] = cm.link_count();
        io::write_json(out / ("config_n" + std::to_string(n) + ".json"), report);
        if (c.replications > 0) {
            rows.push_back(inadmissibility_probability(params, c.threshold_C, c.replications,
                                                       threads, rule));
            estimates.push_back(to_json_value(rows.back()));
        }
    }
    if (!rows.empty()) {
        io::write_json(out / "inadmissibility.json",
                       {{"schema_version", kConfigurationSchemaVersion},
                        {"deviant_rule", c.deviant_rule},
                        {"threshold_C", c.threshold_C},
                        {"estimates", estimates}});
        write_text(out / "sweep.csv", [&](std::ostream& os) { write_sweep_csv(os, rows); });
    }
    return kExitOk;
}

Eigen::MatrixXd concentration_matrix(const ExperimentConfig& c, std::uint64_t trial) {
    const auto& s = c.concentration;
    detail::require(s.k >= 1, "matrix dimension k must be positive");
    const auto k = static_cast<Eigen::Index>(s.k);
    if (s.matrix == "identity") return Eigen::MatrixXd::Identity(k, k);
    if (s.matrix == "gaussian") return gaussian_matrix(s.k, s.k, c.model.seed, trial);
    throw ParameterError("unknown matrix kind '" + s.matrix + "' (identity or gaussian)");
}

int cmd_concentration(const ExperimentConfig& c, std::size_t threads) {
    const auto& s = c.concentration;
    const fs::path out = c.output_dir;
    ConcentrationInput in;
    in.xi = EntryDistribution::from_name(s.xi, c.model.dist.alpha());
    in.eta = EntryDistribution::from_name(s.eta, c.model.dist.alpha());
    in.q = s.q;
    const A2Reading reading = c.a2_reading();

    if (s.mode == "exact" || s.mode == "mc") {
        in.a = concentration_matrix(c, 0);
        const ConcentrationReport r =
            concentration_report(in, s.mode == "exact", s.samples, c.model.seed, reading, threads);
        json j = to_json_value(r);
        j["mode"] = s.mode;
        j["matrix"] = s.matrix;
        j["k"] = s.k;
        io::write_json(out / "concentration.json", j);
        return kExitOk;
    }
    if (s.mode != "corpus") throw ParameterError("unknown concentration mode '" + s.mode + "'");
    detail::require(s.trials >= 1, "corpus needs at least one trial");
    const bool exact = in.xi.finitely_supported() && in.eta.finitely_supported() &&
                       s.k <= kExactMaxDim;
    std::vector<ConcentrationReport> rows;
    double worst = 1.0;
    std::size_t below_at_1 = 0;
    for (std::size_t t = 0; t < s.trials; ++t) {
        in.a = concentration_matrix(c, t);
        rows.push_back(concentration_report(in, exact, s.samples, c.model.seed + t, reading, threads));
        worst = std::max(worst, rows.back().fitted_C);
        below_at_1 += rows.back().lhs <= rows.back().rhs.at(1.0);
    }
    write_text(out / "corpus.csv", [&](std::ostream& os) { write_corpus_csv(os, rows); });
    io::write_json(out / "corpus.json", {{"schema_version", kConcentrationSchemaVersion},
                                         {"trials", s.trials},
                                         {"k", s.k},
                                         {"q", s.q},
                                         {"exact", exact},
                                         {"a2_reading", s.a2_reading},
                                         {"max_fitted_C", io::number_or_null(worst)},
                                         {"trials_lhs_le_rhs_at_1", below_at_1}});
    return kExitOk;
}

int cmd_audit(const ExperimentConfig& c, std::size_t threads) {
    const ModelParams& params = c.model;
    params.validate();
    detail::require(c.tol > 0.0, "tol must be positive");
    const SampledMatrix x = sample_matrix(params, 0);
    // The tolerance check happens here so the report is written either way.
    const AuditReport a = self_consistency_audit(x, c.z, c.include_columns,
                                                 std::numeric_limits<double>::infinity(), threads);
    json j = to_json_value(a);
    j["params"] = params;
    j["tol"] = c.tol;
    const bool ok = a.max_residual < c.tol;
    j["pass"] = ok;
    io::write_json(fs::path(c.output_dir) / "audit.json", j);
    if (!ok) {
        std::cerr << "sparsemp: identity residual " << io::fmt(a.max_residual)
                  << " exceeds tolerance " << io::fmt(c.tol) << '\n';
        return kExitInvariant;
    }
    return kExitOk;
}

int cmd_tn_moments(const ExperimentConfig& c, std::size_t threads) {
    const ModelParams& params = c.model;
    DomainSpec domain = c.domain;
    domain.n = params.n;
    TnOptions opts;
    opts.gamma = c.gamma;
    opts.s0 = c.s0;
    opts.threads = threads;
    json results = json::array();
    for (int q : c.q_values)
        results.push_back(to_json_value(tn_moment_study(params, domain, c.z, q, c.replications, opts)));
    json params_json = params;
    io::write_json(fs::path(c.output_dir) / "tn_moments.json",
                   {{"schema_version", kLocalLawSchemaVersion},
                    {"params", params_json},
                    {"gamma", c.gamma},
                    {"s0", c.s0},
                    {"results", results}});
    return kExitOk;
}

// ---------------------------------------------------------------------------

void add_model_options(CLI::App* sub, Overrides& o) {
    sub->add_option("--config", o.config_path, "JSON experiment config; flags override it")
        ->check(CLI::ExistingFile);
    sub->add_option("--n", o.n, "rows n");
    sub->add_option("--m", o.m, "columns m");
    sub->add_option("--p", o.p, "sparsity probability p in (0, 1]");
    sub->add_option("--dist", o.dist, "entry law: gaussian, rademacher, pareto");
    sub->add_option("--alpha", o.alpha, "Pareto tail index (> 4 + delta)");
    sub->add_option("--delta", o.delta, "moment excess delta > 0");
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--threads", o.threads, "worker threads (overrides SPARSEMP_THREADS)");
}

void add_domain_options(CLI::App* sub, Overrides& o) {
    sub->add_option("--domain", o.domain, "D_mu or D_a0");
    sub->add_option("--mu", o.mu, "band margin mu for D_mu");
    sub->add_option("--a0", o.a0, "v0 prefactor a0");
    sub->add_option("--V", o.V, "upper imaginary part V");
    sub->add_option("--grid-u", o.grid_u, "grid points per band");
    sub->add_option("--grid-v", o.grid_v, "imaginary levels");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse sample covariance laboratory: spectra, local-law scans, "
                 "resolvent identity audits, configuration and concentration studies."};
    app.require_subcommand(1);
    Overrides o;

    auto* spectrum = app.add_subcommand("spectrum", "singular values, ESD histogram and MP overlay");
    add_model_options(spectrum, o);
    spectrum->add_option("--bins", o.bins, "histogram bins");

    auto* locallaw = app.add_subcommand("locallaw", "scan |Lambda_n| / Gamma_n over a domain grid");
    add_model_options(locallaw, o);
    add_domain_options(locallaw, o);
    locallaw->add_option("--replications", o.replications, "replications per n");
    locallaw->add_option("--sweep", o.sweep, "list of n values")->delimiter(',');
    locallaw->add_option("--np", o.np, "hold n p fixed across the sweep");
    locallaw->add_option("--c0", o.c0, "constant C0 in Gamma_n");
    locallaw->add_option("--max-entry-stride", o.max_entry_stride,
                         "resolvent max entries every k-th point (0 disables)");
    locallaw->add_option("--candidate-K", o.candidate_K, "extra K values for exceedance rates")
        ->delimiter(',');

    auto* config = app.add_subcommand("config-analyze", "configuration matrix and admissibility");
    add_model_options(config, o);
    config->add_option("--replications", o.replications, "Monte Carlo replications (0 skips)");
    config->add_option("--sweep", o.sweep, "list of n values")->delimiter(',');
    config->add_option("--np", o.np, "hold n p fixed across the sweep");
    config->add_option("--threshold-C", o.threshold_C, "constant in the link threshold");
    config->add_option("--deviant-rule", o.deviant_rule, "sqrt_n_over_p or sqrt_n_times_p");

    auto* conc = app.add_subcommand("concentration", "bilinear-form moment inequality");
    add_model_options(conc, o);
    conc->add_option("--mode", o.mode, "exact, mc or corpus");
    conc->add_option("--matrix", o.matrix, "identity or gaussian");
    conc->add_option("--k", o.k, "matrix dimension");
    conc->add_option("--q", o.q, "even moment order");
    conc->add_option("--samples", o.samples, "Monte Carlo samples");
    conc->add_option("--trials", o.trials, "corpus size");
    conc->add_option("--xi", o.xi, "law of xi");
    conc->add_option("--eta", o.eta, "law of eta");
    conc->add_option("--a2-reading", o.a2_reading, "literal or young");

    auto* audit = app.add_subcommand("audit", "exact diagonal resolvent identities");
    add_model_options(audit, o);
    audit->add_option("--u", o.u, "Re z");
    audit->add_option("--v", o.v, "Im z");
    audit->add_option("--tol", o.tol, "residual tolerance");
    audit->add_flag("--no-columns", o.no_columns, "audit row identities only");

    auto* tn = app.add_subcommand("tn-moments", "moments of T_n on the ladder event");
    add_model_options(tn, o);
    add_domain_options(tn, o);
    tn->add_option("--replications", o.replications, "replications");
    tn->add_option("--u", o.u, "Re z");
    tn->add_option("--v", o.v, "Im z");
    tn->add_option("--q", o.q_values, "even moment orders")->delimiter(',');
    tn->add_option("--gamma", o.gamma, "ladder threshold gamma");
    tn->add_option("--s0", o.s0, "ladder base s0 > 1");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "sparsemp: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        const ExperimentConfig cfg = build_config(o);
        const std::size_t threads = thread_count(o);
        if (spectrum->parsed()) return cmd_spectrum(cfg, threads);
        if (locallaw->parsed()) return cmd_locallaw(cfg, threads);
        if (config->parsed()) return cmd_config_analyze(cfg, threads);
        if (conc->parsed()) return cmd_concentration(cfg, threads);
        if (audit->parsed()) return cmd_audit(cfg, threads);
        if (tn->parsed()) return cmd_tn_moments(cfg, threads);
        std::cerr << app.help();
        return kExitUsage;
    } catch (const ParameterError& e) {
        std::cerr << "sparsemp: parameter error: " << e.what() << '\n';
        return kExitParameters;
    } catch (const IndexError& e) {
        std::cerr << "sparsemp: parameter error: " << e.what() << '\n';
        return kExitParameters;
    } catch (const UnsupportedError& e) {
        std::cerr << "sparsemp: unsupported: " << e.what() << '\n';
        return kExitParameters;
    } catch (const IdentityFailure& e) {
        std::cerr << "sparsemp: invariant violation: " << e.what() << '\n';
        return kExitInvariant;
    } catch (const std::exception& e) {
        std::cerr << "sparsemp: error: " << e.what() << '\n';
        return kExitInvariant;
    }
}

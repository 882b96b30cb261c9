#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sparsemp/errors.hpp"
#include "sparsemp/io.hpp"
#include "sparsemp/model.hpp"
#include "sparsemp/parallel.hpp"

namespace sparsemp {

inline constexpr int kConfigurationSchemaVersion = 1;

/// Thresholded link pattern L_jk = xi_jk 1{|X_jk| >= C (np)^{1/2 - kappa}}.
struct ConfigurationMatrix {
    MaskMatrix links;
    double threshold_C = 1.0;
    double kappa = 0.0;
    double p = 1.0;
    double threshold = 0.0;  // C (np)^{1/2 - kappa}

    std::size_t rows() const { return static_cast<std::size_t>(links.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(links.cols()); }
    std::size_t link_count() const { return links.cast<std::size_t>().sum(); }
};

inline double link_threshold(std::size_t n, double p, double kappa, double threshold_C) {
    return threshold_C * std::pow(static_cast<double>(n) * p, 0.5 - kappa);
}

inline ConfigurationMatrix build_configuration(const SampledMatrix& x, const ModelParams& params,
                                               double threshold_C = 1.0) {
    detail::require(std::isfinite(threshold_C) && threshold_C > 0.0, "threshold_C must be positive");
    detail::require(x.rows() == params.n && x.cols() == params.m,
                    "sample dimensions do not match parameters");
    ConfigurationMatrix c;
    c.threshold_C = threshold_C;
    c.kappa = params.kappa();
    c.p = params.p;
    c.threshold = link_threshold(params.n, params.p, c.kappa, threshold_C);
    c.links = MaskMatrix::Zero(x.raw.rows(), x.raw.cols());
    for (Eigen::Index k = 0; k < x.raw.cols(); ++k)
        for (Eigen::Index j = 0; j < x.raw.rows(); ++j)
            c.links(j, k) = (x.mask(j, k) != 0 && std::abs(x.raw(j, k)) >= c.threshold) ? 1 : 0;
    return c;
}

enum class Verdict { admissible, deviant_inadmissible, connected_inadmissible, both };

inline std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::admissible: return "admissible";
        case Verdict::deviant_inadmissible: return "deviant_inadmissible";
        case Verdict::connected_inadmissible: return "connected_inadmissible";
        case Verdict::both: return "both";
    }
    return {};
}

/// Deviant-count threshold: sqrt(n/p) by default, sqrt(n p) as the alternative reading.
enum class DeviantRule { sqrt_n_over_p, sqrt_n_times_p };

inline double deviant_threshold(std::size_t n, double p, DeviantRule rule) {
    const double nn = static_cast<double>(n);
    return rule == DeviantRule::sqrt_n_over_p ? std::sqrt(nn / p) : std::sqrt(nn * p);
}

/// max(floor(log n), 2).
inline std::size_t component_threshold(std::size_t n) {
    const double l = std::floor(std::log(static_cast<double>(n)));
    return std::max<std::size_t>(2, l > 0.0 ? static_cast<std::size_t>(l) : 0);
}

/// Indices are zero-based: rows 0..n-1, columns n..n+m-1.
struct ConfigurationReport {
    std::vector<std::size_t> deviant;
    std::vector<std::size_t> typical;
    std::vector<std::vector<std::size_t>> components;  // ordered by smallest member
    std::size_t deviant_count = 0;
    std::size_t r_threshold = 2;
    double deviant_threshold = 0.0;
    std::size_t largest_component = 0;
    Verdict verdict = Verdict::admissible;
};

namespace detail {

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n), size_(n, 1) {
        std::iota(parent_.begin(), parent_.end(), std::size_t{0});
    }
    std::size_t find(std::size_t a) {
        while (parent_[a] != a) {
            parent_[a] = parent_[parent_[a]];
            a = parent_[a];
        }
        return a;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (size_[a] < size_[b]) std::swap(a, b);
        parent_[b] = a;
        size_[a] += size_[b];
    }

private:
    std::vector<std::size_t> parent_, size_;
};

}  // namespace detail

inline ConfigurationReport classify(const ConfigurationMatrix& config, std::size_t n,
                                    std::size_t m,
                                    DeviantRule rule = DeviantRule::sqrt_n_over_p) {
    detail::require(config.rows() == n && config.cols() == m,
                    "configuration dimensions do not match (n, m)");
    const std::size_t total = n + m;
    detail::DisjointSets dsu(total);
    std::vector<char> touched(total, 0);
    for (std::size_t k = 0; k < m; ++k)
        for (std::size_t j = 0; j < n; ++j)
            if (config.links(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k))) {
                dsu.unite(j, n + k);
                touched[j] = touched[n + k] = 1;
            }

    ConfigurationReport r;
    for (std::size_t i = 0; i < total; ++i) (touched[i] ? r.deviant : r.typical).push_back(i);
    r.deviant_count = r.deviant.size();

    // Roots are visited in increasing order of their smallest member.
    std::vector<std::size_t> slot(total, total);
    for (std::size_t i = 0; i < total; ++i) {
        const std::size_t root = dsu.find(i);
        if (slot[root] == total) {
            slot[root] = r.components.size();
            r.components.emplace_back();
        }
        r.components[slot[root]].push_back(i);
    }
    for (const auto& c : r.components) r.largest_component = std::max(r.largest_component, c.size());

    r.r_threshold = component_threshold(n);
    r.deviant_threshold = deviant_threshold(n, config.p, rule);
    const bool dev = static_cast<double>(r.deviant_count) >= r.deviant_threshold;
    const bool con = r.largest_component >= r.r_threshold;
    r.verdict = dev && con ? Verdict::both
              : dev        ? Verdict::deviant_inadmissible
              : con        ? Verdict::connected_inadmissible
                           : Verdict::admissible;
    return r;
}

inline nlohmann::json to_json_value(const ConfigurationReport& r) {
    return {{"schema_version", kConfigurationSchemaVersion},
            {"deviant", r.deviant},
            {"typical", r.typical},
            {"components", r.components},
            {"deviant_count", r.deviant_count},
            {"r_threshold", r.r_threshold},
            {"deviant_threshold", r.deviant_threshold},
            {"largest_component", r.largest_component},
            {"verdict", to_string(r.verdict)}};
}

struct InadmissibilityEstimate {
    std::size_t n = 0;
    double p = 1.0;
    std::size_t replications = 0;
    double estimate = 0.0;
    double stderr_ = 0.0;
    std::size_t verdict_counts[4] = {0, 0, 0, 0};  // indexed by Verdict
    double link_rate = 0.0;         // mean of L_jk over entries and replications
    double link_rate_stderr = 0.0;  // across replications
    double link_bound = 0.0;        // mu_{4+delta} / (C^{4+delta} n^2 p)
    double mean_deviant_count = 0.0;
};

/// Markov bound on E L_jk; equals mu_{4+delta}/(n^2 p) at threshold_C = 1.
inline double link_probability_bound(const ModelParams& params, double threshold_C = 1.0) {
    const double n = static_cast<double>(params.n);
    return moment_4_delta(params.dist, params.delta) /
           (std::pow(threshold_C, 4.0 + params.delta) * n * n * params.p);
}

inline InadmissibilityEstimate inadmissibility_probability(
    const ModelParams& params, double threshold_C, std::size_t replications,
    std::size_t threads = 1, DeviantRule rule = DeviantRule::sqrt_n_over_p) {
    params.validate();
    detail::require(replications >= 100, "inadmissibility estimate needs at least 100 replications");
    struct Rep {
        Verdict verdict;
        double link_rate;
        std::size_t deviants;
    };
    std::vector<Rep> reps(replications);
    parallel_for(replications, threads, [&](std::size_t r) {
        const SampledMatrix x = sample_matrix(params, r);
        const ConfigurationMatrix c = build_configuration(x, params, threshold_C);
        const ConfigurationReport cr = classify(c, params.n, params.m, rule);
        reps[r] = {cr.verdict,
                   static_cast<double>(c.link_count()) / static_cast<double>(c.links.size()),
                   cr.deviant_count};
    });

    InadmissibilityEstimate e;
    e.n = params.n;
    e.p = params.p;
    e.replications = replications;
    double lr = 0.0, lr2 = 0.0, dev = 0.0;
    std::size_t bad = 0;
    for (const auto& r : reps) {
        ++e.verdict_counts[static_cast<int>(r.verdict)];
        bad += r.verdict != Verdict::admissible;
        lr += r.link_rate;
        lr2 += r.link_rate * r.link_rate;
        dev += static_cast<double>(r.deviants);
    }
    const double R = static_cast<double>(replications);
    e.estimate = static_cast<double>(bad) / R;
    e.stderr_ = std::sqrt(e.estimate * (1.0 - e.estimate) / R);
    e.link_rate = lr / R;
    e.link_rate_stderr = std::sqrt(std::max(0.0, (lr2 - R * e.link_rate * e.link_rate) / (R - 1.0)) / R);
    e.link_bound = link_probability_bound(params, threshold_C);
    e.mean_deviant_count = dev / R;
    return e;
}

inline nlohmann::json to_json_value(const InadmissibilityEstimate& e) {
    return {{"schema_version", kConfigurationSchemaVersion},
            {"n", e.n},
            {"p", e.p},
            {"replications", e.replications},
            {"estimate", e.estimate},
            {"stderr", e.stderr_},
            {"verdict_counts",
             {{"admissible", e.verdict_counts[0]},
              {"deviant_inadmissible", e.verdict_counts[1]},
              {"connected_inadmissible", e.verdict_counts[2]},
              {"both", e.verdict_counts[3]}}},
            {"link_rate", e.link_rate},
            {"link_rate_stderr", e.link_rate_stderr},
            {"link_bound", e.link_bound},
            {"mean_deviant_count", e.mean_deviant_count}};
}

/// Sweep CSV columns: n, p, estimate, stderr.
inline void write_sweep_csv(std::ostream& os, const std::vector<InadmissibilityEstimate>& rows) {
    io::CsvWriter csv(os);
    csv.row("n", "p", "estimate", "stderr");
    for (const auto& r : rows) csv.row(r.n, r.p, r.estimate, r.stderr_);
}

}  // namespace sparsemp

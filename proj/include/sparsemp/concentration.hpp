#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sparsemp/errors.hpp"
#include "sparsemp/io.hpp"
#include "sparsemp/model.hpp"
#include "sparsemp/parallel.hpp"
#include "sparsemp/rng.hpp"

namespace sparsemp {

inline constexpr int kConcentrationSchemaVersion = 1;

/// Bilinear form xi^T A eta with independent coordinates. A may be rectangular.
struct ConcentrationInput {
    Eigen::MatrixXd a;
    EntryDistribution xi = EntryDistribution::rademacher();
    EntryDistribution eta = EntryDistribution::rademacher();
    int q = 2;

    void validate() const {
        detail::require(q >= 2 && q % 2 == 0, "q must be an even integer >= 2");
        detail::require(a.size() > 0, "matrix A is empty");
        detail::require(a.allFinite(), "matrix A has non-finite entries");
    }
};

/// L_j^2 = sum_i a_ij^2.
inline Eigen::VectorXd column_norms(const Eigen::MatrixXd& a) {
    return a.colwise().norm().transpose();
}

/// ||A|| = (sum_j L_j^2)^{1/2}.
inline double frobenius_norm(const Eigen::MatrixXd& a) { return a.norm(); }

inline constexpr std::size_t kExactMaxDim = 8;

/// E|xi^T A eta|^q by enumerating all sign patterns.
inline double bilinear_moment_exact(const ConcentrationInput& in) {
    in.validate();
    if (!in.xi.finitely_supported() || !in.eta.finitely_supported())
        throw UnsupportedError("exact enumeration needs finitely supported xi and eta");
    const auto k1 = static_cast<std::size_t>(in.a.rows());
    const auto k2 = static_cast<std::size_t>(in.a.cols());
    if (k1 > kExactMaxDim || k2 > kExactMaxDim)
        throw UnsupportedError("exact enumeration supports dimensions up to 8");

    const std::size_t n_eta = std::size_t{1} << k2;
    const std::size_t n_xi = std::size_t{1} << k1;
    std::vector<Eigen::VectorXd> a_eta(n_eta);
    Eigen::VectorXd eta(static_cast<Eigen::Index>(k2));
    for (std::size_t s = 0; s < n_eta; ++s) {
        for (std::size_t j = 0; j < k2; ++j) eta(static_cast<Eigen::Index>(j)) = (s >> j) & 1 ? -1.0 : 1.0;
        a_eta[s] = in.a * eta;
    }
    double total = 0.0;
    for (std::size_t t = 0; t < n_xi; ++t)
        for (std::size_t s = 0; s < n_eta; ++s) {
            double v = 0.0;
            for (std::size_t i = 0; i < k1; ++i)
                v += ((t >> i) & 1 ? -1.0 : 1.0) * a_eta[s](static_cast<Eigen::Index>(i));
            total += std::pow(std::abs(v), in.q);
        }
    return total / static_cast<double>(n_xi * n_eta);
}

struct MomentEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
    std::size_t samples = 0;
};

inline constexpr std::size_t kMcBatch = 4096;

/// Plain Monte Carlo mean of |xi^T A eta|^q. For a sample mean the
/// jackknife standard error reduces to sd / sqrt(N), which is what is used.
inline MomentEstimate bilinear_moment_mc(const ConcentrationInput& in, std::size_t samples,
                                         std::uint64_t seed, std::size_t threads = 1) {
    in.validate();
    detail::require(samples >= 1000, "Monte Carlo needs at least 1000 samples");
    const std::size_t batches = (samples + kMcBatch - 1) / kMcBatch;
    std::vector<double> sum(batches, 0.0), sum2(batches, 0.0);
    parallel_for(batches, threads, [&](std::size_t b) {
        CounterRng rng = CounterRng::stream(seed, b, 2);
        Eigen::VectorXd xi(in.a.rows()), eta(in.a.cols());
        const std::size_t lo = b * kMcBatch, hi = std::min(samples, lo + kMcBatch);
        for (std::size_t s = lo; s < hi; ++s) {
            for (Eigen::Index i = 0; i < xi.size(); ++i) xi(i) = in.xi.sample(rng);
            for (Eigen::Index j = 0; j < eta.size(); ++j) eta(j) = in.eta.sample(rng);
            const double v = std::pow(std::abs(xi.dot(in.a * eta)), in.q);
            sum[b] += v;
            sum2[b] += v * v;
        }
    });
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
        s1 += sum[b];
        s2 += sum2[b];
    }
    const double N = static_cast<double>(samples);
    MomentEstimate e;
    e.samples = samples;
    e.mean = s1 / N;
    const double var = std::max(0.0, (s2 - N * e.mean * e.mean) / (N - 1.0));
    e.stderr_ = std::sqrt(var / N);
    return e;
}

/// Two readings of the middle coefficient. `literal` follows the displayed
/// coefficient; `young` is the form produced by the Young-inequality steps,
/// with sigma^{q(q-6)/(q-4)} and the eta moment.
enum class A2Reading { literal, young };

inline std::string to_string(A2Reading r) { return r == A2Reading::literal ? "literal" : "young"; }

struct MomentBoundRhs {
    int q = 2;
    A2Reading reading = A2Reading::literal;
    double A1 = 0.0, A2 = 0.0, A3 = 0.0;
    double norm_q = 0.0;     // ||A||^q
    double sum_L_q = 0.0;    // sum_j L_j^q
    double sum_abs_q = 0.0;  // sum_ij |a_ij|^q
    bool a2_defined = true;
    std::string note;

    double at(double C) const {
        return std::pow(C, q) * (A1 * norm_q + A2 * sum_L_q + A3 * sum_abs_q);
    }
};

inline MomentBoundRhs moment_bound_rhs(const ConcentrationInput& in, A2Reading reading = A2Reading::literal) {
    in.validate();
    const double q = in.q;
    MomentBoundRhs r;
    r.q = in.q;
    r.reading = reading;
    const double sx = std::sqrt(in.xi.abs_moment(2.0));
    const double se = std::sqrt(in.eta.abs_moment(2.0));
    r.A1 = std::pow(q, 1.5 * q) * (std::pow(sx, 2.0 * q) + std::pow(se, 2.0 * q));
    r.A3 = std::pow(q, 2.0 * q) * in.xi.abs_moment(q) * in.eta.abs_moment(q);
    if (in.q <= 6) {
        r.a2_defined = false;
        r.A2 = 0.0;
        r.note = "A2 term omitted: its exponents (q-6)/(2(q-4)) and 2(q-2)/(q-4) need q >= 8";
    } else {
        const double mexp = 2.0 * (q - 2.0) / (q - 4.0);
        if (reading == A2Reading::literal) {
            const double base = std::pow(sx, 2.0 * q) + std::pow(se, 2.0 * q);
            r.A2 = std::pow(q, 1.5 * q) * std::pow(base, (q - 6.0) / (2.0 * (q - 4.0))) *
                   std::pow(in.xi.abs_moment(q / 2.0), mexp);
            r.note = "A2 literal reading: exponent (q-6)/(2(q-4)) on (sigma_xi^2q + sigma_eta^2q), xi moment";
        } else {
            const double sexp = q * (q - 6.0) / (q - 4.0);
            r.A2 = std::pow(q, 1.5 * q) * (std::pow(sx, sexp) + std::pow(se, sexp)) *
                   std::pow(in.eta.abs_moment(q / 2.0), mexp);
            r.note = "A2 young reading: sigma^{q(q-6)/(q-4)} per variable, eta moment";
        }
    }
    const Eigen::VectorXd L = column_norms(in.a);
    r.norm_q = std::pow(frobenius_norm(in.a), q);
    r.sum_L_q = L.array().pow(q).sum();
    r.sum_abs_q = in.a.array().abs().pow(q).sum();
    return r;
}

/// Smallest C >= 1 with lhs <= rhs.at(C); +inf when the right side vanishes
/// but the left does not.
inline double fitted_constant(double lhs, const MomentBoundRhs& rhs) {
    const double r1 = rhs.at(1.0);
    if (lhs <= r1) return 1.0;
    if (r1 <= 0.0) return std::numeric_limits<double>::infinity();
    double c = std::pow(lhs / r1, 1.0 / rhs.q);
    while (rhs.at(c) < lhs) c = std::nextafter(c, std::numeric_limits<double>::infinity());
    return std::max(1.0, c);
}

struct ConcentrationReport {
    double lhs = 0.0;
    double lhs_stderr = 0.0;
    bool exact = false;
    std::size_t samples = 0;
    MomentBoundRhs rhs;
    double fitted_C = 1.0;
};

inline ConcentrationReport concentration_report(const ConcentrationInput& in, bool exact,
                                                std::size_t samples, std::uint64_t seed,
                                                A2Reading reading = A2Reading::literal,
                                                std::size_t threads = 1) {
    ConcentrationReport rep;
    rep.exact = exact;
    if (exact) {
        rep.lhs = bilinear_moment_exact(in);
    } else {
        const MomentEstimate e = bilinear_moment_mc(in, samples, seed, threads);
        rep.lhs = e.mean;
        rep.lhs_stderr = e.stderr_;
        rep.samples = e.samples;
    }
    rep.rhs = moment_bound_rhs(in, reading);
    rep.fitted_C = fitted_constant(rep.lhs, rep.rhs);
    return rep;
}

inline nlohmann::json to_json_value(const ConcentrationReport& r) {
    return {{"schema_version", kConcentrationSchemaVersion},
            {"q", r.rhs.q},
            {"lhs", r.lhs},
            {"lhs_stderr", r.exact ? nlohmann::json(nullptr) : nlohmann::json(r.lhs_stderr)},
            {"exact", r.exact},
            {"samples", r.samples},
            {"rhs_terms", {{"A1", r.rhs.A1}, {"A2", r.rhs.A2}, {"A3", r.rhs.A3}}},
            {"functionals",
             {{"norm_q", r.rhs.norm_q}, {"sum_L_q", r.rhs.sum_L_q}, {"sum_abs_q", r.rhs.sum_abs_q}}},
            {"rhs_at_1", r.rhs.at(1.0)},
            {"fitted_C", io::number_or_null(r.fitted_C)},
            {"a2_reading", to_string(r.rhs.reading)},
            {"a2_defined", r.rhs.a2_defined},
            {"note", r.rhs.note}};
}

/// Corpus CSV columns: trial, lhs, A1, A2, A3, fitted_C.
inline void write_corpus_csv(std::ostream& os, const std::vector<ConcentrationReport>& rows) {
    io::CsvWriter csv(os);
    csv.row("trial", "lhs", "A1", "A2", "A3", "fitted_C");
    for (std::size_t i = 0; i < rows.size(); ++i)
        csv.row(i, rows[i].lhs, rows[i].rhs.A1, rows[i].rhs.A2, rows[i].rhs.A3, rows[i].fitted_C);
}

/// Random k1 x k2 matrix with standard Gaussian entries, keyed by (seed, trial).
inline Eigen::MatrixXd gaussian_matrix(std::size_t k1, std::size_t k2, std::uint64_t seed,
                                       std::uint64_t trial) {
    CounterRng rng = CounterRng::stream(seed, trial, 3);
    Eigen::MatrixXd a(static_cast<Eigen::Index>(k1), static_cast<Eigen::Index>(k2));
    for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, j) = rng.normal();
    return a;
}

}  // namespace sparsemp

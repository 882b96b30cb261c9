#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sparsemp/errors.hpp"
#include "sparsemp/io.hpp"
#include "sparsemp/model.hpp"
#include "sparsemp/mplaw.hpp"
#include "sparsemp/parallel.hpp"
#include "sparsemp/spectral.hpp"

namespace sparsemp {

inline constexpr int kLocalLawSchemaVersion = 1;

/// Lambda_n(z) = s_n(z) - S_y(z).
inline cplx lambda_n(const SpectrumResult& spec, ComplexPoint z, double y) {
    return stieltjes_esd(spec, z) - stieltjes_mp(z, y);
}

// ---------------------------------------------------------------------------
// Diagonal resolvent identities
// ---------------------------------------------------------------------------

enum class Side { row, column };

/// Sign pattern of the diagonal identity
///   R = c(z) (1 + eps_sign * eps * R + lambda_sign * y Lambda * R),
/// where c = S_y for rows and c = -1/(z + y S_y) for columns, and eps1 is
/// oriented either as (minor trace - full trace) or the reverse.
struct IdentityConvention {
    int eps_sign = +1;
    int lambda_sign = +1;
    bool eps1_minor_minus_full = true;

    friend bool operator==(const IdentityConvention&, const IdentityConvention&) = default;
};

/// The convention under which the identity balances to machine precision.
/// Determined by exhaustive search at n = 2 and pinned by a regression test.
inline constexpr IdentityConvention kResolvedConvention{+1, +1, true};

/// The displayed form: minus on the eps term, eps1 = full trace - minor trace.
inline constexpr IdentityConvention kLiteralConvention{-1, +1, false};

inline std::array<IdentityConvention, 8> all_conventions() {
    std::array<IdentityConvention, 8> out{};
    std::size_t i = 0;
    for (int es : {+1, -1})
        for (int ls : {+1, -1})
            for (bool orient : {true, false}) out[i++] = {es, ls, orient};
    return out;
}

inline nlohmann::json to_json_value(const IdentityConvention& c) {
    return {{"eps_sign", c.eps_sign},
            {"lambda_sign", c.lambda_sign},
            {"eps1_orientation", c.eps1_minor_minus_full ? "minor_minus_full" : "full_minus_minor"}};
}

/// Correction terms for one diagonal entry. eps1 is stored as
/// (1/m)(minor trace - full trace); the other orientation is its negative.
struct CorrectionReport {
    std::size_t index = 0;  // j for rows, l for columns (zero-based)
    Side side = Side::row;
    cplx eps1, eps2, eps3, eps_total;
    cplx diag;  // R_jj or R_{l+n,l+n}
    double identity_residual = 0.0;
    double literal_residual = 0.0;
};

struct IdentityContext {
    ComplexPoint z;
    double y;
    cplx S;
    cplx lambda;
};

inline double convention_residual(const CorrectionReport& r, IdentityConvention c,
                                  const IdentityContext& ctx) {
    const cplx e1 = c.eps1_minor_minus_full ? r.eps1 : -r.eps1;
    const cplx eps = e1 + r.eps2 + r.eps3;
    const cplx prefactor =
        r.side == Side::row ? ctx.S : -1.0 / (ctx.z.z() + ctx.y * ctx.S);
    const cplx pred = prefactor * (1.0 + double(c.eps_sign) * eps * r.diag +
                                   double(c.lambda_sign) * ctx.y * ctx.lambda * r.diag);
    return std::abs(r.diag - pred);
}

namespace detail {

/// (1/(mp)) sum_{a != b} w_a w_b B_ab for a symmetric complex block B.
inline cplx off_diagonal_form(const Eigen::VectorXd& w, const CMatrix& block) {
    const Eigen::VectorXcd wc = w.cast<cplx>();
    cplx total = wc.dot(block * wc);  // dot conjugates its first argument; w is real
    for (Eigen::Index a = 0; a < w.size(); ++a) total -= w(a) * w(a) * block(a, a);
    return total;
}

inline IdentityContext identity_context(const SampledMatrix& x, const SpectrumResult& spec,
                                        ComplexPoint z) {
    const double y = static_cast<double>(x.rows()) / static_cast<double>(x.cols());
    detail::require(y > 0.0 && y <= 1.0, "identity audit requires n <= m");
    const cplx s = detail::mp_root(z.z(), y);
    return {z, y, s, stieltjes_esd(spec, z) - s};
}

inline CorrectionReport correction_terms_with(const SampledMatrix& x, ComplexPoint z,
                                              std::size_t index, Side side,
                                              const ResolventEval& full,
                                              const IdentityContext& ctx) {
    const auto n = static_cast<Eigen::Index>(x.rows());
    const auto m = static_cast<Eigen::Index>(x.cols());
    const double mp = static_cast<double>(m) * x.p;
    const auto idx = static_cast<Eigen::Index>(index);
    CorrectionReport rep;
    rep.index = index;
    rep.side = side;

    if (side == Side::row) {
        if (idx >= n) throw IndexError("row index " + std::to_string(index) + " out of range");
        const ResolventEval minor = resolvent_minor(x.scaled, z, {index}, {});
        const CMatrix block = minor.entries.bottomRightCorner(m, m);
        const cplx tr_full = full.entries.bottomRightCorner(m, m).diagonal().sum();
        rep.eps1 = (block.diagonal().sum() - tr_full) / static_cast<double>(m);
        Eigen::VectorXd w(m);
        cplx e2 = 0.0;
        for (Eigen::Index l = 0; l < m; ++l) {
            const double xi = x.mask(idx, l);
            const double xv = x.raw(idx, l);
            w(l) = xv * xi;
            e2 += (xv * xv * xi - x.p) * block(l, l);
        }
        rep.eps2 = e2 / mp;
        rep.eps3 = off_diagonal_form(w, block) / mp;
        rep.diag = full.entries(idx, idx);
    } else {
        if (idx >= m)
            throw IndexError("column index " + std::to_string(index) + " out of range");
        const ResolventEval minor = resolvent_minor(x.scaled, z, {}, {index});
        const CMatrix block = minor.entries.topLeftCorner(n, n);
        const cplx tr_full = full.entries.topLeftCorner(n, n).diagonal().sum();
        rep.eps1 = (block.diagonal().sum() - tr_full) / static_cast<double>(m);
        Eigen::VectorXd w(n);
        cplx e2 = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            const double xi = x.mask(j, idx);
            const double xv = x.raw(j, idx);
            w(j) = xv * xi;
            e2 += (xv * xv * xi - x.p) * block(j, j);
        }
        rep.eps2 = e2 / mp;
        rep.eps3 = off_diagonal_form(w, block) / mp;
        rep.diag = full.entries(n + idx, n + idx);
    }
    rep.eps_total = rep.eps1 + rep.eps2 + rep.eps3;
    rep.identity_residual = convention_residual(rep, kResolvedConvention, ctx);
    rep.literal_residual = convention_residual(rep, kLiteralConvention, ctx);
    return rep;
}

}  // namespace detail

/// Correction terms eps_{.1}, eps_{.2}, eps_{.3} at J = K = {} from the
/// deleted-index minor, recomputed by a fresh SVD.
inline CorrectionReport correction_terms(const SampledMatrix& x, ComplexPoint z,
                                         std::size_t index, Side side) {
    detail::require_upper(z);
    const SpectrumResult spec = singular_values(x);
    const ResolventEval full = resolvent(spec, z);
    return detail::correction_terms_with(x, z, index, side, full,
                                         detail::identity_context(x, spec, z));
}

struct AuditReport {
    ComplexPoint z;
    double y = 0.0;
    cplx s_n, S, lambda;
    std::vector<CorrectionReport> rows;
    std::vector<CorrectionReport> columns;
    cplx T_n;            // (1/n) sum eps_j R_jj, eps1 as minor - full
    cplx T_n_closed;     // -1 - (z - (1-y)/z + y s_n) s_n
    double sc_residual_plus = 0.0;   // |s_n - S (1 + T_n + y Lambda s_n)|
    double sc_residual_minus = 0.0;  // |s_n - S (1 + T_n - y Lambda s_n)|
    double max_residual = 0.0;       // over rows and columns, resolved convention
    double max_literal_residual = 0.0;
    IdentityConvention convention = kResolvedConvention;
};

/// T_n expressed through s_n alone; follows from summing the exact identity.
inline cplx tn_closed_form(const SpectrumResult& spec, ComplexPoint z, double y) {
    const cplx w = z.z();
    const cplx s = stieltjes_esd(spec, z);
    return -1.0 - (w - (1.0 - y) / w + y * s) * s;
}

/// Evaluates every diagonal identity of R (rows, and columns when requested)
/// and the summed self-consistent equation. Throws IdentityFailure when the
/// resolved convention misses `tol` anywhere.
inline AuditReport self_consistency_audit(const SampledMatrix& x, ComplexPoint z,
                                          bool include_columns = true, double tol = 1e-8,
                                          std::size_t threads = 1) {
    detail::require_upper(z);
    detail::require(x.rows() >= 1 && x.rows() <= 200,
                    "self-consistency audit supports 1 <= n <= 200");
    const SpectrumResult spec = singular_values(x);
    const ResolventEval full = resolvent(spec, z);
    const IdentityContext ctx = detail::identity_context(x, spec, z);

    AuditReport out;
    out.z = z;
    out.y = ctx.y;
    out.S = ctx.S;
    out.s_n = stieltjes_esd(spec, z);
    out.lambda = ctx.lambda;
    out.rows.resize(x.rows());
    parallel_for(x.rows(), threads, [&](std::size_t j) {
        out.rows[j] = detail::correction_terms_with(x, z, j, Side::row, full, ctx);
    });
    if (include_columns) {
        out.columns.resize(x.cols());
        parallel_for(x.cols(), threads, [&](std::size_t l) {
            out.columns[l] = detail::correction_terms_with(x, z, l, Side::column, full, ctx);
        });
    }
    cplx tn = 0.0;
    for (const auto& r : out.rows) {
        tn += r.eps_total * r.diag;
        out.max_residual = std::max(out.max_residual, r.identity_residual);
        out.max_literal_residual = std::max(out.max_literal_residual, r.literal_residual);
    }
    for (const auto& r : out.columns) {
        out.max_residual = std::max(out.max_residual, r.identity_residual);
        out.max_literal_residual = std::max(out.max_literal_residual, r.literal_residual);
    }
    out.T_n = tn / static_cast<double>(x.rows());
    out.T_n_closed = tn_closed_form(spec, z, ctx.y);
    const double yy = ctx.y;
    out.sc_residual_plus = std::abs(out.s_n - out.S * (1.0 + out.T_n + yy * out.lambda * out.s_n));
    out.sc_residual_minus =
        std::abs(out.s_n - out.S * (1.0 + out.T_n - yy * out.lambda * out.s_n));
    if (!(out.max_residual < tol))
        throw IdentityFailure("diagonal resolvent identity residual " +
                                  io::fmt(out.max_residual) + " exceeds tolerance " + io::fmt(tol),
                              out.max_residual);
    return out;
}

/// Conventions whose worst residual over all rows and columns is below tol.
inline std::vector<IdentityConvention> passing_conventions(const SampledMatrix& x,
                                                           ComplexPoint z, double tol) {
    const SpectrumResult spec = singular_values(x);
    const ResolventEval full = resolvent(spec, z);
    const IdentityContext ctx = detail::identity_context(x, spec, z);
    std::vector<CorrectionReport> reps;
    for (std::size_t j = 0; j < x.rows(); ++j)
        reps.push_back(detail::correction_terms_with(x, z, j, Side::row, full, ctx));
    for (std::size_t l = 0; l < x.cols(); ++l)
        reps.push_back(detail::correction_terms_with(x, z, l, Side::column, full, ctx));
    std::vector<IdentityConvention> out;
    for (const auto& c : all_conventions()) {
        double worst = 0.0;
        for (const auto& r : reps) worst = std::max(worst, convention_residual(r, c, ctx));
        if (worst < tol) out.push_back(c);
    }
    return out;
}

inline nlohmann::json to_json_value(const CorrectionReport& r) {
    return {{"index", r.index},
            {"side", r.side == Side::row ? "row" : "column"},
            {"eps1", io::complex_json(r.eps1)},
            {"eps2", io::complex_json(r.eps2)},
            {"eps3", io::complex_json(r.eps3)},
            {"eps_total", io::complex_json(r.eps_total)},
            {"diag", io::complex_json(r.diag)},
            {"identity_residual", r.identity_residual},
            {"literal_residual", r.literal_residual}};
}

inline nlohmann::json to_json_value(const AuditReport& a) {
    nlohmann::json rows = nlohmann::json::array(), cols = nlohmann::json::array();
    for (const auto& r : a.rows) rows.push_back(to_json_value(r));
    for (const auto& r : a.columns) cols.push_back(to_json_value(r));
    return {{"schema_version", kLocalLawSchemaVersion},
            {"z", {{"u", a.z.u}, {"v", a.z.v}}},
            {"y", a.y},
            {"s_n", io::complex_json(a.s_n)},
            {"S", io::complex_json(a.S)},
            {"lambda", io::complex_json(a.lambda)},
            {"T_n", io::complex_json(a.T_n)},
            {"T_n_closed_form", io::complex_json(a.T_n_closed)},
            {"self_consistent_residual_plus", a.sc_residual_plus},
            {"self_consistent_residual_minus", a.sc_residual_minus},
            {"max_residual", a.max_residual},
            {"max_literal_residual", a.max_literal_residual},
            {"convention", to_json_value(a.convention)},
            {"rows", rows},
            {"columns", cols}};
}

// ---------------------------------------------------------------------------
// Multiscale ladder
// ---------------------------------------------------------------------------

struct MultiscaleLadder {
    double s0 = 2.0;
    double V = 1.0;
    double v = 1.0;
    double gamma = 0.5;
    std::size_t k_v = 0;
    std::vector<double> levels;        // v, s0 v, ..., s0^{k_v} v
    std::vector<double> sup_lambda;    // sup over the u-grid at each level
    std::vector<bool> gamma_flags;     // sup_lambda <= gamma
    bool q_event = true;               // conjunction of all flags
};

/// k_v = min{l >= 0 : s0^l v >= V}.
inline std::size_t ladder_depth(double v, double V, double s0) {
    detail::require(s0 > 1.0, "ladder base s0 must exceed 1");
    detail::require(v > 0.0, "ladder start v must be positive");
    std::size_t k = 0;
    for (double level = v; level < V; level *= s0) ++k;
    return k;
}

inline MultiscaleLadder multiscale_ladder(const SpectrumResult& spec, const DomainSpec& domain,
                                          double v, double gamma, double s0, double y) {
    detail::require(gamma >= 0.0, "gamma must be nonnegative");
    MultiscaleLadder out;
    out.s0 = s0;
    out.V = domain.V;
    out.v = v;
    out.gamma = gamma;
    out.k_v = ladder_depth(v, domain.V, s0);
    double level = v;
    for (std::size_t l = 0; l <= out.k_v; ++l, level *= s0) {
        double sup = 0.0;
        for (double u : domain.u_values(y, level))
            sup = std::max(sup, std::abs(lambda_n(spec, {u, level}, y)));
        out.levels.push_back(level);
        out.sup_lambda.push_back(sup);
        out.gamma_flags.push_back(sup <= gamma);
        out.q_event = out.q_event && (sup <= gamma);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Local law scan
// ---------------------------------------------------------------------------

struct ScanOptions {
    std::size_t threads = 1;
    /// Resolvent max entries on every stride-th grid point; 0 disables them.
    std::size_t max_entry_stride = 10;
    std::vector<double> candidate_K;
};

struct PointStats {
    double lambda_abs_max = 0.0;
    double lambda_abs_mean = 0.0;
    double gamma = 0.0;
    double ratio_max = 0.0;
    double max_entry = std::numeric_limits<double>::quiet_NaN();  // max over replications
};

struct ReplicationStats {
    double sup_lambda = 0.0;
    double sup_ratio = 0.0;
    double max_entry = std::numeric_limits<double>::quiet_NaN();
    double trace_residual = std::numeric_limits<double>::quiet_NaN();
};

struct LocalLawReport {
    ModelParams params;
    DomainSpec domain;
    double C0 = 1.0;
    std::size_t replications = 0;
    std::size_t max_entry_stride = 0;
    std::vector<ComplexPoint> grid;
    std::vector<PointStats> per_point;
    std::vector<ReplicationStats> per_replication;

    double sup_ratio = 0.0;
    double fitted_K = 0.0;
    std::vector<std::pair<double, double>> exceedance;  // (K, fraction of replications with sup ratio > K)
    double median_sup_lambda = 0.0;
    double max_entry_max = std::numeric_limits<double>::quiet_NaN();
    double trace_residual_max = std::numeric_limits<double>::quiet_NaN();
    std::size_t nonfinite_count = 0;
};

inline double median(std::vector<double> xs) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(xs.begin(), xs.end());
    const std::size_t h = xs.size() / 2;
    return xs.size() % 2 ? xs[h] : 0.5 * (xs[h - 1] + xs[h]);
}

inline double exceedance_rate(const LocalLawReport& r, double K) {
    std::size_t hits = 0;
    for (const auto& rep : r.per_replication) hits += rep.sup_ratio > K;
    return static_cast<double>(hits) / static_cast<double>(r.per_replication.size());
}

/// Samples `replications` independent matrices and evaluates |Lambda_n| and
/// Gamma_n over the domain grid. Per-replication results land in fixed slots
/// and are reduced in index order, so the report is independent of threads.
inline LocalLawReport locallaw_scan(const ModelParams& params, const DomainSpec& domain,
                                    std::size_t replications, double c0,
                                    const ScanOptions& opts = {}) {
    params.require_subcritical();
    detail::require(replications >= 1, "replications must be at least 1");
    detail::require(c0 > 0.0, "C0 must be positive");
    const double y = params.y();
    LocalLawReport rep;
    rep.params = params;
    rep.domain = domain;
    rep.C0 = c0;
    rep.replications = replications;
    rep.max_entry_stride = opts.max_entry_stride;
    rep.grid = domain_grid(domain, y);
    detail::require(!rep.grid.empty(), "domain grid is empty");

    const std::size_t np = rep.grid.size();
    std::vector<cplx> mp_values(np);
    std::vector<double> gammas(np);
    for (std::size_t i = 0; i < np; ++i) {
        mp_values[i] = stieltjes_mp(rep.grid[i], y);
        gammas[i] = gamma_n(params.n, params.p, rep.grid[i].v, c0);
    }

    struct RepData {
        std::vector<double> lambda_abs;
        std::vector<double> max_entry;
        ReplicationStats stats;
        std::size_t nonfinite = 0;
    };
    std::vector<RepData> data(replications);
    const bool want_max = opts.max_entry_stride > 0;

    parallel_for(replications, opts.threads, [&](std::size_t r) {
        const SampledMatrix x = sample_matrix(params, r);
        std::optional<GramSystem> gram;
        if (want_max) gram.emplace(gram_system(x));
        const SpectrumResult spec = want_max ? gram->spectrum : singular_values_only(x);
        RepData& d = data[r];
        d.lambda_abs.resize(np);
        d.max_entry.assign(np, std::numeric_limits<double>::quiet_NaN());
        double trace_res = want_max ? 0.0 : std::numeric_limits<double>::quiet_NaN();
        double mx = want_max ? 0.0 : std::numeric_limits<double>::quiet_NaN();
        for (std::size_t i = 0; i < np; ++i) {
            const cplx sn = stieltjes_esd(spec, rep.grid[i]);
            const double la = std::abs(sn - mp_values[i]);
            if (!std::isfinite(la)) ++d.nonfinite;
            d.lambda_abs[i] = la;
            d.stats.sup_lambda = std::max(d.stats.sup_lambda, la);
            d.stats.sup_ratio = std::max(d.stats.sup_ratio, la / gammas[i]);
            if (want_max && i % opts.max_entry_stride == 0) {
                const auto summary = summarize_resolvent(*gram, rep.grid[i]);
                d.max_entry[i] = summary.max_abs;
                mx = std::max(mx, summary.max_abs);
                trace_res = std::max(trace_res, std::abs(summary.top_diag_mean - sn));
            }
        }
        d.stats.max_entry = mx;
        d.stats.trace_residual = trace_res;
    });

    rep.per_point.resize(np);
    for (std::size_t i = 0; i < np; ++i) {
        PointStats& ps = rep.per_point[i];
        ps.gamma = gammas[i];
        double sum = 0.0;
        for (const auto& d : data) {
            ps.lambda_abs_max = std::max(ps.lambda_abs_max, d.lambda_abs[i]);
            sum += d.lambda_abs[i];
            if (!std::isnan(d.max_entry[i]))
                ps.max_entry = std::isnan(ps.max_entry) ? d.max_entry[i]
                                                        : std::max(ps.max_entry, d.max_entry[i]);
        }
        ps.lambda_abs_mean = sum / static_cast<double>(replications);
        ps.ratio_max = ps.lambda_abs_max / ps.gamma;
    }
    std::vector<double> sups;
    for (const auto& d : data) {
        rep.per_replication.push_back(d.stats);
        rep.sup_ratio = std::max(rep.sup_ratio, d.stats.sup_ratio);
        rep.nonfinite_count += d.nonfinite;
        sups.push_back(d.stats.sup_lambda);
        if (want_max) {
            rep.max_entry_max = std::isnan(rep.max_entry_max)
                                    ? d.stats.max_entry
                                    : std::max(rep.max_entry_max, d.stats.max_entry);
            rep.trace_residual_max = std::isnan(rep.trace_residual_max)
                                         ? d.stats.trace_residual
                                         : std::max(rep.trace_residual_max, d.stats.trace_residual);
        }
    }
    rep.fitted_K = rep.sup_ratio;
    rep.median_sup_lambda = median(sups);
    std::vector<double> ks = opts.candidate_K;
    ks.push_back(rep.fitted_K);
    for (double K : ks) rep.exceedance.emplace_back(K, exceedance_rate(rep, K));
    return rep;
}

inline nlohmann::json to_json_value(const DomainSpec& d) {
    return {{"kind", d.kind == DomainSpec::Kind::d_mu ? "D_mu" : "D_a0"},
            {"mu", d.mu},
            {"a0", d.a0},
            {"V", d.V},
            {"n", d.n},
            {"grid_u", d.grid_u},
            {"grid_v", d.grid_v},
            {"v0", d.v0()}};
}

inline nlohmann::json to_json_value(const LocalLawReport& r) {
    nlohmann::json pts = nlohmann::json::array();
    for (std::size_t i = 0; i < r.grid.size(); ++i) {
        const auto& p = r.per_point[i];
        pts.push_back({{"u", r.grid[i].u},
                       {"v", r.grid[i].v},
                       {"lambda_abs", p.lambda_abs_max},
                       {"lambda_abs_mean", p.lambda_abs_mean},
                       {"gamma", p.gamma},
                       {"ratio", p.ratio_max},
                       {"max_entry", io::number_or_null(p.max_entry)}});
    }
    nlohmann::json reps = nlohmann::json::array();
    for (const auto& s : r.per_replication)
        reps.push_back({{"sup_lambda", s.sup_lambda},
                        {"sup_ratio", s.sup_ratio},
                        {"max_entry", io::number_or_null(s.max_entry)},
                        {"trace_residual", io::number_or_null(s.trace_residual)}});
    nlohmann::json exc = nlohmann::json::array();
    for (const auto& [K, rate] : r.exceedance) exc.push_back({{"K", K}, {"rate", rate}});
    nlohmann::json params = r.params;
    return {{"schema_version", kLocalLawSchemaVersion},
            {"params", params},
            {"domain", to_json_value(r.domain)},
            {"C0", r.C0},
            {"replications", r.replications},
            {"max_entry_stride", r.max_entry_stride},
            {"per_point", pts},
            {"per_replication", reps},
            {"aggregates",
             {{"sup_ratio", r.sup_ratio},
              {"fitted_K", r.fitted_K},
              {"exceedance", exc},
              {"median_sup_lambda", r.median_sup_lambda},
              {"max_entry_max", io::number_or_null(r.max_entry_max)},
              {"trace_residual_max", io::number_or_null(r.trace_residual_max)},
              {"nonfinite_count", r.nonfinite_count}}}};
}

/// CSV columns: u, v, lambda_abs, gamma, ratio, max_entry (max over replications).
inline void write_locallaw_csv(std::ostream& os, const LocalLawReport& r) {
    io::CsvWriter csv(os);
    csv.row("u", "v", "lambda_abs", "gamma", "ratio", "max_entry");
    for (std::size_t i = 0; i < r.grid.size(); ++i) {
        const auto& p = r.per_point[i];
        csv.field(r.grid[i].u).field(r.grid[i].v).field(p.lambda_abs_max).field(p.gamma)
            .field(p.ratio_max);
        if (std::isnan(p.max_entry)) csv.field(std::string_view{});
        else csv.field(p.max_entry);
        csv.end_row();
    }
}

// ---------------------------------------------------------------------------
// Moments of T_n
// ---------------------------------------------------------------------------

inline constexpr std::size_t kTnMinReplications = 1000;

struct TnOptions {
    double gamma = 0.5;
    double s0 = 2.0;
    std::size_t threads = 1;
};

struct TnMomentResult {
    ComplexPoint z;
    int q = 2;
    std::size_t replications = 0;
    std::size_t survivors = 0;
    double estimate = 0.0;   // E |T_n|^q 1{Q}
    double stderr_ = 0.0;
    double envelope = 0.0;   // ((1/(nv) + 1/(np)) log n)^q at C = 1
    double fitted_C = 0.0;   // (estimate / envelope)^{1/q}
    double mean_abs_tn = 0.0;
};

/// Monte Carlo estimate of E|T_n|^q 1{Q}, with Q the conjunction of the
/// ladder flags above z.v. T_n is evaluated in closed form from s_n.
inline TnMomentResult tn_moment_study(const ModelParams& params, const DomainSpec& domain,
                                      ComplexPoint z, int q, std::size_t replications,
                                      const TnOptions& opts = {}) {
    params.require_subcritical();
    detail::require_upper(z);
    detail::require(q >= 0 && q % 2 == 0, "q must be a nonnegative even integer");
    detail::require(replications >= kTnMinReplications,
                    "T_n moment study needs at least 1000 replications");
    detail::require(params.n <= 200, "T_n moment study supports n <= 200");
    const double y = params.y();
    TnMomentResult out;
    out.z = z;
    out.q = q;
    out.replications = replications;
    const double nn = static_cast<double>(params.n);
    out.envelope = std::pow((1.0 / (nn * z.v) + 1.0 / (nn * params.p)) * std::log(nn), q);
    if (q == 0) {
        out.estimate = 1.0;
        out.survivors = replications;
        out.fitted_C = 1.0;
        return out;
    }

    std::vector<double> contrib(replications, 0.0), abs_t(replications, 0.0);
    std::vector<char> survived(replications, 0);
    parallel_for(replications, opts.threads, [&](std::size_t r) {
        const SampledMatrix x = sample_matrix(params, r);
        const SpectrumResult spec = singular_values_only(x);
        const auto ladder = multiscale_ladder(spec, domain, z.v, opts.gamma, opts.s0, y);
        const double t = std::abs(tn_closed_form(spec, z, y));
        abs_t[r] = t;
        if (ladder.q_event) {
            survived[r] = 1;
            contrib[r] = std::pow(t, q);
        }
    });
    double sum = 0.0, sum2 = 0.0, tsum = 0.0;
    for (std::size_t r = 0; r < replications; ++r) {
        sum += contrib[r];
        sum2 += contrib[r] * contrib[r];
        tsum += abs_t[r];
        out.survivors += survived[r];
    }
    if (out.survivors == 0)
        throw DegenerateConditioningError("no replication satisfied the ladder event Q");
    const double R = static_cast<double>(replications);
    out.estimate = sum / R;
    out.mean_abs_tn = tsum / R;
    const double var = replications > 1 ? (sum2 - R * out.estimate * out.estimate) / (R - 1.0) : 0.0;
    out.stderr_ = std::sqrt(std::max(var, 0.0) / R);
    out.fitted_C = std::pow(out.estimate / out.envelope, 1.0 / q);
    return out;
}

inline nlohmann::json to_json_value(const TnMomentResult& t) {
    return {{"schema_version", kLocalLawSchemaVersion},
            {"z", {{"u", t.z.u}, {"v", t.z.v}}},
            {"q", t.q},
            {"replications", t.replications},
            {"survivors", t.survivors},
            {"estimate", t.estimate},
            {"stderr", t.stderr_},
            {"envelope_C1", t.envelope},
            {"fitted_C", t.fitted_C},
            {"mean_abs_tn", t.mean_abs_tn}};
}

}  // namespace sparsemp

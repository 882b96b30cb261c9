#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "sparsemp/errors.hpp"
#include "sparsemp/io.hpp"

namespace sparsemp {

using cplx = std::complex<double>;

/// z = u + i v in the upper half-plane.
struct ComplexPoint {
    double u = 0.0;
    double v = 1.0;

    cplx z() const { return {u, v}; }
    friend bool operator==(const ComplexPoint&, const ComplexPoint&) = default;
};

namespace detail {

inline void require_upper(ComplexPoint z) {
    require(std::isfinite(z.u) && std::isfinite(z.v) && z.v > 0.0,
            "spectral parameter must have positive imaginary part");
}

/// Root of y S^2 + (z - (1-y)/z) S + 1 = 0 with Im S > 0, for y in (0, 1].
///
/// The larger-magnitude root is formed without cancellation and the other
/// from the product of the roots (1/y); the one in the upper half-plane wins.
inline cplx mp_root(cplx z, double y) {
    const cplx lin = z - (1.0 - y) / z;
    const cplx disc = std::sqrt(lin * lin - 4.0 * y);
    const cplx big = (std::real(std::conj(lin) * disc) >= 0.0) ? (-lin - disc) / (2.0 * y)
                                                              : (-lin + disc) / (2.0 * y);
    const cplx small = 1.0 / (y * big);
    return (big.imag() >= small.imag()) ? big : small;
}

}  // namespace detail

struct SupportEdges {
    double lower;  // 1 - sqrt(y)
    double upper;  // 1 + sqrt(y)
};

inline SupportEdges mp_edges(double y) {
    const double r = std::sqrt(y);
    return {1.0 - r, 1.0 + r};
}

/// Stieltjes transform S_y(z) of the symmetrized Marchenko-Pastur law.
inline cplx stieltjes_mp(ComplexPoint z, double y) {
    detail::require(y > 0.0 && y < 1.0, "y must lie in (0, 1), got " + std::to_string(y));
    detail::require_upper(z);
    return detail::mp_root(z.z(), y);
}

/// b(z) = z - (1-y)/z + 2 y S_y(z).
inline cplx b_of_z(ComplexPoint z, double y) {
    const cplx s = stieltjes_mp(z, y);
    const cplx w = z.z();
    return w - (1.0 - y) / w + 2.0 * y * s;
}

/// The second displayed form, -1/S + y S; agrees with b_of_z.
inline cplx b_of_z_alt(ComplexPoint z, double y) {
    const cplx s = stieltjes_mp(z, y);
    return -1.0 / s + y * s;
}

/// |y S^2 + (z - (1-y)/z) S + 1| at the computed root.
inline double quadratic_residual(ComplexPoint z, double y, cplx s) {
    const cplx w = z.z();
    return std::abs(y * s * s + (w - (1.0 - y) / w) * s + 1.0);
}

struct MPLawEval {
    ComplexPoint z;
    double y;
    cplx S;
    cplx b;
    double a_edge;
    double b_edge;
};

inline MPLawEval evaluate_mp(ComplexPoint z, double y) {
    const cplx s = stieltjes_mp(z, y);
    const cplx w = z.z();
    const auto e = mp_edges(y);
    return {z, y, s, w - (1.0 - y) / w + 2.0 * y * s, e.lower, e.upper};
}

/// Density g_y of the symmetrized Marchenko-Pastur law.
inline double mp_density(double x, double y) {
    detail::require(y > 0.0 && y < 1.0, "y must lie in (0, 1)");
    const auto [a, b] = mp_edges(y);
    const double x2 = x * x;
    if (x2 < a * a || x2 > b * b) return 0.0;
    const double prod = (x2 - a * a) * (b * b - x2);
    if (prod <= 0.0) return 0.0;
    return std::sqrt(prod) / (2.0 * std::numbers::pi * y * std::abs(x));
}

namespace detail {

/// Mass of g_y on [lo, hi] inside the positive band [a, b]. The substitution
/// x = c + h cos(theta) removes the square-root behaviour at both edges.
inline double band_mass(double lo, double hi, double y, double tol, double& err) {
    const auto [a, b] = mp_edges(y);
    lo = std::clamp(lo, a, b);
    hi = std::clamp(hi, a, b);
    if (hi <= lo) return 0.0;
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const double th_lo = std::acos(std::clamp((hi - c) / h, -1.0, 1.0));
    const double th_hi = std::acos(std::clamp((lo - c) / h, -1.0, 1.0));
    auto integrand = [&](double th) {
        const double s = std::sin(th);
        const double x = c + h * std::cos(th);
        return std::sqrt((x + a) * (x + b)) * h * h * s * s /
               (2.0 * std::numbers::pi * y * x);
    };
    double e = 0.0;
    const double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        integrand, th_lo, th_hi, 20, tol, &e);
    err += e;
    return v;
}

}  // namespace detail

/// G_y(x) = integral of g_y over (-inf, x], by adaptive Gauss-Kronrod.
inline double mp_cdf(double x, double y, double tol = 1e-10) {
    detail::require(y > 0.0 && y < 1.0, "y must lie in (0, 1)");
    detail::require(tol > 0.0, "quadrature tolerance must be positive");
    const auto [a, b] = mp_edges(y);
    if (x <= -b) return 0.0;
    double err = 0.0;
    // Mass of [-b, min(x, -a)] equals the mass of its mirror image in [a, b].
    const double negative = detail::band_mass(x < 0.0 ? std::max(-x, a) : a, b, y, tol, err);
    const double positive = x > 0.0 ? detail::band_mass(a, x, y, tol, err) : 0.0;
    const double total = negative + positive;
    if (!(err <= tol))
        throw QuadratureError("mp_cdf: requested tolerance " + io::fmt(tol) +
                                  " not reached, achieved " + io::fmt(err),
                              err);
    return total;
}

/// Gamma_n = C0 log n (1/(nv) + 1/(np)), the form used on D_mu.
inline double gamma_n(std::size_t n, double p, double v, double c0) {
    const double nn = static_cast<double>(n);
    return c0 * std::log(nn) * (1.0 / (nn * v) + 1.0 / (nn * p));
}

/// Gamma_n = 2 C0 log n (1/(nv) + min{1/(np|b|), 1/sqrt(np)}), the form in
/// the bound T_n.
inline double gamma_n_full(std::size_t n, double p, ComplexPoint z, double c0, double y) {
    const double nn = static_cast<double>(n);
    const double bz = std::abs(b_of_z(z, y));
    return 2.0 * c0 * std::log(nn) *
           (1.0 / (nn * z.v) + std::min(1.0 / (nn * p * bz), 1.0 / std::sqrt(nn * p)));
}

/// d(z) = Im b(z) / |b(z)|.
inline double d_of_z(ComplexPoint z, double y) {
    const cplx b = b_of_z(z, y);
    return b.imag() / std::abs(b);
}

/// d_n(z) = (d(z) + log n / (nv|b|)) / (nv) + 1 / (np|b|).
inline double d_n_of_z(ComplexPoint z, std::size_t n, double p, double y) {
    const double nn = static_cast<double>(n);
    const double nv = nn * z.v;
    const double bz = std::abs(b_of_z(z, y));
    return (d_of_z(z, y) + std::log(nn) / (nv * bz)) / nv + 1.0 / (nn * p * bz);
}

struct BoundSpec {
    double C0;
    double gamma_n;       // D_mu form
    double gamma_n_full;  // form entering T_script
    double d;
    double d_n;
    double T_script;
};

/// The two indicator branches of T_n from |b|, Gamma_n (full form), d_n, nv and np.
inline double t_script(double b_abs, double g_full, double dn, double nv, double np) {
    double t = 0.0;
    if (b_abs >= g_full)
        t += dn + std::pow(dn, 0.75) / std::pow(nv, 0.25) + std::sqrt(dn) / std::sqrt(nv);
    if (b_abs <= g_full)
        t += std::sqrt(g_full / nv) +
             std::sqrt(g_full) * (std::sqrt(g_full) / std::sqrt(nv) + 1.0 / std::sqrt(np));
    return t;
}

/// Evaluates the two-branch bound T_n. When |b| equals Gamma_n exactly both
/// indicator branches contribute.
inline BoundSpec bound_spec(ComplexPoint z, std::size_t n, double p, double c0, double y) {
    detail::require(n >= 2, "bounds need n >= 2");
    detail::require(p > 0.0 && c0 >= 0.0, "p must be positive and C0 nonnegative");
    detail::require_upper(z);
    const double nn = static_cast<double>(n);
    const double nv = nn * z.v;
    const double np = nn * p;
    const double bz = std::abs(b_of_z(z, y));
    const double g_full = gamma_n_full(n, p, z, c0, y);
    const double dn = d_n_of_z(z, n, p, y);

    return {c0, gamma_n(n, p, z.v, c0), g_full, d_of_z(z, y), dn, t_script(bz, g_full, dn, nv, np)};
}

inline double prior_bound_tn(ComplexPoint z, std::size_t n, double p, double c0, double y) {
    return bound_spec(z, n, p, c0, y).T_script;
}

struct DomainSpec {
    enum class Kind { d_mu, d_a0 };
    Kind kind = Kind::d_mu;
    double mu = 0.2;
    double a0 = 1.0;
    double V = 1.0;
    std::size_t n = 2;
    std::size_t grid_u = 10;
    std::size_t grid_v = 10;

    /// v0 = a0 (log n)^4 / n.
    double v0() const {
        const double nn = static_cast<double>(n);
        return a0 * std::pow(std::log(nn), 4.0) / nn;
    }

    void validate(double y) const {
        using detail::require;
        require(y > 0.0 && y < 1.0, "domain requires y in (0, 1)");
        require(n >= 2, "domain requires n >= 2");
        require(grid_u >= 1 && grid_v >= 1, "domain grid is empty");
        require(a0 > 0.0, "a0 must be positive");
        require(v0() <= V, "v0 = " + io::fmt(v0()) + " exceeds V = " + io::fmt(V) +
                               "; reduce a0 or raise V");
        if (kind == Kind::d_mu) {
            require(mu > 0.0, "mu must be positive");
            require(mu < std::sqrt(y), "empty D_mu band: mu must be below sqrt(y)");
        }
    }

    /// Imaginary parts: log-spaced on [v0, V]; a single level sits at v0.
    std::vector<double> v_levels() const {
        std::vector<double> vs(grid_v);
        const double lo = std::log(v0()), hi = std::log(V);
        for (std::size_t i = 0; i < grid_v; ++i)
            vs[i] = grid_v == 1 ? v0()
                                : std::exp(lo + (hi - lo) * static_cast<double>(i) /
                                                    static_cast<double>(grid_v - 1));
        if (grid_v > 1) vs.back() = V;
        return vs;
    }

    /// Real parts at level v: both sign bands, negative first, ascending.
    std::vector<double> u_values(double y, double v) const {
        const double r = std::sqrt(y);
        double lo = 0.0, hi = 0.0;
        if (kind == Kind::d_mu) {
            lo = 1.0 - r + mu;
            hi = 1.0 + r - mu;
        } else {
            lo = std::max(1.0 - r - v, 0.0);
            hi = 1.0 + r + v;
        }
        std::vector<double> band(grid_u);
        for (std::size_t i = 0; i < grid_u; ++i)
            band[i] = grid_u == 1 ? 0.5 * (lo + hi)
                                  : lo + (hi - lo) * static_cast<double>(i) /
                                             static_cast<double>(grid_u - 1);
        std::vector<double> us;
        us.reserve(2 * grid_u);
        for (auto it = band.rbegin(); it != band.rend(); ++it)
            if (*it != 0.0) us.push_back(-*it);
        us.insert(us.end(), band.begin(), band.end());
        return us;
    }
};

/// All grid points of the domain, v-major.
inline std::vector<ComplexPoint> domain_grid(const DomainSpec& spec, double y) {
    spec.validate(y);
    std::vector<ComplexPoint> pts;
    for (double v : spec.v_levels())
        for (double u : spec.u_values(y, v)) pts.push_back({u, v});
    return pts;
}

/// CSV columns: u, v, ReS, ImS, Reb, Imb, gamma_n, t_script.
inline void write_evaluation_csv(std::ostream& os, const std::vector<ComplexPoint>& pts,
                                 double y, std::size_t n, double p, double c0) {
    io::CsvWriter csv(os);
    csv.row("u", "v", "ReS", "ImS", "Reb", "Imb", "gamma_n", "t_script");
    for (const auto& z : pts) {
        const auto e = evaluate_mp(z, y);
        const auto bs = bound_spec(z, n, p, c0, y);
        csv.row(z.u, z.v, e.S.real(), e.S.imag(), e.b.real(), e.b.imag(), bs.gamma_n,
                bs.T_script);
    }
}

}  // namespace sparsemp

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "sparsemp/errors.hpp"
#include "sparsemp/io.hpp"
#include "sparsemp/model.hpp"
#include "sparsemp/mplaw.hpp"

namespace sparsemp {

using CMatrix = Eigen::MatrixXcd;

/// Singular values of an n x m matrix, descending, padded with zeros to
/// length n when n > m. When factors are present, left is n x r and right is
/// m x r with r = min(n, m), so that X = left * diag(s[0:r]) * right^T.
struct SpectrumResult {
    Eigen::VectorXd singulars;
    Eigen::MatrixXd left;
    Eigen::MatrixXd right;
    std::size_t n = 0;
    std::size_t m = 0;
    bool has_vectors = false;

    std::size_t rank_dim() const { return std::min(n, m); }
};

namespace detail {

inline void pad_singulars(SpectrumResult& s, const Eigen::VectorXd& values) {
    s.singulars = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.n));
    s.singulars.head(values.size()) = values;
}

}  // namespace detail

/// Full thin SVD.
inline SpectrumResult singular_values(const Eigen::MatrixXd& x) {
    SpectrumResult out;
    out.n = static_cast<std::size_t>(x.rows());
    out.m = static_cast<std::size_t>(x.cols());
    out.has_vectors = true;
    const auto r = std::min(x.rows(), x.cols());
    if (r == 0) {
        out.singulars = Eigen::VectorXd::Zero(x.rows());
        out.left = Eigen::MatrixXd::Zero(x.rows(), 0);
        out.right = Eigen::MatrixXd::Zero(x.cols(), 0);
        return out;
    }
    // BDCSVD in Eigen 3.4 can report success on some very sparse inputs while
    // U S V^T misses X by O(1), so the factorization is checked and redone
    // with one-sided Jacobi when it does not reproduce X.
    auto reproduces = [&x](const auto& svd) {
        if (svd.info() != Eigen::Success) return false;
        const double scale = std::max(1.0, svd.singularValues()(0));
        const double err = (svd.matrixU() * svd.singularValues().asDiagonal() * svd.matrixV().transpose() - x)
                               .cwiseAbs()
                               .maxCoeff();
        return err <= 1e-11 * scale;
    };
    auto take = [&out](const auto& svd) {
        detail::pad_singulars(out, svd.singularValues());
        out.left = svd.matrixU();
        out.right = svd.matrixV();
    };
    Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (reproduces(svd)) {
        take(svd);
        return out;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> jacobi(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (!reproduces(jacobi))
        throw NumericalError("SVD failed to converge for a " + std::to_string(x.rows()) +
                             "x" + std::to_string(x.cols()) + " matrix (Frobenius norm " +
                             io::fmt(x.norm()) + ")");
    take(jacobi);
    return out;
}

inline SpectrumResult singular_values(const SampledMatrix& x) { return singular_values(x.scaled); }

namespace detail {

/// Gram matrix of the short side (lower triangle filled): x x^T when wide,
/// x^T x otherwise. Sparse inputs accumulate column by column over nonzeros.
inline Eigen::MatrixXd short_side_gram(const Eigen::MatrixXd& a) {
    const bool wide = a.rows() <= a.cols();
    const Eigen::Index k = std::min(a.rows(), a.cols());
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(k, k);
    const Eigen::Index nnz = (a.array() != 0.0).count();
    const double density = static_cast<double>(nnz) / static_cast<double>(a.size());
    if (density < 0.2) {
        std::vector<Eigen::Index> idx;
        std::vector<double> val;
        const Eigen::Index outer = wide ? a.cols() : a.rows();
        for (Eigen::Index c = 0; c < outer; ++c) {
            idx.clear();
            val.clear();
            for (Eigen::Index r = 0; r < k; ++r) {
                const double e = wide ? a(r, c) : a(c, r);
                if (e != 0.0) {
                    idx.push_back(r);
                    val.push_back(e);
                }
            }
            for (std::size_t i = 0; i < idx.size(); ++i)
                for (std::size_t j = 0; j <= i; ++j) gram(idx[i], idx[j]) += val[i] * val[j];
        }
    } else if (wide) {
        gram.selfadjointView<Eigen::Lower>().rankUpdate(a);
    } else {
        gram.selfadjointView<Eigen::Lower>().rankUpdate(a.transpose());
    }
    return gram;
}

}  // namespace detail

/// Singular values only, from the eigenvalues of the smaller Gram matrix.
inline SpectrumResult singular_values_only(const Eigen::MatrixXd& x) {
    SpectrumResult out;
    out.n = static_cast<std::size_t>(x.rows());
    out.m = static_cast<std::size_t>(x.cols());
    const Eigen::Index k = std::min(x.rows(), x.cols());
    if (k == 0) {
        out.singulars = Eigen::VectorXd::Zero(x.rows());
        return out;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.compute(detail::short_side_gram(x), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw NumericalError("symmetric eigensolver failed on a " + std::to_string(k) + "x" +
                             std::to_string(k) + " Gram matrix");
    Eigen::VectorXd s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().reverse();
    detail::pad_singulars(out, s);
    return out;
}

inline SpectrumResult singular_values_only(const SampledMatrix& x) {
    return singular_values_only(x.scaled);
}

/// Symmetrized ESD F_n(x) = (1/2n) sum (1{s_j <= x} + 1{-s_j <= x}).
inline double esd(const SpectrumResult& spec, double x) {
    const auto n = spec.singulars.size();
    if (n == 0) return x >= 0.0 ? 1.0 : 0.0;
    std::size_t count = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double s = spec.singulars(j);
        count += (s <= x) + (-s <= x);
    }
    return static_cast<double>(count) / (2.0 * static_cast<double>(n));
}

/// s_n(z) = (1/n) sum z / (s_j^2 - z^2).
inline cplx stieltjes_esd(const SpectrumResult& spec, ComplexPoint z) {
    detail::require_upper(z);
    const cplx w = z.z();
    const cplx w2 = w * w;
    cplx acc = 0.0;
    for (Eigen::Index j = 0; j < spec.singulars.size(); ++j) {
        const double s = spec.singulars(j);
        acc += w / (s * s - w2);
    }
    return acc / static_cast<double>(spec.singulars.size());
}

/// Symmetric block matrix V = [[0, X], [X^T, 0]].
inline Eigen::MatrixXd block_matrix(const Eigen::MatrixXd& x) {
    const auto n = x.rows(), m = x.cols();
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(n + m, n + m);
    v.topRightCorner(n, m) = x;
    v.bottomLeftCorner(m, n) = x.transpose();
    return v;
}

/// R(z) = (V - zI)^{-1} together with the original labels of its indices.
/// labels[i] < n0 is a row of the parent matrix; labels[i] = n0 + l is its
/// column l, where n0 is the parent's row count.
struct ResolventEval {
    ComplexPoint z;
    CMatrix entries;
    std::size_t n = 0;
    std::size_t m = 0;
    std::vector<std::size_t> labels;

    cplx operator()(std::size_t i, std::size_t j) const {
        return entries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
};

namespace detail {

/// c_k = s_k^2 / (z (s_k^2 - z^2)) = z/(s^2 - z^2) + 1/z, and
/// e_k = s_k / (s_k^2 - z^2).
inline void resolvent_weights(const SpectrumResult& spec, cplx w, Eigen::VectorXcd& c,
                              Eigen::VectorXcd& e) {
    const auto r = static_cast<Eigen::Index>(spec.rank_dim());
    c.resize(r);
    e.resize(r);
    for (Eigen::Index k = 0; k < r; ++k) {
        const double s = spec.singulars(k);
        const cplx den = s * s - w * w;
        c(k) = s * s / (w * den);
        e(k) = s / den;
    }
}

}  // namespace detail

/// Assembles R in closed form from the SVD:
///   R11 = U diag(c) U^T - I/z,  R22 = W diag(c) W^T - I/z,  R12 = U diag(e) W^T.
inline ResolventEval resolvent(const SpectrumResult& spec, ComplexPoint z) {
    detail::require_upper(z);
    if (!spec.has_vectors) throw ParameterError("resolvent needs singular vectors");
    const auto n = static_cast<Eigen::Index>(spec.n), m = static_cast<Eigen::Index>(spec.m);
    const cplx w = z.z();
    Eigen::VectorXcd c, e;
    detail::resolvent_weights(spec, w, c, e);
    const CMatrix u = spec.left.cast<cplx>();
    const CMatrix wv = spec.right.cast<cplx>();

    ResolventEval out;
    out.z = z;
    out.n = spec.n;
    out.m = spec.m;
    out.entries.resize(n + m, n + m);
    out.entries.topLeftCorner(n, n) = (u * c.asDiagonal()) * u.transpose();
    out.entries.topLeftCorner(n, n).diagonal().array() -= 1.0 / w;
    out.entries.bottomRightCorner(m, m) = (wv * c.asDiagonal()) * wv.transpose();
    out.entries.bottomRightCorner(m, m).diagonal().array() -= 1.0 / w;
    out.entries.topRightCorner(n, m) = (u * e.asDiagonal()) * wv.transpose();
    out.entries.bottomLeftCorner(m, n) = out.entries.topRightCorner(n, m).transpose();
    out.labels.resize(spec.n + spec.m);
    for (std::size_t i = 0; i < out.labels.size(); ++i) out.labels[i] = i;
    return out;
}

inline ResolventEval resolvent(const Eigen::MatrixXd& x, ComplexPoint z) {
    return resolvent(singular_values(x), z);
}

inline ResolventEval resolvent(const SampledMatrix& x, ComplexPoint z) {
    return resolvent(x.scaled, z);
}

/// Resolvent of X with rows `rows_deleted` and columns `cols_deleted` removed.
/// Indices are zero-based; labels map the minor back to the parent.
inline ResolventEval resolvent_minor(const Eigen::MatrixXd& x, ComplexPoint z,
                                     const std::set<std::size_t>& rows_deleted,
                                     const std::set<std::size_t>& cols_deleted) {
    const auto n0 = static_cast<std::size_t>(x.rows());
    const auto m0 = static_cast<std::size_t>(x.cols());
    if (!rows_deleted.empty() && *rows_deleted.rbegin() >= n0)
        throw IndexError("row index " + std::to_string(*rows_deleted.rbegin()) +
                         " out of range for " + std::to_string(n0) + " rows");
    if (!cols_deleted.empty() && *cols_deleted.rbegin() >= m0)
        throw IndexError("column index " + std::to_string(*cols_deleted.rbegin()) +
                         " out of range for " + std::to_string(m0) + " columns");

    std::vector<Eigen::Index> keep_rows, keep_cols;
    for (std::size_t j = 0; j < n0; ++j)
        if (!rows_deleted.contains(j)) keep_rows.push_back(static_cast<Eigen::Index>(j));
    for (std::size_t l = 0; l < m0; ++l)
        if (!cols_deleted.contains(l)) keep_cols.push_back(static_cast<Eigen::Index>(l));

    const Eigen::MatrixXd sub = x(keep_rows, keep_cols);
    ResolventEval out = resolvent(sub, z);
    out.labels.clear();
    for (auto j : keep_rows) out.labels.push_back(static_cast<std::size_t>(j));
    for (auto l : keep_cols) out.labels.push_back(n0 + static_cast<std::size_t>(l));
    return out;
}

/// max_{j,k} |R_jk|.
inline double max_entry(const ResolventEval& r) { return r.entries.cwiseAbs().maxCoeff(); }

/// Large-scale resolvent statistics computed panel by panel without storing R.
struct ResolventSummary {
    double max_abs = 0.0;
    cplx top_diag_mean;  // (1/n) sum_{j<=n} R_jj
};

inline ResolventSummary summarize_resolvent(const SpectrumResult& spec, ComplexPoint z,
                                            Eigen::Index panel = 512) {
    detail::require_upper(z);
    if (!spec.has_vectors) throw ParameterError("resolvent summary needs singular vectors");
    const cplx w = z.z();
    const cplx inv = 1.0 / w;
    Eigen::VectorXcd c, e;
    detail::resolvent_weights(spec, w, c, e);
    const Eigen::VectorXd cr = c.real(), ci = c.imag(), er = e.real(), ei = e.imag();
    const Eigen::MatrixXd& u = spec.left;
    const Eigen::MatrixXd& wv = spec.right;

    ResolventSummary out;
    cplx trace = 0.0;

    // Diagonal blocks Q diag(c) Q^T - I/z, in column panels of Q^T.
    auto scan_square = [&](const Eigen::MatrixXd& q, bool track_trace) {
        const Eigen::MatrixXd qr = q * cr.asDiagonal();
        const Eigen::MatrixXd qi = q * ci.asDiagonal();
        for (Eigen::Index c0 = 0; c0 < q.rows(); c0 += panel) {
            const Eigen::Index w_cols = std::min(panel, q.rows() - c0);
            const auto qt = q.middleRows(c0, w_cols).transpose();
            Eigen::MatrixXd re = qr * qt;
            Eigen::MatrixXd im = qi * qt;
            for (Eigen::Index k = 0; k < w_cols; ++k) {
                re(c0 + k, k) -= inv.real();
                im(c0 + k, k) -= inv.imag();
                if (track_trace) trace += cplx(re(c0 + k, k), im(c0 + k, k));
            }
            out.max_abs = std::max(out.max_abs, (re.array().square() + im.array().square())
                                                    .sqrt()
                                                    .maxCoeff());
        }
    };
    if (spec.n > 0) scan_square(u, true);
    if (spec.m > 0) scan_square(wv, false);

    // Off-diagonal block U diag(e) W^T; its transpose has the same entries.
    if (spec.n > 0 && spec.m > 0 && spec.rank_dim() > 0) {
        const Eigen::MatrixXd ur = u * er.asDiagonal();
        const Eigen::MatrixXd ui = u * ei.asDiagonal();
        for (Eigen::Index c0 = 0; c0 < wv.rows(); c0 += panel) {
            const Eigen::Index w_cols = std::min(panel, wv.rows() - c0);
            const auto wt = wv.middleRows(c0, w_cols).transpose();
            const Eigen::MatrixXd re = ur * wt;
            const Eigen::MatrixXd im = ui * wt;
            out.max_abs = std::max(out.max_abs, (re.array().square() + im.array().square())
                                                    .sqrt()
                                                    .maxCoeff());
        }
    }
    out.top_diag_mean = spec.n > 0 ? trace / static_cast<double>(spec.n) : cplx(0.0);
    return out;
}

/// Eigen-decomposition of X X^T for a wide X (n <= m) together with a sparse
/// copy of X. Enough to summarize the resolvent without the right factor.
struct GramSystem {
    SpectrumResult spectrum;      // singular values only
    Eigen::VectorXd eigenvalues;  // of X X^T, ascending
    Eigen::MatrixXd vectors;      // n x n, orthonormal columns
    Eigen::SparseMatrix<double> x;
    Eigen::SparseMatrix<double> xt;
};

inline GramSystem gram_system(const Eigen::MatrixXd& x) {
    detail::require(x.rows() >= 1 && x.rows() <= x.cols(), "gram_system needs 1 <= n <= m");
    GramSystem g;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(detail::short_side_gram(x));
    if (es.info() != Eigen::Success)
        throw NumericalError("symmetric eigensolver failed on a " + std::to_string(x.rows()) +
                             "x" + std::to_string(x.rows()) + " Gram matrix");
    g.eigenvalues = es.eigenvalues().cwiseMax(0.0);
    g.vectors = es.eigenvectors();
    g.spectrum.n = static_cast<std::size_t>(x.rows());
    g.spectrum.m = static_cast<std::size_t>(x.cols());
    detail::pad_singulars(g.spectrum, g.eigenvalues.cwiseSqrt().reverse());
    g.x = x.sparseView();
    g.xt = g.x.transpose();
    return g;
}

inline GramSystem gram_system(const SampledMatrix& x) { return gram_system(x.scaled); }

/// Same statistics from G = (X X^T - z^2)^{-1}:
///   R11 = z G,  R12 = G X,  R22 = (X^T G X - I) / z.
/// The sparse products make this far cheaper than the SVD route when p is small.
inline ResolventSummary summarize_resolvent(const GramSystem& g, ComplexPoint z,
                                            Eigen::Index panel = 512) {
    detail::require_upper(z);
    const cplx w = z.z();
    const Eigen::Index n = g.vectors.rows();
    Eigen::VectorXd dr(n), di(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const cplx d = 1.0 / (g.eigenvalues(k) - w * w);
        dr(k) = d.real();
        di(k) = d.imag();
    }
    const Eigen::MatrixXd& u = g.vectors;
    const Eigen::MatrixXd gr = (u * dr.asDiagonal()) * u.transpose();
    const Eigen::MatrixXd gi = (u * di.asDiagonal()) * u.transpose();
    auto max_abs = [](const Eigen::MatrixXd& re, const Eigen::MatrixXd& im) {
        return (re.array().square() + im.array().square()).sqrt().maxCoeff();
    };

    ResolventSummary out;
    // |R11| = |z| |G| entrywise.
    out.max_abs = std::abs(w) * max_abs(gr, gi);
    out.top_diag_mean = w * cplx(gr.trace(), gi.trace()) / static_cast<double>(n);

    const Eigen::MatrixXd pr = gr * g.x;
    const Eigen::MatrixXd pi = gi * g.x;
    out.max_abs = std::max(out.max_abs, max_abs(pr, pi));

    const Eigen::Index m = g.x.cols();
    const double inv_abs = 1.0 / std::abs(w);
    for (Eigen::Index c0 = 0; c0 < m; c0 += panel) {
        const Eigen::Index wc = std::min(panel, m - c0);
        Eigen::MatrixXd qr = g.xt * pr.middleCols(c0, wc);
        const Eigen::MatrixXd qi = g.xt * pi.middleCols(c0, wc);
        for (Eigen::Index k = 0; k < wc; ++k) qr(c0 + k, k) -= 1.0;
        out.max_abs = std::max(out.max_abs, inv_abs * max_abs(qr, qi));
    }
    return out;
}

/// CSV columns: index (1-based), singular_value.
inline void write_spectrum_csv(std::ostream& os, const SpectrumResult& spec) {
    io::CsvWriter csv(os);
    csv.row("index", "singular_value");
    for (Eigen::Index j = 0; j < spec.singulars.size(); ++j)
        csv.row(static_cast<std::size_t>(j + 1), spec.singulars(j));
}

struct Histogram {
    std::vector<double> edges;
    std::vector<std::size_t> counts;
    std::size_t total = 0;

    double width(std::size_t i) const { return edges[i + 1] - edges[i]; }
    double density(std::size_t i) const {
        return static_cast<double>(counts[i]) / (static_cast<double>(total) * width(i));
    }
};

/// Histogram of the 2n symmetrized values +-s_j on [lo, hi]; the last bin
/// is closed. Values outside the range are counted in `total` only.
inline Histogram esd_histogram(const SpectrumResult& spec, double lo, double hi,
                               std::size_t bins) {
    detail::require(bins >= 1 && hi > lo, "histogram needs bins >= 1 and hi > lo");
    Histogram h;
    h.edges.resize(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i)
        h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
    h.counts.assign(bins, 0);
    auto add = [&](double x) {
        ++h.total;
        if (x < lo || x > hi) return;
        auto i = static_cast<std::size_t>((x - lo) / (hi - lo) * static_cast<double>(bins));
        h.counts[std::min(i, bins - 1)]++;
    };
    for (Eigen::Index j = 0; j < spec.singulars.size(); ++j) {
        add(spec.singulars(j));
        add(-spec.singulars(j));
    }
    return h;
}

}  // namespace sparsemp

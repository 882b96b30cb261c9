#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "sparsemp/errors.hpp"
#include "sparsemp/rng.hpp"

namespace sparsemp {

/// Law of the entries X_jk. Every variant has mean 0 and variance 1.
class EntryDistribution {
public:
    enum class Kind { gaussian, rademacher, pareto };

    static EntryDistribution gaussian() { return EntryDistribution(Kind::gaussian, 0.0); }
    static EntryDistribution rademacher() { return EntryDistribution(Kind::rademacher, 0.0); }

    /// Symmetrized Pareto: density proportional to |t|^(-alpha-1) on |t| >= 1,
    /// rescaled to unit variance.
    static EntryDistribution pareto(double alpha) {
        detail::require(std::isfinite(alpha) && alpha > 4.0,
                        "pareto alpha must exceed 4, got " + std::to_string(alpha));
        return EntryDistribution(Kind::pareto, alpha);
    }

    static EntryDistribution from_name(const std::string& name, double alpha = 0.0) {
        if (name == "gaussian") return gaussian();
        if (name == "rademacher") return rademacher();
        if (name == "pareto") return pareto(alpha);
        throw ParameterError("unknown entry distribution '" + name + "'");
    }

    Kind kind() const noexcept { return kind_; }
    double alpha() const noexcept { return alpha_; }
    bool finitely_supported() const noexcept { return kind_ == Kind::rademacher; }

    std::string name() const {
        switch (kind_) {
            case Kind::gaussian: return "gaussian";
            case Kind::rademacher: return "rademacher";
            case Kind::pareto: return "pareto";
        }
        return {};
    }

    /// Scale that brings the raw symmetric Pareto variable to unit variance.
    double pareto_scale() const { return std::sqrt(alpha_ / (alpha_ - 2.0)); }

    double sample(CounterRng& rng) const {
        switch (kind_) {
            case Kind::gaussian: return rng.normal();
            case Kind::rademacher: return rng.rademacher();
            case Kind::pareto: {
                const double sign = rng.rademacher();
                const double t = std::pow(rng.uniform_open_low(), -1.0 / alpha_);
                return sign * t / pareto_scale();
            }
        }
        return 0.0;
    }

    /// E|X|^r in closed form. Throws DivergentMomentError when infinite.
    double abs_moment(double r) const {
        detail::require(r >= 0.0, "moment order must be nonnegative");
        switch (kind_) {
            case Kind::gaussian:
                return std::pow(2.0, r / 2.0) * std::tgamma((r + 1.0) / 2.0) /
                       std::sqrt(std::numbers::pi);
            case Kind::rademacher: return 1.0;
            case Kind::pareto:
                if (!(alpha_ > r))
                    throw DivergentMomentError("pareto(alpha=" + std::to_string(alpha_) +
                                               ") has no finite moment of order " +
                                               std::to_string(r));
                return alpha_ / (alpha_ - r) / std::pow(pareto_scale(), r);
        }
        return 0.0;
    }

    friend bool operator==(const EntryDistribution&, const EntryDistribution&) = default;

private:
    EntryDistribution(Kind k, double alpha) : kind_(k), alpha_(alpha) {}
    Kind kind_;
    double alpha_;
};

/// One sparse sample covariance ensemble.
struct ModelParams {
    std::size_t n = 1;
    std::size_t m = 1;
    double p = 1.0;
    EntryDistribution dist = EntryDistribution::gaussian();
    double delta = 4.0;
    std::uint64_t seed = 0;

    double y() const { return static_cast<double>(n) / static_cast<double>(m); }

    /// kappa = delta / (2 (4 + delta)), always in (0, 1/4).
    double kappa() const { return delta / (2.0 * (4.0 + delta)); }

    void validate() const {
        using detail::require;
        require(n >= 1, "n must be positive");
        require(m >= n, "m must be at least n (got n=" + std::to_string(n) +
                            ", m=" + std::to_string(m) + ")");
        require(p > 0.0 && p <= 1.0, "p must lie in (0, 1], got " + std::to_string(p));
        require(std::isfinite(delta) && delta > 0.0, "delta must be positive");
        if (dist.kind() == EntryDistribution::Kind::pareto)
            require(dist.alpha() > 4.0 + delta,
                    "pareto alpha must exceed 4 + delta for a finite (4+delta) moment");
    }

    /// MP-law evaluation needs y < 1.
    void require_subcritical() const {
        validate();
        detail::require(m > n, "MP-law evaluation requires y = n/m < 1");
    }
};

inline void to_json(nlohmann::json& j, const ModelParams& mp) {
    j = nlohmann::json{{"n", mp.n},         {"m", mp.m},         {"p", mp.p},
                       {"dist", mp.dist.name()}, {"delta", mp.delta}, {"seed", mp.seed}};
    if (mp.dist.kind() == EntryDistribution::Kind::pareto) j["alpha"] = mp.dist.alpha();
}

inline void from_json(const nlohmann::json& j, ModelParams& mp) {
    mp.n = j.at("n").get<std::size_t>();
    mp.m = j.at("m").get<std::size_t>();
    mp.p = j.at("p").get<double>();
    mp.delta = j.at("delta").get<double>();
    mp.seed = j.at("seed").get<std::uint64_t>();
    mp.dist = EntryDistribution::from_name(j.at("dist").get<std::string>(),
                                           j.value("alpha", 0.0));
}

using MaskMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// One draw of the ensemble: raw entries X_jk, Bernoulli mask xi_jk and the
/// scaled matrix raw * mask / sqrt(m p).
struct SampledMatrix {
    Eigen::MatrixXd raw;
    MaskMatrix mask;
    Eigen::MatrixXd scaled;
    double p = 1.0;

    std::size_t rows() const { return static_cast<std::size_t>(raw.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(raw.cols()); }

    double fill_fraction() const {
        return mask.cast<double>().sum() / static_cast<double>(mask.size());
    }
};

/// Builds a SampledMatrix from given raw entries and mask.
inline SampledMatrix assemble_sample(Eigen::MatrixXd raw, MaskMatrix mask, double p) {
    detail::require(raw.rows() == mask.rows() && raw.cols() == mask.cols(),
                    "raw and mask dimensions differ");
    detail::require(p > 0.0 && p <= 1.0, "p must lie in (0, 1]");
    SampledMatrix s;
    const double scale = 1.0 / std::sqrt(static_cast<double>(raw.cols()) * p);
    s.scaled = raw.cwiseProduct(mask.cast<double>()) * scale;
    s.raw = std::move(raw);
    s.mask = std::move(mask);
    s.p = p;
    return s;
}

/// Draws replication `replication` of the ensemble. Raw entries and mask come
/// from two separate substreams of (seed, replication).
inline SampledMatrix sample_matrix(const ModelParams& params, std::uint64_t replication) {
    params.validate();
    const auto n = static_cast<Eigen::Index>(params.n);
    const auto m = static_cast<Eigen::Index>(params.m);
    CounterRng raw_rng = CounterRng::stream(params.seed, replication, 0);
    CounterRng mask_rng = CounterRng::stream(params.seed, replication, 1);

    Eigen::MatrixXd raw(n, m);
    MaskMatrix mask(n, m);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index k = 0; k < m; ++k) {
            raw(j, k) = params.dist.sample(raw_rng);
            mask(j, k) = mask_rng.bernoulli(params.p) ? 1 : 0;
        }
    return assemble_sample(std::move(raw), std::move(mask), params.p);
}

/// mu_{4+delta} = E|X_11|^(4+delta).
inline double moment_4_delta(const EntryDistribution& dist, double delta) {
    detail::require(delta >= 0.0, "delta must be nonnegative");
    return dist.abs_moment(4.0 + delta);
}

/// Whether n p >= c0 (log n)^(2/kappa). Desk-scale runs rarely satisfy it.
inline bool check_c0(const ModelParams& params, double c0) {
    const double n = static_cast<double>(params.n);
    return n * params.p >= c0 * std::pow(std::log(n), 2.0 / params.kappa());
}

}  // namespace sparsemp

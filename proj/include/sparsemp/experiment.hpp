#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "sparsemp/configuration.hpp"
#include "sparsemp/concentration.hpp"
#include "sparsemp/errors.hpp"
#include "sparsemp/mplaw.hpp"
#include "sparsemp/model.hpp"

namespace sparsemp {

inline void to_json(nlohmann::json& j, const DomainSpec& d) {
    j = nlohmann::json{{"kind", d.kind == DomainSpec::Kind::d_mu ? "D_mu" : "D_a0"},
                       {"mu", d.mu},
                       {"a0", d.a0},
                       {"V", d.V},
                       {"n", d.n},
                       {"grid_u", d.grid_u},
                       {"grid_v", d.grid_v}};
}

inline void from_json(const nlohmann::json& j, DomainSpec& d) {
    const DomainSpec def;
    const std::string kind = j.value("kind", std::string("D_mu"));
    if (kind == "D_mu") d.kind = DomainSpec::Kind::d_mu;
    else if (kind == "D_a0") d.kind = DomainSpec::Kind::d_a0;
    else throw ParameterError("unknown domain kind '" + kind + "' (expected D_mu or D_a0)");
    d.mu = j.value("mu", def.mu);
    d.a0 = j.value("a0", def.a0);
    d.V = j.value("V", def.V);
    d.n = j.value("n", def.n);
    d.grid_u = j.value("grid_u", def.grid_u);
    d.grid_v = j.value("grid_v", def.grid_v);
}

struct ConcentrationSettings {
    std::string mode = "exact";     // exact | mc | corpus
    std::string matrix = "identity";  // identity | gaussian
    std::size_t k = 2;
    int q = 2;
    std::size_t samples = 100000;
    std::size_t trials = 100;
    std::string xi = "rademacher";
    std::string eta = "rademacher";
    std::string a2_reading = "literal";

    friend bool operator==(const ConcentrationSettings&, const ConcentrationSettings&) = default;
};

/// Parameters of one CLI run. Every field has a default, so partial JSON
/// files are accepted; serialization writes every field.
struct ExperimentConfig {
    ModelParams model;
    DomainSpec domain;
    double c0 = 1.0;
    std::size_t replications = 20;
    std::vector<std::size_t> sweep_n;  // empty: model.n only
    double np = 0.0;                   // > 0: p = np / n across the sweep
    double threshold_C = 1.0;
    std::string deviant_rule = "sqrt_n_over_p";
    std::size_t max_entry_stride = 10;
    std::vector<double> candidate_K;
    ComplexPoint z{1.0, 0.1};
    double tol = 1e-8;
    bool include_columns = true;
    std::vector<int> q_values{2};
    double gamma = 0.5;
    double s0 = 2.0;
    std::size_t bins = 60;
    ConcentrationSettings concentration;
    std::string output_dir = "out";

    /// Parameters for sweep entry n: aspect ratio and (if np > 0) np are held fixed.
    ModelParams params_for(std::size_t n) const {
        ModelParams p = model;
        p.n = n;
        p.m = static_cast<std::size_t>(std::llround(static_cast<double>(n) / model.y()));
        if (np > 0.0) p.p = np / static_cast<double>(n);
        return p;
    }

    std::vector<std::size_t> sweep() const {
        return sweep_n.empty() ? std::vector<std::size_t>{model.n} : sweep_n;
    }

    DeviantRule rule() const {
        if (deviant_rule == "sqrt_n_over_p") return DeviantRule::sqrt_n_over_p;
        if (deviant_rule == "sqrt_n_times_p") return DeviantRule::sqrt_n_times_p;
        throw ParameterError("unknown deviant_rule '" + deviant_rule + "'");
    }

    A2Reading a2_reading() const {
        if (concentration.a2_reading == "literal") return A2Reading::literal;
        if (concentration.a2_reading == "young") return A2Reading::young;
        throw ParameterError("unknown a2_reading '" + concentration.a2_reading + "'");
    }
};

inline void to_json(nlohmann::json& j, const ConcentrationSettings& c) {
    j = nlohmann::json{{"mode", c.mode},       {"matrix", c.matrix},   {"k", c.k},
                       {"q", c.q},             {"samples", c.samples}, {"trials", c.trials},
                       {"xi", c.xi},           {"eta", c.eta},         {"a2_reading", c.a2_reading}};
}

inline void from_json(const nlohmann::json& j, ConcentrationSettings& c) {
    const ConcentrationSettings d;
    c.mode = j.value("mode", d.mode);
    c.matrix = j.value("matrix", d.matrix);
    c.k = j.value("k", d.k);
    c.q = j.value("q", d.q);
    c.samples = j.value("samples", d.samples);
    c.trials = j.value("trials", d.trials);
    c.xi = j.value("xi", d.xi);
    c.eta = j.value("eta", d.eta);
    c.a2_reading = j.value("a2_reading", d.a2_reading);
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = nlohmann::json{{"model", c.model},
                       {"domain", c.domain},
                       {"c0", c.c0},
                       {"replications", c.replications},
                       {"sweep_n", c.sweep_n},
                       {"np", c.np},
                       {"threshold_C", c.threshold_C},
                       {"deviant_rule", c.deviant_rule},
                       {"max_entry_stride", c.max_entry_stride},
                       {"candidate_K", c.candidate_K},
                       {"z", {{"u", c.z.u}, {"v", c.z.v}}},
                       {"tol", c.tol},
                       {"include_columns", c.include_columns},
                       {"q_values", c.q_values},
                       {"gamma", c.gamma},
                       {"s0", c.s0},
                       {"bins", c.bins},
                       {"concentration", c.concentration},
                       {"output_dir", c.output_dir}};
}

/// Missing model keys fall back to the defaults of ModelParams.
inline ModelParams model_from_partial(const nlohmann::json& j) {
    nlohmann::json full = ModelParams{};
    for (const auto& [key, value] : j.items()) full[key] = value;
    return full.get<ModelParams>();
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    const ExperimentConfig d;
    if (!j.is_object()) throw ParameterError("experiment config must be a JSON object");
    c.model = j.contains("model") ? model_from_partial(j.at("model")) : d.model;
    c.domain = j.contains("domain") ? j.at("domain").get<DomainSpec>() : d.domain;
    c.c0 = j.value("c0", d.c0);
    c.replications = j.value("replications", d.replications);
    c.sweep_n = j.value("sweep_n", d.sweep_n);
    c.np = j.value("np", d.np);
    c.threshold_C = j.value("threshold_C", d.threshold_C);
    c.deviant_rule = j.value("deviant_rule", d.deviant_rule);
    c.max_entry_stride = j.value("max_entry_stride", d.max_entry_stride);
    c.candidate_K = j.value("candidate_K", d.candidate_K);
    if (j.contains("z")) c.z = {j.at("z").at("u").get<double>(), j.at("z").at("v").get<double>()};
    c.tol = j.value("tol", d.tol);
    c.include_columns = j.value("include_columns", d.include_columns);
    c.q_values = j.value("q_values", d.q_values);
    c.gamma = j.value("gamma", d.gamma);
    c.s0 = j.value("s0", d.s0);
    c.bins = j.value("bins", d.bins);
    c.concentration = j.contains("concentration") ? j.at("concentration").get<ConcentrationSettings>()
                                                  : d.concentration;
    c.output_dir = j.value("output_dir", d.output_dir);
}

}  // namespace sparsemp

// A short walk through the library on one small sparse sample.

#include <iostream>

#include <sparsemp.hpp>

int main() {
    using namespace sparsemp;

    ModelParams params;
    params.n = 100;
    params.m = 200;
    params.p = 0.2;
    params.seed = 2024;
    const double y = params.y();

    const SampledMatrix x = sample_matrix(params, 0);
    const SpectrumResult spec = singular_values(x);
    const ComplexPoint z{1.0, 0.2};

    std::cout << "fill fraction        " << x.fill_fraction() << '\n'
              << "largest singular     " << spec.singulars(0) << "  (MP edge "
              << mp_edges(y).upper << ")\n"
              << "|Lambda_n(1 + 0.2i)| " << std::abs(lambda_n(spec, z, y)) << '\n'
              << "Gamma_n (C0 = 1)     " << gamma_n(params.n, params.p, z.v, 1.0) << '\n';

    const AuditReport audit = self_consistency_audit(x, z);
    std::cout << "identity residual    " << audit.max_residual << '\n'
              << "T_n                  " << audit.T_n << '\n';

    const ConfigurationMatrix cm = build_configuration(x, params);
    const ConfigurationReport cr = classify(cm, params.n, params.m);
    std::cout << "links                " << cm.link_count() << ", verdict "
              << to_string(cr.verdict) << '\n';

    ConcentrationInput in;
    in.a = Eigen::MatrixXd::Identity(3, 3);
    in.q = 4;
    const ConcentrationReport rep = concentration_report(in, true, 0, 0);
    std::cout << "E|xi^T I eta|^4      " << rep.lhs << ", fitted C " << rep.fitted_C << '\n';
}

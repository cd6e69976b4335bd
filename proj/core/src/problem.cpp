#include "pdecl/problem.hpp"

#include "pdecl/errors.hpp"

#include <cmath>

namespace pdecl {

std::string to_string(Problem p) {
    switch (p) {
    case Problem::Convection: return "convection";
    case Problem::Darcy: return "darcy";
    case Problem::Burgers: return "burgers";
    }
    return "unknown";
}

Problem problem_from_string(const std::string& s) {
    if (s == "convection") return Problem::Convection;
    if (s == "darcy") return Problem::Darcy;
    if (s == "burgers") return Problem::Burgers;
    throw ConfigError("unknown problem tag: " + s);
}

double convection_initial(double x) { return std::sin(kPi * x); }
double convection_boundary(double t) { return std::sin(0.5 * kPi * t); }

std::size_t encoded_input_size(Problem problem, const EncodingConfig& cfg) {
    switch (problem) {
    case Problem::Convection: return 2;
    case Problem::Darcy: return 3;
    case Problem::Burgers: return 3 + cfg.burgers_cond_samples;
    }
    return 0;
}

int operator_jet_order(Problem problem) {
    return problem == Problem::Convection ? 1 : 2;
}

EncodedPoint encode_point(Problem problem, const ParameterField& phi, Point pt,
                          const EncodingConfig& cfg) {
    EncodedPoint enc;
    const std::size_t d = encoded_input_size(problem, cfg);
    enc.input.assign(d, 0.0);
    enc.seeds.resize(2);
    enc.seeds[0].tangent.assign(d, 0.0);
    enc.seeds[1].tangent.assign(d, 0.0);

    switch (problem) {
    case Problem::Convection:
        enc.input[0] = 2.0 * pt.x - 1.0;
        enc.input[1] = 2.0 * pt.y - 1.0;
        enc.seeds[0].tangent[0] = 2.0;
        enc.seeds[1].tangent[1] = 2.0;
        break;

    case Problem::Darcy: {
        enc.input[0] = 2.0 * pt.x - 1.0;
        enc.input[1] = 2.0 * pt.y - 1.0;
        const double span = cfg.darcy_nu_high - cfg.darcy_nu_low;
        const double nu = phi.value_at(pt.x, pt.y);
        enc.input[2] = span > 0.0 ? (2.0 * nu - cfg.darcy_nu_high - cfg.darcy_nu_low) / span
                                  : nu;
        // The nu slot is held fixed under spatial differentiation: the
        // two-material coefficient is piecewise constant and its transport
        // term enters the operator through the assembled gradient field
        // instead.
        enc.seeds[0].tangent[0] = 2.0;
        enc.seeds[1].tangent[1] = 2.0;
        break;
    }

    case Problem::Burgers: {
        const double s = std::sin(2.0 * kPi * pt.x);
        const double c = std::cos(2.0 * kPi * pt.x);
        enc.input[0] = s;
        enc.input[1] = c;
        enc.input[2] = 2.0 * pt.y - 1.0;
        for (std::size_t i = 0; i < cfg.burgers_cond_samples; ++i) {
            const double xs = static_cast<double>(i) / static_cast<double>(cfg.burgers_cond_samples);
            enc.input[3 + i] = phi.value_at(xs);
        }
        // d/dx through the periodic embedding, with curvature.
        enc.seeds[0].tangent[0] = 2.0 * kPi * c;
        enc.seeds[0].tangent[1] = -2.0 * kPi * s;
        enc.seeds[0].curvature.assign(d, 0.0);
        enc.seeds[0].curvature[0] = -4.0 * kPi * kPi * s;
        enc.seeds[0].curvature[1] = -4.0 * kPi * kPi * c;
        enc.seeds[1].tangent[2] = 2.0;
        break;
    }
    }
    return enc;
}

} // namespace pdecl

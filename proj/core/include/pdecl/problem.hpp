#pragma once

#include "pdecl/basis_net.hpp"
#include "pdecl/param_field.hpp"

#include <string>

namespace pdecl {

enum class Problem { Convection, Darcy, Burgers };

std::string to_string(Problem p);
Problem problem_from_string(const std::string& s);

/// A point of the problem domain [0,1]^2. The second coordinate is time for
/// the spatiotemporal problems and y for Darcy.
struct Point {
    double x = 0.0;
    double y = 0.0;
};

inline constexpr double kPi = 3.14159265358979323846;

/// Convection initial condition h(x) = sin(pi x) at t = 0.
double convection_initial(double x);
/// Convection inflow boundary g(t) = sin(pi t / 2) at x = 0.
double convection_boundary(double t);

/// Knobs of the network-input encoding.
struct EncodingConfig {
    std::size_t burgers_cond_samples = 16; // equispaced u0 samples appended as features
    double darcy_nu_low = 3.0;             // normalization bounds for the nu input slot
    double darcy_nu_high = 12.0;
};

/// Network input vector plus the derivative seeds the problem's operator
/// needs. Seed 0 differentiates along x; seed 1 along t (or y for Darcy).
/// Raw coordinates are mapped affinely into [-1,1] (and through the periodic
/// embedding for Burgers); the seeds carry the matching chain-rule terms, so
/// jet derivatives come out with respect to the raw domain coordinates.
struct EncodedPoint {
    DenseVector input;
    std::vector<DerivSeed> seeds;
};

std::size_t encoded_input_size(Problem problem, const EncodingConfig& cfg);

EncodedPoint encode_point(Problem problem, const ParameterField& phi, Point pt,
                          const EncodingConfig& cfg);

/// Jet order the problem's differential operator needs (1 for convection,
/// 2 for Darcy and Burgers).
int operator_jet_order(Problem problem);

} // namespace pdecl

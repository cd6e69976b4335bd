#pragma once

#include "pdecl/param_field.hpp"
#include "pdecl/problem.hpp"

#include <cstdint>

namespace pdecl {

/// Gaussian-random-field sampling spec. 1D fields use a squared-exponential
/// kernel with the given length scale; 2D and periodic fields are drawn in a
/// spectral basis with fixed operator spectra (see the sample_* functions).
struct GrfSpec {
    std::size_t dimension = 1;
    std::size_t nx = 100;
    std::size_t ny = 1;
    double length_scale = 0.2;
    std::uint64_t seed = 0;
    double jitter = 1e-10;
};

/// Zero-mean stationary field with covariance exp(-(dx)^2 / (2 l^2)) on the
/// inclusive grid x_i = i/(nx-1), sampled through a jittered Cholesky factor.
ParameterField sample_grf_1d(const GrfSpec& spec);

/// beta(x) = v(x) - min v + 1; the returned minimum is exactly 1.
ParameterField make_beta(const ParameterField& v);

/// Two-material Darcy coefficient: a 2D Gaussian field with spectral density
/// proportional to ((j^2+k^2) pi^2 + 9)^(-2) in the sine basis, thresholded
/// at zero into {high, low}. Nearest-neighbor interpolation preserves the
/// two-material structure off-grid.
ParameterField sample_darcy_coefficients(const GrfSpec& spec, double high, double low);

/// Periodic zero-mean initial condition with power spectrum proportional to
/// (4 pi^2 k^2 + 25)^(-2), truncated at wavenumber nx/2, on x_i = i/nx.
ParameterField sample_burgers_ic(const GrfSpec& spec);

enum class Split { Train, Test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct DatasetOptions {
    double darcy_high = 12.0;
    double darcy_low = 3.0;
    double length_scale = 0.2;
};

/// PDE-parameter instances for one problem and split.
struct Dataset {
    Problem problem = Problem::Convection;
    Split split = Split::Train;
    std::vector<ParameterField> parameter_fields;
    std::vector<std::uint64_t> seeds;

    std::size_t size() const { return parameter_fields.size(); }
};

/// Instance i uses seed base_seed + i (train) or base_seed + i + 1000000
/// (test), so the two splits never share a seed. grid_nx/grid_ny give the
/// parameter-field resolution (for convection and Burgers only nx is used).
Dataset build_dataset(Problem problem, std::size_t size, std::uint64_t base_seed, Split split,
                      std::size_t grid_nx, std::size_t grid_ny,
                      const DatasetOptions& opts = {});

/// The per-instance seed rule exposed for manifest checks.
std::uint64_t dataset_instance_seed(std::uint64_t base_seed, std::size_t index, Split split);

} // namespace pdecl

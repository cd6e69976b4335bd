#pragma once

#include "pdecl/numerics.hpp"

#include <cstdint>

namespace pdecl {

enum class FieldKind { Diffusion, Wavespeed, InitialCondition };
enum class Interpolation { Nearest, Linear };

/// A sampled PDE-parameter function on a regular grid over [0,1] (1D) or
/// [0,1]^2 (2D), with an interpolation rule for off-grid lookups.
///
/// Layout: value(ix, iy) = values[ix * ny + iy]. 1D fields have ny == 1.
/// Periodic 1D fields sample x_i = i/nx (no duplicated endpoint); all others
/// sample x_i = i/(n-1) inclusive.
struct ParameterField {
    FieldKind kind = FieldKind::Wavespeed;
    Interpolation interpolation = Interpolation::Linear;
    std::size_t nx = 0;
    std::size_t ny = 1;
    bool periodic = false;
    DenseVector values;
    std::uint64_t seed = 0;

    bool is_2d() const { return ny > 1; }

    double at(std::size_t ix, std::size_t iy = 0) const { return values[ix * ny + iy]; }
    double& at(std::size_t ix, std::size_t iy = 0) { return values[ix * ny + iy]; }

    /// Interpolated lookup (1D fields ignore y). Coordinates are clamped to
    /// the domain for non-periodic fields and wrapped for periodic ones.
    double value_at(double x, double y = 0.0) const;

    double min_value() const;
    double max_value() const;

    /// Enforce the field-kind invariants (finite everywhere, positive
    /// diffusion, wavespeed >= 1). Throws InvalidInput on violation.
    void validate() const;
};

} // namespace pdecl

#include "pdecl/param_field.hpp"

#include "pdecl/errors.hpp"

#include <algorithm>
#include <cmath>

namespace pdecl {

namespace {

// Map x in [0,1] to a grid position for an inclusive grid of n points.
double grid_pos(double x, std::size_t n) {
    return std::clamp(x, 0.0, 1.0) * static_cast<double>(n - 1);
}

} // namespace

double ParameterField::value_at(double x, double y) const {
    if (values.empty()) throw InvalidInput("ParameterField: empty field");
    if (nx < 2) return values[0];

    if (!is_2d()) {
        if (periodic) {
            double u = x - std::floor(x); // wrap to [0,1)
            const double pos = u * static_cast<double>(nx);
            const std::size_t i0 = std::min<std::size_t>(static_cast<std::size_t>(pos), nx - 1);
            const std::size_t i1 = (i0 + 1) % nx;
            const double frac = pos - static_cast<double>(i0);
            if (interpolation == Interpolation::Nearest)
                return frac < 0.5 ? values[i0] : values[i1];
            return (1.0 - frac) * values[i0] + frac * values[i1];
        }
        const double pos = grid_pos(x, nx);
        const std::size_t i0 = std::min<std::size_t>(static_cast<std::size_t>(pos), nx - 2);
        const double frac = pos - static_cast<double>(i0);
        if (interpolation == Interpolation::Nearest)
            return frac < 0.5 ? values[i0] : values[i0 + 1];
        return (1.0 - frac) * values[i0] + frac * values[i0 + 1];
    }

    const double px = grid_pos(x, nx);
    const double py = grid_pos(y, ny);
    const std::size_t ix = std::min<std::size_t>(static_cast<std::size_t>(px), nx - 2);
    const std::size_t iy = std::min<std::size_t>(static_cast<std::size_t>(py), ny - 2);
    const double fx = px - static_cast<double>(ix);
    const double fy = py - static_cast<double>(iy);
    if (interpolation == Interpolation::Nearest) {
        const std::size_t jx = fx < 0.5 ? ix : ix + 1;
        const std::size_t jy = fy < 0.5 ? iy : iy + 1;
        return at(jx, jy);
    }
    return (1 - fx) * (1 - fy) * at(ix, iy) + fx * (1 - fy) * at(ix + 1, iy) +
           (1 - fx) * fy * at(ix, iy + 1) + fx * fy * at(ix + 1, iy + 1);
}

double ParameterField::min_value() const {
    return *std::min_element(values.begin(), values.end());
}

double ParameterField::max_value() const {
    return *std::max_element(values.begin(), values.end());
}

void ParameterField::validate() const {
    if (values.size() != nx * ny)
        throw InvalidInput("ParameterField: value count does not match grid shape");
    check_finite(values, "ParameterField values");
    if (kind == FieldKind::Diffusion && min_value() <= 0.0)
        throw InvalidInput("ParameterField: diffusion coefficient must be positive");
    if (kind == FieldKind::Wavespeed && min_value() < 1.0)
        throw InvalidInput("ParameterField: wavespeed must be >= 1");
}

} // namespace pdecl

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pdecl {

/// Piecewise-cubic interpolation of scattered 2D data: Delaunay
/// triangulation (Bowyer-Watson) with a cubic Bezier patch per triangle,
/// vertex gradients estimated by local least squares. Reproduces planes
/// exactly and interpolates the samples; queries outside the hull clamp to
/// the nearest sample's value.
class ScatteredCubic2D {
public:
    ScatteredCubic2D(std::span<const double> xs, std::span<const double> ys,
                     std::span<const double> values);

    double operator()(double x, double y) const;

    std::size_t triangle_count() const { return triangles_.size(); }

private:
    struct Triangle {
        std::size_t v[3];
        // Cubic Bezier control net (b300, b030, b003, b210, b201, b120,
        // b021, b102, b012, b111).
        double c[10];
    };

    bool barycentric(const Triangle& t, double x, double y, double& b1, double& b2,
                     double& b3) const;
    std::size_t nearest_sample(double x, double y) const;

    std::vector<double> px_, py_, val_;   // jittered coordinates, original values
    std::vector<double> qx_, qy_;         // original coordinates (exact-hit lookup)
    std::vector<Triangle> triangles_;

    // Uniform bucket grid over the point bounding box.
    std::size_t grid_dim_ = 1;
    double min_x_ = 0, min_y_ = 0, inv_cell_x_ = 1, inv_cell_y_ = 1;
    std::vector<std::vector<std::size_t>> tri_buckets_;
    std::vector<std::vector<std::size_t>> point_buckets_;
};

/// Natural cubic spline through (x_i, f_i); clamps to the end values outside
/// the data range.
class CubicSpline1D {
public:
    CubicSpline1D(std::span<const double> xs, std::span<const double> values);
    double operator()(double x) const;

private:
    std::vector<double> x_, f_, m_; // knots, values, second derivatives
};

} // namespace pdecl

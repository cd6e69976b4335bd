#include "pdecl/interp2d.hpp"

#include "pdecl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <unordered_map>

namespace pdecl {

namespace {

struct Tri {
    std::size_t a, b, c;
};

// Signed doubled area; positive for counterclockwise order.
inline double orient2d(double ax, double ay, double bx, double by, double cx, double cy) {
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
}

// p strictly inside the circumcircle of CCW triangle (a, b, c). Evaluated in
// extended precision: near-cocircular quadruples otherwise flip sign
// inconsistently and tear holes in the insertion cavity.
inline bool in_circumcircle(double ax, double ay, double bx, double by, double cx, double cy,
                            double px, double py) {
    const long double adx = (long double)ax - px, ady = (long double)ay - py;
    const long double bdx = (long double)bx - px, bdy = (long double)by - py;
    const long double cdx = (long double)cx - px, cdy = (long double)cy - py;
    const long double ad = adx * adx + ady * ady;
    const long double bd = bdx * bdx + bdy * bdy;
    const long double cd = cdx * cdx + cdy * cdy;
    const long double det = adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) +
                            ad * (bdx * cdy - bdy * cdx);
    return det > 0.0L;
}

// Deterministic jitter to break cocircular ties on gridded sample sets;
// small enough that the induced interpolation error stays below 1e-11 for
// O(1) gradients, large enough to dominate incircle-test rounding.
inline double jitter(std::size_t index, std::size_t salt) {
    std::uint64_t h = (index * 2654435761ull) ^ (salt * 0x9E3779B97F4A7C15ull);
    h ^= h >> 33;
    h *= 0xFF51AFD7ED558CCDull;
    h ^= h >> 33;
    return (static_cast<double>(h >> 11) * 0x1.0p-53 - 0.5) * 1e-12;
}

std::vector<Tri> delaunay(const std::vector<double>& px, const std::vector<double>& py) {
    const std::size_t n = px.size();

    double min_x = px[0], max_x = px[0], min_y = py[0], max_y = py[0];
    for (std::size_t i = 1; i < n; ++i) {
        min_x = std::min(min_x, px[i]);
        max_x = std::max(max_x, px[i]);
        min_y = std::min(min_y, py[i]);
        max_y = std::max(max_y, py[i]);
    }
    const double span = std::max({max_x - min_x, max_y - min_y, 1e-12});
    const double cx = 0.5 * (min_x + max_x), cy = 0.5 * (min_y + max_y);

    // Coordinates are extended with the three super-triangle vertices. They
    // must clear the circumcircles of flat sliver triangles along the hull,
    // which can be thousands of spans wide; the extended-precision incircle
    // test keeps the large-coordinate determinants sign-correct.
    const double far = 1e5 * span;
    std::vector<double> x(px), y(py);
    x.push_back(cx - far);
    y.push_back(cy - 0.5 * far);
    x.push_back(cx + far);
    y.push_back(cy - 0.5 * far);
    x.push_back(cx);
    y.push_back(cy + far);

    std::vector<Tri> tris{{n, n + 1, n + 2}};

    std::vector<std::size_t> bad;
    std::map<std::pair<std::size_t, std::size_t>, int> edge_count;
    for (std::size_t p = 0; p < n; ++p) {
        bad.clear();
        edge_count.clear();
        for (std::size_t t = 0; t < tris.size(); ++t) {
            const Tri& tr = tris[t];
            if (in_circumcircle(x[tr.a], y[tr.a], x[tr.b], y[tr.b], x[tr.c], y[tr.c], x[p],
                                y[p]))
                bad.push_back(t);
        }
        auto add_edge = [&](std::size_t u, std::size_t v) {
            edge_count[{std::min(u, v), std::max(u, v)}]++;
        };
        for (std::size_t t : bad) {
            add_edge(tris[t].a, tris[t].b);
            add_edge(tris[t].b, tris[t].c);
            add_edge(tris[t].c, tris[t].a);
        }
        // Remove bad triangles (descending order keeps indices valid).
        for (std::size_t i = bad.size(); i-- > 0;) {
            tris[bad[i]] = tris.back();
            tris.pop_back();
        }
        for (const auto& [edge, count] : edge_count) {
            if (count != 1) continue; // interior cavity edge
            Tri t{edge.first, edge.second, p};
            if (orient2d(x[t.a], y[t.a], x[t.b], y[t.b], x[t.c], y[t.c]) < 0.0)
                std::swap(t.b, t.c);
            tris.push_back(t);
        }
    }

    std::vector<Tri> out;
    for (const Tri& t : tris)
        if (t.a < n && t.b < n && t.c < n) out.push_back(t);
    return out;
}

} // namespace

ScatteredCubic2D::ScatteredCubic2D(std::span<const double> xs, std::span<const double> ys,
                                   std::span<const double> values) {
    const std::size_t n = xs.size();
    if (ys.size() != n || values.size() != n)
        throw InvalidInput("ScatteredCubic2D: length mismatch");
    if (n < 3) throw InvalidInput("ScatteredCubic2D: need at least 3 samples");

    qx_.assign(xs.begin(), xs.end());
    qy_.assign(ys.begin(), ys.end());
    val_.assign(values.begin(), values.end());

    // Reject coincident samples.
    {
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return qx_[a] != qx_[b] ? qx_[a] < qx_[b] : qy_[a] < qy_[b];
        });
        for (std::size_t i = 1; i < n; ++i)
            if (qx_[order[i]] == qx_[order[i - 1]] && qy_[order[i]] == qy_[order[i - 1]])
                throw InvalidInput("ScatteredCubic2D: coincident sample points");
    }

    px_.resize(n);
    py_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        px_[i] = qx_[i] + jitter(i, 1);
        py_[i] = qy_[i] + jitter(i, 2);
    }

    std::vector<Tri> tris = delaunay(px_, py_);
    if (tris.empty())
        throw InvalidInput("ScatteredCubic2D: degenerate (collinear) sample set");

    // Vertex gradients as angle-weighted averages of the incident triangles'
    // linear-interpolant gradients. A convex combination of exact gradients
    // stays exact for affine data, and the angle weight suppresses hull
    // slivers whose gradients are dominated by noise across their thickness.
    std::vector<double> gx(n, 0.0), gy(n, 0.0), gw(n, 0.0);
    for (const Tri& t : tris) {
        const double x0 = px_[t.a], y0 = py_[t.a];
        const double x1 = px_[t.b], y1 = py_[t.b];
        const double x2 = px_[t.c], y2 = py_[t.c];
        const double det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0);
        if (det == 0.0) continue;
        const double f0 = val_[t.a], f1 = val_[t.b], f2 = val_[t.c];
        const double tgx = ((f1 - f0) * (y2 - y0) - (f2 - f0) * (y1 - y0)) / det;
        const double tgy = ((f2 - f0) * (x1 - x0) - (f1 - f0) * (x2 - x0)) / det;
        const std::size_t vs[3] = {t.a, t.b, t.c};
        for (int k = 0; k < 3; ++k) {
            const std::size_t v = vs[k], u = vs[(k + 1) % 3], w = vs[(k + 2) % 3];
            const double ux = px_[u] - px_[v], uy = py_[u] - py_[v];
            const double wx = px_[w] - px_[v], wy = py_[w] - py_[v];
            const double angle = std::abs(std::atan2(ux * wy - uy * wx, ux * wx + uy * wy));
            gx[v] += angle * tgx;
            gy[v] += angle * tgy;
            gw[v] += angle;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (gw[i] > 0.0) {
            gx[i] /= gw[i];
            gy[i] /= gw[i];
        }
    }

    triangles_.reserve(tris.size());
    for (const Tri& t : tris) {
        Triangle tri;
        tri.v[0] = t.a;
        tri.v[1] = t.b;
        tri.v[2] = t.c;
        const double f0 = val_[t.a], f1 = val_[t.b], f2 = val_[t.c];
        auto dirder = [&](std::size_t from, std::size_t to) {
            return gx[from] * (px_[to] - px_[from]) + gy[from] * (py_[to] - py_[from]);
        };
        tri.c[0] = f0;                               // b300
        tri.c[1] = f1;                               // b030
        tri.c[2] = f2;                               // b003
        tri.c[3] = f0 + dirder(t.a, t.b) / 3.0;      // b210
        tri.c[4] = f0 + dirder(t.a, t.c) / 3.0;      // b201
        tri.c[5] = f1 + dirder(t.b, t.a) / 3.0;      // b120
        tri.c[6] = f1 + dirder(t.b, t.c) / 3.0;      // b021
        tri.c[7] = f2 + dirder(t.c, t.a) / 3.0;      // b102
        tri.c[8] = f2 + dirder(t.c, t.b) / 3.0;      // b012
        // Interior control point with quadratic precision.
        tri.c[9] = (tri.c[3] + tri.c[4] + tri.c[5] + tri.c[6] + tri.c[7] + tri.c[8]) / 4.0 -
                   (f0 + f1 + f2) / 6.0;
        triangles_.push_back(tri);
    }

    // Bucket grids for point location and nearest-sample fallback.
    double min_x = px_[0], max_x = px_[0], min_y = py_[0], max_y = py_[0];
    for (std::size_t i = 1; i < n; ++i) {
        min_x = std::min(min_x, px_[i]);
        max_x = std::max(max_x, px_[i]);
        min_y = std::min(min_y, py_[i]);
        max_y = std::max(max_y, py_[i]);
    }
    grid_dim_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(double(n))));
    min_x_ = min_x;
    min_y_ = min_y;
    const double ext_x = std::max(max_x - min_x, 1e-12);
    const double ext_y = std::max(max_y - min_y, 1e-12);
    inv_cell_x_ = static_cast<double>(grid_dim_) / ext_x;
    inv_cell_y_ = static_cast<double>(grid_dim_) / ext_y;
    tri_buckets_.assign(grid_dim_ * grid_dim_, {});
    point_buckets_.assign(grid_dim_ * grid_dim_, {});

    auto cell_of = [&](double x, double y) {
        auto cx = static_cast<long>((x - min_x_) * inv_cell_x_);
        auto cy = static_cast<long>((y - min_y_) * inv_cell_y_);
        cx = std::clamp<long>(cx, 0, static_cast<long>(grid_dim_) - 1);
        cy = std::clamp<long>(cy, 0, static_cast<long>(grid_dim_) - 1);
        return std::pair<long, long>(cx, cy);
    };

    for (std::size_t t = 0; t < triangles_.size(); ++t) {
        const Triangle& tr = triangles_[t];
        double lo_x = px_[tr.v[0]], hi_x = lo_x, lo_y = py_[tr.v[0]], hi_y = lo_y;
        for (int k = 1; k < 3; ++k) {
            lo_x = std::min(lo_x, px_[tr.v[k]]);
            hi_x = std::max(hi_x, px_[tr.v[k]]);
            lo_y = std::min(lo_y, py_[tr.v[k]]);
            hi_y = std::max(hi_y, py_[tr.v[k]]);
        }
        auto [c0x, c0y] = cell_of(lo_x, lo_y);
        auto [c1x, c1y] = cell_of(hi_x, hi_y);
        for (long ix = c0x; ix <= c1x; ++ix)
            for (long iy = c0y; iy <= c1y; ++iy)
                tri_buckets_[static_cast<std::size_t>(ix) * grid_dim_ +
                             static_cast<std::size_t>(iy)]
                    .push_back(t);
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto [cx, cy] = cell_of(px_[i], py_[i]);
        point_buckets_[static_cast<std::size_t>(cx) * grid_dim_ + static_cast<std::size_t>(cy)]
            .push_back(i);
    }
}

bool ScatteredCubic2D::barycentric(const Triangle& t, double x, double y, double& b1,
                                   double& b2, double& b3) const {
    const double x0 = px_[t.v[0]], y0 = py_[t.v[0]];
    const double x1 = px_[t.v[1]], y1 = py_[t.v[1]];
    const double x2 = px_[t.v[2]], y2 = py_[t.v[2]];
    const double det = (y1 - y2) * (x0 - x2) + (x2 - x1) * (y0 - y2);
    if (det == 0.0) return false;
    b1 = ((y1 - y2) * (x - x2) + (x2 - x1) * (y - y2)) / det;
    b2 = ((y2 - y0) * (x - x2) + (x0 - x2) * (y - y2)) / det;
    b3 = 1.0 - b1 - b2;
    // Tolerance comfortably above the construction jitter so hull-edge
    // queries do not slip between triangles.
    const double tol = -1e-6;
    return b1 >= tol && b2 >= tol && b3 >= tol;
}

std::size_t ScatteredCubic2D::nearest_sample(double x, double y) const {
    auto cx = std::clamp<long>(static_cast<long>((x - min_x_) * inv_cell_x_), 0,
                               static_cast<long>(grid_dim_) - 1);
    auto cy = std::clamp<long>(static_cast<long>((y - min_y_) * inv_cell_y_), 0,
                               static_cast<long>(grid_dim_) - 1);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    const long dim = static_cast<long>(grid_dim_);
    for (long ring = 0; ring < dim; ++ring) {
        bool found_this_ring = false;
        for (long ix = std::max<long>(0, cx - ring); ix <= std::min(dim - 1, cx + ring); ++ix)
            for (long iy = std::max<long>(0, cy - ring); iy <= std::min(dim - 1, cy + ring);
                 ++iy) {
                if (std::max(std::abs(ix - cx), std::abs(iy - cy)) != ring) continue;
                for (std::size_t i :
                     point_buckets_[static_cast<std::size_t>(ix) * grid_dim_ +
                                    static_cast<std::size_t>(iy)]) {
                    const double d =
                        (px_[i] - x) * (px_[i] - x) + (py_[i] - y) * (py_[i] - y);
                    if (d < best_d) {
                        best_d = d;
                        best = i;
                        found_this_ring = true;
                    }
                }
            }
        // One extra ring after the first hit covers diagonal cases.
        if (found_this_ring && ring >= 1) break;
    }
    return best;
}

double ScatteredCubic2D::operator()(double x, double y) const {
    const long cx = std::clamp<long>(static_cast<long>((x - min_x_) * inv_cell_x_), 0,
                                     static_cast<long>(grid_dim_) - 1);
    const long cy = std::clamp<long>(static_cast<long>((y - min_y_) * inv_cell_y_), 0,
                                     static_cast<long>(grid_dim_) - 1);

    // Exact sample hit returns the sample value (3x3 neighborhood: jitter may
    // shift a sample across a bucket edge).
    const long dim = static_cast<long>(grid_dim_);
    for (long ix = std::max<long>(0, cx - 1); ix <= std::min(dim - 1, cx + 1); ++ix)
        for (long iy = std::max<long>(0, cy - 1); iy <= std::min(dim - 1, cy + 1); ++iy)
            for (std::size_t i : point_buckets_[static_cast<std::size_t>(ix) * grid_dim_ +
                                                static_cast<std::size_t>(iy)]) {
                if (qx_[i] == x && qy_[i] == y) return val_[i];
            }
    for (std::size_t t : tri_buckets_[static_cast<std::size_t>(cx) * grid_dim_ +
                                      static_cast<std::size_t>(cy)]) {
        double b1, b2, b3;
        if (!barycentric(triangles_[t], x, y, b1, b2, b3)) continue;
        const double* c = triangles_[t].c;
        return c[0] * b1 * b1 * b1 + c[1] * b2 * b2 * b2 + c[2] * b3 * b3 * b3 +
               3.0 * (c[3] * b1 * b1 * b2 + c[4] * b1 * b1 * b3 + c[5] * b1 * b2 * b2 +
                      c[6] * b2 * b2 * b3 + c[7] * b1 * b3 * b3 + c[8] * b2 * b3 * b3) +
               6.0 * c[9] * b1 * b2 * b3;
    }

    // Outside the hull (or in a sliver gap): clamp to the nearest sample.
    return val_[nearest_sample(x, y)];
}

CubicSpline1D::CubicSpline1D(std::span<const double> xs, std::span<const double> values) {
    const std::size_t n = xs.size();
    if (values.size() != n) throw InvalidInput("CubicSpline1D: length mismatch");
    if (n < 2) throw InvalidInput("CubicSpline1D: need at least 2 knots");

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return xs[a] < xs[b];
    });
    x_.resize(n);
    f_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        x_[i] = xs[order[i]];
        f_[i] = values[order[i]];
    }
    for (std::size_t i = 1; i < n; ++i)
        if (x_[i] == x_[i - 1]) throw InvalidInput("CubicSpline1D: coincident knots");

    // Natural spline: tridiagonal system for second derivatives.
    m_.assign(n, 0.0);
    if (n > 2) {
        std::vector<double> a(n, 0.0), b(n, 0.0), c(n, 0.0), d(n, 0.0);
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double h0 = x_[i] - x_[i - 1], h1 = x_[i + 1] - x_[i];
            a[i] = h0 / 6.0;
            b[i] = (h0 + h1) / 3.0;
            c[i] = h1 / 6.0;
            d[i] = (f_[i + 1] - f_[i]) / h1 - (f_[i] - f_[i - 1]) / h0;
        }
        for (std::size_t i = 2; i + 1 < n; ++i) {
            const double w = a[i] / b[i - 1];
            b[i] -= w * c[i - 1];
            d[i] -= w * d[i - 1];
        }
        for (std::size_t i = n - 2; i >= 1; --i) {
            m_[i] = (d[i] - c[i] * m_[i + 1]) / b[i];
            if (i == 1) break;
        }
    }
}

double CubicSpline1D::operator()(double x) const {
    if (x <= x_.front()) return f_.front();
    if (x >= x_.back()) return f_.back();
    const auto it = std::upper_bound(x_.begin(), x_.end(), x);
    const std::size_t i = static_cast<std::size_t>(it - x_.begin()) - 1;
    const double h = x_[i + 1] - x_[i];
    const double t0 = (x_[i + 1] - x) / h, t1 = (x - x_[i]) / h;
    return t0 * f_[i] + t1 * f_[i + 1] +
           ((t0 * t0 * t0 - t0) * m_[i] + (t1 * t1 * t1 - t1) * m_[i + 1]) * h * h / 6.0;
}

} // namespace pdecl

#include "pdecl/pde_operators.hpp"

#include "pdecl/errors.hpp"
#include "pdecl/rng.hpp"

#include <cmath>

namespace pdecl {

namespace {

void require_in_unit_square(const std::vector<Point>& pts, const char* what) {
    for (const Point& p : pts)
        if (p.x < 0.0 || p.x > 1.0 || p.y < 0.0 || p.y > 1.0)
            throw InvalidInput(std::string(what) + ": point outside [0,1]^2");
}

} // namespace

std::vector<Point> sample_points(std::size_t n, std::uint64_t seed, Stratum stratum) {
    if (n == 0) throw InvalidInput("sample_points: n must be >= 1");
    Rng rng(seed);
    std::vector<Point> pts;
    pts.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        switch (stratum) {
        case Stratum::Interior: pts.push_back({rng.uniform(), rng.uniform()}); break;
        case Stratum::Initial: pts.push_back({rng.uniform(), 0.0}); break;
        case Stratum::Boundary: pts.push_back({0.0, rng.uniform()}); break;
        }
    }
    return pts;
}

SamplePlan make_sample_plan(Problem problem, std::size_t n_fit, std::size_t n_loss,
                            std::size_t n_icbc, std::uint64_t seed) {
    SamplePlan plan;
    plan.seed = seed;
    plan.fit_points = sample_points(n_fit, derive_seed(seed, 0), Stratum::Interior);
    plan.loss_points = sample_points(n_loss, derive_seed(seed, 1), Stratum::Interior);
    if (n_icbc > 0) {
        switch (problem) {
        case Problem::Convection: {
            const std::size_t n_bc = n_icbc / 2;
            const std::size_t n_ic = n_icbc - n_bc;
            plan.icbc_points = sample_points(n_ic, derive_seed(seed, 2), Stratum::Initial);
            if (n_bc > 0) {
                auto bc = sample_points(n_bc, derive_seed(seed, 3), Stratum::Boundary);
                plan.icbc_points.insert(plan.icbc_points.end(), bc.begin(), bc.end());
            }
            break;
        }
        case Problem::Burgers:
            plan.icbc_points = sample_points(n_icbc, derive_seed(seed, 2), Stratum::Initial);
            break;
        case Problem::Darcy:
            break; // boundary handled by the mollifier
        }
    }
    return plan;
}

std::pair<DenseMatrix, DenseVector> ConstraintSystem::stacked() const {
    DenseMatrix A = matrix;
    DenseVector b = rhs;
    if (icbc_matrix.rows() > 0) {
        A.append_rows(icbc_matrix);
        b.insert(b.end(), icbc_rhs.begin(), icbc_rhs.end());
    }
    return {std::move(A), std::move(b)};
}

double RowFunctional::apply(const JetBundle& jet, std::size_t i) const {
    double s = value * jet.values[i];
    if (dx != 0.0) s += dx * jet.first[0][i];
    if (dy != 0.0) s += dy * jet.first[1][i];
    if (dxx != 0.0) s += dxx * jet.second[0][i];
    if (dyy != 0.0) s += dyy * jet.second[1][i];
    return s;
}

void RowFunctional::fill_row(const JetBundle& jet, std::span<double> row) const {
    const std::size_t n = jet.values.size();
    for (std::size_t i = 0; i < n; ++i) row[i] = value * jet.values[i];
    if (dx != 0.0)
        for (std::size_t i = 0; i < n; ++i) row[i] += dx * jet.first[0][i];
    if (dy != 0.0)
        for (std::size_t i = 0; i < n; ++i) row[i] += dy * jet.first[1][i];
    if (dxx != 0.0)
        for (std::size_t i = 0; i < n; ++i) row[i] += dxx * jet.second[0][i];
    if (dyy != 0.0)
        for (std::size_t i = 0; i < n; ++i) row[i] += dyy * jet.second[1][i];
}

void RowFunctional::accumulate_adjoint(std::span<const double> cot_row, JetBundle& adj) const {
    const std::size_t n = adj.values.size();
    if (value != 0.0)
        for (std::size_t i = 0; i < n; ++i) adj.values[i] += value * cot_row[i];
    if (dx != 0.0)
        for (std::size_t i = 0; i < n; ++i) adj.first[0][i] += dx * cot_row[i];
    if (dy != 0.0)
        for (std::size_t i = 0; i < n; ++i) adj.first[1][i] += dy * cot_row[i];
    if (dxx != 0.0)
        for (std::size_t i = 0; i < n; ++i) adj.second[0][i] += dxx * cot_row[i];
    if (dyy != 0.0)
        for (std::size_t i = 0; i < n; ++i) adj.second[1][i] += dyy * cot_row[i];
}

RowFunctional convection_row(double beta_at_point) {
    RowFunctional f;
    f.dy = 1.0; // u_t
    f.dx = beta_at_point;
    return f;
}

RowFunctional value_row() {
    RowFunctional f;
    f.value = 1.0;
    return f;
}

RowFunctional darcy_row_mollified(double nu, double gnu_x, double gnu_y) {
    RowFunctional f;
    f.dxx = -nu;
    f.dyy = -nu;
    f.dx = -gnu_x;
    f.dy = -gnu_y;
    return f;
}

namespace {

// sin(pi * x) with exact zeros at x = 0 and x = 1 (std::sin(pi) is only
// ~1e-16), so mollified values vanish identically on the boundary.
double sin_pi(double x) {
    if (x == 0.0 || x == 1.0) return 0.0;
    return std::sin(kPi * x);
}

struct Mollifier {
    double m, mx, my, mxx, myy;
    explicit Mollifier(Point pt) {
        const double sx = sin_pi(pt.x), cx = std::cos(kPi * pt.x);
        const double sy = sin_pi(pt.y), cy = std::cos(kPi * pt.y);
        m = sx * sy;
        mx = kPi * cx * sy;
        my = kPi * sx * cy;
        mxx = -kPi * kPi * m;
        myy = -kPi * kPi * m;
    }
};

} // namespace

double mollifier_value(Point pt) {
    return sin_pi(pt.x) * sin_pi(pt.y);
}

RowFunctional darcy_row_raw(double nu, double gnu_x, double gnu_y, Point pt) {
    const Mollifier mol(pt);
    const RowFunctional g = darcy_row_mollified(nu, gnu_x, gnu_y);
    RowFunctional f;
    f.value = g.dxx * mol.mxx + g.dyy * mol.myy + g.dx * mol.mx + g.dy * mol.my;
    f.dx = g.dx * mol.m + 2.0 * mol.mx * g.dxx;
    f.dy = g.dy * mol.m + 2.0 * mol.my * g.dyy;
    f.dxx = g.dxx * mol.m;
    f.dyy = g.dyy * mol.m;
    return f;
}

JetBundle mollify(const JetBundle& jet, Point pt) {
    if (jet.order != 2 || jet.first.size() < 2 || jet.second.size() < 2)
        throw InvalidInput("mollify: need an order-2 jet with x and y seeds");
    const Mollifier mol(pt);
    const std::size_t n = jet.values.size();
    JetBundle out;
    out.order = 2;
    out.values.resize(n);
    out.first = {DenseVector(n), DenseVector(n)};
    out.second = {DenseVector(n), DenseVector(n)};
    for (std::size_t i = 0; i < n; ++i) {
        const double v = jet.values[i];
        const double fx = jet.first[0][i], fy = jet.first[1][i];
        const double fxx = jet.second[0][i], fyy = jet.second[1][i];
        out.values[i] = mol.m * v;
        out.first[0][i] = mol.mx * v + mol.m * fx;
        out.first[1][i] = mol.my * v + mol.m * fy;
        out.second[0][i] = mol.mxx * v + 2.0 * mol.mx * fx + mol.m * fxx;
        out.second[1][i] = mol.myy * v + 2.0 * mol.my * fy + mol.m * fyy;
    }
    return out;
}

VectorField coefficient_gradient(const ParameterField& nu, double smoothing_radius) {
    if (!nu.is_2d() || nu.nx < 3 || nu.ny < 3)
        throw InvalidInput("coefficient_gradient: need a grid of at least 3x3");

    const std::size_t nx = nu.nx, ny = nu.ny;

    // Separable Gaussian smoothing truncated at the radius (in grid cells),
    // so a jump's smeared gradient stays within radius+1 cells.
    DenseVector smooth = nu.values;
    if (smoothing_radius > 0.0) {
        const int half = std::max(1, static_cast<int>(std::ceil(smoothing_radius)));
        DenseVector kernel(2 * half + 1);
        double ksum = 0.0;
        for (int k = -half; k <= half; ++k) {
            kernel[k + half] = std::exp(-0.5 * (k / smoothing_radius) * (k / smoothing_radius));
            ksum += kernel[k + half];
        }
        for (double& k : kernel) k /= ksum;

        DenseVector tmp(nx * ny);
        for (std::size_t ix = 0; ix < nx; ++ix)
            for (std::size_t iy = 0; iy < ny; ++iy) {
                double s = 0.0;
                for (int k = -half; k <= half; ++k) {
                    const long jx = std::clamp<long>(static_cast<long>(ix) + k, 0, static_cast<long>(nx) - 1);
                    s += kernel[k + half] * nu.values[static_cast<std::size_t>(jx) * ny + iy];
                }
                tmp[ix * ny + iy] = s;
            }
        for (std::size_t ix = 0; ix < nx; ++ix)
            for (std::size_t iy = 0; iy < ny; ++iy) {
                double s = 0.0;
                for (int k = -half; k <= half; ++k) {
                    const long jy = std::clamp<long>(static_cast<long>(iy) + k, 0, static_cast<long>(ny) - 1);
                    s += kernel[k + half] * tmp[ix * ny + static_cast<std::size_t>(jy)];
                }
                smooth[ix * ny + iy] = s;
            }
    }

    const double hx = 1.0 / static_cast<double>(nx - 1);
    const double hy = 1.0 / static_cast<double>(ny - 1);
    VectorField grad;
    for (ParameterField* f : {&grad.x_component, &grad.y_component}) {
        f->kind = nu.kind;
        f->interpolation = Interpolation::Linear;
        f->nx = nx;
        f->ny = ny;
        f->values.assign(nx * ny, 0.0);
        f->seed = nu.seed;
    }
    auto s_at = [&](std::size_t ix, std::size_t iy) { return smooth[ix * ny + iy]; };
    for (std::size_t ix = 0; ix < nx; ++ix)
        for (std::size_t iy = 0; iy < ny; ++iy) {
            double gx, gy;
            if (ix == 0)
                gx = (s_at(1, iy) - s_at(0, iy)) / hx;
            else if (ix == nx - 1)
                gx = (s_at(nx - 1, iy) - s_at(nx - 2, iy)) / hx;
            else
                gx = (s_at(ix + 1, iy) - s_at(ix - 1, iy)) / (2.0 * hx);
            if (iy == 0)
                gy = (s_at(ix, 1) - s_at(ix, 0)) / hy;
            else if (iy == ny - 1)
                gy = (s_at(ix, ny - 1) - s_at(ix, ny - 2)) / hy;
            else
                gy = (s_at(ix, iy + 1) - s_at(ix, iy - 1)) / (2.0 * hy);
            grad.x_component.values[ix * ny + iy] = gx;
            grad.y_component.values[ix * ny + iy] = gy;
        }
    return grad;
}

ConstraintSystem assemble_convection(const ParameterField& beta, const SamplePlan& plan,
                                     std::span<const JetBundle> interior_jets,
                                     std::span<const JetBundle> icbc_jets) {
    require_in_unit_square(plan.fit_points, "assemble_convection");
    require_in_unit_square(plan.icbc_points, "assemble_convection");
    if (interior_jets.size() != plan.fit_points.size())
        throw InvalidInput("assemble_convection: jet count mismatch");
    if (icbc_jets.size() != plan.icbc_points.size())
        throw InvalidInput("assemble_convection: icbc jet count mismatch");

    const std::size_t n = plan.fit_points.size();
    const std::size_t width = n > 0 ? interior_jets[0].values.size()
                                    : (icbc_jets.empty() ? 0 : icbc_jets[0].values.size());

    ConstraintSystem sys;
    sys.points = plan.fit_points;
    sys.icbc_points = plan.icbc_points;
    sys.matrix = DenseMatrix(n, width);
    sys.rhs.assign(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        const RowFunctional row = convection_row(beta.value_at(plan.fit_points[j].x));
        row.fill_row(interior_jets[j], sys.matrix.row(j));
    }

    const std::size_t m = plan.icbc_points.size();
    sys.icbc_matrix = DenseMatrix(m, width);
    sys.icbc_rhs.assign(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
        value_row().fill_row(icbc_jets[j], sys.icbc_matrix.row(j));
        const Point p = plan.icbc_points[j];
        sys.icbc_rhs[j] = p.y == 0.0 ? convection_initial(p.x) : convection_boundary(p.y);
    }
    return sys;
}

ConstraintSystem assemble_darcy(const ParameterField& nu, const VectorField& grad_nu,
                                const SamplePlan& plan,
                                std::span<const JetBundle> mollified_jets) {
    require_in_unit_square(plan.fit_points, "assemble_darcy");
    if (mollified_jets.size() != plan.fit_points.size())
        throw InvalidInput("assemble_darcy: jet count mismatch");

    const std::size_t n = plan.fit_points.size();
    const std::size_t width = n > 0 ? mollified_jets[0].values.size() : 0;
    ConstraintSystem sys;
    sys.points = plan.fit_points;
    sys.matrix = DenseMatrix(n, width);
    sys.rhs.assign(n, 1.0); // constant forcing
    for (std::size_t j = 0; j < n; ++j) {
        const Point p = plan.fit_points[j];
        const double nu_p = nu.value_at(p.x, p.y);
        if (nu_p <= 0.0) throw InvalidInput("assemble_darcy: non-positive diffusion sample");
        const RowFunctional row = darcy_row_mollified(
            nu_p, grad_nu.x_component.value_at(p.x, p.y), grad_nu.y_component.value_at(p.x, p.y));
        row.fill_row(mollified_jets[j], sys.matrix.row(j));
    }
    return sys;
}

ConstraintSystem assemble_darcy_raw(const ParameterField& nu, const VectorField& grad_nu,
                                    const SamplePlan& plan,
                                    std::span<const JetBundle> raw_jets) {
    // Assembles through the mollifier-composed row functional; identical to
    // mollifying the jets first, and the exact transpose of the adjoint path.
    require_in_unit_square(plan.fit_points, "assemble_darcy");
    if (raw_jets.size() != plan.fit_points.size())
        throw InvalidInput("assemble_darcy: jet count mismatch");

    const std::size_t n = plan.fit_points.size();
    const std::size_t width = n > 0 ? raw_jets[0].values.size() : 0;
    ConstraintSystem sys;
    sys.points = plan.fit_points;
    sys.matrix = DenseMatrix(n, width);
    sys.rhs.assign(n, 1.0);
    for (std::size_t j = 0; j < n; ++j) {
        const Point p = plan.fit_points[j];
        const double nu_p = nu.value_at(p.x, p.y);
        if (nu_p <= 0.0) throw InvalidInput("assemble_darcy: non-positive diffusion sample");
        const RowFunctional row = darcy_row_raw(
            nu_p, grad_nu.x_component.value_at(p.x, p.y),
            grad_nu.y_component.value_at(p.x, p.y), p);
        row.fill_row(raw_jets[j], sys.matrix.row(j));
    }
    return sys;
}

BurgersSystem burgers_residual_and_jacobian(const DenseVector& omega,
                                            std::span<const JetBundle> interior_jets,
                                            std::span<const JetBundle> ic_jets,
                                            const ParameterField& u0, double viscosity,
                                            const SamplePlan& plan) {
    if (!(viscosity > 0.0)) throw InvalidInput("burgers: viscosity must be positive");
    if (interior_jets.size() != plan.fit_points.size())
        throw InvalidInput("burgers: jet count mismatch");
    if (ic_jets.size() != plan.icbc_points.size())
        throw InvalidInput("burgers: ic jet count mismatch");

    const std::size_t n_int = interior_jets.size();
    const std::size_t n_ic = ic_jets.size();
    const std::size_t width = omega.size();

    BurgersSystem sys;
    sys.interior_rows = n_int;
    sys.residual.assign(n_int + n_ic, 0.0);
    sys.jacobian = DenseMatrix(n_int + n_ic, width);

    for (std::size_t j = 0; j < n_int; ++j) {
        const JetBundle& jet = interior_jets[j];
        if (jet.values.size() != width)
            throw InvalidInput("burgers: omega length does not match basis width");
        const double u = dot(jet.values, omega);
        const double ux = dot(jet.first[0], omega);
        const double ut = dot(jet.first[1], omega);
        const double uxx = dot(jet.second[0], omega);
        sys.residual[j] = ut + u * ux - viscosity * uxx;
        auto row = sys.jacobian.row(j);
        for (std::size_t i = 0; i < width; ++i)
            row[i] = jet.first[1][i] + u * jet.first[0][i] + ux * jet.values[i] -
                     viscosity * jet.second[0][i];
    }
    for (std::size_t j = 0; j < n_ic; ++j) {
        const JetBundle& jet = ic_jets[j];
        const double u = dot(jet.values, omega);
        sys.residual[n_int + j] = u - u0.value_at(plan.icbc_points[j].x);
        auto row = sys.jacobian.row(n_int + j);
        for (std::size_t i = 0; i < width; ++i) row[i] = jet.values[i];
    }
    return sys;
}

std::vector<JetBundle> problem_jets(const NetworkParams& params, Problem problem,
                                    const ParameterField& phi, std::span<const Point> pts,
                                    const EncodingConfig& cfg, int order) {
    std::vector<JetBundle> jets;
    jets.reserve(pts.size());
    JetTape tape;
    for (const Point& p : pts) {
        EncodedPoint enc = encode_point(problem, phi, p, cfg);
        jets.push_back(eval_jet_recording(params, enc.input,
                                          order > 0 ? enc.seeds : std::vector<DerivSeed>{},
                                          order, tape));
    }
    return jets;
}

} // namespace pdecl

#include "pdecl/fields.hpp"

#include "pdecl/errors.hpp"
#include "pdecl/rng.hpp"

#include <algorithm>
#include <cmath>

namespace pdecl {

ParameterField sample_grf_1d(const GrfSpec& spec) {
    if (spec.nx < 4) throw InvalidInput("sample_grf_1d: need at least 4 grid points");
    if (!(spec.length_scale > 0.0)) throw InvalidInput("sample_grf_1d: length scale must be positive");

    const std::size_t n = spec.nx;
    DenseMatrix K(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double d = (static_cast<double>(i) - static_cast<double>(j)) /
                             static_cast<double>(n - 1);
            K(i, j) = std::exp(-0.5 * d * d / (spec.length_scale * spec.length_scale));
        }
    for (std::size_t i = 0; i < n; ++i) K(i, i) += spec.jitter;

    if (!cholesky_in_place(K))
        throw ConfigError("sample_grf_1d: covariance not positive definite after jitter");

    Rng rng(spec.seed);
    DenseVector xi(n);
    for (double& v : xi) v = rng.normal();

    ParameterField field;
    field.kind = FieldKind::InitialCondition;
    field.interpolation = Interpolation::Linear;
    field.nx = n;
    field.ny = 1;
    field.seed = spec.seed;
    field.values.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j <= i; ++j) s += K(i, j) * xi[j];
        field.values[i] = s;
    }
    return field;
}

ParameterField make_beta(const ParameterField& v) {
    check_finite(v.values, "make_beta input");
    ParameterField beta = v;
    beta.kind = FieldKind::Wavespeed;
    const double vmin = v.min_value();
    for (double& x : beta.values) x = x - vmin + 1.0;
    return beta;
}

ParameterField sample_darcy_coefficients(const GrfSpec& spec, double high, double low) {
    if (!(high > low) || !(low > 0.0))
        throw InvalidInput("sample_darcy_coefficients: need high > low > 0");
    if (spec.nx < 4 || spec.ny < 4)
        throw InvalidInput("sample_darcy_coefficients: need at least a 4x4 grid");

    const std::size_t nx = spec.nx, ny = spec.ny;
    const std::size_t kx = std::min<std::size_t>(nx - 1, 64);
    const std::size_t ky = std::min<std::size_t>(ny - 1, 64);

    // Mode coefficients xi_jk * sqrt(lambda_jk), drawn in a fixed order.
    Rng rng(spec.seed);
    DenseMatrix coef(kx, ky);
    for (std::size_t j = 0; j < kx; ++j)
        for (std::size_t k = 0; k < ky; ++k) {
            const double j1 = static_cast<double>(j + 1), k1 = static_cast<double>(k + 1);
            const double amp = 1.0 / ((j1 * j1 + k1 * k1) * kPi * kPi + 9.0);
            coef(j, k) = 2.0 * amp * rng.normal();
        }

    // Separable sine synthesis: field = Sx * coef * Sy^T.
    DenseMatrix sx(nx, kx), sy(ny, ky);
    for (std::size_t i = 0; i < nx; ++i)
        for (std::size_t j = 0; j < kx; ++j)
            sx(i, j) = std::sin(static_cast<double>(j + 1) * kPi * static_cast<double>(i) /
                                static_cast<double>(nx - 1));
    for (std::size_t i = 0; i < ny; ++i)
        for (std::size_t k = 0; k < ky; ++k)
            sy(i, k) = std::sin(static_cast<double>(k + 1) * kPi * static_cast<double>(i) /
                                static_cast<double>(ny - 1));

    DenseMatrix mid(kx, ny); // coef * Sy^T
    for (std::size_t j = 0; j < kx; ++j)
        for (std::size_t i = 0; i < ny; ++i) {
            double s = 0.0;
            for (std::size_t k = 0; k < ky; ++k) s += coef(j, k) * sy(i, k);
            mid(j, i) = s;
        }

    ParameterField field;
    field.kind = FieldKind::Diffusion;
    field.interpolation = Interpolation::Nearest;
    field.nx = nx;
    field.ny = ny;
    field.seed = spec.seed;
    field.values.assign(nx * ny, 0.0);
    for (std::size_t i = 0; i < nx; ++i)
        for (std::size_t l = 0; l < ny; ++l) {
            double s = 0.0;
            for (std::size_t j = 0; j < kx; ++j) s += sx(i, j) * mid(j, l);
            field.values[i * ny + l] = s >= 0.0 ? high : low;
        }
    return field;
}

ParameterField sample_burgers_ic(const GrfSpec& spec) {
    if (spec.nx < 4) throw InvalidInput("sample_burgers_ic: need at least 4 grid points");
    const std::size_t n = spec.nx;
    const std::size_t kmax = n / 2;

    Rng rng(spec.seed);
    DenseVector amp_cos(kmax), amp_sin(kmax);
    for (std::size_t k = 1; k <= kmax; ++k) {
        const double lam = 25.0 / (4.0 * kPi * kPi * static_cast<double>(k * k) + 25.0);
        amp_cos[k - 1] = lam * rng.normal();
        amp_sin[k - 1] = lam * rng.normal();
    }

    ParameterField field;
    field.kind = FieldKind::InitialCondition;
    field.interpolation = Interpolation::Linear;
    field.periodic = true;
    field.nx = n;
    field.ny = 1;
    field.seed = spec.seed;
    field.values.assign(n, 0.0);
    const double sqrt2 = std::sqrt(2.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = static_cast<double>(i) / static_cast<double>(n);
        double s = 0.0;
        for (std::size_t k = 1; k <= kmax; ++k) {
            const double w = 2.0 * kPi * static_cast<double>(k) * x;
            s += sqrt2 * (amp_cos[k - 1] * std::cos(w) + amp_sin[k - 1] * std::sin(w));
        }
        field.values[i] = s;
    }
    return field;
}

std::string to_string(Split s) { return s == Split::Train ? "train" : "test"; }

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "test") return Split::Test;
    throw ConfigError("unknown split tag: " + s);
}

std::uint64_t dataset_instance_seed(std::uint64_t base_seed, std::size_t index, Split split) {
    return base_seed + index + (split == Split::Test ? 1000000ull : 0ull);
}

Dataset build_dataset(Problem problem, std::size_t size, std::uint64_t base_seed, Split split,
                      std::size_t grid_nx, std::size_t grid_ny, const DatasetOptions& opts) {
    if (size == 0) throw InvalidInput("build_dataset: size must be >= 1");

    Dataset ds;
    ds.problem = problem;
    ds.split = split;
    ds.parameter_fields.reserve(size);
    ds.seeds.reserve(size);

    for (std::size_t i = 0; i < size; ++i) {
        const std::uint64_t seed = dataset_instance_seed(base_seed, i, split);
        GrfSpec spec;
        spec.seed = seed;
        spec.length_scale = opts.length_scale;
        switch (problem) {
        case Problem::Convection: {
            spec.dimension = 1;
            spec.nx = grid_nx;
            ds.parameter_fields.push_back(make_beta(sample_grf_1d(spec)));
            break;
        }
        case Problem::Darcy: {
            spec.dimension = 2;
            spec.nx = grid_nx;
            spec.ny = grid_ny;
            ds.parameter_fields.push_back(
                sample_darcy_coefficients(spec, opts.darcy_high, opts.darcy_low));
            break;
        }
        case Problem::Burgers: {
            spec.dimension = 1;
            spec.nx = grid_nx;
            ds.parameter_fields.push_back(sample_burgers_ic(spec));
            break;
        }
        }
        ds.seeds.push_back(seed);
    }
    return ds;
}

} // namespace pdecl

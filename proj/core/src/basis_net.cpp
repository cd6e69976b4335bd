#include "pdecl/basis_net.hpp"

#include "pdecl/errors.hpp"
#include "pdecl/rng.hpp"

#include <algorithm>
#include <cmath>

namespace pdecl {

namespace {

// tanh derivative chain evaluated from t = tanh(z):
//   s1 = 1 - t^2,  s2 = -2 t s1,  s3 = s1 (6 t^2 - 2)
inline void tanh_derivs(double t, double& s1, double& s2, double& s3) {
    s1 = 1.0 - t * t;
    s2 = -2.0 * t * s1;
    s3 = s1 * (6.0 * t * t - 2.0);
}

inline double relu(double z) { return z > 0.0 ? z : 0.0; }
inline double relu_d(double z) { return z > 0.0 ? 1.0 : 0.0; }

void affine(const DenseMatrix& W, const DenseVector& bias,
            const DenseVector& in, DenseVector& out, bool add_bias) {
    out.resize(W.rows());
    matvec(W, in, std::span<double>(out));
    if (add_bias)
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias[i];
}

void validate_seeds(const NetworkParams& params, const std::vector<DerivSeed>& seeds) {
    for (const auto& s : seeds) {
        if (s.tangent.size() != params.input_size())
            throw InvalidInput("eval_jet: seed tangent length mismatch");
        if (!s.curvature.empty() && s.curvature.size() != params.input_size())
            throw InvalidInput("eval_jet: seed curvature length mismatch");
    }
}

} // namespace

DerivSeed DerivSeed::coordinate(std::size_t index, std::size_t input_size, double scale) {
    DerivSeed s;
    s.tangent.assign(input_size, 0.0);
    s.tangent.at(index) = scale;
    return s;
}

NetworkParams init_params(const std::vector<std::size_t>& layer_sizes,
                          std::uint64_t seed,
                          Activation activation,
                          double first_layer_scale) {
    if (layer_sizes.size() < 2) throw InvalidInput("init_params: need at least 2 layers");
    for (std::size_t s : layer_sizes)
        if (s == 0) throw InvalidInput("init_params: zero layer size");
    if (!(first_layer_scale > 0.0))
        throw InvalidInput("init_params: first_layer_scale must be positive");

    NetworkParams params;
    params.layer_sizes = layer_sizes;
    params.activation = activation;
    params.seed = seed;

    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const std::size_t fan_in = layer_sizes[l], fan_out = layer_sizes[l + 1];
        double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        if (l == 0) limit *= first_layer_scale;
        DenseMatrix W(fan_out, fan_in);
        for (double& w : W.data()) w = rng.uniform(-limit, limit);
        params.weights.push_back(std::move(W));
        params.biases.emplace_back(fan_out, 0.0);
    }
    return params;
}

JetBundle eval_jet_recording(const NetworkParams& params, const DenseVector& input,
                             const std::vector<DerivSeed>& seeds, int order, JetTape& tape) {
    if (input.size() != params.input_size())
        throw InvalidInput("eval_jet: input length mismatch");
    if (order < 0 || order > 2) throw InvalidInput("eval_jet: order must be 0, 1 or 2");
    if (order >= 1) validate_seeds(params, seeds);
    if (order == 2 && params.activation == Activation::Relu)
        throw ConfigError("eval_jet: order-2 jets need a twice-differentiable activation");

    const std::size_t L = params.layer_count();
    const std::size_t K = order >= 1 ? seeds.size() : 0;
    const bool second = order == 2;

    tape.n_seeds = K;
    tape.order = order;
    tape.a.resize(L + 1);
    tape.p.resize(L + 1);
    tape.q.resize(L + 1);
    tape.zp.resize(L);
    tape.zq.resize(L);

    tape.a[0] = input;
    tape.p[0].resize(K);
    tape.q[0].resize(K);
    for (std::size_t k = 0; k < K; ++k) {
        tape.p[0][k] = seeds[k].tangent;
        if (second) {
            if (seeds[k].curvature.empty())
                tape.q[0][k].assign(params.input_size(), 0.0);
            else
                tape.q[0][k] = seeds[k].curvature;
        }
    }

    for (std::size_t l = 0; l < L; ++l) {
        const DenseMatrix& W = params.weights[l];
        const bool hidden = l + 1 < L;

        DenseVector z;
        affine(W, params.biases[l], tape.a[l], z, true);

        tape.zp[l].resize(K);
        tape.zq[l].resize(K);
        tape.p[l + 1].resize(K);
        tape.q[l + 1].resize(K);
        for (std::size_t k = 0; k < K; ++k) {
            affine(W, params.biases[l], tape.p[l][k], tape.zp[l][k], false);
            if (second) affine(W, params.biases[l], tape.q[l][k], tape.zq[l][k], false);
        }

        if (!hidden) {
            tape.a[l + 1] = std::move(z);
            for (std::size_t k = 0; k < K; ++k) {
                tape.p[l + 1][k] = tape.zp[l][k];
                if (second) tape.q[l + 1][k] = tape.zq[l][k];
            }
            break;
        }

        const std::size_t width = z.size();
        DenseVector& a_out = tape.a[l + 1];
        a_out.resize(width);

        if (params.activation == Activation::Tanh) {
            for (std::size_t i = 0; i < width; ++i) a_out[i] = std::tanh(z[i]);
            for (std::size_t k = 0; k < K; ++k) {
                DenseVector& p_out = tape.p[l + 1][k];
                p_out.resize(width);
                const DenseVector& zp = tape.zp[l][k];
                if (second) {
                    DenseVector& q_out = tape.q[l + 1][k];
                    q_out.resize(width);
                    const DenseVector& zq = tape.zq[l][k];
                    for (std::size_t i = 0; i < width; ++i) {
                        double s1, s2, s3;
                        tanh_derivs(a_out[i], s1, s2, s3);
                        p_out[i] = s1 * zp[i];
                        q_out[i] = s2 * zp[i] * zp[i] + s1 * zq[i];
                    }
                } else {
                    for (std::size_t i = 0; i < width; ++i)
                        p_out[i] = (1.0 - a_out[i] * a_out[i]) * zp[i];
                }
            }
        } else { // Relu, order <= 1
            for (std::size_t i = 0; i < width; ++i) a_out[i] = relu(z[i]);
            for (std::size_t k = 0; k < K; ++k) {
                DenseVector& p_out = tape.p[l + 1][k];
                p_out.resize(width);
                const DenseVector& zp = tape.zp[l][k];
                for (std::size_t i = 0; i < width; ++i) p_out[i] = relu_d(z[i]) * zp[i];
            }
        }
    }

    JetBundle jet;
    jet.order = order;
    jet.values = tape.a[L];
    jet.first.assign(tape.p[L].begin(), tape.p[L].end());
    if (second) jet.second.assign(tape.q[L].begin(), tape.q[L].end());
    return jet;
}

JetBundle eval_jet(const NetworkParams& params, const DenseVector& input,
                   const std::vector<DerivSeed>& seeds, int order) {
    JetTape tape;
    return eval_jet_recording(params, input, seeds, order, tape);
}

JetBundle eval_jet(const NetworkParams& params, const DenseVector& input,
                   const std::vector<std::size_t>& diff_coords, int order) {
    std::vector<DerivSeed> seeds;
    seeds.reserve(diff_coords.size());
    for (std::size_t c : diff_coords) {
        if (c >= params.input_size())
            throw InvalidInput("eval_jet: diff coordinate out of range");
        seeds.push_back(DerivSeed::coordinate(c, params.input_size()));
    }
    return eval_jet(params, input, seeds, order);
}

DenseVector eval(const NetworkParams& params, const DenseVector& input) {
    JetTape tape;
    return eval_jet_recording(params, input, {}, 0, tape).values;
}

void backprop_from_tape(const NetworkParams& params, const JetTape& tape,
                        const JetBundle& adjoints, ParamGradient& grad) {
    const std::size_t L = params.layer_count();
    const std::size_t K = tape.n_seeds;
    const bool second = tape.order == 2;

    if (adjoints.values.size() != params.output_size())
        throw InvalidInput("backprop_params: adjoint value length mismatch");
    if (adjoints.first.size() != K || (second && adjoints.second.size() != K))
        throw InvalidInput("backprop_params: adjoint seed count mismatch");
    if (grad.weights.size() != L)
        throw InvalidInput("backprop_params: gradient shape mismatch");

    // Adjoints of the post-layer jets, walked backwards.
    DenseVector bar_a = adjoints.values;
    std::vector<DenseVector> bar_p(adjoints.first.begin(), adjoints.first.end());
    std::vector<DenseVector> bar_q(adjoints.second.begin(), adjoints.second.end());

    DenseVector bar_z, tmp;
    std::vector<DenseVector> bar_zp(K), bar_zq(K);

    for (std::size_t l = L; l-- > 0;) {
        const DenseMatrix& W = params.weights[l];
        const bool hidden = l + 1 < L;
        const std::size_t width = W.rows();

        if (hidden && params.activation == Activation::Tanh) {
            // Reverse of: a = tanh(z); p = s1 zp; q = s2 zp^2 + s1 zq
            const DenseVector& t = tape.a[l + 1];
            bar_z.assign(width, 0.0);
            for (std::size_t i = 0; i < width; ++i)
                bar_z[i] = (1.0 - t[i] * t[i]) * bar_a[i];
            for (std::size_t k = 0; k < K; ++k) {
                const DenseVector& zp = tape.zp[l][k];
                bar_zp[k].assign(width, 0.0);
                if (second) {
                    const DenseVector& zq = tape.zq[l][k];
                    bar_zq[k].assign(width, 0.0);
                    for (std::size_t i = 0; i < width; ++i) {
                        double s1, s2, s3;
                        tanh_derivs(t[i], s1, s2, s3);
                        bar_z[i] += s2 * zp[i] * bar_p[k][i] +
                                    (s3 * zp[i] * zp[i] + s2 * zq[i]) * bar_q[k][i];
                        bar_zp[k][i] = s1 * bar_p[k][i] + 2.0 * s2 * zp[i] * bar_q[k][i];
                        bar_zq[k][i] = s1 * bar_q[k][i];
                    }
                } else {
                    for (std::size_t i = 0; i < width; ++i) {
                        double s1, s2, s3;
                        tanh_derivs(t[i], s1, s2, s3);
                        bar_z[i] += s2 * zp[i] * bar_p[k][i];
                        bar_zp[k][i] = s1 * bar_p[k][i];
                    }
                }
            }
        } else if (hidden) { // Relu
            const DenseVector& a_out = tape.a[l + 1];
            bar_z.assign(width, 0.0);
            for (std::size_t i = 0; i < width; ++i)
                bar_z[i] = (a_out[i] > 0.0 ? 1.0 : 0.0) * bar_a[i];
            for (std::size_t k = 0; k < K; ++k) {
                bar_zp[k].assign(width, 0.0);
                for (std::size_t i = 0; i < width; ++i)
                    bar_zp[k][i] = (a_out[i] > 0.0 ? 1.0 : 0.0) * bar_p[k][i];
            }
        } else { // output layer is affine
            bar_z = bar_a;
            for (std::size_t k = 0; k < K; ++k) {
                bar_zp[k] = bar_p[k];
                if (second) bar_zq[k] = bar_q[k];
            }
        }

        // Affine reverse: z = W a_in + bias, zp = W p_in, zq = W q_in.
        DenseMatrix& gW = grad.weights[l];
        DenseVector& gb = grad.biases[l];
        const DenseVector& a_in = tape.a[l];
        const std::size_t in_w = W.cols();
        for (std::size_t i = 0; i < width; ++i) {
            double* grow = gW.data().data() + i * in_w;
            const double bz = bar_z[i];
            gb[i] += bz;
            for (std::size_t j = 0; j < in_w; ++j) grow[j] += bz * a_in[j];
            for (std::size_t k = 0; k < K; ++k) {
                const double bp = bar_zp[k][i];
                const DenseVector& p_in = tape.p[l][k];
                for (std::size_t j = 0; j < in_w; ++j) grow[j] += bp * p_in[j];
                if (second) {
                    const double bq = bar_zq[k][i];
                    const DenseVector& q_in = tape.q[l][k];
                    for (std::size_t j = 0; j < in_w; ++j) grow[j] += bq * q_in[j];
                }
            }
        }

        if (l == 0) break;
        tmp.resize(in_w);
        matvec_transpose(W, bar_z, std::span<double>(tmp));
        bar_a = tmp;
        for (std::size_t k = 0; k < K; ++k) {
            matvec_transpose(W, bar_zp[k], std::span<double>(tmp));
            bar_p[k] = tmp;
            if (second) {
                matvec_transpose(W, bar_zq[k], std::span<double>(tmp));
                bar_q[k] = tmp;
            }
        }
    }
}

ParamGradient backprop_params(const NetworkParams& params, const DenseVector& input,
                              const std::vector<DerivSeed>& seeds, int order,
                              const JetBundle& adjoints) {
    JetTape tape;
    eval_jet_recording(params, input, seeds, order, tape);
    ParamGradient grad = zero_gradient_like(params);
    backprop_from_tape(params, tape, adjoints, grad);
    return grad;
}

ParamGradient zero_gradient_like(const NetworkParams& params) {
    ParamGradient g;
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
        g.weights.emplace_back(params.weights[l].rows(), params.weights[l].cols(), 0.0);
        g.biases.emplace_back(params.biases[l].size(), 0.0);
    }
    return g;
}

void gradient_axpy(double alpha, const ParamGradient& x, ParamGradient& y) {
    for (std::size_t l = 0; l < x.weights.size(); ++l) {
        axpy(alpha, x.weights[l].data(), y.weights[l].data());
        axpy(alpha, x.biases[l], y.biases[l]);
    }
}

void gradient_scale(double alpha, ParamGradient& g) {
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
        scale(alpha, g.weights[l].data());
        scale(alpha, g.biases[l]);
    }
}

std::size_t param_count(const NetworkParams& params) {
    std::size_t n = 0;
    for (std::size_t l = 0; l < params.layer_count(); ++l)
        n += params.weights[l].data().size() + params.biases[l].size();
    return n;
}

DenseVector flatten_params(const NetworkParams& params) {
    DenseVector flat;
    flat.reserve(param_count(params));
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
        flat.insert(flat.end(), params.weights[l].data().begin(), params.weights[l].data().end());
        flat.insert(flat.end(), params.biases[l].begin(), params.biases[l].end());
    }
    return flat;
}

void assign_params(NetworkParams& params, const DenseVector& flat) {
    if (flat.size() != param_count(params))
        throw InvalidInput("assign_params: length mismatch");
    std::size_t pos = 0;
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
        auto& wd = params.weights[l].data();
        std::copy(flat.begin() + pos, flat.begin() + pos + wd.size(), wd.begin());
        pos += wd.size();
        auto& bd = params.biases[l];
        std::copy(flat.begin() + pos, flat.begin() + pos + bd.size(), bd.begin());
        pos += bd.size();
    }
}

DenseVector flatten_gradient(const ParamGradient& grad) {
    DenseVector flat;
    for (std::size_t l = 0; l < grad.weights.size(); ++l) {
        flat.insert(flat.end(), grad.weights[l].data().begin(), grad.weights[l].data().end());
        flat.insert(flat.end(), grad.biases[l].begin(), grad.biases[l].end());
    }
    return flat;
}

} // namespace pdecl

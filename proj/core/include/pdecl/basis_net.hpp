#pragma once

#include "pdecl/numerics.hpp"

#include <cstdint>
#include <vector>

namespace pdecl {

enum class Activation { Tanh, Relu };

/// Dense multilayer network mapping an input point to N basis values.
/// Hidden layers apply the activation; the output layer is affine.
struct NetworkParams {
    std::vector<std::size_t> layer_sizes; // input width, hidden widths..., N
    std::vector<DenseMatrix> weights;     // weights[l]: layer_sizes[l+1] x layer_sizes[l]
    std::vector<DenseVector> biases;      // biases[l]: layer_sizes[l+1]
    Activation activation = Activation::Tanh;
    std::uint64_t seed = 0;

    std::size_t input_size() const { return layer_sizes.front(); }
    std::size_t output_size() const { return layer_sizes.back(); }
    std::size_t layer_count() const { return weights.size(); }
};

/// Gradient with respect to every weight and bias; shape-congruent with the
/// originating NetworkParams.
struct ParamGradient {
    std::vector<DenseMatrix> weights;
    std::vector<DenseVector> biases;
};

/// One differentiation request: the first- and second-order coefficients of
/// an input curve x(e) = x + e*tangent + (e^2/2)*curvature. For a plain
/// input coordinate the tangent is a scaled basis vector and the curvature
/// is zero; embedded coordinates (periodic features, normalized inputs) put
/// their chain-rule terms here so the returned derivatives are taken with
/// respect to the raw domain coordinate.
struct DerivSeed {
    DenseVector tangent;
    DenseVector curvature; // empty means zero

    static DerivSeed coordinate(std::size_t index, std::size_t input_size, double scale = 1.0);
};

/// Basis values plus first/second derivatives along each requested seed.
struct JetBundle {
    DenseVector values;              // N
    std::vector<DenseVector> first;  // one length-N vector per seed
    std::vector<DenseVector> second; // one length-N vector per seed when order==2
    int order = 0;                   // 0 (values only), 1, or 2
};

/// Per-layer buffers recorded by the forward jet pass and consumed by the
/// parameter-gradient pass. Reusable across calls to avoid reallocation in
/// training loops.
struct JetTape {
    std::vector<DenseVector> a;                   // a[l]: post-layer values, a[0] = input
    std::vector<std::vector<DenseVector>> p;      // p[l][k]: post-layer first jets
    std::vector<std::vector<DenseVector>> q;      // q[l][k]: post-layer second jets
    std::vector<std::vector<DenseVector>> zp;     // pre-activation first jets (hidden layers)
    std::vector<std::vector<DenseVector>> zq;     // pre-activation second jets (hidden layers)
    std::size_t n_seeds = 0;
    int order = 0;
};

/// Glorot-uniform weights (|w| <= sqrt(6/(fan_in+fan_out))), zero biases.
/// `first_layer_scale` widens the input layer's band: with low-dimensional
/// normalized inputs the default band keeps every tanh unit in its linear
/// regime and the basis functions nearly coplanar.
NetworkParams init_params(const std::vector<std::size_t>& layer_sizes,
                          std::uint64_t seed,
                          Activation activation = Activation::Tanh,
                          double first_layer_scale = 1.0);

DenseVector eval(const NetworkParams& params, const DenseVector& input);

JetBundle eval_jet(const NetworkParams& params, const DenseVector& input,
                   const std::vector<DerivSeed>& seeds, int order);

/// Coordinate-index convenience: one-hot seeds.
JetBundle eval_jet(const NetworkParams& params, const DenseVector& input,
                   const std::vector<std::size_t>& diff_coords, int order);

/// Forward jet pass that records the tape. Returns the jet of the output
/// layer; `tape` afterwards holds everything backprop_from_tape needs.
JetBundle eval_jet_recording(const NetworkParams& params, const DenseVector& input,
                             const std::vector<DerivSeed>& seeds, int order, JetTape& tape);

/// Gradient wrt every parameter of the scalar <adjoints, jet>: adjoints
/// weight the value entries and, through the recorded jet equations, the
/// first- and second-derivative entries (this path carries third-order
/// mixed derivatives of the network). Accumulates into `grad`.
void backprop_from_tape(const NetworkParams& params, const JetTape& tape,
                        const JetBundle& adjoints, ParamGradient& grad);

/// One-shot form of the above: re-runs the forward tape internally.
ParamGradient backprop_params(const NetworkParams& params, const DenseVector& input,
                              const std::vector<DerivSeed>& seeds, int order,
                              const JetBundle& adjoints);

ParamGradient zero_gradient_like(const NetworkParams& params);
void gradient_axpy(double alpha, const ParamGradient& x, ParamGradient& y);
void gradient_scale(double alpha, ParamGradient& g);

std::size_t param_count(const NetworkParams& params);
DenseVector flatten_params(const NetworkParams& params);
void assign_params(NetworkParams& params, const DenseVector& flat);
DenseVector flatten_gradient(const ParamGradient& grad);

} // namespace pdecl

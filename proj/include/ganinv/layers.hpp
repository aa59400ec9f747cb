#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ganinv/rng.hpp"
#include "ganinv/tensor.hpp"

namespace ganinv {

enum class LayerKind {
    Dense,
    TransposedConv2D,
    ReLU,
    LeakyReLU,
    Tanh,
    Sigmoid,
    Reshape,
    ConcatChannels,
    AffineNorm,
};

std::string layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& name);

// One entry of a straight-line layer stack. Kind-specific fields; unused
// fields stay at their defaults.
struct LayerSpec {
    LayerKind kind = LayerKind::ReLU;

    int in_size = 0, out_size = 0;                       // Dense
    int in_channels = 0, out_channels = 0;               // TransposedConv2D
    int kernel = 0, stride = 1, padding = 0;             // TransposedConv2D
    double slope = 0.2;                                  // LeakyReLU
    Shape target_shape;                                  // Reshape
    Shape aux_shape;                                     // ConcatChannels: appended along channel axis
    int channels = 0;                                    // AffineNorm

    static LayerSpec dense(int in, int out);
    static LayerSpec transposed_conv2d(int in_ch, int out_ch, int kernel, int stride, int padding);
    static LayerSpec relu();
    static LayerSpec leaky_relu(double slope = 0.2);
    static LayerSpec tanh();
    static LayerSpec sigmoid();
    static LayerSpec reshape(Shape target);
    static LayerSpec concat_channels(Shape aux);
    static LayerSpec affine_norm(int channels);

    bool has_params() const {
        return kind == LayerKind::Dense || kind == LayerKind::TransposedConv2D ||
               kind == LayerKind::AffineNorm;
    }
};

// Named tensors in layer order; weights before biases per layer.
struct ParameterSet {
    std::vector<std::string> names;
    std::vector<Tensor> tensors;

    void add(std::string name, Tensor t);
    const Tensor& get(const std::string& name) const;
    Tensor& get(const std::string& name);
    bool has(const std::string& name) const;
    std::size_t count() const { return tensors.size(); }
    void require_finite(const std::string& ctx) const;
};

// Validated stack: every boundary shape is computed at build time, so forward
// never has to infer anything. At most one ConcatChannels junction.
class Network {
public:
    static Network build(Shape input_shape, std::vector<LayerSpec> layers);

    const std::vector<LayerSpec>& layers() const { return layers_; }
    const Shape& input_shape() const { return boundary_shapes_.front(); }
    const Shape& output_shape() const { return boundary_shapes_.back(); }
    const Shape& boundary_shape(std::size_t i) const { return boundary_shapes_[i]; }
    bool has_aux() const { return aux_layer_ >= 0; }
    const Shape& aux_shape() const;
    int aux_layer() const { return aux_layer_; }

    // Parameter names in stack order, e.g. "layer3.weight".
    std::vector<std::pair<std::string, Shape>> parameter_shapes() const;

    // Scaled-normal init (std 0.02) for weights, zeros for biases and shifts,
    // ones for AffineNorm scales. Same seed, same parameters.
    ParameterSet init_params(std::uint64_t seed) const;

private:
    std::vector<LayerSpec> layers_;
    std::vector<Shape> boundary_shapes_; // size layers+1
    int aux_layer_ = -1;
};

// Evaluation record for one backward pass; single-use.
struct Tape {
    const Network* net = nullptr;
    std::vector<Tensor> boundaries; // input of each layer plus final output
    Tensor aux;
    bool consumed = false;
};

struct BackwardResult {
    Tensor input_grad;
    std::optional<Tensor> aux_grad;
    ParameterSet param_grads;
};

// Deterministic forward pass. aux is required iff the net has a
// ConcatChannels junction. Pass tape to enable one backward pass.
Tensor forward(const Network& net, const ParameterSet& params, const Tensor& input,
               const Tensor* aux = nullptr, Tape* tape = nullptr);

// Exact reverse-mode gradients of <output, upstream> w.r.t. input, aux and
// every parameter. Consumes the tape.
BackwardResult backward(const ParameterSet& params, Tape& tape, const Tensor& upstream);

// Same gradients, but parameter gradients are added (+=) into `acc`, which
// must hold a zeroed-or-partial gradient tensor for every parameter. The
// returned result carries only input/aux gradients. Lets batch loops reuse
// one accumulator instead of allocating a gradient set per sample.
BackwardResult backward_accumulate(const ParameterSet& params, Tape& tape, const Tensor& upstream,
                                   ParameterSet& acc);

// Input/aux gradients only; parameter gradients are skipped entirely.
BackwardResult backward_input_only(const ParameterSet& params, Tape& tape, const Tensor& upstream);

// Central-difference test oracle.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, double h);

} // namespace ganinv

#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "ganinv/layers.hpp"

namespace ganinv {

// Declarative description of G(z, y). The layer stack takes z as primary
// input and y through its ConcatChannels junction.
struct GeneratorSpec {
    int d_z = 0;
    int d_y = 0;
    Shape image_shape;           // {channels, height, width}, pixels in [-1,1]
    std::vector<LayerSpec> layers;
    // Diagnostic generators may drop the final Tanh (e.g. a plain linear map
    // used as a closed-form optimization oracle); everything else must end in
    // Tanh so the image range contract holds.
    bool linear_output = false;

    // Builds the validated network; throws BuildError on any violation.
    Network validate() const;

    // concat(z,y) -> Dense -> Reshape(base x 4 x 4) -> [TConv + AffineNorm +
    // ReLU] x2 -> TConv -> Tanh, producing channels x 32 x 32.
    static GeneratorSpec desk_scale(int d_z = 100, int d_y = 10, int channels = 1, int base = 16);
};

struct GeneratorCheckpoint {
    GeneratorSpec spec;
    Network net;
    ParameterSet params;
    std::uint64_t seed = 0;
    std::string provenance;
};

GeneratorCheckpoint build_generator(const GeneratorSpec& spec, std::uint64_t init_seed);

// Forward image synthesis. y need not be one-hot; relaxed values are legal.
Tensor generate(const GeneratorCheckpoint& ckpt, const Tensor& z, const Tensor& y);

// Exact gradients of <G(z,y), upstream> w.r.t. z and y.
std::pair<Tensor, Tensor> input_gradients(const GeneratorCheckpoint& ckpt, const Tensor& z,
                                          const Tensor& y, const Tensor& upstream);

// Text header (magic, version, JSON spec) followed by length-prefixed raw
// little-endian float64 payloads in parameter order. Bit-exact round trip.
void save_checkpoint(const GeneratorCheckpoint& ckpt, const std::string& path);
GeneratorCheckpoint load_checkpoint(const std::string& path);

// JSON (de)serialization of the spec, shared by checkpoints and CLI configs.
std::string generator_spec_to_json(const GeneratorSpec& spec);
GeneratorSpec generator_spec_from_json(const std::string& json_text);

} // namespace ganinv

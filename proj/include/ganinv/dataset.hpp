#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ganinv/generator.hpp"

namespace ganinv {

enum class Provenance { Generated, Real };

std::string provenance_name(Provenance p);
Provenance provenance_from_name(const std::string& s);

struct LabeledImage {
    Tensor pixels;                 // [-1,1], shape = generator image_shape
    int label = -1;                // [0, d_y)
    Provenance provenance = Provenance::Real;
    std::string id;
    std::optional<Tensor> true_z;  // stored for generated images only
};

// Procedural conditional glyph family: class k renders a disc on a ring plus
// an oriented bar, with per-sample jitter in position, size, thickness and
// rotation. Distinct classes stay separable by a pixel-mean classifier while
// intra-class variation keeps "real" samples off any generator's manifold.
struct GlyphConfig {
    int classes = 10;
    int height = 32;
    int width = 32;
    int channels = 1;
    double position_jitter = 1.5;
    double radius_jitter = 1.0;
    double thickness_jitter = 0.75;
    double rotation_jitter = 0.15;

    void validate() const;
};

std::vector<LabeledImage> synth_glyphs(const GlyphConfig& config, int n_per_class,
                                       std::uint64_t seed);

// Big-endian IDX pair (images 0x00000803, labels 0x00000801). 28x28 content
// is zero-padded to 32x32 (pad value -1, the scaled black) and pixels mapped
// affinely from [0,255] to [-1,1].
std::vector<LabeledImage> read_idx(const std::string& images_path, const std::string& labels_path);

struct EvalSplit {
    std::vector<LabeledImage> generated; // carry true (z, y)
    std::vector<LabeledImage> real;
};

// Generated half sampled as G(z, one_hot(label)) with ground truth recorded;
// real half drawn from the given holdout. Label histograms balanced within 1.
EvalSplit split_real_generated(const GeneratorCheckpoint& ckpt,
                               const std::vector<LabeledImage>& holdout, int n,
                               std::uint64_t seed);

Tensor one_hot(int label, int d_y);

} // namespace ganinv

#pragma once

#include "ganinv/dataset.hpp"
#include "ganinv/generator.hpp"

namespace ganinv {

// D(image, y): the image is concatenated depth-wise with the one-hot label
// broadcast to image planes, and the stack ends in a scalar Sigmoid score.
struct DiscriminatorSpec {
    Shape image_shape;
    int d_y = 0;
    std::vector<LayerSpec> layers;

    Network validate() const;

    static DiscriminatorSpec desk_scale(Shape image_shape, int d_y, int hidden = 32);
};

struct TrainConfig {
    int batch_size = 256;      // real+fake combined, even
    int epochs = 4;
    double learning_rate = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    std::uint64_t seed = 0;
    int checkpoint_stride = 200; // steps between divergence-recovery snapshots
    int report_stride = 25;

    void validate() const;
};

struct TrainSample {
    int step = 0;
    double d_loss = 0.0;
    double g_loss = 0.0;
    double d_accuracy = 0.0;
};

struct TrainReport {
    std::vector<TrainSample> samples;
    int steps = 0;
    bool diverged = false;
};

struct TrainResult {
    GeneratorCheckpoint ckpt;
    TrainReport report;
};

// y must be exactly one-hot; plane k is all-ones iff y[k] == 1.
Tensor broadcast_label(const Tensor& y, int height, int width);

// Alternating adversarial updates with adaptive moment estimation.
// Deterministic under fixed seeds. On divergence the last snapshot is kept
// and the report is flagged.
TrainResult train(const GeneratorSpec& gen_spec, const DiscriminatorSpec& disc_spec,
                  const std::vector<LabeledImage>& data, const TrainConfig& config);

// Class-per-row sample mosaic; written as PGM/PPM when path is non-empty.
Tensor sample_grid(const GeneratorCheckpoint& ckpt, int rows, int cols, std::uint64_t seed,
                   const std::string& path = "");

} // namespace ganinv

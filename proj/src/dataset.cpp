#include "ganinv/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace ganinv {

std::string provenance_name(Provenance p) {
    return p == Provenance::Generated ? "generated" : "real";
}

Provenance provenance_from_name(const std::string& s) {
    if (s == "generated") return Provenance::Generated;
    if (s == "real") return Provenance::Real;
    throw FormatError("unknown provenance: " + s);
}

Tensor one_hot(int label, int d_y) {
    if (label < 0 || label >= d_y)
        throw ContractError("one_hot: label " + std::to_string(label) + " outside [0, " +
                            std::to_string(d_y) + ")");
    Tensor y = Tensor::zeros(Shape{d_y});
    y.data[label] = 1.0;
    return y;
}

void GlyphConfig::validate() const {
    if (classes < 2) throw ConfigError("glyph config: classes must be >= 2");
    if (height < 8 || width < 8) throw ConfigError("glyph config: image too small");
    if (channels != 1 && channels != 3) throw ConfigError("glyph config: channels must be 1 or 3");
    if (position_jitter < 0 || radius_jitter < 0 || thickness_jitter < 0 || rotation_jitter < 0)
        throw ConfigError("glyph config: jitter ranges must be >= 0");
}

namespace {

// Soft indicator of "signed distance d inside shape": +1 deep inside, -1
// outside, linear over a one-pixel band. Shapes combine by max.
double soft_edge(double d, double band = 1.0) {
    double v = -d / band;
    return std::clamp(v, -1.0, 1.0);
}

LabeledImage render_glyph(const GlyphConfig& cfg, int label, int index, Rng& rng) {
    double cx = cfg.width / 2.0 + rng.uniform(-cfg.position_jitter, cfg.position_jitter);
    double cy = cfg.height / 2.0 + rng.uniform(-cfg.position_jitter, cfg.position_jitter);
    double theta = 2.0 * M_PI * label / cfg.classes +
                   rng.uniform(-cfg.rotation_jitter, cfg.rotation_jitter);
    double ring = 0.31 * std::min(cfg.width, cfg.height);
    double disc_r = 4.0 + rng.uniform(-cfg.radius_jitter, cfg.radius_jitter);
    double bar_t = 2.0 + rng.uniform(-cfg.thickness_jitter, cfg.thickness_jitter);
    double bar_len = 0.38 * std::min(cfg.width, cfg.height);

    double dx = cx + ring * std::cos(theta);
    double dy = cy + ring * std::sin(theta);
    double nx = -std::sin(theta), ny = std::cos(theta); // bar normal

    LabeledImage img;
    img.label = label;
    img.provenance = Provenance::Real;
    img.id = "glyph-c" + std::to_string(label) + "-" + std::to_string(index);
    img.pixels = Tensor::zeros(Shape{cfg.channels, cfg.height, cfg.width});
    for (int h = 0; h < cfg.height; ++h) {
        for (int w = 0; w < cfg.width; ++w) {
            double px = w + 0.5, py = h + 0.5;
            // disc
            double d_disc = std::hypot(px - dx, py - dy) - disc_r;
            // bar: capped strip through the centre, oriented along theta
            double along = (px - cx) * std::cos(theta) + (py - cy) * std::sin(theta);
            double across = (px - cx) * nx + (py - cy) * ny;
            double d_bar = std::max(std::abs(across) - bar_t, std::abs(along) - bar_len);
            double v = std::max(soft_edge(d_disc), soft_edge(d_bar));
            for (int c = 0; c < cfg.channels; ++c)
                img.pixels.data[(c * cfg.height + h) * cfg.width + w] = v;
        }
    }
    return img;
}

} // namespace

std::vector<LabeledImage> synth_glyphs(const GlyphConfig& config, int n_per_class,
                                       std::uint64_t seed) {
    config.validate();
    if (n_per_class < 1) throw ConfigError("synth_glyphs: n_per_class must be >= 1");
    Rng rng(seed);
    std::vector<LabeledImage> out;
    out.reserve(static_cast<std::size_t>(config.classes) * n_per_class);
    for (int i = 0; i < n_per_class; ++i)
        for (int k = 0; k < config.classes; ++k) out.push_back(render_glyph(config, k, i, rng));
    return out;
}

namespace {

std::uint32_t read_be32(std::ifstream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw FormatError(path + ": truncated IDX header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

} // namespace

std::vector<LabeledImage> read_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw IoError("cannot open: " + images_path);
    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw IoError("cannot open: " + labels_path);

    if (read_be32(imgs, images_path) != 0x00000803u)
        throw FormatError(images_path + ": bad IDX image magic");
    if (read_be32(labs, labels_path) != 0x00000801u)
        throw FormatError(labels_path + ": bad IDX label magic");

    std::uint32_t n_imgs = read_be32(imgs, images_path);
    std::uint32_t rows = read_be32(imgs, images_path);
    std::uint32_t cols = read_be32(imgs, images_path);
    std::uint32_t n_labs = read_be32(labs, labels_path);
    if (n_imgs != n_labs)
        throw FormatError("IDX count mismatch: " + std::to_string(n_imgs) + " images vs " +
                          std::to_string(n_labs) + " labels");
    if (rows != 28 || cols != 28)
        throw FormatError(images_path + ": expected 28x28 images, got " + std::to_string(rows) +
                          "x" + std::to_string(cols));

    const int out_hw = 32, pad = 2;
    std::vector<LabeledImage> out;
    out.reserve(n_imgs);
    std::vector<unsigned char> buf(rows * cols);
    for (std::uint32_t i = 0; i < n_imgs; ++i) {
        imgs.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (static_cast<std::size_t>(imgs.gcount()) != buf.size())
            throw FormatError(images_path + ": truncated image payload at index " +
                              std::to_string(i));
        int lab = labs.get();
        if (lab == EOF)
            throw FormatError(labels_path + ": truncated label payload at index " +
                              std::to_string(i));

        LabeledImage img;
        img.label = lab;
        img.provenance = Provenance::Real;
        img.id = "mnist-" + std::to_string(i);
        img.pixels = Tensor(Shape{1, out_hw, out_hw}, Vec::Constant(out_hw * out_hw, -1.0));
        for (std::uint32_t r = 0; r < rows; ++r)
            for (std::uint32_t c = 0; c < cols; ++c)
                img.pixels.data[(r + pad) * out_hw + (c + pad)] =
                    buf[r * cols + c] / 255.0 * 2.0 - 1.0;
        out.push_back(std::move(img));
    }
    return out;
}

EvalSplit split_real_generated(const GeneratorCheckpoint& ckpt,
                               const std::vector<LabeledImage>& holdout, int n,
                               std::uint64_t seed) {
    if (n < 1) throw ContractError("split_real_generated: n must be >= 1");
    if (static_cast<int>(holdout.size()) < n)
        throw ContractError("split_real_generated: n exceeds holdout size");
    const int d_y = ckpt.spec.d_y;
    Rng rng(seed);

    EvalSplit split;
    for (int i = 0; i < n; ++i) {
        int label = i % d_y; // balanced round-robin
        Tensor z = Tensor::zeros(Shape{ckpt.spec.d_z});
        for (int j = 0; j < z.size(); ++j) z.data[j] = rng.uniform(-1.0, 1.0);
        LabeledImage img;
        img.pixels = generate(ckpt, z, one_hot(label, d_y));
        img.label = label;
        img.provenance = Provenance::Generated;
        img.id = "gen-" + std::to_string(i);
        img.true_z = std::move(z);
        split.generated.push_back(std::move(img));
    }

    // Balanced draw from the holdout: bucket by label, take round-robin.
    std::vector<std::vector<std::size_t>> buckets(d_y);
    for (std::size_t i = 0; i < holdout.size(); ++i) {
        int lab = holdout[i].label;
        if (lab >= 0 && lab < d_y) buckets[lab].push_back(i);
    }
    for (auto& b : buckets) {
        // deterministic shuffle
        for (std::size_t i = b.size(); i > 1; --i)
            std::swap(b[i - 1], b[rng.below(i)]);
    }
    std::vector<std::size_t> cursor(d_y, 0);
    int taken = 0, lab = 0;
    while (taken < n) {
        int tries = 0;
        while (cursor[lab] >= buckets[lab].size()) {
            lab = (lab + 1) % d_y;
            if (++tries > d_y)
                throw ContractError("split_real_generated: holdout too small for balanced split");
        }
        split.real.push_back(holdout[buckets[lab][cursor[lab]++]]);
        split.real.back().provenance = Provenance::Real;
        split.real.back().true_z.reset();
        lab = (lab + 1) % d_y;
        ++taken;
    }
    return split;
}

} // namespace ganinv

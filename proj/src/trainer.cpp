#include "ganinv/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "ganinv/io.hpp"

namespace ganinv {

Network DiscriminatorSpec::validate() const {
    if (image_shape.size() != 3) throw BuildError("discriminator spec: image_shape must be CHW");
    if (d_y < 2) throw BuildError("discriminator spec: d_y must be >= 2");
    if (layers.empty() || layers.back().kind != LayerKind::Sigmoid)
        throw BuildError("discriminator spec: stack must end in Sigmoid");
    Network net = Network::build(image_shape, layers);
    if (!net.has_aux() || net.aux_shape() != Shape{d_y, image_shape[1], image_shape[2]})
        throw BuildError("discriminator spec: stack must concatenate d_y label planes");
    if (shape_size(net.output_shape()) != 1)
        throw BuildError("discriminator spec: output must be a scalar score");
    return net;
}

DiscriminatorSpec DiscriminatorSpec::desk_scale(Shape image_shape, int d_y, int hidden) {
    DiscriminatorSpec spec;
    spec.image_shape = image_shape;
    spec.d_y = d_y;
    int h = image_shape[1], w = image_shape[2];
    int flat = (image_shape[0] + d_y) * h * w;
    spec.layers = {
        LayerSpec::concat_channels(Shape{d_y, h, w}),
        LayerSpec::reshape(Shape{flat}),
        LayerSpec::dense(flat, hidden),
        LayerSpec::leaky_relu(0.2),
        LayerSpec::dense(hidden, hidden / 2),
        LayerSpec::leaky_relu(0.2),
        LayerSpec::dense(hidden / 2, 1),
        LayerSpec::sigmoid(),
    };
    return spec;
}

void TrainConfig::validate() const {
    if (batch_size < 2 || batch_size % 2 != 0)
        throw ConfigError("train config: batch_size must be even and >= 2");
    if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
    if (learning_rate <= 0.0) throw ConfigError("train config: learning_rate must be > 0");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw ConfigError("train config: moment parameters must lie in [0,1)");
    if (checkpoint_stride < 1 || report_stride < 1)
        throw ConfigError("train config: strides must be >= 1");
}

Tensor broadcast_label(const Tensor& y, int height, int width) {
    if (y.shape.size() != 1) throw ContractError("broadcast_label: y must be a vector");
    int hot = -1;
    for (int i = 0; i < y.size(); ++i) {
        if (y.data[i] == 1.0) {
            if (hot >= 0) throw ContractError("broadcast_label: y is not one-hot");
            hot = i;
        } else if (y.data[i] != 0.0) {
            throw ContractError("broadcast_label: y is not one-hot");
        }
    }
    if (hot < 0) throw ContractError("broadcast_label: y is not one-hot");
    Tensor planes = Tensor::zeros(Shape{y.size(), height, width});
    planes.data.segment(static_cast<Eigen::Index>(hot) * height * width, height * width)
        .setOnes();
    return planes;
}

namespace {

// Adam over a ParameterSet.
struct Adam {
    double lr, b1, b2;
    double eps = 1e-8;
    int t = 0;
    std::vector<Vec> m, v;

    Adam(const ParameterSet& ps, double lr_, double b1_, double b2_) : lr(lr_), b1(b1_), b2(b2_) {
        for (const Tensor& p : ps.tensors) {
            m.push_back(Vec::Zero(p.size()));
            v.push_back(Vec::Zero(p.size()));
        }
    }

    void step(ParameterSet& ps, const ParameterSet& grads) {
        ++t;
        double c1 = 1.0 - std::pow(b1, t);
        double c2 = 1.0 - std::pow(b2, t);
        for (std::size_t i = 0; i < ps.tensors.size(); ++i) {
            const Vec& g = grads.tensors[i].data;
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g.cwiseProduct(g);
            ps.tensors[i].data.array() -=
                lr * (m[i].array() / c1) / ((v[i].array() / c2).sqrt() + eps);
        }
    }
};

void scale(ParameterSet& acc, double s) {
    for (Tensor& t : acc.tensors) t.data *= s;
}

ParameterSet zeros_like(const Network& net) {
    ParameterSet ps;
    for (const auto& [name, shape] : net.parameter_shapes()) ps.add(name, Tensor::zeros(shape));
    return ps;
}

double bce_upstream(double s, double t) {
    double sc = std::clamp(s, 1e-7, 1.0 - 1e-7);
    return (sc - t) / (sc * (1.0 - sc));
}

double bce_loss(double s, double t) {
    double sc = std::clamp(s, 1e-7, 1.0 - 1e-7);
    return -(t * std::log(sc) + (1.0 - t) * std::log(1.0 - sc));
}

} // namespace

TrainResult train(const GeneratorSpec& gen_spec, const DiscriminatorSpec& disc_spec,
                  const std::vector<LabeledImage>& data, const TrainConfig& config) {
    config.validate();
    if (data.empty()) throw ContractError("train: empty dataset");
    Network g_net = gen_spec.validate();
    Network d_net = disc_spec.validate();
    if (disc_spec.image_shape != gen_spec.image_shape || disc_spec.d_y != gen_spec.d_y)
        throw BuildError("train: generator and discriminator shapes disagree");
    for (const LabeledImage& img : data) {
        img.pixels.require_shape(gen_spec.image_shape, "train data " + img.id);
        if (img.label < 0 || img.label >= gen_spec.d_y)
            throw ContractError("train: label out of range in " + img.id);
    }

    const int d_y = gen_spec.d_y;
    const int h = gen_spec.image_shape[1], w = gen_spec.image_shape[2];
    const int half = config.batch_size / 2;

    Rng rng(config.seed);
    ParameterSet g_params = g_net.init_params(rng.raw());
    ParameterSet d_params = d_net.init_params(rng.raw());
    Adam g_opt(g_params, config.learning_rate, config.beta1, config.beta2);
    Adam d_opt(d_params, config.learning_rate, config.beta1, config.beta2);

    // Precompute label planes once per class.
    std::vector<Tensor> planes;
    for (int k = 0; k < d_y; ++k) planes.push_back(broadcast_label(one_hot(k, d_y), h, w));

    auto draw_z = [&](Rng& r) {
        Tensor z = Tensor::zeros(Shape{gen_spec.d_z});
        for (int i = 0; i < z.size(); ++i) z.data[i] = r.uniform(-1.0, 1.0);
        return z;
    };

    TrainResult result;
    result.report.diverged = false;

    ParameterSet g_snapshot = g_params;
    int step = 0;

    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    bool aborted = false;
    for (int epoch = 0; epoch < config.epochs && !aborted; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.below(i)]);

        std::size_t pos = 0;
        while (pos + half <= order.size() && !aborted) {
            ++step;
            double d_loss = 0.0, g_loss = 0.0;
            int d_correct = 0;

            try {
                // --- discriminator update: real -> 1, fake -> 0
                ParameterSet d_grads = zeros_like(d_net);
                for (int b = 0; b < half; ++b) {
                    const LabeledImage& img = data[order[pos + b]];
                    Tape tape;
                    Tensor s = forward(d_net, d_params, img.pixels, &planes[img.label], &tape);
                    d_loss += bce_loss(s.data[0], 1.0);
                    if (s.data[0] > 0.5) ++d_correct;
                    Tensor up(s.shape, Vec::Constant(1, bce_upstream(s.data[0], 1.0)));
                    backward_accumulate(d_params, tape, up, d_grads);
                }
                for (int b = 0; b < half; ++b) {
                    int label = static_cast<int>(rng.below(d_y));
                    Tensor y = one_hot(label, d_y);
                    Tensor fake = forward(g_net, g_params, draw_z(rng), &y);
                    Tape tape;
                    Tensor s = forward(d_net, d_params, fake, &planes[label], &tape);
                    d_loss += bce_loss(s.data[0], 0.0);
                    if (s.data[0] < 0.5) ++d_correct;
                    Tensor up(s.shape, Vec::Constant(1, bce_upstream(s.data[0], 0.0)));
                    backward_accumulate(d_params, tape, up, d_grads);
                }
                scale(d_grads, 1.0 / config.batch_size);
                d_opt.step(d_params, d_grads);

                // --- generator update: fake -> 1 through the updated D
                ParameterSet g_grads = zeros_like(g_net);
                for (int b = 0; b < half; ++b) {
                    int label = static_cast<int>(rng.below(d_y));
                    Tensor y = one_hot(label, d_y);
                    Tape g_tape;
                    Tensor fake = forward(g_net, g_params, draw_z(rng), &y, &g_tape);
                    Tape d_tape;
                    Tensor s = forward(d_net, d_params, fake, &planes[label], &d_tape);
                    g_loss += bce_loss(s.data[0], 1.0);
                    Tensor up(s.shape, Vec::Constant(1, bce_upstream(s.data[0], 1.0)));
                    Tensor image_grad = backward_input_only(d_params, d_tape, up).input_grad;
                    backward_accumulate(g_params, g_tape, image_grad, g_grads);
                }
                scale(g_grads, 1.0 / half);
                g_opt.step(g_params, g_grads);

                d_loss /= config.batch_size;
                g_loss /= half;
                if (!std::isfinite(d_loss) || !std::isfinite(g_loss))
                    throw NumericError("train: non-finite loss at step " + std::to_string(step));
                d_params.require_finite("train step " + std::to_string(step));
                g_params.require_finite("train step " + std::to_string(step));
            } catch (const NumericError&) {
                // keep the last good snapshot
                g_params = g_snapshot;
                result.report.diverged = true;
                aborted = true;
                break;
            }

            pos += half;
            if (step % config.checkpoint_stride == 0) g_snapshot = g_params;
            if (step % config.report_stride == 0 || pos + half > order.size())
                result.report.samples.push_back(
                    {step, d_loss, g_loss,
                     static_cast<double>(d_correct) / config.batch_size});
        }
    }

    result.report.steps = step;
    result.ckpt.spec = gen_spec;
    result.ckpt.net = g_net;
    result.ckpt.params = std::move(g_params);
    result.ckpt.seed = config.seed;
    result.ckpt.provenance = "trained-cgan";
    return result;
}

Tensor sample_grid(const GeneratorCheckpoint& ckpt, int rows, int cols, std::uint64_t seed,
                   const std::string& path) {
    if (rows < 1 || cols < 1) throw ContractError("sample_grid: rows and cols must be >= 1");
    Rng rng(seed);
    std::vector<Tensor> tiles;
    for (int r = 0; r < rows; ++r) {
        int label = r % ckpt.spec.d_y; // rows indexed by class
        for (int c = 0; c < cols; ++c) {
            Tensor z = Tensor::zeros(Shape{ckpt.spec.d_z});
            for (int i = 0; i < z.size(); ++i) z.data[i] = rng.uniform(-1.0, 1.0);
            tiles.push_back(generate(ckpt, z, one_hot(label, ckpt.spec.d_y)));
        }
    }
    Tensor grid = make_grid(tiles, rows, cols);
    if (!path.empty()) write_image_auto(grid, path);
    return grid;
}

} // namespace ganinv

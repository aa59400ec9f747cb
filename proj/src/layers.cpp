#include "ganinv/layers.hpp"

#include <algorithm>
#include <cmath>

namespace ganinv {

std::string layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Dense: return "Dense";
        case LayerKind::TransposedConv2D: return "TransposedConv2D";
        case LayerKind::ReLU: return "ReLU";
        case LayerKind::LeakyReLU: return "LeakyReLU";
        case LayerKind::Tanh: return "Tanh";
        case LayerKind::Sigmoid: return "Sigmoid";
        case LayerKind::Reshape: return "Reshape";
        case LayerKind::ConcatChannels: return "ConcatChannels";
        case LayerKind::AffineNorm: return "AffineNorm";
    }
    throw BuildError("unknown layer kind");
}

LayerKind layer_kind_from_name(const std::string& name) {
    if (name == "Dense") return LayerKind::Dense;
    if (name == "TransposedConv2D") return LayerKind::TransposedConv2D;
    if (name == "ReLU") return LayerKind::ReLU;
    if (name == "LeakyReLU") return LayerKind::LeakyReLU;
    if (name == "Tanh") return LayerKind::Tanh;
    if (name == "Sigmoid") return LayerKind::Sigmoid;
    if (name == "Reshape") return LayerKind::Reshape;
    if (name == "ConcatChannels") return LayerKind::ConcatChannels;
    if (name == "AffineNorm") return LayerKind::AffineNorm;
    throw FormatError("unknown layer kind name: " + name);
}

LayerSpec LayerSpec::dense(int in, int out) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.in_size = in;
    s.out_size = out;
    return s;
}

LayerSpec LayerSpec::transposed_conv2d(int in_ch, int out_ch, int kernel, int stride, int padding) {
    LayerSpec s;
    s.kind = LayerKind::TransposedConv2D;
    s.in_channels = in_ch;
    s.out_channels = out_ch;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = padding;
    return s;
}

LayerSpec LayerSpec::relu() {
    LayerSpec s;
    s.kind = LayerKind::ReLU;
    return s;
}

LayerSpec LayerSpec::leaky_relu(double slope) {
    LayerSpec s;
    s.kind = LayerKind::LeakyReLU;
    s.slope = slope;
    return s;
}

LayerSpec LayerSpec::tanh() {
    LayerSpec s;
    s.kind = LayerKind::Tanh;
    return s;
}

LayerSpec LayerSpec::sigmoid() {
    LayerSpec s;
    s.kind = LayerKind::Sigmoid;
    return s;
}

LayerSpec LayerSpec::reshape(Shape target) {
    LayerSpec s;
    s.kind = LayerKind::Reshape;
    s.target_shape = std::move(target);
    return s;
}

LayerSpec LayerSpec::concat_channels(Shape aux) {
    LayerSpec s;
    s.kind = LayerKind::ConcatChannels;
    s.aux_shape = std::move(aux);
    return s;
}

LayerSpec LayerSpec::affine_norm(int channels) {
    LayerSpec s;
    s.kind = LayerKind::AffineNorm;
    s.channels = channels;
    return s;
}

void ParameterSet::add(std::string name, Tensor t) {
    if (has(name)) throw BuildError("duplicate parameter name: " + name);
    names.push_back(std::move(name));
    tensors.push_back(std::move(t));
}

bool ParameterSet::has(const std::string& name) const {
    return std::find(names.begin(), names.end(), name) != names.end();
}

const Tensor& ParameterSet::get(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return tensors[i];
    throw BuildError("missing parameter: " + name);
}

Tensor& ParameterSet::get(const std::string& name) {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return tensors[i];
    throw BuildError("missing parameter: " + name);
}

void ParameterSet::require_finite(const std::string& ctx) const {
    for (std::size_t i = 0; i < tensors.size(); ++i)
        tensors[i].require_finite(ctx + ": parameter " + names[i]);
}

namespace {

std::string layer_err(std::size_t i, const LayerSpec& l, const std::string& what) {
    return "layer " + std::to_string(i) + " (" + layer_kind_name(l.kind) + "): " + what;
}

// Output shape of one layer given its input shape; validates consistency.
Shape layer_output_shape(std::size_t i, const LayerSpec& l, const Shape& in) {
    switch (l.kind) {
        case LayerKind::Dense: {
            if (in.size() != 1 || in[0] != l.in_size)
                throw BuildError(layer_err(i, l, "expects flat input of size " +
                                                  std::to_string(l.in_size) + ", got " + shape_str(in)));
            if (l.out_size < 1) throw BuildError(layer_err(i, l, "out_size must be positive"));
            return Shape{l.out_size};
        }
        case LayerKind::TransposedConv2D: {
            if (in.size() != 3 || in[0] != l.in_channels)
                throw BuildError(layer_err(i, l, "expects CHW input with " +
                                                  std::to_string(l.in_channels) + " channels, got " +
                                                  shape_str(in)));
            if (l.kernel < 1 || l.stride < 1 || l.padding < 0 || l.out_channels < 1)
                throw BuildError(layer_err(i, l, "invalid kernel/stride/padding/channels"));
            // Fractionally-strided output extent.
            int h = (in[1] - 1) * l.stride - 2 * l.padding + l.kernel;
            int w = (in[2] - 1) * l.stride - 2 * l.padding + l.kernel;
            if (h < 1 || w < 1) throw BuildError(layer_err(i, l, "non-positive output extent"));
            return Shape{l.out_channels, h, w};
        }
        case LayerKind::ReLU:
        case LayerKind::LeakyReLU:
        case LayerKind::Tanh:
        case LayerKind::Sigmoid:
            return in;
        case LayerKind::Reshape: {
            if (shape_size(l.target_shape) != shape_size(in))
                throw BuildError(layer_err(i, l, "cannot reshape " + shape_str(in) + " to " +
                                                  shape_str(l.target_shape)));
            return l.target_shape;
        }
        case LayerKind::ConcatChannels: {
            const Shape& aux = l.aux_shape;
            if (aux.empty()) throw BuildError(layer_err(i, l, "aux shape missing"));
            if (in.size() == 1 && aux.size() == 1) return Shape{in[0] + aux[0]};
            if (in.size() == 3 && aux.size() == 3 && in[1] == aux[1] && in[2] == aux[2])
                return Shape{in[0] + aux[0], in[1], in[2]};
            throw BuildError(layer_err(i, l, "incompatible concat shapes " + shape_str(in) +
                                              " and " + shape_str(aux)));
        }
        case LayerKind::AffineNorm: {
            if (l.channels < 1 || in.empty() || in[0] != l.channels)
                throw BuildError(layer_err(i, l, "channel count " + std::to_string(l.channels) +
                                                  " does not match input " + shape_str(in)));
            return in;
        }
    }
    throw BuildError("unknown layer kind");
}

} // namespace

Network Network::build(Shape input_shape, std::vector<LayerSpec> layers) {
    if (layers.empty()) throw BuildError("empty layer stack");
    Network net;
    net.layers_ = std::move(layers);
    net.boundary_shapes_.push_back(std::move(input_shape));
    for (std::size_t i = 0; i < net.layers_.size(); ++i) {
        const LayerSpec& l = net.layers_[i];
        if (l.kind == LayerKind::ConcatChannels) {
            if (net.aux_layer_ >= 0)
                throw BuildError(layer_err(i, l, "only one ConcatChannels junction allowed"));
            net.aux_layer_ = static_cast<int>(i);
        }
        net.boundary_shapes_.push_back(layer_output_shape(i, l, net.boundary_shapes_.back()));
    }
    return net;
}

const Shape& Network::aux_shape() const {
    if (aux_layer_ < 0) throw ContractError("network has no ConcatChannels junction");
    return layers_[aux_layer_].aux_shape;
}

std::vector<std::pair<std::string, Shape>> Network::parameter_shapes() const {
    std::vector<std::pair<std::string, Shape>> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const LayerSpec& l = layers_[i];
        std::string base = "layer" + std::to_string(i);
        switch (l.kind) {
            case LayerKind::Dense:
                out.emplace_back(base + ".weight", Shape{l.out_size, l.in_size});
                out.emplace_back(base + ".bias", Shape{l.out_size});
                break;
            case LayerKind::TransposedConv2D:
                out.emplace_back(base + ".weight",
                                 Shape{l.in_channels, l.out_channels, l.kernel, l.kernel});
                out.emplace_back(base + ".bias", Shape{l.out_channels});
                break;
            case LayerKind::AffineNorm:
                out.emplace_back(base + ".scale", Shape{l.channels});
                out.emplace_back(base + ".shift", Shape{l.channels});
                break;
            default:
                break;
        }
    }
    return out;
}

ParameterSet Network::init_params(std::uint64_t seed) const {
    Rng rng(seed);
    ParameterSet ps;
    for (const auto& [name, shape] : parameter_shapes()) {
        Tensor t = Tensor::zeros(shape);
        if (name.ends_with(".weight")) {
            for (int i = 0; i < t.size(); ++i) t.data[i] = rng.normal(0.0, 0.02);
        } else if (name.ends_with(".scale")) {
            t.data.setOnes();
        }
        ps.add(name, std::move(t));
    }
    return ps;
}

namespace {

struct ConvGeom {
    int ci, co, k, s, p;
    int hi, wi, ho, wo;
};

ConvGeom conv_geom(const LayerSpec& l, const Shape& in, const Shape& out) {
    return ConvGeom{l.in_channels, l.out_channels, l.kernel, l.stride, l.padding,
                    in[1], in[2], out[1], out[2]};
}

void tconv_forward(const ConvGeom& g, const Vec& in, const Vec& w, const Vec& b, Vec& out) {
    out.setZero();
    // out[co, hi*s - p + kh, wi*s - p + kw] += in[ci,hi,wi] * w[ci,co,kh,kw]
    for (int ci = 0; ci < g.ci; ++ci) {
        for (int hi = 0; hi < g.hi; ++hi) {
            for (int wi = 0; wi < g.wi; ++wi) {
                double v = in[(ci * g.hi + hi) * g.wi + wi];
                if (v == 0.0) continue;
                int hbase = hi * g.s - g.p;
                int wbase = wi * g.s - g.p;
                for (int co = 0; co < g.co; ++co) {
                    const double* wk = w.data() + ((ci * g.co + co) * g.k) * g.k;
                    double* op = out.data() + co * g.ho * g.wo;
                    for (int kh = 0; kh < g.k; ++kh) {
                        int ho = hbase + kh;
                        if (ho < 0 || ho >= g.ho) continue;
                        for (int kw = 0; kw < g.k; ++kw) {
                            int wo = wbase + kw;
                            if (wo < 0 || wo >= g.wo) continue;
                            op[ho * g.wo + wo] += v * wk[kh * g.k + kw];
                        }
                    }
                }
            }
        }
    }
    for (int co = 0; co < g.co; ++co)
        out.segment(co * g.ho * g.wo, g.ho * g.wo).array() += b[co];
}

void tconv_backward(const ConvGeom& g, const Vec& in, const Vec& w, const Vec& up,
                    Vec& din, Vec& dw, Vec& db) {
    din.setZero();
    for (int ci = 0; ci < g.ci; ++ci) {
        for (int hi = 0; hi < g.hi; ++hi) {
            for (int wi = 0; wi < g.wi; ++wi) {
                double v = in[(ci * g.hi + hi) * g.wi + wi];
                double acc = 0.0;
                int hbase = hi * g.s - g.p;
                int wbase = wi * g.s - g.p;
                for (int co = 0; co < g.co; ++co) {
                    const double* wk = w.data() + ((ci * g.co + co) * g.k) * g.k;
                    double* dwk = dw.data() + ((ci * g.co + co) * g.k) * g.k;
                    const double* gp = up.data() + co * g.ho * g.wo;
                    for (int kh = 0; kh < g.k; ++kh) {
                        int ho = hbase + kh;
                        if (ho < 0 || ho >= g.ho) continue;
                        for (int kw = 0; kw < g.k; ++kw) {
                            int wo = wbase + kw;
                            if (wo < 0 || wo >= g.wo) continue;
                            double gv = gp[ho * g.wo + wo];
                            acc += gv * wk[kh * g.k + kw];
                            dwk[kh * g.k + kw] += gv * v;
                        }
                    }
                }
                din[(ci * g.hi + hi) * g.wi + wi] = acc;
            }
        }
    }
    for (int co = 0; co < g.co; ++co)
        db[co] += up.segment(co * g.ho * g.wo, g.ho * g.wo).sum();
}

void tconv_backward_input(const ConvGeom& g, const Vec& w, const Vec& up, Vec& din) {
    for (int ci = 0; ci < g.ci; ++ci) {
        for (int hi = 0; hi < g.hi; ++hi) {
            for (int wi = 0; wi < g.wi; ++wi) {
                double acc = 0.0;
                int hbase = hi * g.s - g.p;
                int wbase = wi * g.s - g.p;
                for (int co = 0; co < g.co; ++co) {
                    const double* wk = w.data() + ((ci * g.co + co) * g.k) * g.k;
                    const double* gp = up.data() + co * g.ho * g.wo;
                    for (int kh = 0; kh < g.k; ++kh) {
                        int ho = hbase + kh;
                        if (ho < 0 || ho >= g.ho) continue;
                        for (int kw = 0; kw < g.k; ++kw) {
                            int wo = wbase + kw;
                            if (wo < 0 || wo >= g.wo) continue;
                            acc += gp[ho * g.wo + wo] * wk[kh * g.k + kw];
                        }
                    }
                }
                din[(ci * g.hi + hi) * g.wi + wi] = acc;
            }
        }
    }
}

} // namespace

Tensor forward(const Network& net, const ParameterSet& params, const Tensor& input,
               const Tensor* aux, Tape* tape) {
    input.require_shape(net.input_shape(), "forward input");
    if (net.has_aux()) {
        if (!aux) throw ContractError("forward: network requires an aux tensor");
        aux->require_shape(net.aux_shape(), "forward aux");
    } else if (aux) {
        throw ContractError("forward: network has no ConcatChannels junction but aux given");
    }

    const auto& layers = net.layers();
    std::vector<Tensor> boundaries;
    if (tape) boundaries.reserve(layers.size() + 1);

    Tensor cur = input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (tape) boundaries.push_back(cur);
        const LayerSpec& l = layers[i];
        const Shape& out_shape = net.boundary_shape(i + 1);
        std::string base = "layer" + std::to_string(i);
        Tensor out;
        switch (l.kind) {
            case LayerKind::Dense: {
                const Tensor& w = params.get(base + ".weight");
                const Tensor& b = params.get(base + ".bias");
                Eigen::Map<const RowMat> W(w.data.data(), l.out_size, l.in_size);
                out = Tensor(out_shape, W * cur.data + b.data);
                break;
            }
            case LayerKind::TransposedConv2D: {
                const Tensor& w = params.get(base + ".weight");
                const Tensor& b = params.get(base + ".bias");
                Vec o(shape_size(out_shape));
                tconv_forward(conv_geom(l, net.boundary_shape(i), out_shape), cur.data, w.data,
                              b.data, o);
                out = Tensor(out_shape, std::move(o));
                break;
            }
            case LayerKind::ReLU:
                out = Tensor(out_shape, cur.data.cwiseMax(0.0));
                break;
            case LayerKind::LeakyReLU:
                out = Tensor(out_shape, cur.data.cwiseMax(l.slope * cur.data));
                break;
            case LayerKind::Tanh:
                out = Tensor(out_shape, cur.data.array().tanh().matrix());
                break;
            case LayerKind::Sigmoid:
                out = Tensor(out_shape, (1.0 / (1.0 + (-cur.data.array()).exp())).matrix());
                break;
            case LayerKind::Reshape:
                out = Tensor(out_shape, cur.data);
                break;
            case LayerKind::ConcatChannels: {
                Vec o(cur.size() + aux->size());
                o << cur.data, aux->data;
                out = Tensor(out_shape, std::move(o));
                break;
            }
            case LayerKind::AffineNorm: {
                const Tensor& scale = params.get(base + ".scale");
                const Tensor& shift = params.get(base + ".shift");
                int plane = shape_size(net.boundary_shape(i)) / l.channels;
                Vec o(cur.size());
                for (int c = 0; c < l.channels; ++c)
                    o.segment(c * plane, plane) =
                        cur.data.segment(c * plane, plane).array() * scale.data[c] + shift.data[c];
                out = Tensor(out_shape, std::move(o));
                break;
            }
        }
        if (!out.data.allFinite())
            throw NumericError(layer_err(i, l, "non-finite output"));
        cur = std::move(out);
    }

    if (tape) {
        boundaries.push_back(cur);
        tape->net = &net;
        tape->boundaries = std::move(boundaries);
        if (net.has_aux()) tape->aux = *aux;
        tape->consumed = false;
    }
    return cur;
}

namespace {

// Shared reverse pass. When `grads` is null, parameter gradients are skipped;
// otherwise they are accumulated (+=) into the tensors of `grads`.
BackwardResult backward_core(const ParameterSet& params, Tape& tape, const Tensor& upstream,
                             ParameterSet* grads) {
    if (!tape.net) throw ContractError("backward: empty tape");
    if (tape.consumed) throw ContractError("backward: tape already consumed");
    tape.consumed = true;

    const Network& net = *tape.net;
    upstream.require_shape(net.output_shape(), "backward upstream");

    BackwardResult res;

    const auto& layers = net.layers();
    Vec g = upstream.data;
    for (int i = static_cast<int>(layers.size()) - 1; i >= 0; --i) {
        const LayerSpec& l = layers[i];
        const Tensor& x = tape.boundaries[i];
        std::string base = "layer" + std::to_string(i);
        switch (l.kind) {
            case LayerKind::Dense: {
                const Tensor& w = params.get(base + ".weight");
                Eigen::Map<const RowMat> W(w.data.data(), l.out_size, l.in_size);
                if (grads) {
                    Tensor& dw = grads->get(base + ".weight");
                    Eigen::Map<RowMat> dW(dw.data.data(), l.out_size, l.in_size);
                    dW.noalias() += g * x.data.transpose();
                    grads->get(base + ".bias").data += g;
                }
                g = W.transpose() * g;
                break;
            }
            case LayerKind::TransposedConv2D: {
                const Tensor& w = params.get(base + ".weight");
                Vec din(x.size());
                if (grads) {
                    tconv_backward(conv_geom(l, net.boundary_shape(i), net.boundary_shape(i + 1)),
                                   x.data, w.data, g, din, grads->get(base + ".weight").data,
                                   grads->get(base + ".bias").data);
                } else {
                    tconv_backward_input(
                        conv_geom(l, net.boundary_shape(i), net.boundary_shape(i + 1)), w.data, g,
                        din);
                }
                g = std::move(din);
                break;
            }
            case LayerKind::ReLU:
                g = (x.data.array() > 0.0).select(g.array(), 0.0).matrix();
                break;
            case LayerKind::LeakyReLU:
                g = (x.data.array() > 0.0).select(g.array(), l.slope * g.array()).matrix();
                break;
            case LayerKind::Tanh: {
                const Tensor& y = tape.boundaries[i + 1];
                g = (g.array() * (1.0 - y.data.array().square())).matrix();
                break;
            }
            case LayerKind::Sigmoid: {
                const Tensor& y = tape.boundaries[i + 1];
                g = (g.array() * y.data.array() * (1.0 - y.data.array())).matrix();
                break;
            }
            case LayerKind::Reshape:
                break;
            case LayerKind::ConcatChannels: {
                res.aux_grad = Tensor(l.aux_shape, g.tail(shape_size(l.aux_shape)));
                g = g.head(x.size()).eval();
                break;
            }
            case LayerKind::AffineNorm: {
                const Tensor& scale = params.get(base + ".scale");
                int plane = x.size() / l.channels;
                Vec din(x.size());
                for (int c = 0; c < l.channels; ++c) {
                    auto gs = g.segment(c * plane, plane);
                    if (grads) {
                        grads->get(base + ".scale").data[c] +=
                            gs.dot(x.data.segment(c * plane, plane));
                        grads->get(base + ".shift").data[c] += gs.sum();
                    }
                    din.segment(c * plane, plane) = gs * scale.data[c];
                }
                g = std::move(din);
                break;
            }
        }
    }
    res.input_grad = Tensor(net.input_shape(), std::move(g));
    return res;
}

} // namespace

BackwardResult backward(const ParameterSet& params, Tape& tape, const Tensor& upstream) {
    if (!tape.net) throw ContractError("backward: empty tape");
    ParameterSet grads;
    for (const auto& [name, shape] : tape.net->parameter_shapes())
        grads.add(name, Tensor::zeros(shape));
    BackwardResult res = backward_core(params, tape, upstream, &grads);
    res.param_grads = std::move(grads);
    return res;
}

BackwardResult backward_accumulate(const ParameterSet& params, Tape& tape, const Tensor& upstream,
                                   ParameterSet& acc) {
    return backward_core(params, tape, upstream, &acc);
}

BackwardResult backward_input_only(const ParameterSet& params, Tape& tape,
                                   const Tensor& upstream) {
    return backward_core(params, tape, upstream, nullptr);
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, double h) {
    if (h <= 0.0) throw ContractError("finite_difference_gradient: h must be positive");
    Tensor g = Tensor::zeros(x.shape);
    Tensor probe = x;
    for (int i = 0; i < x.size(); ++i) {
        double orig = probe.data[i];
        probe.data[i] = orig + h;
        double fp = f(probe);
        probe.data[i] = orig - h;
        double fm = f(probe);
        probe.data[i] = orig;
        g.data[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

} // namespace ganinv

#include "ganinv/generator.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>

namespace ganinv {

using nlohmann::json;

namespace {

constexpr const char* kMagic = "GANINV-CKPT";
constexpr int kFormatVersion = 1;

json layer_to_json(const LayerSpec& l) {
    json j;
    j["kind"] = layer_kind_name(l.kind);
    switch (l.kind) {
        case LayerKind::Dense:
            j["in"] = l.in_size;
            j["out"] = l.out_size;
            break;
        case LayerKind::TransposedConv2D:
            j["in_channels"] = l.in_channels;
            j["out_channels"] = l.out_channels;
            j["kernel"] = l.kernel;
            j["stride"] = l.stride;
            j["padding"] = l.padding;
            break;
        case LayerKind::LeakyReLU:
            j["slope"] = l.slope;
            break;
        case LayerKind::Reshape:
            j["target"] = l.target_shape;
            break;
        case LayerKind::ConcatChannels:
            j["aux"] = l.aux_shape;
            break;
        case LayerKind::AffineNorm:
            j["channels"] = l.channels;
            break;
        default:
            break;
    }
    return j;
}

LayerSpec layer_from_json(const json& j) {
    LayerKind kind = layer_kind_from_name(j.at("kind").get<std::string>());
    switch (kind) {
        case LayerKind::Dense:
            return LayerSpec::dense(j.at("in").get<int>(), j.at("out").get<int>());
        case LayerKind::TransposedConv2D:
            return LayerSpec::transposed_conv2d(j.at("in_channels").get<int>(),
                                                j.at("out_channels").get<int>(),
                                                j.at("kernel").get<int>(), j.at("stride").get<int>(),
                                                j.at("padding").get<int>());
        case LayerKind::ReLU:
            return LayerSpec::relu();
        case LayerKind::LeakyReLU:
            return LayerSpec::leaky_relu(j.value("slope", 0.2));
        case LayerKind::Tanh:
            return LayerSpec::tanh();
        case LayerKind::Sigmoid:
            return LayerSpec::sigmoid();
        case LayerKind::Reshape:
            return LayerSpec::reshape(j.at("target").get<Shape>());
        case LayerKind::ConcatChannels:
            return LayerSpec::concat_channels(j.at("aux").get<Shape>());
        case LayerKind::AffineNorm:
            return LayerSpec::affine_norm(j.at("channels").get<int>());
    }
    throw FormatError("unknown layer kind in spec");
}

json spec_to_json_obj(const GeneratorSpec& spec) {
    json j;
    j["d_z"] = spec.d_z;
    j["d_y"] = spec.d_y;
    j["image_shape"] = spec.image_shape;
    j["linear_output"] = spec.linear_output;
    json layers = json::array();
    for (const LayerSpec& l : spec.layers) layers.push_back(layer_to_json(l));
    j["layers"] = layers;
    return j;
}

GeneratorSpec spec_from_json_obj(const json& j) {
    GeneratorSpec spec;
    spec.d_z = j.at("d_z").get<int>();
    spec.d_y = j.at("d_y").get<int>();
    spec.image_shape = j.at("image_shape").get<Shape>();
    spec.linear_output = j.value("linear_output", false);
    for (const json& lj : j.at("layers")) spec.layers.push_back(layer_from_json(lj));
    return spec;
}

} // namespace

std::string generator_spec_to_json(const GeneratorSpec& spec) {
    return spec_to_json_obj(spec).dump();
}

GeneratorSpec generator_spec_from_json(const std::string& json_text) {
    try {
        return spec_from_json_obj(json::parse(json_text));
    } catch (const json::exception& e) {
        throw FormatError(std::string("invalid generator spec JSON: ") + e.what());
    }
}

Network GeneratorSpec::validate() const {
    if (d_z < 1) throw BuildError("generator spec: d_z must be >= 1");
    if (d_y < 2) throw BuildError("generator spec: d_y must be >= 2");
    if (image_shape.size() != 3)
        throw BuildError("generator spec: image_shape must be {channels, height, width}");
    if (layers.empty()) throw BuildError("generator spec: empty layer stack");
    if (!linear_output && layers.back().kind != LayerKind::Tanh)
        throw BuildError("generator spec: final activation must be Tanh");
    Network net = Network::build(Shape{d_z}, layers);
    if (!net.has_aux() || net.aux_shape() != Shape{d_y})
        throw BuildError("generator spec: stack must concatenate a d_y-sized conditional input");
    if (net.output_shape() != image_shape)
        throw BuildError("generator spec: stack output " + shape_str(net.output_shape()) +
                         " does not match image_shape " + shape_str(image_shape));
    return net;
}

GeneratorSpec GeneratorSpec::desk_scale(int d_z, int d_y, int channels, int base) {
    if (base % 4 != 0 || base < 4) throw BuildError("desk_scale: base must be a multiple of 4");
    GeneratorSpec spec;
    spec.d_z = d_z;
    spec.d_y = d_y;
    spec.image_shape = Shape{channels, 32, 32};
    spec.layers = {
        LayerSpec::concat_channels(Shape{d_y}),
        LayerSpec::dense(d_z + d_y, base * 4 * 4),
        LayerSpec::reshape(Shape{base, 4, 4}),
        LayerSpec::transposed_conv2d(base, base / 2, 4, 2, 1),
        LayerSpec::affine_norm(base / 2),
        LayerSpec::relu(),
        LayerSpec::transposed_conv2d(base / 2, base / 4, 4, 2, 1),
        LayerSpec::affine_norm(base / 4),
        LayerSpec::relu(),
        LayerSpec::transposed_conv2d(base / 4, channels, 4, 2, 1),
        LayerSpec::tanh(),
    };
    return spec;
}

GeneratorCheckpoint build_generator(const GeneratorSpec& spec, std::uint64_t init_seed) {
    GeneratorCheckpoint ckpt;
    ckpt.net = spec.validate();
    ckpt.spec = spec;
    ckpt.params = ckpt.net.init_params(init_seed);
    ckpt.seed = init_seed;
    ckpt.provenance = "random-init";
    return ckpt;
}

Tensor generate(const GeneratorCheckpoint& ckpt, const Tensor& z, const Tensor& y) {
    z.require_shape(Shape{ckpt.spec.d_z}, "generate z");
    y.require_shape(Shape{ckpt.spec.d_y}, "generate y");
    return forward(ckpt.net, ckpt.params, z, &y);
}

std::pair<Tensor, Tensor> input_gradients(const GeneratorCheckpoint& ckpt, const Tensor& z,
                                          const Tensor& y, const Tensor& upstream) {
    z.require_shape(Shape{ckpt.spec.d_z}, "input_gradients z");
    y.require_shape(Shape{ckpt.spec.d_y}, "input_gradients y");
    Tape tape;
    forward(ckpt.net, ckpt.params, z, &y, &tape);
    BackwardResult back = backward_input_only(ckpt.params, tape, upstream);
    return {std::move(back.input_grad), std::move(*back.aux_grad)};
}

void save_checkpoint(const GeneratorCheckpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for write: " + path);

    json header;
    header["format_version"] = kFormatVersion;
    header["spec"] = spec_to_json_obj(ckpt.spec);
    header["seed"] = ckpt.seed;
    header["provenance"] = ckpt.provenance;
    json params = json::array();
    for (std::size_t i = 0; i < ckpt.params.count(); ++i) {
        json p;
        p["name"] = ckpt.params.names[i];
        p["shape"] = ckpt.params.tensors[i].shape;
        params.push_back(p);
    }
    header["params"] = params;

    out << kMagic << ' ' << kFormatVersion << '\n';
    out << header.dump() << '\n';
    out << "END-HEADER\n";
    for (const Tensor& t : ckpt.params.tensors) {
        std::uint64_t bytes = static_cast<std::uint64_t>(t.size()) * sizeof(double);
        char lenbuf[8];
        for (int b = 0; b < 8; ++b) lenbuf[b] = static_cast<char>((bytes >> (8 * b)) & 0xff);
        out.write(lenbuf, 8);
        out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(bytes));
    }
    if (!out) throw IoError("write failed: " + path);
}

GeneratorCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);

    std::string magic_line;
    if (!std::getline(in, magic_line)) throw FormatError(path + ": empty file");
    auto space = magic_line.find(' ');
    if (magic_line.substr(0, space) != kMagic)
        throw FormatError(path + ": bad magic string");
    int version = -1;
    try {
        version = std::stoi(magic_line.substr(space + 1));
    } catch (...) {
        throw FormatError(path + ": corrupt header (unreadable version)");
    }
    if (version != kFormatVersion)
        throw VersionError(path + ": unsupported format version " + std::to_string(version));

    std::string header_line, end_line;
    if (!std::getline(in, header_line) || !std::getline(in, end_line) || end_line != "END-HEADER")
        throw FormatError(path + ": corrupt header (missing END-HEADER)");

    json header;
    try {
        header = json::parse(header_line);
    } catch (const json::exception& e) {
        throw FormatError(path + ": corrupt header (" + e.what() + ")");
    }

    GeneratorCheckpoint ckpt;
    try {
        ckpt.spec = spec_from_json_obj(header.at("spec"));
        ckpt.seed = header.at("seed").get<std::uint64_t>();
        ckpt.provenance = header.at("provenance").get<std::string>();
    } catch (const json::exception& e) {
        throw FormatError(path + ": corrupt header (" + e.what() + ")");
    }
    ckpt.net = ckpt.spec.validate();

    for (const json& p : header.at("params")) {
        std::string name = p.at("name").get<std::string>();
        Shape shape = p.at("shape").get<Shape>();
        char lenbuf[8];
        in.read(lenbuf, 8);
        if (in.gcount() != 8) throw FormatError(path + ": truncated payload (missing length)");
        std::uint64_t bytes = 0;
        for (int b = 0; b < 8; ++b)
            bytes |= static_cast<std::uint64_t>(static_cast<unsigned char>(lenbuf[b])) << (8 * b);
        std::uint64_t expected = static_cast<std::uint64_t>(shape_size(shape)) * sizeof(double);
        if (bytes != expected)
            throw FormatError(path + ": payload length mismatch for " + name);
        Tensor t = Tensor::zeros(shape);
        in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(bytes));
        if (static_cast<std::uint64_t>(in.gcount()) != bytes)
            throw FormatError(path + ": truncated payload in " + name);
        ckpt.params.add(std::move(name), std::move(t));
    }

    // Shapes must match what the validated spec declares.
    for (const auto& [name, shape] : ckpt.net.parameter_shapes()) {
        if (!ckpt.params.has(name)) throw FormatError(path + ": missing parameter " + name);
        if (ckpt.params.get(name).shape != shape)
            throw FormatError(path + ": parameter shape mismatch for " + name);
    }
    ckpt.params.require_finite(path);
    return ckpt;
}

} // namespace ganinv

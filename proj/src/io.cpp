#include "ganinv/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace ganinv {

using nlohmann::json;

namespace {

constexpr const char* kDataMagic = "GANINV-DATA";
constexpr int kDataVersion = 1;

unsigned char to_byte(double v) {
    double scaled = (std::clamp(v, -1.0, 1.0) + 1.0) * 0.5 * 255.0;
    return static_cast<unsigned char>(std::lround(scaled));
}

void write_block(std::ofstream& out, const Vec& v) {
    std::uint64_t bytes = static_cast<std::uint64_t>(v.size()) * sizeof(double);
    char lenbuf[8];
    for (int b = 0; b < 8; ++b) lenbuf[b] = static_cast<char>((bytes >> (8 * b)) & 0xff);
    out.write(lenbuf, 8);
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(bytes));
}

Vec read_block(std::ifstream& in, std::size_t expected, const std::string& path) {
    char lenbuf[8];
    in.read(lenbuf, 8);
    if (in.gcount() != 8) throw FormatError(path + ": truncated payload (missing length)");
    std::uint64_t bytes = 0;
    for (int b = 0; b < 8; ++b)
        bytes |= static_cast<std::uint64_t>(static_cast<unsigned char>(lenbuf[b])) << (8 * b);
    if (bytes != expected * sizeof(double))
        throw FormatError(path + ": payload length mismatch");
    Vec v(static_cast<Eigen::Index>(expected));
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(bytes));
    if (static_cast<std::uint64_t>(in.gcount()) != bytes)
        throw FormatError(path + ": truncated payload");
    return v;
}

} // namespace

void write_pgm(const Tensor& image, const std::string& path) {
    if (image.shape.size() != 3 || image.shape[0] != 1)
        throw ShapeError("write_pgm: expected 1xHxW image, got " + shape_str(image.shape));
    int h = image.shape[1], w = image.shape[2];
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for write: " + path);
    out << "P5\n" << w << ' ' << h << "\n255\n";
    for (int i = 0; i < h * w; ++i) out.put(static_cast<char>(to_byte(image.data[i])));
    if (!out) throw IoError("write failed: " + path);
}

void write_ppm(const Tensor& image, const std::string& path) {
    if (image.shape.size() != 3 || image.shape[0] != 3)
        throw ShapeError("write_ppm: expected 3xHxW image, got " + shape_str(image.shape));
    int h = image.shape[1], w = image.shape[2];
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for write: " + path);
    out << "P6\n" << w << ' ' << h << "\n255\n";
    for (int i = 0; i < h * w; ++i)
        for (int c = 0; c < 3; ++c)
            out.put(static_cast<char>(to_byte(image.data[c * h * w + i])));
    if (!out) throw IoError("write failed: " + path);
}

void write_image_auto(const Tensor& image, const std::string& path) {
    if (image.shape.size() == 3 && image.shape[0] == 3)
        write_ppm(image, path);
    else
        write_pgm(image, path);
}

Tensor make_grid(const std::vector<Tensor>& images, int rows, int cols) {
    if (images.empty() || rows < 1 || cols < 1 ||
        static_cast<int>(images.size()) != rows * cols)
        throw ContractError("make_grid: need rows*cols images");
    const Shape& s = images[0].shape;
    if (s.size() != 3) throw ShapeError("make_grid: images must be CHW");
    int C = s[0], H = s[1], W = s[2];
    Tensor grid = Tensor::zeros(Shape{C, rows * H, cols * W});
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const Tensor& img = images[r * cols + c];
            img.require_shape(s, "make_grid tile");
            for (int ch = 0; ch < C; ++ch)
                for (int y = 0; y < H; ++y)
                    for (int x = 0; x < W; ++x)
                        grid.data[(ch * rows * H + (r * H + y)) * cols * W + c * W + x] =
                            img.data[(ch * H + y) * W + x];
        }
    }
    return grid;
}

void save_dataset(const std::vector<LabeledImage>& images, const std::string& path) {
    if (images.empty()) throw ContractError("save_dataset: empty dataset");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for write: " + path);

    json header;
    header["format_version"] = kDataVersion;
    header["image_shape"] = images[0].pixels.shape;
    json entries = json::array();
    for (const LabeledImage& img : images) {
        img.pixels.require_shape(images[0].pixels.shape, "save_dataset pixels");
        json e;
        e["id"] = img.id;
        e["label"] = img.label;
        e["provenance"] = provenance_name(img.provenance);
        e["d_z"] = img.true_z ? img.true_z->size() : 0;
        entries.push_back(e);
    }
    header["entries"] = entries;

    out << kDataMagic << ' ' << kDataVersion << '\n';
    out << header.dump() << '\n';
    out << "END-HEADER\n";
    for (const LabeledImage& img : images) {
        write_block(out, img.pixels.data);
        if (img.true_z) write_block(out, img.true_z->data);
    }
    if (!out) throw IoError("write failed: " + path);
}

std::vector<LabeledImage> load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);

    std::string magic_line;
    if (!std::getline(in, magic_line)) throw FormatError(path + ": empty file");
    auto space = magic_line.find(' ');
    if (magic_line.substr(0, space) != kDataMagic) throw FormatError(path + ": bad magic string");
    int version = -1;
    try {
        version = std::stoi(magic_line.substr(space + 1));
    } catch (...) {
        throw FormatError(path + ": corrupt header (unreadable version)");
    }
    if (version != kDataVersion)
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

    Shape image_shape = header.at("image_shape").get<Shape>();
    std::size_t pixels = static_cast<std::size_t>(shape_size(image_shape));
    std::vector<LabeledImage> out;
    for (const json& e : header.at("entries")) {
        LabeledImage img;
        img.id = e.at("id").get<std::string>();
        img.label = e.at("label").get<int>();
        img.provenance = provenance_from_name(e.at("provenance").get<std::string>());
        img.pixels = Tensor(image_shape, read_block(in, pixels, path));
        int d_z = e.at("d_z").get<int>();
        if (d_z > 0)
            img.true_z = Tensor(Shape{d_z}, read_block(in, static_cast<std::size_t>(d_z), path));
        out.push_back(std::move(img));
    }
    return out;
}

} // namespace ganinv

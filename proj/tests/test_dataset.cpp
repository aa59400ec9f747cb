#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "ganinv/dataset.hpp"
#include "ganinv/io.hpp"
#include "oracles.hpp"

using namespace ganinv;
using namespace ganinv::testing;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
    return fs::temp_directory_path() / ("ganinv_dataset_" + name);
}

void put_be32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(b), 4);
}

// Writes a minimal IDX pair: `n` 28x28 images with the given fill bytes.
void write_idx_pair(const fs::path& imgs, const fs::path& labs,
                    const std::vector<unsigned char>& fills, const std::vector<unsigned char>& labels,
                    std::uint32_t rows = 28, std::uint32_t cols = 28,
                    std::uint32_t img_magic = 0x803, std::uint32_t lab_magic = 0x801,
                    int truncate_last_image_by = 0) {
    std::ofstream io(imgs.string(), std::ios::binary);
    put_be32(io, img_magic);
    put_be32(io, static_cast<std::uint32_t>(fills.size()));
    put_be32(io, rows);
    put_be32(io, cols);
    for (std::size_t i = 0; i < fills.size(); ++i) {
        int n = static_cast<int>(rows * cols);
        if (i + 1 == fills.size()) n -= truncate_last_image_by;
        std::vector<char> body(n, static_cast<char>(fills[i]));
        io.write(body.data(), body.size());
    }
    io.close();
    std::ofstream lo(labs.string(), std::ios::binary);
    put_be32(lo, lab_magic);
    put_be32(lo, static_cast<std::uint32_t>(labels.size()));
    lo.write(reinterpret_cast<const char*>(labels.data()), labels.size());
}

} // namespace

TEST_CASE("one_hot basics") {
    Tensor y = one_hot(2, 4);
    CHECK(y.shape == Shape{4});
    CHECK(y.data[2] == 1.0);
    CHECK(y.data.sum() == 1.0);
    CHECK_THROWS_AS(one_hot(4, 4), ContractError);
    CHECK_THROWS_AS(one_hot(-1, 4), ContractError);
}

TEST_CASE("glyph config validation") {
    GlyphConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.classes = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = GlyphConfig{};
    cfg.height = 4;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = GlyphConfig{};
    cfg.channels = 2;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = GlyphConfig{};
    cfg.position_jitter = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("glyph synthesis is deterministic, balanced and in range") {
    GlyphConfig cfg;
    auto a = synth_glyphs(cfg, 5, 42);
    auto b = synth_glyphs(cfg, 5, 42);
    auto c = synth_glyphs(cfg, 5, 43);

    REQUIRE(a.size() == 50);
    REQUIRE(b.size() == 50);
    bool identical = true, differs_from_c = false;
    std::vector<int> counts(cfg.classes, 0);
    std::set<std::string> ids;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].pixels.data != b[i].pixels.data) identical = false;
        if (a[i].pixels.data != c[i].pixels.data) differs_from_c = true;
        CHECK(a[i].pixels.shape == Shape{1, 32, 32});
        CHECK(a[i].pixels.data.minCoeff() >= -1.0);
        CHECK(a[i].pixels.data.maxCoeff() <= 1.0);
        CHECK(a[i].provenance == Provenance::Real);
        CHECK(!a[i].true_z.has_value());
        ++counts[a[i].label];
        ids.insert(a[i].id);
    }
    CHECK(identical);
    CHECK(differs_from_c);
    CHECK(ids.size() == a.size());
    for (int k = 0; k < cfg.classes; ++k) CHECK(counts[k] == 5);

    // jitter actually varies samples within a class
    const LabeledImage* first = &a[0];
    const LabeledImage* second = nullptr;
    for (std::size_t i = 1; i < a.size() && !second; ++i)
        if (a[i].label == first->label) second = &a[i];
    REQUIRE(second != nullptr);
    CHECK(first->pixels.data != second->pixels.data);
}

TEST_CASE("glyph classes separate under a pixel-mean classifier") {
    GlyphConfig cfg;
    auto train = synth_glyphs(cfg, 30, 1);
    auto holdout = synth_glyphs(cfg, 20, 2);
    NearestClassMean clf = NearestClassMean::fit(train, cfg.classes);
    CHECK(clf.accuracy(holdout) >= 0.95);
}

TEST_CASE("IDX reading maps pixels and pads to 32x32") {
    fs::path imgs = temp_path("imgs.idx"), labs = temp_path("labs.idx");
    write_idx_pair(imgs, labs, {0, 255, 128}, {7, 0, 3});
    auto data = read_idx(imgs.string(), labs.string());
    REQUIRE(data.size() == 3);
    CHECK(data[0].label == 7);
    CHECK(data[1].label == 0);
    CHECK(data[2].label == 3);
    for (const auto& d : data) {
        CHECK(d.pixels.shape == Shape{1, 32, 32});
        CHECK(d.provenance == Provenance::Real);
    }
    // interior value mapping: center pixel of image i has fill value
    auto center = [](const Tensor& t) { return t.data[16 * 32 + 16]; };
    CHECK(center(data[0].pixels) == doctest::Approx(-1.0));
    CHECK(center(data[1].pixels) == doctest::Approx(1.0));
    CHECK(center(data[2].pixels) == doctest::Approx(128.0 / 255.0 * 2.0 - 1.0));
    // 2-pixel border is padded with -1 even for the all-white image
    const Tensor& white = data[1].pixels;
    for (int i = 0; i < 32; ++i) {
        CHECK(white.data[0 * 32 + i] == -1.0);       // top row
        CHECK(white.data[31 * 32 + i] == -1.0);      // bottom row
        CHECK(white.data[i * 32 + 0] == -1.0);       // left column
        CHECK(white.data[i * 32 + 31] == -1.0);      // right column
        CHECK(white.data[1 * 32 + i] == -1.0);       // second row (pad = 2)
    }
    CHECK(white.data[2 * 32 + 2] == doctest::Approx(1.0)); // first content pixel
    fs::remove(imgs);
    fs::remove(labs);
}

TEST_CASE("IDX format errors are distinct") {
    fs::path imgs = temp_path("bad_imgs.idx"), labs = temp_path("bad_labs.idx");

    SUBCASE("bad image magic") {
        write_idx_pair(imgs, labs, {0}, {1}, 28, 28, 0x804);
        CHECK_THROWS_WITH_AS(read_idx(imgs.string(), labs.string()),
                             doctest::Contains("bad IDX image magic"), FormatError);
    }
    SUBCASE("bad label magic") {
        write_idx_pair(imgs, labs, {0}, {1}, 28, 28, 0x803, 0x802);
        CHECK_THROWS_WITH_AS(read_idx(imgs.string(), labs.string()),
                             doctest::Contains("bad IDX label magic"), FormatError);
    }
    SUBCASE("count mismatch") {
        write_idx_pair(imgs, labs, {0, 1}, {1});
        CHECK_THROWS_WITH_AS(read_idx(imgs.string(), labs.string()),
                             doctest::Contains("count mismatch"), FormatError);
    }
    SUBCASE("unsupported geometry") {
        write_idx_pair(imgs, labs, {0}, {1}, 14, 14);
        CHECK_THROWS_WITH_AS(read_idx(imgs.string(), labs.string()),
                             doctest::Contains("expected 28x28"), FormatError);
    }
    SUBCASE("truncated image payload") {
        write_idx_pair(imgs, labs, {0, 1}, {1, 2}, 28, 28, 0x803, 0x801, 10);
        CHECK_THROWS_WITH_AS(read_idx(imgs.string(), labs.string()),
                             doctest::Contains("truncated image payload"), FormatError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(read_idx("/nonexistent/x.idx", "/nonexistent/y.idx"), IoError);
    }
    fs::remove(imgs);
    fs::remove(labs);
}

TEST_CASE("real/generated split is balanced, tagged and deterministic") {
    GeneratorSpec spec = GeneratorSpec::desk_scale(8, 3, 1, 4);
    GeneratorCheckpoint ckpt = build_generator(spec, 5);
    GlyphConfig cfg;
    cfg.classes = 3;
    auto holdout = synth_glyphs(cfg, 10, 9);

    EvalSplit s = split_real_generated(ckpt, holdout, 6, 77);
    REQUIRE(s.generated.size() == 6);
    REQUIRE(s.real.size() == 6);

    std::vector<int> gc(3, 0), rc(3, 0);
    for (const auto& g : s.generated) {
        ++gc[g.label];
        CHECK(g.provenance == Provenance::Generated);
        REQUIRE(g.true_z.has_value());
        CHECK(g.true_z->shape == Shape{8});
        // image really is G(true_z, one_hot(label))
        CHECK(g.pixels.data == generate(ckpt, *g.true_z, one_hot(g.label, 3)).data);
    }
    for (const auto& r : s.real) {
        ++rc[r.label];
        CHECK(r.provenance == Provenance::Real);
        CHECK(!r.true_z.has_value());
        // drawn from the holdout set
        bool found = false;
        for (const auto& h : holdout)
            if (h.pixels.data == r.pixels.data) found = true;
        CHECK(found);
    }
    for (int k = 0; k < 3; ++k) {
        CHECK(gc[k] == 2);
        CHECK(rc[k] == 2);
    }

    EvalSplit s2 = split_real_generated(ckpt, holdout, 6, 77);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(s.generated[i].pixels.data == s2.generated[i].pixels.data);
        CHECK(s.real[i].id == s2.real[i].id);
    }

    CHECK_THROWS_AS(split_real_generated(ckpt, holdout, 0, 1), ContractError);
    CHECK_THROWS_AS(split_real_generated(ckpt, {}, 2, 1), ContractError);
}

TEST_CASE("dataset files round trip bit exact") {
    GlyphConfig cfg;
    cfg.classes = 3;
    auto images = synth_glyphs(cfg, 2, 4);
    images[0].true_z = Tensor::vector((Vec(3) << 0.25, -1.0 / 3.0, 0.9999999999999999).finished());
    images[0].provenance = Provenance::Generated;

    fs::path path = temp_path("round.gdata");
    save_dataset(images, path.string());
    auto back = load_dataset(path.string());
    REQUIRE(back.size() == images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        CHECK(back[i].pixels.shape == images[i].pixels.shape);
        CHECK(back[i].pixels.data == images[i].pixels.data);
        CHECK(back[i].label == images[i].label);
        CHECK(back[i].provenance == images[i].provenance);
        CHECK(back[i].id == images[i].id);
        REQUIRE(back[i].true_z.has_value() == images[i].true_z.has_value());
        if (images[i].true_z) CHECK(back[i].true_z->data == images[i].true_z->data);
    }
    fs::remove(path);
}

TEST_CASE("image grid tiling") {
    std::vector<Tensor> tiles;
    for (int i = 0; i < 6; ++i) {
        Tensor t = Tensor::zeros(Shape{1, 4, 5});
        t.data.setConstant(i / 5.0);
        tiles.push_back(t);
    }
    Tensor grid = make_grid(tiles, 2, 3);
    CHECK(grid.shape == Shape{1, 8, 15});
    // tile (1,2) occupies rows 4..7, cols 10..14 and holds value 5/5=1
    CHECK(grid.data[4 * 15 + 10] == doctest::Approx(1.0));
    CHECK(grid.data[0] == doctest::Approx(0.0));
    CHECK_THROWS_AS(make_grid(tiles, 2, 2), ContractError);
}

TEST_CASE("preview image files have the right geometry") {
    Tensor img = Tensor::zeros(Shape{1, 3, 4});
    img.data.setLinSpaced(12, -1.0, 1.0);
    fs::path path = temp_path("img.pgm");
    write_image_auto(img, path.string());
    std::ifstream in(path.string(), std::ios::binary);
    std::string magic;
    int w = 0, h = 0, maxv = 0;
    in >> magic >> w >> h >> maxv;
    CHECK(magic == "P5");
    CHECK(w == 4);
    CHECK(h == 3);
    CHECK(maxv == 255);
    in.get(); // single whitespace before payload
    std::vector<unsigned char> payload(12);
    in.read(reinterpret_cast<char*>(payload.data()), 12);
    CHECK(in.gcount() == 12);
    CHECK(payload[0] == 0);    // -1 maps to 0
    CHECK(payload[11] == 255); // +1 maps to 255
    fs::remove(path);
}

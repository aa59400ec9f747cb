#pragma once

#include <string>
#include <vector>

#include "ganinv/dataset.hpp"

namespace ganinv {

// 8-bit PGM/PPM with the affine map [-1,1] -> [0,255]. These files are for
// inspection only; bit-exact pipelines always read the float64 dataset files.
void write_pgm(const Tensor& image, const std::string& path);
void write_ppm(const Tensor& image, const std::string& path);
void write_image_auto(const Tensor& image, const std::string& path); // picks by channel count

// Tile row-major; all images must share one shape.
Tensor make_grid(const std::vector<Tensor>& images, int rows, int cols);

// Dataset container: text header (magic, version, JSON index) followed by
// length-prefixed raw little-endian float64 payloads per entry (pixels, then
// true z when present). Bit-exact round trip.
void save_dataset(const std::vector<LabeledImage>& images, const std::string& path);
std::vector<LabeledImage> load_dataset(const std::string& path);

} // namespace ganinv

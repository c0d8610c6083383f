#pragma once

#include <filesystem>

#include "splitseg/model.hpp"
#include "splitseg/tensor.hpp"

namespace splitseg {

/// Binary PPM (P6, maxval 255) -> 3 x H x W tensor normalized to [0, 1].
Tensor load_ppm(const std::filesystem::path& path);
void save_ppm(const std::filesystem::path& path, const Tensor& image);

/// Binary PGM (P5, maxval 255) as a label map; raw pixel values are labels.
SegMap load_pgm_labels(const std::filesystem::path& path);
void save_pgm_labels(const std::filesystem::path& path, const SegMap& map);

}  // namespace splitseg

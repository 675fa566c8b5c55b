#pragma once

#include <string>
#include <vector>

#include "pairdiff/tensor.hpp"

namespace pairdiff {

// Grayscale 8-bit PNG. Values are mapped linearly from [lo,hi] to [0,255]
// and clipped.
void write_png(const std::string& path, const Tensor& image, double lo = -1.0, double hi = 1.0);

// One row per image (modalities of a sample laid out left to right per row
// entry), separated by a 1px border.
void write_png_grid(const std::string& path, const std::vector<std::vector<Tensor>>& rows,
                    double lo = -1.0, double hi = 1.0);

}  // namespace pairdiff

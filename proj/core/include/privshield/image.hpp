#pragma once

#include <string>

#include "privshield/tensor.hpp"

namespace privshield {

// 8-bit PNG I/O for [C,H,W] tensors with values in [0,1]. C must be 1 (gray)
// or 3 (RGB). Writing quantizes with round(v * 255); reading rescales by
// 1/255, so stored datasets always satisfy the [0,1] invariant. No ancillary
// chunks are written, so identical pixels give identical files.
Tensor read_png(const std::string& path);
void write_png(const std::string& path, const Tensor& image);

// Tiles images [N,C,H,W] into a rows x cols grid (row-major, 1px separators).
Tensor tile_grid(const Tensor& images, int rows, int cols);

}  // namespace privshield

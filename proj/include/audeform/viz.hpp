#pragma once

#include <string>

#include "audeform/tensor.hpp"

namespace audeform {

// 8-bit binary PGM (P5), values normalized linearly per image; a constant
// image writes as all zeros.
void write_pgm(const Tensor& image_2d, const std::string& path);

}  // namespace audeform

#pragma once

#include <string>

#include "llgs/image.hpp"

namespace llgs {

// 8-bit PNG -> float image, linearized by value/255 only.
Image read_png(const std::string& path);

// Values are clamped to [0,1] and rounded to 8-bit. 1 channel writes
// grayscale, 3 channels RGB.
void write_png(const std::string& path, const Image& img);

}  // namespace llgs

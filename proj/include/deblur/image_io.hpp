#pragma once

#include "deblur/tensor.hpp"

#include <string>

namespace deblur {

// Reads an 8-bit PNG into a (1, 3, H, W) tensor in [0,1]. Grayscale and
// palette images are expanded to RGB; an alpha channel is dropped.
Tensor read_image(const std::string& path);

// Writes the first batch item as an 8-bit RGB PNG. Values are clipped to
// [0,1] and rounded to the nearest of 255 levels; this is the only place the
// pipeline quantizes.
void write_image(const Tensor& image, const std::string& path);

// Quantization used at file write, exposed for the metrics' quantized mode.
Tensor quantize8(const Tensor& image);

} // namespace deblur

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace hamlet {

/// Decodes a binary PPM (P6, maxval 255) or a raw CTEN container into a
/// [3,H,W] tensor in [0,1]. Dispatches on the leading magic bytes.
Tensor decode_image(const std::string& path);

/// P6 with maxval 255; values are clamped to [0,1] and rounded to bytes.
void write_ppm(const std::string& path, const Tensor& image);

/// CTEN: magic "CTEN", u8 ndim=3, 3x u32 dims (C,H,W) LE, float32 LE payload.
void write_cten(const std::string& path, const Tensor& image);

/// P5 grayscale, maxval 255.
void write_pgm(const std::string& path, const std::vector<std::uint8_t>& pixels,
               std::size_t height, std::size_t width);

/// Bilinear resample to size x size (half-pixel centers); identity when the
/// input is already that size.
Tensor bilinear_resize(const Tensor& image, std::size_t size);

}  // namespace hamlet

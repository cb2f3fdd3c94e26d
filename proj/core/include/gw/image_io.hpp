#pragma once

#include <stdexcept>
#include <string>

#include "gw/tensor.hpp"

namespace gw::io {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reads a PNG as [3,H,W] float on the 0..255 scale. Gray and paletted inputs
// are expanded to RGB; alpha is dropped.
Tensor read_png(const std::string& path);

// Writes a [3,H,W] tensor on the 0..255 scale as 8-bit RGB (values clamped).
void write_png(const std::string& path, const Tensor& image);

Tensor resize_bilinear(const Tensor& image, int out_h, int out_w);

// Linear [0,255] <-> [-1,1] mapping used around the codec's Tanh output.
Tensor to_unit_range(const Tensor& image255);
Tensor from_unit_range(const Tensor& unit);

// read + resize + normalize in one step.
Tensor load_normalized(const std::string& path, int height, int width);

}  // namespace gw::io

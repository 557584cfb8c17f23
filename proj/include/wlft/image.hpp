#pragma once

#include <string>

#include "wlft/tensor.hpp"

namespace wlft {

// Binary netpbm IO. Images are [C,H,W] float tensors with values in [0,1];
// C is 1 for PGM (P5) and 3 for PPM (P6). Only maxval 255 is accepted.
Tensor<float> load_netpbm(const std::string& path);
void save_pgm(const std::string& path, const Tensor<float>& img);   // C == 1
void save_ppm(const std::string& path, const Tensor<float>& img);   // C == 3

// Separable bilinear resampling with half-pixel centers and clamped borders.
Tensor<float> resize_bilinear(const Tensor<float>& img, int out_h, int out_w);

}  // namespace wlft

#ifndef POSEGEN_IMAGE_IO_HPP
#define POSEGEN_IMAGE_IO_HPP

#include <string>

#include "posegen/tensor.hpp"

namespace posegen {

// 8-bit RGB image files (binary PPM) and grayscale masks (binary PGM).
// In-memory images are (3,h,w) tensors in [0,1]; masks are (h,w) tensors.

void save_image_ppm(const Tensor& image, const std::string& path);
Tensor load_image_ppm(const std::string& path);

void save_mask_pgm(const Tensor& mask, const std::string& path);
// Loads a grayscale mask and thresholds it at 128 to {0,1}.
Tensor load_mask_pgm(const std::string& path);

}  // namespace posegen

#endif

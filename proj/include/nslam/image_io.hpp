// Binary PPM (P6, 8-bit) and little-endian PFM images.
#pragma once

#include "nslam/image.hpp"

#include <string>

namespace nslam {

struct ParseError : Error { using Error::Error; };

void write_ppm(const Image& img, const std::string& path);  // 3-channel
Image read_ppm(const std::string& path);

// 1-channel (Pf) or 3-channel (PF), scale -1.0, rows bottom-to-top
void write_pfm(const Image& img, const std::string& path);
Image read_pfm(const std::string& path);

}  // namespace nslam

// Row-major multi-channel image of doubles.
#pragma once

#include "nslam/core.hpp"

#include <vector>

namespace nslam {

struct DimensionMismatch : Error { using Error::Error; };

struct Image {
    int width = 0, height = 0, channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c) : width(w), height(h), channels(c) {
        data.assign(size_t(w) * h * c, 0.0);
    }
    double& at(int x, int y, int c) { return data[(size_t(y) * width + x) * channels + c]; }
    double at(int x, int y, int c) const { return data[(size_t(y) * width + x) * channels + c]; }
    bool same_shape(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

}  // namespace nslam

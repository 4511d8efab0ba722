#include "nslam/image_io.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <vector>

namespace nslam {

namespace {
struct FileCloser {
    void operator()(FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

FilePtr open_or_throw(const std::string& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw Error("cannot open " + path);
    return f;
}

// skip whitespace and # comments in a PNM header
int next_header_int(FILE* f, const std::string& path) {
    int c;
    while ((c = std::fgetc(f)) != EOF) {
        if (c == '#') {
            while ((c = std::fgetc(f)) != EOF && c != '\n') {}
        } else if (!std::isspace(c)) {
            std::ungetc(c, f);
            break;
        }
    }
    int v;
    if (std::fscanf(f, "%d", &v) != 1) throw ParseError("bad PNM header in " + path);
    return v;
}
}  // namespace

void write_ppm(const Image& img, const std::string& path) {
    if (img.channels != 3) throw DimensionMismatch("write_ppm: need 3 channels");
    FilePtr f = open_or_throw(path, "wb");
    std::fprintf(f.get(), "P6\n%d %d\n255\n", img.width, img.height);
    std::vector<uint8_t> row(size_t(img.width) * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = img.at(x, y, c);
                v = v < 0 ? 0 : (v > 1 ? 1 : v);
                row[size_t(x) * 3 + c] = uint8_t(std::lround(v * 255.0));
            }
        std::fwrite(row.data(), 1, row.size(), f.get());
    }
}

Image read_ppm(const std::string& path) {
    FilePtr f = open_or_throw(path, "rb");
    char magic[3] = {};
    if (std::fscanf(f.get(), "%2s", magic) != 1 || std::string(magic) != "P6")
        throw ParseError("not a P6 PPM: " + path);
    int w = next_header_int(f.get(), path);
    int h = next_header_int(f.get(), path);
    int maxval = next_header_int(f.get(), path);
    if (maxval != 255) throw ParseError("unsupported PPM maxval in " + path);
    std::fgetc(f.get());  // single whitespace
    Image img(w, h, 3);
    std::vector<uint8_t> row(size_t(w) * 3);
    for (int y = 0; y < h; ++y) {
        if (std::fread(row.data(), 1, row.size(), f.get()) != row.size())
            throw ParseError("truncated PPM: " + path);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = row[size_t(x) * 3 + c] / 255.0;
    }
    return img;
}

void write_pfm(const Image& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3)
        throw DimensionMismatch("write_pfm: need 1 or 3 channels");
    FilePtr f = open_or_throw(path, "wb");
    std::fprintf(f.get(), "%s\n%d %d\n-1.0\n", img.channels == 1 ? "Pf" : "PF", img.width,
                 img.height);
    std::vector<float> row(size_t(img.width) * img.channels);
    for (int y = img.height - 1; y >= 0; --y) {  // bottom-up
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                row[size_t(x) * img.channels + c] = float(img.at(x, y, c));
        std::fwrite(row.data(), sizeof(float), row.size(), f.get());
    }
}

Image read_pfm(const std::string& path) {
    FilePtr f = open_or_throw(path, "rb");
    char magic[3] = {};
    if (std::fscanf(f.get(), "%2s", magic) != 1) throw ParseError("bad PFM header: " + path);
    int channels;
    if (std::string(magic) == "Pf") channels = 1;
    else if (std::string(magic) == "PF") channels = 3;
    else throw ParseError("not a PFM: " + path);
    int w, h;
    double scale;
    if (std::fscanf(f.get(), "%d %d %lg", &w, &h, &scale) != 3)
        throw ParseError("bad PFM header: " + path);
    if (scale >= 0) throw ParseError("big-endian PFM unsupported: " + path);
    std::fgetc(f.get());
    Image img(w, h, channels);
    std::vector<float> row(size_t(w) * channels);
    for (int y = h - 1; y >= 0; --y) {
        if (std::fread(row.data(), sizeof(float), row.size(), f.get()) != row.size())
            throw ParseError("truncated PFM: " + path);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c) img.at(x, y, c) = row[size_t(x) * channels + c];
    }
    return img;
}

}  // namespace nslam

#include "posegen/image_io.hpp"

#include <cmath>
#include <fstream>
#include <vector>

namespace posegen {

namespace {

unsigned char quantize(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<unsigned char>(std::lround(c * 255.0));
}

void read_pnm_header(std::ifstream& f, const std::string& path, const char* magic, int* w, int* h) {
    std::string m;
    f >> m;
    if (m != magic) throw io_error("bad magic in " + path + " (expected " + magic + ")");
    // skip comments
    auto next_int = [&](int* out) {
        std::string tok;
        while (f >> tok) {
            if (tok[0] == '#') {
                std::string rest;
                std::getline(f, rest);
                continue;
            }
            *out = std::stoi(tok);
            return;
        }
        throw io_error("truncated header in " + path);
    };
    int maxval = 0;
    next_int(w);
    next_int(h);
    next_int(&maxval);
    if (*w <= 0 || *h <= 0 || maxval != 255) throw io_error("unsupported pnm header in " + path);
    f.get();  // single whitespace before pixel data
}

}  // namespace

void save_image_ppm(const Tensor& image, const std::string& path) {
    if (image.shape.size() != 3 || image.shape[0] != 3)
        throw contract_error("save_image_ppm: image must be (3,h,w)");
    const int h = image.shape[1], w = image.shape[2];
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot write image: " + path);
    f << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) row[static_cast<size_t>(x) * 3 + c] = quantize(image.at(c, y, x));
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!f) throw io_error("short write: " + path);
}

Tensor load_image_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open image: " + path);
    int w = 0, h = 0;
    read_pnm_header(f, path, "P6", &w, &h);
    Tensor img({3, h, w});
    std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (!f) throw io_error("truncated image data in " + path);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = row[static_cast<size_t>(x) * 3 + c] / 255.0;
    }
    return img;
}

void save_mask_pgm(const Tensor& mask, const std::string& path) {
    if (mask.shape.size() != 2) throw contract_error("save_mask_pgm: mask must be (h,w)");
    const int h = mask.shape[0], w = mask.shape[1];
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot write mask: " + path);
    f << "P5\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(w));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) row[static_cast<size_t>(x)] = quantize(mask.data[static_cast<size_t>(y) * w + x]);
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!f) throw io_error("short write: " + path);
}

Tensor load_mask_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open mask: " + path);
    int w = 0, h = 0;
    read_pnm_header(f, path, "P5", &w, &h);
    Tensor mask({h, w});
    std::vector<unsigned char> row(static_cast<size_t>(w));
    for (int y = 0; y < h; ++y) {
        f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (!f) throw io_error("truncated mask data in " + path);
        for (int x = 0; x < w; ++x) mask.data[static_cast<size_t>(y) * w + x] = row[static_cast<size_t>(x)] >= 128 ? 1.0 : 0.0;
    }
    return mask;
}

}  // namespace posegen

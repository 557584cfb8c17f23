#include "wlft/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "wlft/errors.hpp"

namespace wlft {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Reads one whitespace-delimited header token, skipping `#` comment lines.
int read_header_int(std::FILE* f, const std::string& path) {
    int c = std::fgetc(f);
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = std::fgetc(f);
        } else if (std::isspace(c)) {
            c = std::fgetc(f);
        } else {
            break;
        }
    }
    if (c == EOF || !std::isdigit(c)) throw DataError("corrupted image header: " + path);
    long v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        if (v > 1 << 20) throw DataError("implausible image dimension in " + path);
        c = std::fgetc(f);
    }
    if (c == EOF) throw DataError("truncated image header: " + path);
    return static_cast<int>(v);
}

std::uint8_t quantize(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

void save_netpbm(const std::string& path, const Tensor<float>& img, int channels,
                 const char* magic) {
    require_rank(img, 3, "save image");
    if (img.shape[0] != channels)
        throw DataError("image has " + std::to_string(img.shape[0]) + " channels, expected " +
                        std::to_string(channels) + ": " + path);
    const int H = img.shape[1], W = img.shape[2];
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw DataError("cannot write image: " + path);
    std::fprintf(f.get(), "%s\n%d %d\n255\n", magic, W, H);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(W) * channels);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < channels; ++c)
                row[static_cast<std::size_t>(x) * channels + c] = quantize(img.at(c, y, x));
        if (std::fwrite(row.data(), 1, row.size(), f.get()) != row.size())
            throw DataError("write failure: " + path);
    }
}

}  // namespace

Tensor<float> load_netpbm(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw DataError("cannot open image: " + path);
    char magic[3] = {};
    if (std::fread(magic, 1, 2, f.get()) != 2)
        throw DataError("truncated image file: " + path);
    int channels = 0;
    if (magic[0] == 'P' && magic[1] == '5') channels = 1;
    else if (magic[0] == 'P' && magic[1] == '6') channels = 3;
    else throw DataError("unsupported image magic '" + std::string(magic, 2) + "' in " + path +
                         " (only binary P5/P6 netpbm is supported)");
    const int W = read_header_int(f.get(), path);
    const int H = read_header_int(f.get(), path);
    const int maxval = read_header_int(f.get(), path);
    if (maxval != 255)
        throw DataError("unsupported maxval " + std::to_string(maxval) + " in " + path);
    if (W <= 0 || H <= 0) throw DataError("degenerate image dimensions in " + path);
    // the single whitespace byte after maxval was already consumed by the
    // header reader; raster data starts here
    const std::size_t count = static_cast<std::size_t>(W) * H * channels;
    std::vector<std::uint8_t> raw(count);
    if (std::fread(raw.data(), 1, count, f.get()) != count)
        throw DataError("truncated image data: " + path);
    Tensor<float> img({channels, H, W});
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(c, y, x) =
                    static_cast<float>(raw[(static_cast<std::size_t>(y) * W + x) * channels + c]) /
                    255.0f;
    return img;
}

void save_pgm(const std::string& path, const Tensor<float>& img) {
    save_netpbm(path, img, 1, "P5");
}

void save_ppm(const std::string& path, const Tensor<float>& img) {
    save_netpbm(path, img, 3, "P6");
}

Tensor<float> resize_bilinear(const Tensor<float>& img, int out_h, int out_w) {
    require_rank(img, 3, "resize");
    if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("resize: non-positive output size");
    const int C = img.shape[0], H = img.shape[1], W = img.shape[2];
    if (H == out_h && W == out_w) return img;
    Tensor<float> out({C, out_h, out_w});
    const float sy = static_cast<float>(H) / static_cast<float>(out_h);
    const float sx = static_cast<float>(W) / static_cast<float>(out_w);
    for (int y = 0; y < out_h; ++y) {
        const float fy = (static_cast<float>(y) + 0.5f) * sy - 0.5f;
        const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, H - 1);
        const int y1 = std::min(y0 + 1, H - 1);
        const float wy = std::clamp(fy - static_cast<float>(y0), 0.0f, 1.0f);
        for (int x = 0; x < out_w; ++x) {
            const float fx = (static_cast<float>(x) + 0.5f) * sx - 0.5f;
            const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, W - 1);
            const int x1 = std::min(x0 + 1, W - 1);
            const float wx = std::clamp(fx - static_cast<float>(x0), 0.0f, 1.0f);
            for (int c = 0; c < C; ++c) {
                const float top = img.at(c, y0, x0) * (1.0f - wx) + img.at(c, y0, x1) * wx;
                const float bot = img.at(c, y1, x0) * (1.0f - wx) + img.at(c, y1, x1) * wx;
                out.at(c, y, x) = top * (1.0f - wy) + bot * wy;
            }
        }
    }
    return out;
}

}  // namespace wlft

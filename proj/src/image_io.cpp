#include "deblur/image_io.hpp"

#include "deblur/errors.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace deblur {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f)
            std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

} // namespace

Tensor read_image(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp)
        throw IoError("read_image: cannot open " + path);

    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8) != 0)
        throw IoError("read_image: not a PNG file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png)
        throw IoError("read_image: libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("read_image: libpng info init failed");
    }
    std::vector<png_byte> data;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("read_image: corrupt PNG: " + path);
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    png_set_expand(png);        // palette/gray-low-bit to full bytes
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const png_size_t rowbytes = png_get_rowbytes(png, info);
    if (rowbytes != static_cast<png_size_t>(w) * 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("read_image: unexpected channel layout in " + path);
    }

    data.resize(static_cast<std::size_t>(rowbytes) * h);
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y)
        rows[y] = data.data() + static_cast<std::size_t>(y) * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Tensor t(1, 3, static_cast<int>(h), static_cast<int>(w));
    for (int y = 0; y < t.shape.h; ++y) {
        const png_byte* src = data.data() + static_cast<std::size_t>(y) * rowbytes;
        for (int c = 0; c < 3; ++c) {
            double* drow = t.row(0, c, y);
            for (int x = 0; x < t.shape.w; ++x)
                drow[x] = static_cast<double>(src[3 * x + c]) / 255.0;
        }
    }
    return t;
}

void write_image(const Tensor& image, const std::string& path) {
    if (image.shape.n < 1 || image.shape.c != 3 || image.shape.h < 1 || image.shape.w < 1)
        throw ShapeError("write_image: expected a (1,3,H,W) tensor, got " + image.shape.str());

    const int h = image.shape.h;
    const int w = image.shape.w;
    std::vector<png_byte> data(static_cast<std::size_t>(h) * w * 3);
    for (int y = 0; y < h; ++y) {
        png_byte* dst = data.data() + static_cast<std::size_t>(y) * w * 3;
        for (int c = 0; c < 3; ++c) {
            const double* srow = image.row(0, c, y);
            for (int x = 0; x < w; ++x) {
                const double v = std::min(1.0, std::max(0.0, srow[x]));
                dst[3 * x + c] = static_cast<png_byte>(std::lround(v * 255.0));
            }
        }
    }

    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp)
        throw IoError("write_image: cannot open " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png)
        throw IoError("write_image: libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("write_image: libpng info init failed");
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("write_image: write failed for " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < h; ++y)
        rows[static_cast<std::size_t>(y)] = data.data() + static_cast<std::size_t>(y) * w * 3;
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Tensor quantize8(const Tensor& image) {
    Tensor out = image;
    for (auto& v : out.v) {
        const double c = std::min(1.0, std::max(0.0, v));
        v = static_cast<double>(std::lround(c * 255.0)) / 255.0;
    }
    return out;
}

} // namespace deblur

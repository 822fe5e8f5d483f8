#include "sfim/io/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "sfim/core/tensor_io.hpp"

namespace sfim::io {

bool is_png(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png";
}

// The simplified png_image API reports failures through return codes, so no
// longjmp crosses C++ frames.
Tensor read_png(const std::filesystem::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw IoError(path.string() + ": " + image.message);
    }
    const bool alpha = (image.format & PNG_FORMAT_FLAG_ALPHA) != 0;
    image.format = alpha ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB;
    const std::size_t c = alpha ? 4 : 3, h = image.height, w = image.width;
    std::vector<png_byte> pixels(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw IoError(path.string() + ": " + msg);
    }
    Tensor out(Shape{c, h, w});
    auto v = out.mutable_values();
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t ch = 0; ch < c; ++ch) v[(ch * h + y) * w + x] = pixels[(y * w + x) * c + ch] / 255.0;
    return out;
}

void write_png(const std::filesystem::path& path, const Tensor& image) {
    if (image.rank() != 3) throw ShapeError("write_png: expected C x H x W, got " + shape_string(image.shape()));
    const std::size_t c = image.channels(), h = image.height(), w = image.width();
    if (c != 1 && c != 3 && c != 4) throw ShapeError("write_png: channel count must be 1, 3 or 4, got " + std::to_string(c));
    std::vector<png_byte> pixels(h * w * c);
    const auto v = image.values();
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double s = std::clamp(v[(ch * h + y) * w + x], 0.0, 1.0);
                pixels[(y * w + x) * c + ch] = static_cast<png_byte>(std::lround(s * 255.0));
            }
    png_image out{};
    out.version = PNG_IMAGE_VERSION;
    out.width = static_cast<png_uint_32>(w);
    out.height = static_cast<png_uint_32>(h);
    out.format = c == 1 ? PNG_FORMAT_GRAY : (c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_RGBA);
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&out, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
        throw IoError(path.string() + ": " + out.message);
    }
    std::string bytes(size, '\0');
    if (!png_image_write_to_memory(&out, bytes.data(), &size, 0, pixels.data(), 0, nullptr)) {
        throw IoError(path.string() + ": " + out.message);
    }
    bytes.resize(size);
    write_file_atomic(path, bytes);
}

Tensor load_image(const std::filesystem::path& path) {
    if (is_png(path)) return read_png(path);
    Tensor t = load_tensor(path);
    if (t.rank() != 3) throw ShapeError(path.string() + ": expected a C x H x W tensor, got " + shape_string(t.shape()));
    return t;
}

void save_image(const std::filesystem::path& path, const Tensor& image) {
    if (is_png(path)) {
        write_png(path, image);
    } else {
        save_tensor(path, image);
    }
}

} // namespace sfim::io

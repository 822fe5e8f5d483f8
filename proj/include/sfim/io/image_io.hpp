#pragma once

#include <filesystem>

#include "sfim/core/tensor.hpp"

namespace sfim::io {

// 8-bit PNG <-> C x H x W tensor in [0, 1]. Gray and palette files expand to
// RGB; 16-bit files are reduced to 8 bits. Writing clamps to [0, 1] and
// rounds; C must be 1, 3 or 4.
Tensor read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Tensor& image);

// Dispatches on the extension: ".png" or the raw tensor format (anything
// else). Raw tensors must be rank 3.
Tensor load_image(const std::filesystem::path& path);
void save_image(const std::filesystem::path& path, const Tensor& image);

bool is_png(const std::filesystem::path& path);

} // namespace sfim::io

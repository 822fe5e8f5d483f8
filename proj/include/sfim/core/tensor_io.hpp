#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "sfim/core/tensor.hpp"

namespace sfim {

// "SFTN" raw tensor: magic, u32 version, u32 rank, u32 extents, u32 dtype
// tag, then the little-endian row-major payload.
enum class Dtype : std::uint32_t { F32 = 0, F64 = 1 };

inline constexpr std::uint32_t kTensorFileVersion = 1;

void write_tensor(std::ostream& out, const Tensor& t, Dtype dtype = Dtype::F64);
Tensor read_tensor(std::istream& in);

void save_tensor(const std::filesystem::path& path, const Tensor& t, Dtype dtype = Dtype::F64);
Tensor load_tensor(const std::filesystem::path& path);

// Little-endian scalar helpers shared by the other binary formats.
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
double read_f64(std::istream& in);

// Writes through a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

} // namespace sfim

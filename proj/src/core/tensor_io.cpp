#include "sfim/core/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace sfim {

namespace {

constexpr char kMagic[4] = {'S', 'F', 'T', 'N'};

template <typename T>
T swap_bytes(T v) {
    if constexpr (sizeof(T) == 4) return __builtin_bswap32(v);
    else return __builtin_bswap64(v);
}

template <typename T>
void put(std::ostream& out, T v) {
    if constexpr (std::endian::native == std::endian::big) v = swap_bytes(v);
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.write(buf, sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    char buf[sizeof(T)];
    if (!in.read(buf, sizeof(T))) throw IoError("unexpected end of stream");
    T v;
    std::memcpy(&v, buf, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) v = swap_bytes(v);
    return v;
}

} // namespace

void write_u32(std::ostream& out, std::uint32_t v) { put(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { put(out, v); }
void write_f64(std::ostream& out, double v) { put(out, std::bit_cast<std::uint64_t>(v)); }
std::uint32_t read_u32(std::istream& in) { return get<std::uint32_t>(in); }
std::uint64_t read_u64(std::istream& in) { return get<std::uint64_t>(in); }
double read_f64(std::istream& in) { return std::bit_cast<double>(get<std::uint64_t>(in)); }

void write_tensor(std::ostream& out, const Tensor& t, Dtype dtype) {
    out.write(kMagic, 4);
    put<std::uint32_t>(out, kTensorFileVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(dtype));
    for (double v : t.values()) {
        if (dtype == Dtype::F32) {
            put(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        } else {
            put(out, std::bit_cast<std::uint64_t>(v));
        }
    }
    if (!out) throw IoError("tensor write failed");
}

Tensor read_tensor(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw IoError("not an SFTN tensor (bad magic)");
    const std::uint32_t version = get<std::uint32_t>(in);
    if (version != kTensorFileVersion) {
        throw IoError("SFTN version " + std::to_string(version) + " unsupported (reader is version " +
                      std::to_string(kTensorFileVersion) + ")");
    }
    const std::uint32_t rank = get<std::uint32_t>(in);
    if (rank > 8) throw IoError("SFTN rank " + std::to_string(rank) + " too large");
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
        d = get<std::uint32_t>(in);
        n *= d;
        if (n > (std::size_t{1} << 32)) throw IoError("SFTN payload too large");
    }
    const std::uint32_t tag = get<std::uint32_t>(in);
    if (tag > 1) throw IoError("SFTN dtype tag " + std::to_string(tag) + " unknown");
    std::vector<double> values(n);
    for (auto& v : values) {
        v = tag == 0 ? static_cast<double>(std::bit_cast<float>(get<std::uint32_t>(in)))
                     : std::bit_cast<double>(get<std::uint64_t>(in));
    }
    return Tensor(std::move(shape), std::move(values));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t, Dtype dtype) {
    std::ostringstream buf;
    write_tensor(buf, t, dtype);
    write_file_atomic(path, buf.str());
}

Tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return read_tensor(in);
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

} // namespace sfim

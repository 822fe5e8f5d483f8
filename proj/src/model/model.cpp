#include "sfim/model/model.hpp"

#include <fstream>
#include <sstream>

#include "sfim/core/tensor_io.hpp"

namespace sfim::model {

using namespace sfim::blocks;

std::size_t level_extent(std::size_t n, std::size_t level) {
    const std::size_t f = std::size_t{1} << level;
    return (n + f - 1) / f;
}

std::vector<Tensor> image_pyramid(const Tensor& image, std::size_t levels) {
    std::vector<Tensor> out{image};
    for (std::size_t i = 1; i < levels; ++i) {
        out.push_back(ops::interpolate_bilinear(image, level_extent(image.height(), i), level_extent(image.width(), i)));
    }
    return out;
}

namespace {

// Rethrows numeric failures with the block that produced them.
template <typename F>
Tensor guarded(const std::string& where, F&& f) {
    try {
        return f();
    } catch (const NumericError& e) {
        throw NumericError(where + ": " + e.what());
    }
}

LevelBody make_body(ParamScope scope, const ModelConfig& c, std::size_t level, std::size_t count) {
    LevelBody body;
    body.type = c.block_type(level);
    body.name = scope.name("");
    for (std::size_t b = 0; b < count; ++b) {
        ParamScope s = scope.sub(std::to_string(b));
        if (body.type == BlockType::Sdb) {
            body.sdbs.emplace_back(s, c.widths[level], c.growth(level), c.rdbs_per_sdb);
        } else {
            body.fdbs.emplace_back(s, c.widths[level], c.patch, c.per_channel_freq_weight);
        }
    }
    return body;
}

} // namespace

Tensor LevelBody::forward(const Tensor& x) const {
    Tensor y = x;
    for (std::size_t b = 0; b < sdbs.size(); ++b) {
        y = guarded(name + std::to_string(b), [&] { return sdbs[b].forward(y); });
    }
    for (std::size_t b = 0; b < fdbs.size(); ++b) {
        y = guarded(name + std::to_string(b), [&] { return fdbs[b].forward(y); });
    }
    return y;
}

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.normalize();
    Rng rng(seed);
    ParamScope root(store_, "", rng);
    const auto& c = config_;
    const std::size_t levels = c.levels;
    for (std::size_t i = 0; i < levels; ++i) {
        const std::string lv = "l" + std::to_string(i + 1);
        heads_.emplace_back(root.sub(lv + ".head"), c.image_channels, c.widths[i], 3);
        encoders_.push_back(make_body(root.sub(lv + ".enc"), c, i, c.encoder_blocks[i]));
        if (i > 0) fams_.emplace_back(root.sub(lv + ".fam"), c.widths[i - 1], c.widths[i]);
    }
    for (std::size_t i = 0; i < levels; ++i) {
        const std::string lv = "l" + std::to_string(i + 1);
        amibs_.emplace_back(root.sub(lv + ".amib"), c.widths, i, c.amib, c.ca_reduction, c.sa_kernel);
    }
    for (std::size_t i = 0; i < levels; ++i) {
        const std::string lv = "l" + std::to_string(i + 1);
        decoders_.push_back(make_body(root.sub(lv + ".dec"), c, i, c.decoder_blocks[i]));
        if (i + 1 < levels) laterals_.emplace_back(root.sub(lv + ".lateral"), c.widths[i + 1], c.widths[i], 1);
        if (i > 0) sams_.emplace_back(root.sub(lv + ".sam"), c.widths[i], c.image_channels);
    }
    output_ = Conv2d(root.sub("l1.out"), c.widths[0], c.image_channels, 3, true, 1, kResidualInitScale);
}

void Model::identity_init() {
    zero_fill(output_.weight);
    zero_fill(output_.bias);
    for (auto& s : sams_) {
        zero_fill(s.to_image.weight);
        zero_fill(s.to_image.bias);
    }
}

void Model::copy_parameters_from(const Model& other) {
    if (other.config_.hash() != config_.hash()) throw ConfigError("copy_parameters_from: config mismatch");
    const auto& src = other.store_.entries();
    const auto& dst = store_.entries();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        Tensor t = dst[i].tensor;
        auto from = src[i].tensor.values();
        std::copy(from.begin(), from.end(), t.mutable_values().begin());
    }
}

MultiLevelOutput Model::forward(const Tensor& degraded) const {
    if (degraded.rank() != 3 || degraded.channels() != config_.image_channels) {
        throw ShapeError("model: expected " + std::to_string(config_.image_channels) + " x H x W input, got " +
                         shape_string(degraded.shape()));
    }
    if (!all_finite(degraded.values())) throw NumericError("model: non-finite input");
    const std::size_t h = degraded.height(), w = degraded.width(), m = config_.size_multiple();
    const std::size_t ph = (h + m - 1) / m * m, pw = (w + m - 1) / m * m;
    const bool padded = ph != h || pw != w;
    const Tensor input = padded ? ops::reflect_pad(degraded, 0, ph - h, 0, pw - w) : degraded;
    MultiLevelOutput out = forward_padded(input);
    if (padded) {
        for (std::size_t i = 0; i < out.restored.size(); ++i) {
            out.restored[i] = ops::crop(out.restored[i], 0, 0, level_extent(h, i), level_extent(w, i));
        }
        for (std::size_t i = 0; i < out.attention.size(); ++i) {
            out.attention[i] = ops::crop(out.attention[i], 0, 0, level_extent(h, i + 1), level_extent(w, i + 1));
        }
    }
    return out;
}

MultiLevelOutput Model::forward_padded(const Tensor& input) const {
    const std::size_t levels = config_.levels;
    const auto pyramid = image_pyramid(input, levels);

    std::vector<Tensor> ys(levels);
    for (std::size_t i = 0; i < levels; ++i) {
        const std::string lv = "l" + std::to_string(i + 1);
        Tensor x = guarded(lv + ".head", [&] { return ops::gelu(heads_[i](pyramid[i])); });
        if (i > 0) x = guarded(lv + ".fam", [&] { return fams_[i - 1].forward(x, ys[i - 1]); });
        ys[i] = encoders_[i].forward(x);
    }
    std::vector<Tensor> fused(levels);
    for (std::size_t i = 0; i < levels; ++i) {
        fused[i] = guarded("l" + std::to_string(i + 1) + ".amib", [&] { return amibs_[i].forward(ys); });
    }

    MultiLevelOutput out;
    out.restored.resize(levels);
    out.attention.resize(levels - 1);
    Tensor carried;  // SAM features of the level below
    for (std::size_t i = levels; i-- > 0;) {
        const std::string lv = "l" + std::to_string(i + 1);
        Tensor d_in = fused[i];
        if (carried.defined()) {
            d_in = guarded(lv + ".lateral", [&] {
                const Tensor up = ops::interpolate_bilinear(carried, fused[i].height(), fused[i].width());
                return ops::add(fused[i], laterals_[i](up));
            });
        }
        const Tensor d = decoders_[i].forward(d_in);
        if (i > 0) {
            SamOutput s;
            guarded(lv + ".sam", [&] {
                s = sams_[i - 1].forward(d, pyramid[i]);
                return s.image;
            });
            out.restored[i] = s.image;
            out.attention[i - 1] = s.attention;
            carried = s.features;
        } else {
            out.restored[0] = guarded("l1.out", [&] { return ops::add(output_(d), pyramid[0]); });
        }
    }
    return out;
}

namespace {

constexpr char kMagic[4] = {'S', 'F', 'C', 'K'};

void write_string(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
    const std::uint32_t n = read_u32(in);
    if (n > (1u << 26)) throw IoError("checkpoint: string length " + std::to_string(n) + " implausible");
    std::string s(n, '\0');
    if (!in.read(s.data(), n)) throw IoError("checkpoint: truncated string");
    return s;
}

void write_named(std::ostream& out, const std::vector<std::pair<std::string, Tensor>>& list) {
    write_u32(out, static_cast<std::uint32_t>(list.size()));
    for (const auto& [name, t] : list) {
        write_string(out, name);
        write_tensor(out, t, Dtype::F64);
    }
}

std::vector<std::pair<std::string, Tensor>> read_named(std::istream& in) {
    const std::uint32_t n = read_u32(in);
    std::vector<std::pair<std::string, Tensor>> list;
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string name = read_string(in);
        list.emplace_back(std::move(name), read_tensor(in));
    }
    return list;
}

} // namespace

std::string serialize_checkpoint(const Checkpoint& ck) {
    std::ostringstream out;
    out.write(kMagic, 4);
    write_u32(out, kCheckpointVersion);
    write_string(out, ck.config_text);
    write_u64(out, fnv1a64(ck.config_text));
    write_named(out, ck.parameters);
    write_named(out, ck.extras);
    write_u32(out, static_cast<std::uint32_t>(ck.metadata.size()));
    for (const auto& [k, v] : ck.metadata) {
        write_string(out, k);
        write_string(out, v);
    }
    return out.str();
}

Checkpoint parse_checkpoint(const std::string& bytes) {
    std::istringstream in(bytes);
    char magic[4];
    if (!in.read(magic, 4) || std::string(magic, 4) != std::string(kMagic, 4)) {
        throw IoError("not an SFCK checkpoint (bad magic)");
    }
    const std::uint32_t version = read_u32(in);
    if (version != kCheckpointVersion) {
        throw IoError("checkpoint version " + std::to_string(version) + " does not match supported version " +
                      std::to_string(kCheckpointVersion));
    }
    Checkpoint ck;
    ck.config_text = read_string(in);
    ck.config_hash = read_u64(in);
    if (ck.config_hash != fnv1a64(ck.config_text)) throw IoError("checkpoint: config hash does not match config text");
    ck.parameters = read_named(in);
    ck.extras = read_named(in);
    const std::uint32_t entries = read_u32(in);
    for (std::uint32_t i = 0; i < entries; ++i) {
        std::string key = read_string(in);
        ck.metadata[key] = read_string(in);
    }
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    write_file_atomic(path, serialize_checkpoint(ck));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_checkpoint(buf.str());
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

Checkpoint make_checkpoint(const Model& model) {
    Checkpoint ck;
    ck.config_text = model.config().to_text();
    ck.config_hash = fnv1a64(ck.config_text);
    for (const auto& e : model.parameters().entries()) ck.parameters.emplace_back(e.name, e.tensor.clone());
    return ck;
}

std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ck) {
    const ModelConfig cfg = ModelConfig::read(Ini::parse(ck.config_text));
    auto model = std::make_unique<Model>(cfg, 0);
    load_parameters(*model, ck);
    return model;
}

void load_parameters(Model& model, const Checkpoint& ck) {
    if (fnv1a64(model.config().to_text()) != ck.config_hash) {
        throw ConfigError("checkpoint config does not match the model config");
    }
    const auto& entries = model.parameters().entries();
    if (entries.size() != ck.parameters.size()) {
        throw ConfigError("checkpoint holds " + std::to_string(ck.parameters.size()) + " tensors, model has " +
                          std::to_string(entries.size()));
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& [name, t] = ck.parameters[i];
        if (name != entries[i].name || t.shape() != entries[i].tensor.shape()) {
            throw ConfigError("checkpoint tensor '" + name + "' does not match model tensor '" + entries[i].name + "'");
        }
        Tensor dst = entries[i].tensor;
        std::copy(t.values().begin(), t.values().end(), dst.mutable_values().begin());
    }
}

} // namespace sfim::model

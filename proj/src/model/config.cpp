#include "sfim/model/config.hpp"

namespace sfim::model {

std::string to_string(BlockType t) { return t == BlockType::Sdb ? "sdb" : "fdb"; }

BlockType parse_block_type(const std::string& s) {
    if (s == "sdb" || s == "SDB") return BlockType::Sdb;
    if (s == "fdb" || s == "FDB") return BlockType::Fdb;
    throw ConfigError("unknown block type '" + s + "' (expected sdb or fdb)");
}

namespace {

std::vector<std::size_t> fill_counts(std::size_t levels, const std::vector<BlockType>& types, std::size_t fdb_count) {
    std::vector<std::size_t> out(levels);
    for (std::size_t i = 0; i < levels; ++i) out[i] = types[i] == BlockType::Sdb ? 1 : fdb_count;
    return out;
}

} // namespace

ModelConfig& ModelConfig::normalize() {
    if (levels < 1 || levels > 4) throw ConfigError("model.levels must be in 1..4, got " + std::to_string(levels));
    if (widths.size() < levels) {
        throw ConfigError("model.widths lists " + std::to_string(widths.size()) + " widths for " +
                          std::to_string(levels) + " levels");
    }
    widths.resize(levels);
    for (std::size_t w : widths) {
        if (w < 2 || w % 2 != 0) throw ConfigError("model.widths entries must be even and >= 2");
    }
    if (block_types.empty()) {
        for (std::size_t i = 0; i < levels; ++i) block_types.push_back(i == 0 ? BlockType::Sdb : BlockType::Fdb);
    }
    if (block_types.size() < levels) throw ConfigError("model.block_types shorter than levels");
    block_types.resize(levels);
    if (encoder_blocks.empty()) encoder_blocks = fill_counts(levels, block_types, 2);
    if (decoder_blocks.empty()) decoder_blocks = fill_counts(levels, block_types, 2);
    if (encoder_blocks.size() < levels || decoder_blocks.size() < levels) {
        throw ConfigError("model.encoder_blocks / decoder_blocks shorter than levels");
    }
    encoder_blocks.resize(levels);
    decoder_blocks.resize(levels);
    if (patch < 1) throw ConfigError("model.patch must be >= 1");
    if (image_channels != 3 && image_channels != 4) throw ConfigError("model.image_channels must be 3 or 4");
    if (rdbs_per_sdb < 1) throw ConfigError("model.rdbs_per_sdb must be >= 1");
    if (sa_kernel % 2 == 0) throw ConfigError("model.sa_kernel must be odd");
    return *this;
}

void ModelConfig::write(Ini& ini, const std::string& s) const {
    std::string type_list;
    for (std::size_t i = 0; i < block_types.size(); ++i) type_list += (i ? "," : "") + to_string(block_types[i]);
    ini.set(s, "levels", std::to_string(levels));
    ini.set(s, "widths", join_sizes(widths));
    ini.set(s, "block_types", type_list);
    ini.set(s, "encoder_blocks", join_sizes(encoder_blocks));
    ini.set(s, "decoder_blocks", join_sizes(decoder_blocks));
    ini.set(s, "rdbs_per_sdb", std::to_string(rdbs_per_sdb));
    ini.set(s, "rdb_growth", std::to_string(rdb_growth));
    ini.set(s, "amib_mib", amib.mib ? "true" : "false");
    ini.set(s, "amib_ca", amib.ca ? "true" : "false");
    ini.set(s, "amib_sa", amib.sa ? "true" : "false");
    ini.set(s, "patch", std::to_string(patch));
    ini.set(s, "image_channels", std::to_string(image_channels));
    ini.set(s, "per_channel_freq_weight", per_channel_freq_weight ? "true" : "false");
    ini.set(s, "ca_reduction", std::to_string(ca_reduction));
    ini.set(s, "sa_kernel", std::to_string(sa_kernel));
}

ModelConfig ModelConfig::read(const Ini& ini, const std::string& s) {
    ModelConfig c;
    auto size = [&](const char* key, std::size_t fallback) {
        const auto v = ini.get_int(s, key, static_cast<std::int64_t>(fallback));
        if (v < 0) throw ConfigError(std::string("model.") + key + " must be non-negative");
        return static_cast<std::size_t>(v);
    };
    c.levels = size("levels", c.levels);
    if (ini.has(s, "widths")) c.widths = parse_size_list(ini.get(s, "widths"));
    if (ini.has(s, "block_types")) {
        for (const auto& t : split_list(ini.get(s, "block_types"))) c.block_types.push_back(parse_block_type(t));
    }
    if (ini.has(s, "encoder_blocks")) c.encoder_blocks = parse_size_list(ini.get(s, "encoder_blocks"));
    if (ini.has(s, "decoder_blocks")) c.decoder_blocks = parse_size_list(ini.get(s, "decoder_blocks"));
    c.rdbs_per_sdb = size("rdbs_per_sdb", c.rdbs_per_sdb);
    c.rdb_growth = size("rdb_growth", c.rdb_growth);
    c.amib.mib = ini.get_bool(s, "amib_mib", true);
    c.amib.ca = ini.get_bool(s, "amib_ca", true);
    c.amib.sa = ini.get_bool(s, "amib_sa", true);
    c.patch = size("patch", c.patch);
    c.image_channels = size("image_channels", c.image_channels);
    c.per_channel_freq_weight = ini.get_bool(s, "per_channel_freq_weight", false);
    c.ca_reduction = size("ca_reduction", c.ca_reduction);
    c.sa_kernel = size("sa_kernel", c.sa_kernel);
    if (ini.has(s, "preset")) {
        const std::string p = ini.get(s, "preset");
        ModelConfig base = p == "full" ? full_size() : p == "desk" ? desk() : throw ConfigError("unknown model.preset '" + p + "'");
        // preset supplies everything the section does not override
        Ini merged;
        base.write(merged, s);
        for (const auto& [k, v] : ini.sections().at(s)) {
            if (k != "preset") merged.set(s, k, v);
        }
        return read(merged, s);
    }
    c.normalize();
    return c;
}

std::string ModelConfig::to_text() const {
    Ini ini;
    write(ini);
    return ini.to_string();
}

std::uint64_t ModelConfig::hash() const { return fnv1a64(to_text()); }

ModelConfig ModelConfig::full_size() {
    ModelConfig c;
    c.levels = 4;
    c.widths = {48, 96, 192, 192};
    c.block_types = {BlockType::Sdb, BlockType::Fdb, BlockType::Fdb, BlockType::Fdb};
    c.encoder_blocks = {1, kFullFdbCount, kFullFdbCount, kFullFdbCount};
    c.decoder_blocks = {1, kFullFdbCount, kFullFdbCount, kFullFdbCount};
    c.normalize();
    return c;
}

ModelConfig ModelConfig::with_embedding(std::size_t dim) {
    ModelConfig c = full_size();
    c.widths = {dim, 2 * dim, 4 * dim, 4 * dim};
    c.normalize();
    return c;
}

ModelConfig ModelConfig::desk() {
    ModelConfig c;
    c.levels = 2;
    c.widths = {8, 16};
    c.block_types = {BlockType::Sdb, BlockType::Fdb};
    c.encoder_blocks = {1, 2};
    c.decoder_blocks = {1, 2};
    c.normalize();
    return c;
}

} // namespace sfim::model

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sfim/blocks/blocks.hpp"
#include "sfim/core/ini.hpp"

namespace sfim::model {

enum class BlockType { Sdb, Fdb };

std::string to_string(BlockType t);
BlockType parse_block_type(const std::string& s);

struct ModelConfig {
    std::size_t levels = 4;
    std::vector<std::size_t> widths{48, 96, 192, 192};
    std::vector<BlockType> block_types;         // empty: SDB at level 1, FDB below
    std::vector<std::size_t> encoder_blocks;    // per level; SDB levels count SDBs
    std::vector<std::size_t> decoder_blocks;
    std::size_t rdbs_per_sdb = 8;
    std::size_t rdb_growth = 0;                 // 0: G0 / 2
    blocks::AmibSwitches amib;
    std::size_t patch = 8;
    std::size_t image_channels = 3;
    bool per_channel_freq_weight = false;
    std::size_t ca_reduction = 8;
    std::size_t sa_kernel = 7;

    // Fills empty per-level lists with defaults and checks every field.
    // Throws ConfigError naming the first bad field.
    ModelConfig& normalize();

    BlockType block_type(std::size_t level) const { return block_types.at(level); }
    std::size_t growth(std::size_t level) const { return rdb_growth ? rdb_growth : widths.at(level) / 2; }
    // Spatial extents must be multiples of this after padding.
    std::size_t size_multiple() const { return (std::size_t{1} << (levels - 1)) * patch; }

    void write(Ini& ini, const std::string& section = "model") const;
    static ModelConfig read(const Ini& ini, const std::string& section = "model");
    std::string to_text() const;
    std::uint64_t hash() const;

    // Full-size configuration: widths (48, 96, 192, 192), FDB counts raised
    // to land on the published parameter budget.
    static ModelConfig full_size();
    // full_size with C_1 = dim and the deeper widths scaled alike.
    static ModelConfig with_embedding(std::size_t dim);
    // Two-level width-8 configuration used for desk-scale runs and checks.
    static ModelConfig desk();
};

// Default enc/dec FDB count per FDB level in full_size.
inline constexpr std::size_t kFullFdbCount = 19;

} // namespace sfim::model

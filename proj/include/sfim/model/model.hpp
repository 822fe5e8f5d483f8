#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sfim/blocks/blocks.hpp"
#include "sfim/model/config.hpp"

namespace sfim::model {

struct MultiLevelOutput {
    std::vector<Tensor> restored;   // I_R_1..I_R_L
    std::vector<Tensor> attention;  // S_2..S_L
};

// Level i (zero-based) extent for an input extent n: ceil(n / 2^i).
std::size_t level_extent(std::size_t n, std::size_t level);

// I_D_1 = input; I_D_i = bilinear resize to level_extent.
std::vector<Tensor> image_pyramid(const Tensor& image, std::size_t levels);

// Level's encoder or decoder body: a chain of SDBs or FDBs.
struct LevelBody {
    BlockType type = BlockType::Fdb;
    std::vector<blocks::Sdb> sdbs;
    std::vector<blocks::Fdb> fdbs;
    std::string name;

    Tensor forward(const Tensor& x) const;
};

class Model {
public:
    Model(const ModelConfig& config, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    ParameterStore& parameters() { return store_; }
    const ParameterStore& parameters() const { return store_; }
    std::size_t parameter_count() const { return store_.parameter_count(); }

    // Pads by reflection to size_multiple(), runs every level, crops each
    // output back to its level extent.
    MultiLevelOutput forward(const Tensor& degraded) const;

    // Zeroes the final image projections so every I_R_i equals I_D_i.
    void identity_init();

    // Copies parameter values from another model with the same config.
    void copy_parameters_from(const Model& other);

private:
    MultiLevelOutput forward_padded(const Tensor& degraded) const;

    ModelConfig config_;
    ParameterStore store_;
    std::vector<blocks::Conv2d> heads_;
    std::vector<LevelBody> encoders_;
    std::vector<blocks::Fam> fams_;       // index i for level i + 1
    std::vector<blocks::Amib> amibs_;
    std::vector<LevelBody> decoders_;
    std::vector<blocks::Conv2d> laterals_;  // index i: C_{i+1} -> C_i
    std::vector<blocks::Sam> sams_;       // index i for level i + 1
    blocks::Conv2d output_;
};

// "SFCK" checkpoint: magic, u32 version, config text + hash, named parameter
// tensors, named extra tensors (optimizer moments and the like) and
// counted key/value metadata strings.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::string config_text;
    std::uint64_t config_hash = 0;
    std::vector<std::pair<std::string, Tensor>> parameters;
    std::vector<std::pair<std::string, Tensor>> extras;
    std::map<std::string, std::string> metadata;
};

std::string serialize_checkpoint(const Checkpoint& ck);
Checkpoint parse_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Snapshot of a model's config and parameters.
Checkpoint make_checkpoint(const Model& model);
// Rebuilds a model from a checkpoint (config taken from the file).
std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ck);
// Loads parameters into an existing model; throws ConfigError when the
// config hash or any parameter name/shape differs.
void load_parameters(Model& model, const Checkpoint& ck);

} // namespace sfim::model

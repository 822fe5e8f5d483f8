#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "sfim/core/optim.hpp"
#include "sfim/degrade/degrade.hpp"
#include "sfim/losses/losses.hpp"
#include "sfim/model/model.hpp"

namespace sfim::runtime {

// eta_min + (eta_max - eta_min) (1 + cos(pi step / total)) / 2, step clamped
// to [0, total].
double cosine_lr(std::size_t step, std::size_t total, double eta_max, double eta_min);

struct TrainPhase {
    std::size_t steps = 0;
    std::size_t patch = 64;
    std::size_t batch = 1;
    double lr_max = 2e-4;
    double lr_min = 1e-7;
};

struct DataConfig {
    std::string dir;  // dataset written by the degrade module; empty: procedural
    std::size_t train_pairs = 200;
    std::size_t holdout_pairs = 20;
    std::size_t size = 64;
    std::size_t channels = 3;
    double lights_fraction = 0.5;
    std::uint64_t seed = 1;
    degrade::SpecDistribution distribution;
};

struct TrainConfig {
    model::ModelConfig model = model::ModelConfig::desk();
    losses::LossWeights loss;
    std::vector<TrainPhase> phases;
    DataConfig data;
    std::uint64_t seed = 0;
    std::size_t val_every = 200;
    std::size_t log_every = 50;
    double clip_norm = 0.5;  // 0 disables clipping
    bool hflip = true;
    AdamWConfig adamw;
    double max_memory_mb = 4096;

    std::size_t total_steps() const;
    // Throws ConfigError for empty/unordered phases or bad fields. The
    // memory estimate is checked by the Trainer, which knows the parameter
    // count.
    void validate() const;

    void write(Ini& ini) const;
    static TrainConfig read(const Ini& ini);
    static TrainConfig load(const std::filesystem::path& path);
    std::string to_text() const;

    // L = 2, widths (8, 16), patch 32 then 64 over 200 procedural pairs.
    static TrainConfig desk();
};

// Rough peak bytes of one training step: parameters with grads and moments
// plus the activations the tape keeps alive.
double estimate_step_bytes(const model::ModelConfig& cfg, std::size_t patch, std::size_t parameter_count);

struct TrainData {
    std::vector<degrade::Pair> train;
    std::vector<degrade::Pair> holdout;
};

// Procedural pairs (train and holdout from separate seed streams) or a
// dataset directory whose last holdout_pairs pairs are held out.
TrainData prepare_data(const DataConfig& cfg);

struct Evaluation {
    double psnr = 0.0;           // restored vs clean, mean over pairs
    double ssim = 0.0;
    double degraded_psnr = 0.0;  // degraded input vs clean
    double degraded_ssim = 0.0;
    double amplitude_l1 = 0.0;   // mean | |F_R| - |F_G| | per bin
    std::string to_line() const;
};

Evaluation evaluate(const model::Model& model, const std::vector<degrade::Pair>& pairs);

class Trainer {
public:
    // out_dir empty: nothing is written to disk.
    Trainer(TrainConfig cfg, std::shared_ptr<const TrainData> data, std::filesystem::path out_dir = {});

    std::size_t step() const { return step_; }
    std::size_t total_steps() const { return cfg_.total_steps(); }
    bool done() const { return step_ >= total_steps(); }

    // Runs until done or max_steps more steps. Validation, logging and
    // checkpoints fire on their schedule; a run that stops early leaves
    // last.sfck for resuming, a finished one final.sfck. Non-finite losses throw
    // NumericError; checkpoints already on disk stay untouched.
    void run(std::size_t max_steps = std::numeric_limits<std::size_t>::max());

    double last_loss() const { return last_loss_; }
    const std::vector<std::string>& log() const { return log_; }
    const model::Model& model() const { return *model_; }
    const TrainConfig& config() const { return cfg_; }
    double best_psnr() const { return best_psnr_; }

    // Full state: parameters, AdamW moments, step, best metric, config.
    model::Checkpoint checkpoint() const;
    void save(const std::filesystem::path& path) const;
    // Restores a state saved by an identically configured trainer.
    void resume(const model::Checkpoint& ck);

    // Called after every appended log line (the CLI echoes them).
    std::function<void(const std::string&)> on_log;

private:
    void train_step();
    void validate_and_checkpoint(bool phase_end);
    void append_log(const std::string& line);
    std::size_t phase_of(std::size_t step, std::size_t& step_in_phase) const;

    TrainConfig cfg_;
    std::shared_ptr<const TrainData> data_;
    std::filesystem::path out_dir_;
    std::unique_ptr<model::Model> model_;
    std::vector<Tensor> params_;
    AdamWState adam_;
    std::size_t step_ = 0;
    double last_loss_ = 0.0;
    double best_psnr_ = -1.0;
    std::size_t best_step_ = 0;
    std::vector<std::string> log_;
};

} // namespace sfim::runtime

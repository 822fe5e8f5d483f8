#include "sfim/runtime/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "sfim/analyze/analyze.hpp"
#include "sfim/core/fft.hpp"
#include "sfim/core/ops.hpp"
#include "sfim/core/tape.hpp"
#include "sfim/core/tensor_io.hpp"
#include "sfim/runtime/restore.hpp"

namespace sfim::runtime {

namespace {

std::string fmt(double v, int precision = 17) {
    std::ostringstream out;
    out << std::setprecision(precision) << v;
    return out.str();
}

std::string phase_section(std::size_t i) { return "phase." + std::to_string(i); }

std::size_t read_size(const Ini& ini, const std::string& sec, const std::string& key, std::size_t fallback) {
    const auto v = ini.get_int(sec, key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw ConfigError(sec + "." + key + " must be non-negative");
    return static_cast<std::size_t>(v);
}

} // namespace

double cosine_lr(std::size_t step, std::size_t total, double eta_max, double eta_min) {
    if (total == 0) return eta_max;
    const double t = static_cast<double>(std::min(step, total)) / static_cast<double>(total);
    return eta_min + 0.5 * (eta_max - eta_min) * (1.0 + std::cos(std::numbers::pi * t));
}

std::size_t TrainConfig::total_steps() const {
    std::size_t n = 0;
    for (const auto& p : phases) n += p.steps;
    return n;
}

void TrainConfig::validate() const {
    model::ModelConfig m = model;
    m.normalize();
    loss.validate();
    if (phases.empty()) throw ConfigError("train: at least one [phase.N] section is required");
    for (std::size_t i = 0; i < phases.size(); ++i) {
        const TrainPhase& p = phases[i];
        const std::string name = phase_section(i);
        if (!(p.lr_max > 0.0) || !(p.lr_min >= 0.0) || p.lr_min > p.lr_max) {
            throw ConfigError(name + ": need lr_max > 0 and 0 <= lr_min <= lr_max");
        }
        if (p.batch == 0) throw ConfigError(name + ".batch must be >= 1");
        if (p.patch == 0 || p.patch > data.size) {
            throw ConfigError(name + ".patch must be in [1, data.size = " + std::to_string(data.size) + "]");
        }
        if (p.patch % m.size_multiple() != 0) {
            throw ConfigError(name + ".patch must be a multiple of " + std::to_string(m.size_multiple()) +
                              " (2^(L-1) * P)");
        }
        if (i > 0 && p.patch < phases[i - 1].patch) throw ConfigError("train: phase patch sizes must not decrease");
    }
    if (data.channels != m.image_channels) throw ConfigError("data.channels must equal model.image_channels");
    if (data.dir.empty() && data.train_pairs == 0) throw ConfigError("data.train_pairs must be >= 1");
    if (val_every == 0 || log_every == 0) throw ConfigError("train.val_every and train.log_every must be >= 1");
    if (!(clip_norm >= 0.0)) throw ConfigError("train.clip_norm must be >= 0");
    data.distribution.validate();
}

void TrainConfig::write(Ini& ini) const {
    model.write(ini, "model");
    ini.set("loss", "lambda1", fmt(loss.lambda1));
    ini.set("loss", "lambda2", fmt(loss.lambda2));
    ini.set("loss", "lambda3", fmt(loss.lambda3));
    ini.set("loss", "variant", losses::to_string(loss.variant));
    ini.set("loss", "per_pixel_charbonnier", loss.per_pixel_charbonnier ? "true" : "false");
    for (std::size_t i = 0; i < phases.size(); ++i) {
        const std::string s = phase_section(i);
        ini.set(s, "steps", std::to_string(phases[i].steps));
        ini.set(s, "patch", std::to_string(phases[i].patch));
        ini.set(s, "batch", std::to_string(phases[i].batch));
        ini.set(s, "lr_max", fmt(phases[i].lr_max));
        ini.set(s, "lr_min", fmt(phases[i].lr_min));
    }
    ini.set("data", "dir", data.dir);
    ini.set("data", "train_pairs", std::to_string(data.train_pairs));
    ini.set("data", "holdout_pairs", std::to_string(data.holdout_pairs));
    ini.set("data", "size", std::to_string(data.size));
    ini.set("data", "channels", std::to_string(data.channels));
    ini.set("data", "lights_fraction", fmt(data.lights_fraction));
    ini.set("data", "seed", std::to_string(data.seed));
    data.distribution.write(ini, "degrade");
    ini.set("train", "seed", std::to_string(seed));
    ini.set("train", "val_every", std::to_string(val_every));
    ini.set("train", "log_every", std::to_string(log_every));
    ini.set("train", "clip_norm", fmt(clip_norm));
    ini.set("train", "hflip", hflip ? "true" : "false");
    ini.set("train", "beta1", fmt(adamw.beta1));
    ini.set("train", "beta2", fmt(adamw.beta2));
    ini.set("train", "weight_decay", fmt(adamw.weight_decay));
    ini.set("train", "eps", fmt(adamw.eps));
    ini.set("train", "max_memory_mb", fmt(max_memory_mb));
}

TrainConfig TrainConfig::read(const Ini& ini) {
    TrainConfig c;
    if (ini.has_section("model")) c.model = model::ModelConfig::read(ini, "model");
    c.loss.lambda1 = ini.get_double("loss", "lambda1", c.loss.lambda1);
    c.loss.lambda2 = ini.get_double("loss", "lambda2", c.loss.lambda2);
    c.loss.lambda3 = ini.get_double("loss", "lambda3", c.loss.lambda3);
    c.loss.variant = losses::parse_fft_variant(ini.get_or("loss", "variant", losses::to_string(c.loss.variant)));
    c.loss.per_pixel_charbonnier = ini.get_bool("loss", "per_pixel_charbonnier", false);
    for (std::size_t i = 0; ini.has_section(phase_section(i)); ++i) {
        const std::string s = phase_section(i);
        TrainPhase p;
        p.steps = read_size(ini, s, "steps", p.steps);
        p.patch = read_size(ini, s, "patch", p.patch);
        p.batch = read_size(ini, s, "batch", p.batch);
        p.lr_max = ini.get_double(s, "lr_max", p.lr_max);
        p.lr_min = ini.get_double(s, "lr_min", p.lr_min);
        c.phases.push_back(p);
    }
    for (const auto& [name, section] : ini.sections()) {
        if (name.rfind("phase.", 0) == 0 && std::stoul(name.substr(6)) >= c.phases.size()) {
            throw ConfigError("train: " + name + " present but earlier phase sections are missing");
        }
    }
    c.data.dir = ini.get_or("data", "dir", "");
    c.data.train_pairs = read_size(ini, "data", "train_pairs", c.data.train_pairs);
    c.data.holdout_pairs = read_size(ini, "data", "holdout_pairs", c.data.holdout_pairs);
    c.data.size = read_size(ini, "data", "size", c.data.size);
    c.data.channels = read_size(ini, "data", "channels", c.model.image_channels);
    c.data.lights_fraction = ini.get_double("data", "lights_fraction", c.data.lights_fraction);
    c.data.seed = static_cast<std::uint64_t>(ini.get_int("data", "seed", static_cast<std::int64_t>(c.data.seed)));
    if (ini.has_section("degrade")) c.data.distribution = degrade::SpecDistribution::read(ini, "degrade");
    c.seed = static_cast<std::uint64_t>(ini.get_int("train", "seed", 0));
    c.val_every = read_size(ini, "train", "val_every", c.val_every);
    c.log_every = read_size(ini, "train", "log_every", c.log_every);
    c.clip_norm = ini.get_double("train", "clip_norm", c.clip_norm);
    c.hflip = ini.get_bool("train", "hflip", c.hflip);
    c.adamw.beta1 = ini.get_double("train", "beta1", c.adamw.beta1);
    c.adamw.beta2 = ini.get_double("train", "beta2", c.adamw.beta2);
    c.adamw.weight_decay = ini.get_double("train", "weight_decay", c.adamw.weight_decay);
    c.adamw.eps = ini.get_double("train", "eps", c.adamw.eps);
    c.max_memory_mb = ini.get_double("train", "max_memory_mb", c.max_memory_mb);
    c.validate();
    return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) { return read(Ini::load(path.string())); }

std::string TrainConfig::to_text() const {
    Ini ini;
    write(ini);
    return ini.to_string();
}

TrainConfig TrainConfig::desk() {
    TrainConfig c;
    c.model = model::ModelConfig::desk();
    c.phases = {TrainPhase{1500, 32, 4, 2e-3, 1e-5}, TrainPhase{750, 64, 2, 1e-3, 1e-7}};
    return c;
}

double estimate_step_bytes(const model::ModelConfig& cfg, std::size_t patch, std::size_t parameter_count) {
    // value, grad and two AdamW moments per parameter
    double bytes = 4.0 * 8.0 * static_cast<double>(parameter_count);
    // The tape keeps roughly two dozen width-sized maps per block alive (one
    // set per RDB inside an SDB), each as value plus grad. Batches run one
    // sample at a time, so the batch size does not enter.
    for (std::size_t l = 0; l < cfg.levels; ++l) {
        const double side = static_cast<double>(model::level_extent(patch, l));
        const double map = static_cast<double>(cfg.widths[l]) * side * side;
        const double per_block = cfg.block_types[l] == model::BlockType::Sdb ? 24.0 * static_cast<double>(cfg.rdbs_per_sdb) : 24.0;
        bytes += 2.0 * 8.0 * map * per_block * static_cast<double>(cfg.encoder_blocks[l] + cfg.decoder_blocks[l] + 2);
    }
    return bytes;
}

TrainData prepare_data(const DataConfig& cfg) {
    TrainData d;
    if (!cfg.dir.empty()) {
        auto pairs = degrade::read_dataset(cfg.dir);
        if (pairs.size() <= cfg.holdout_pairs) {
            throw ConfigError(cfg.dir + ": " + std::to_string(pairs.size()) + " pairs cannot leave " +
                              std::to_string(cfg.holdout_pairs) + " held out");
        }
        for (const auto& p : pairs) {
            if (p.clean.channels() != cfg.channels || p.clean.height() < cfg.size || p.clean.width() < cfg.size) {
                throw ShapeError(p.id + ": pair " + shape_string(p.clean.shape()) + " smaller than data.size or wrong channels");
            }
        }
        const auto split = pairs.end() - static_cast<std::ptrdiff_t>(cfg.holdout_pairs);
        d.train.assign(pairs.begin(), split);
        d.holdout.assign(split, pairs.end());
        return d;
    }
    degrade::DatasetOptions opt;
    opt.channels = cfg.channels;
    opt.height = opt.width = cfg.size;
    opt.lights_fraction = cfg.lights_fraction;
    opt.distribution = cfg.distribution;
    opt.count = cfg.train_pairs;
    opt.seed = derive_seed(cfg.seed, 0);
    d.train = degrade::make_dataset(opt);
    opt.count = cfg.holdout_pairs;
    opt.seed = derive_seed(cfg.seed, 1);
    d.holdout = degrade::make_dataset(opt);
    return d;
}

std::string Evaluation::to_line() const {
    std::ostringstream out;
    out << std::setprecision(10) << "psnr=" << psnr << " ssim=" << ssim << " deg_psnr=" << degraded_psnr
        << " deg_ssim=" << degraded_ssim << " amp_l1=" << amplitude_l1;
    return out.str();
}

Evaluation evaluate(const model::Model& model, const std::vector<degrade::Pair>& pairs) {
    Evaluation e;
    if (pairs.empty()) return e;
    for (const auto& p : pairs) {
        const Tensor restored = restore_image(model, p.degraded);
        e.psnr += analyze::psnr(restored, p.clean);
        e.ssim += analyze::ssim(restored, p.clean);
        e.degraded_psnr += analyze::psnr(p.degraded, p.clean);
        e.degraded_ssim += analyze::ssim(p.degraded, p.clean);
        const ComplexTensor fr = fft2(restored), fg = fft2(p.clean);
        double amp = 0.0;
        for (std::size_t i = 0; i < fr.numel(); ++i) amp += std::abs(std::abs(fr.at(i)) - std::abs(fg.at(i)));
        e.amplitude_l1 += amp / static_cast<double>(fr.numel());
    }
    const double n = static_cast<double>(pairs.size());
    e.psnr /= n;
    e.ssim /= n;
    e.degraded_psnr /= n;
    e.degraded_ssim /= n;
    e.amplitude_l1 /= n;
    return e;
}

Trainer::Trainer(TrainConfig cfg, std::shared_ptr<const TrainData> data, std::filesystem::path out_dir)
    : cfg_(std::move(cfg)), data_(std::move(data)), out_dir_(std::move(out_dir)) {
    cfg_.model.normalize();
    cfg_.validate();
    if (!data_ || data_->train.empty()) throw ConfigError("train: dataset is empty");
    for (const auto& p : data_->train) {
        if (p.clean.channels() != cfg_.model.image_channels) throw ShapeError(p.id + ": channel count differs from the model");
        for (const auto& ph : cfg_.phases) {
            if (p.clean.height() < ph.patch || p.clean.width() < ph.patch) {
                throw ShapeError(p.id + ": smaller than phase patch " + std::to_string(ph.patch));
            }
        }
    }
    model_ = std::make_unique<model::Model>(cfg_.model, derive_seed(cfg_.seed, 0));
    const double need = estimate_step_bytes(cfg_.model, cfg_.phases.back().patch, model_->parameter_count()) / (1024.0 * 1024.0);
    if (need > cfg_.max_memory_mb) {
        throw ConfigError("train: estimated " + fmt(need, 6) + " MiB per step exceeds max_memory_mb = " +
                          fmt(cfg_.max_memory_mb, 6));
    }
    params_ = model_->parameters().tensors();
    adam_.ensure(params_);
    if (!out_dir_.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(out_dir_, ec);
        if (ec) throw IoError("cannot create " + out_dir_.string() + ": " + ec.message());
    }
}

std::size_t Trainer::phase_of(std::size_t step, std::size_t& step_in_phase) const {
    std::size_t begin = 0;
    for (std::size_t i = 0; i < cfg_.phases.size(); ++i) {
        if (step < begin + cfg_.phases[i].steps) {
            step_in_phase = step - begin;
            return i;
        }
        begin += cfg_.phases[i].steps;
    }
    step_in_phase = 0;
    return cfg_.phases.size();
}

void Trainer::append_log(const std::string& line) {
    log_.push_back(line);
    if (!out_dir_.empty()) {
        std::ofstream out(out_dir_ / "train.log", std::ios::app);
        if (!out) throw IoError("cannot append to " + (out_dir_ / "train.log").string());
        out << line << '\n';
    }
    if (on_log) on_log(line);
}

void Trainer::train_step() {
    std::size_t in_phase = 0;
    const std::size_t phase_index = phase_of(step_, in_phase);
    const TrainPhase& phase = cfg_.phases[phase_index];
    const double lr = cosine_lr(in_phase, phase.steps, phase.lr_max, phase.lr_min);
    const std::size_t patch = phase.patch;
    const std::size_t c = cfg_.model.image_channels;

    // every random draw of this step comes from (seed, step)
    Rng rng(derive_seed(derive_seed(cfg_.seed, 1), step_));
    losses::LossReport last;
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < phase.batch; ++b) {
        const degrade::Pair& pair = data_->train[rng.below(data_->train.size())];
        const std::size_t h = pair.clean.height(), w = pair.clean.width();
        const std::size_t top = rng.below(h - patch + 1), left = rng.below(w - patch + 1);
        const bool flip = cfg_.hflip && rng.below(2) == 1;
        Tensor deg(Shape{c, patch, patch}), gt(Shape{c, patch, patch});
        auto dv = deg.mutable_values(), gv = gt.mutable_values();
        const auto sd = pair.degraded.values(), sg = pair.clean.values();
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t y = 0; y < patch; ++y)
                for (std::size_t x = 0; x < patch; ++x) {
                    const std::size_t sx = left + (flip ? patch - 1 - x : x);
                    const std::size_t src = (ch * h + top + y) * w + sx;
                    dv[(ch * patch + y) * patch + x] = sd[src];
                    gv[(ch * patch + y) * patch + x] = sg[src];
                }

        Tape tape;
        TapeScope scope(tape);
        const model::MultiLevelOutput out = model_->forward(deg);
        const std::vector<Tensor> targets = model::image_pyramid(gt, cfg_.model.levels);
        last = losses::total_loss(out.restored, targets, cfg_.loss);
        if (!std::isfinite(last.total)) {
            append_log("abort step=" + std::to_string(step_) + " non-finite loss");
            throw NumericError("train: non-finite loss at step " + std::to_string(step_));
        }
        loss_sum += last.total;
        tape.backward(phase.batch == 1 ? last.total_tensor : ops::mul_scalar(last.total_tensor, 1.0 / static_cast<double>(phase.batch)));
    }
    const double grad_norm = cfg_.clip_norm > 0.0 ? clip_grad_norm(params_, cfg_.clip_norm) : 0.0;
    if (!std::isfinite(grad_norm)) {
        append_log("abort step=" + std::to_string(step_) + " non-finite gradient");
        throw NumericError("train: non-finite gradient norm at step " + std::to_string(step_));
    }
    adamw_step(params_, adam_, lr, cfg_.adamw);
    model_->parameters().zero_grad();
    last_loss_ = loss_sum / static_cast<double>(phase.batch);
    ++step_;

    if (step_ % cfg_.log_every == 0 || step_ == 1) {
        std::ostringstream line;
        line << std::setprecision(10) << "step=" << step_ << " phase=" << phase_index + 1 << " lr=" << lr
             << " loss=" << last_loss_ << " grad_norm=" << grad_norm << " | " << last.to_line();
        append_log(line.str());
    }
}

void Trainer::validate_and_checkpoint(bool phase_end) {
    const Evaluation e = evaluate(*model_, data_->holdout);
    append_log("val step=" + std::to_string(step_) + " " + e.to_line());
    if (data_->holdout.empty()) return;
    if (e.psnr > best_psnr_) {
        best_psnr_ = e.psnr;
        best_step_ = step_;
        if (!out_dir_.empty()) save(out_dir_ / "best.sfck");
    }
    if (phase_end && !out_dir_.empty()) {
        std::size_t in_phase = 0;
        const std::size_t finished = phase_of(step_ - 1, in_phase) + 1;
        save(out_dir_ / ("phase" + std::to_string(finished) + ".sfck"));
    }
}

void Trainer::run(std::size_t max_steps) {
    if (step_ == 0 && log_.empty()) {
        append_log("start params=" + std::to_string(model_->parameter_count()) + " steps=" +
                   std::to_string(total_steps()) + " train_pairs=" + std::to_string(data_->train.size()) +
                   " holdout_pairs=" + std::to_string(data_->holdout.size()) + " seed=" + std::to_string(cfg_.seed));
    }
    for (std::size_t n = 0; n < max_steps && !done(); ++n) {
        train_step();
        std::size_t in_phase = 0;
        const bool phase_end = done() || (phase_of(step_, in_phase) != phase_of(step_ - 1, in_phase));
        if (phase_end || step_ % cfg_.val_every == 0) validate_and_checkpoint(phase_end);
    }
    if (!out_dir_.empty()) save(out_dir_ / (done() ? "final.sfck" : "last.sfck"));
}

model::Checkpoint Trainer::checkpoint() const {
    model::Checkpoint ck = model::make_checkpoint(*model_);
    const auto& entries = model_->parameters().entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        ck.extras.emplace_back("adamw.m." + entries[i].name, Tensor(entries[i].tensor.shape(), adam_.m[i]));
        ck.extras.emplace_back("adamw.v." + entries[i].name, Tensor(entries[i].tensor.shape(), adam_.v[i]));
    }
    ck.metadata["step"] = std::to_string(step_);
    ck.metadata["adamw_step"] = std::to_string(adam_.step);
    ck.metadata["best_psnr"] = fmt(best_psnr_);
    ck.metadata["best_step"] = std::to_string(best_step_);
    ck.metadata["last_loss"] = fmt(last_loss_);
    ck.metadata["train_config"] = cfg_.to_text();
    return ck;
}

void Trainer::save(const std::filesystem::path& path) const { model::save_checkpoint(path, checkpoint()); }

void Trainer::resume(const model::Checkpoint& ck) {
    const auto it = ck.metadata.find("train_config");
    if (it == ck.metadata.end() || it->second != cfg_.to_text()) {
        throw ConfigError("resume: checkpoint was written by a different training configuration");
    }
    model::load_parameters(*model_, ck);
    const auto& entries = model_->parameters().entries();
    if (ck.extras.size() != 2 * entries.size()) throw ConfigError("resume: checkpoint lacks optimizer moments");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& [mn, m] = ck.extras[2 * i];
        const auto& [vn, v] = ck.extras[2 * i + 1];
        if (mn != "adamw.m." + entries[i].name || vn != "adamw.v." + entries[i].name || m.numel() != adam_.m[i].size() ||
            v.numel() != adam_.v[i].size()) {
            throw ConfigError("resume: optimizer moment '" + mn + "' does not match the model");
        }
        std::copy(m.values().begin(), m.values().end(), adam_.m[i].begin());
        std::copy(v.values().begin(), v.values().end(), adam_.v[i].begin());
    }
    auto meta = [&](const char* key) -> const std::string& {
        const auto f = ck.metadata.find(key);
        if (f == ck.metadata.end()) throw ConfigError(std::string("resume: checkpoint metadata lacks ") + key);
        return f->second;
    };
    step_ = std::stoull(meta("step"));
    adam_.step = std::stoull(meta("adamw_step"));
    best_psnr_ = std::stod(meta("best_psnr"));
    best_step_ = std::stoull(meta("best_step"));
    last_loss_ = std::stod(meta("last_loss"));
    append_log("resume step=" + std::to_string(step_));
}

} // namespace sfim::runtime

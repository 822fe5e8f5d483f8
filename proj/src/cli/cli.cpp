#include "sfim/cli/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

#include "sfim/analyze/analyze.hpp"
#include "sfim/checks/suites.hpp"
#include "sfim/core/ini.hpp"
#include "sfim/core/parallel.hpp"
#include "sfim/core/tensor_io.hpp"
#include "sfim/degrade/degrade.hpp"
#include "sfim/io/image_io.hpp"
#include "sfim/runtime/restore.hpp"
#include "sfim/runtime/train.hpp"

namespace fs = std::filesystem;

namespace sfim::cli {

namespace {

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void write_text(const fs::path& path, const std::string& text) { write_file_atomic(path, text); }

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void require_file(const fs::path& path, const char* what) {
    if (!fs::exists(path)) throw IoError(std::string(what) + " not found: " + path.string());
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string config, preset, out, resume, data_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::optional<std::size_t> max_steps;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
    runtime::TrainConfig cfg;
    if (!a.config.empty()) {
        cfg = runtime::TrainConfig::load(a.config);
    } else if (a.preset == "desk") {
        cfg = runtime::TrainConfig::desk();
    } else {
        throw ConfigError("train: --config PATH (or --preset desk) is required");
    }
    if (a.seed_set) cfg.seed = a.seed;
    if (!a.data_dir.empty()) cfg.data.dir = a.data_dir;
    cfg.validate();

    const fs::path dir = a.out;
    ensure_dir(dir);
    write_text(dir / "config.ini", cfg.to_text());
    auto data = std::make_shared<const runtime::TrainData>(runtime::prepare_data(cfg.data));
    runtime::Trainer trainer(cfg, data, dir);
    trainer.on_log = [&](const std::string& line) { out << line << '\n' << std::flush; };
    if (!a.resume.empty()) {
        require_file(a.resume, "checkpoint");
        trainer.resume(model::load_checkpoint(a.resume));
    }
    trainer.run(a.max_steps.value_or(std::numeric_limits<std::size_t>::max()));

    const runtime::Evaluation e = runtime::evaluate(trainer.model(), data->holdout);
    std::vector<std::string> checkpoints;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".sfck") checkpoints.push_back(entry.path().filename().string());
    }
    std::sort(checkpoints.begin(), checkpoints.end());
    std::ostringstream summary;
    summary << std::setprecision(10) << "steps = " << trainer.step() << " / " << trainer.total_steps() << '\n'
            << "parameters = " << trainer.model().parameter_count() << '\n'
            << "final_loss = " << trainer.last_loss() << '\n'
            << "best_holdout_psnr = " << trainer.best_psnr() << '\n'
            << "holdout = " << e.to_line() << '\n'
            << "checkpoints =";
    for (const auto& c : checkpoints) summary << ' ' << c;
    summary << '\n';
    write_text(dir / "summary.txt", summary.str());
    out << "== summary ==\n" << summary.str();
    return kExitOk;
}

// ---------------------------------------------------------------- restore

struct RestoreArgs {
    std::string ckpt, in, gt, out;
    std::size_t tile = 0, overlap = 16;
};

int cmd_restore(const RestoreArgs& a, std::ostream& out) {
    require_file(a.ckpt, "checkpoint");
    require_file(a.in, "input image");
    const model::Checkpoint ck = model::load_checkpoint(a.ckpt);
    const auto net = model::model_from_checkpoint(ck);
    const Tensor degraded = io::load_image(a.in);
    const Tensor restored = runtime::restore_image(*net, degraded, {a.tile, a.overlap});
    if (!fs::path(a.out).parent_path().empty()) ensure_dir(fs::path(a.out).parent_path());
    io::save_image(a.out, restored);
    out << "wrote " << a.out << " (" << shape_string(restored.shape()) << ")\n";
    if (!a.gt.empty()) {
        require_file(a.gt, "ground truth");
        const Tensor gt = io::load_image(a.gt);
        if (gt.shape() != restored.shape()) {
            throw ShapeError("restore: --gt is " + shape_string(gt.shape()) + ", output is " + shape_string(restored.shape()));
        }
        out << "restored " << analyze::quality(restored, gt).to_line() << '\n';
        out << "input    " << analyze::quality(degraded, gt).to_line() << '\n';
    }
    return kExitOk;
}

// ---------------------------------------------------------------- degrade

struct DegradeArgs {
    std::vector<std::string> in;
    std::size_t procedural = 0, count = 0, size = 64, channels = 3;
    std::string spec, out;
    std::uint64_t seed = 0;
};

int cmd_degrade(const DegradeArgs& a, std::ostream& out) {
    if (a.in.empty() == (a.procedural == 0)) throw ConfigError("degrade: give exactly one of --in IMG... or --procedural N");
    degrade::DatasetOptions opt;
    opt.seed = a.seed;
    opt.height = opt.width = a.size;
    opt.channels = a.channels;
    if (!a.spec.empty()) {
        const Ini ini = Ini::load(a.spec);
        if (!ini.has_section("degrade")) throw ConfigError(a.spec + ": missing [degrade] section");
        opt.distribution = degrade::SpecDistribution::read(ini, "degrade");
        opt.lights_fraction = ini.get_double("dataset", "lights_fraction", opt.lights_fraction);
    }
    opt.distribution.validate();
    std::vector<degrade::Pair> pairs;
    if (a.procedural) {
        opt.count = a.procedural;
        pairs = degrade::make_dataset(opt);
    } else {
        std::vector<Tensor> sources;
        for (const auto& p : a.in) {
            require_file(p, "input image");
            sources.push_back(io::load_image(p));
        }
        opt.channels = sources.front().channels();
        opt.count = a.count ? a.count : sources.size();
        pairs = degrade::make_dataset(opt, sources);
    }
    degrade::write_dataset(a.out, pairs);
    out << "pairs = " << pairs.size() << '\n'
        << "manifest = " << (fs::path(a.out) / "manifest.ini").string() << '\n'
        << "manifest_hash = " << hex64(fnv1a64(degrade::manifest_text(pairs))) << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeArgs {
    std::string deg, gt, out;
};

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
    require_file(a.deg, "degraded image");
    require_file(a.gt, "ground truth");
    const Tensor deg = io::load_image(a.deg), gt = io::load_image(a.gt);
    if (deg.shape() != gt.shape()) {
        throw ShapeError("analyze: --deg is " + shape_string(deg.shape()) + ", --gt is " + shape_string(gt.shape()));
    }
    const fs::path dir = a.out;
    ensure_dir(dir);
    const analyze::SpectralDiffMap map = analyze::spectral_diff(deg, gt);
    const double score = analyze::flare_prior_score(map);
    const auto peak = analyze::peak_off_dc(map);
    const analyze::QualityReport q = analyze::quality(deg, gt);

    io::write_png(dir / "spatial_diff.png", analyze::spatial_diff_image(deg, gt));
    analyze::export_heatmap(map.summary, map.height, map.width, dir / "spectral_diff.png", true);
    save_tensor(dir / "spectral_diff.sftn", Tensor(Shape{map.height, map.width}, map.summary));

    std::ostringstream report;
    report << std::setprecision(10) << "[analysis]\n"
           << "flare_prior_score = " << score << '\n'
           << "peak_row = " << peak.first << '\n'
           << "peak_col = " << peak.second << '\n'
           << "dc_row = " << map.height / 2 << '\n'
           << "dc_col = " << map.width / 2 << '\n'
           << "psnr = " << q.psnr << '\n'
           << "ssim = " << q.ssim << '\n';
    write_text(dir / "analysis.ini", report.str());
    out << report.str();
    return kExitOk;
}

// ---------------------------------------------------------------- checks

int report_suite(const checks::SuiteReport& rep, std::ostream& out) {
    for (const auto& line : rep.lines()) out << line << '\n';
    if (const auto* w = rep.worst()) out << "worst: " << w->name << " " << std::scientific << std::setprecision(3) << w->value << '\n';
    if (!rep.covered.empty()) out << "coverage: " << rep.covered.size() << "/" << checks::required_blocks().size() << " block kinds\n";
    out << rep.scope << (rep.passed() ? ": PASS" : ": FAIL") << '\n';
    return rep.passed() ? kExitOk : kExitNumeric;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Spatial-frequency restoration toolkit", "sfim"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every command");
    std::size_t threads = 0;
    app.add_option("--threads", threads, "Kernel threads (overrides SFIM_THREADS)");

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "Train a model with the progressive patch schedule");
    auto* cfg_opt = train->add_option("--config", ta.config, "Training configuration (INI)");
    train->add_option("--preset", ta.preset, "Built-in configuration instead of --config")
        ->check(CLI::IsMember({"desk"}))
        ->excludes(cfg_opt);
    train->add_option("--seed", ta.seed, "Training seed (overrides the config)")->each([&](const std::string&) { ta.seed_set = true; });
    train->add_option("--out", ta.out, "Output directory for checkpoints and logs")->required();
    train->add_option("--resume", ta.resume, "Checkpoint to continue from");
    train->add_option("--data", ta.data_dir, "Dataset directory written by 'degrade' (overrides the config)");
    train->add_option("--max-steps", ta.max_steps, "Stop after this many further steps");

    RestoreArgs ra;
    auto* restore = app.add_subcommand("restore", "Restore an image with a trained checkpoint");
    restore->add_option("--ckpt", ra.ckpt, "Checkpoint (.sfck)")->required();
    restore->add_option("--in", ra.in, "Degraded image (.png or raw tensor)")->required();
    restore->add_option("--gt", ra.gt, "Ground truth; prints PSNR/SSIM");
    restore->add_option("--out", ra.out, "Restored image (.png or raw tensor)")->required();
    restore->add_option("--tile", ra.tile, "Tile size for large images (0: whole image)");
    restore->add_option("--overlap", ra.overlap, "Tile overlap in pixels");

    DegradeArgs da;
    auto* deg = app.add_subcommand("degrade", "Synthesize degraded/clean training pairs");
    auto* in_opt = deg->add_option("--in", da.in, "Clean source images to crop from");
    deg->add_option("--procedural", da.procedural, "Number of procedural pairs")->excludes(in_opt);
    deg->add_option("--count", da.count, "Pairs to crop from --in sources (default: one per source)");
    deg->add_option("--spec", da.spec, "INI with a [degrade] distribution section");
    deg->add_option("--seed", da.seed, "Dataset seed");
    deg->add_option("--size", da.size, "Pair height and width");
    deg->add_option("--channels", da.channels, "Channels of procedural pairs");
    deg->add_option("--out", da.out, "Output directory")->required();

    AnalyzeArgs aa;
    auto* an = app.add_subcommand("analyze", "Spatial and spectral difference analysis of a pair");
    an->add_option("--deg", aa.deg, "Degraded image")->required();
    an->add_option("--gt", aa.gt, "Clean image")->required();
    an->add_option("--out", aa.out, "Output directory")->required();

    std::string scope;
    std::uint64_t check_seed = 0;
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suites");
    gc->add_option("--scope", scope, "tensor, blocks or model")->required()->check(CLI::IsMember({"tensor", "blocks", "model"}));
    gc->add_option("--seed", check_seed, "Seed for inputs and sampled coordinates");

    auto* st = app.add_subcommand("selftest", "Closed-form invariants and gradient suites");
    st->add_option("--seed", check_seed, "Seed for inputs and sampled coordinates");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (threads) set_thread_kernel_threads(threads);
        if (*train) return cmd_train(ta, out);
        if (*restore) return cmd_restore(ra, out);
        if (*deg) return cmd_degrade(da, out);
        if (*an) return cmd_analyze(aa, out);
        if (*gc) return report_suite(checks::gradcheck_scope(scope, check_seed), out);
        if (*st) return report_suite(checks::selftest(check_seed), out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ShapeError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const NumericError& e) {
        err << "error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitInternal;
    }
    return kExitUsage;
}

} // namespace sfim::cli

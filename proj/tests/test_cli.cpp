#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "sfim/analyze/analyze.hpp"
#include "sfim/cli/cli.hpp"
#include "sfim/core/ini.hpp"
#include "sfim/core/tensor_io.hpp"
#include "sfim/io/image_io.hpp"
#include "sfim/model/model.hpp"
#include "test_support.hpp"

using namespace sfim;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result sfim_run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const char* name) {
    const fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream b;
    b << in.rdbuf();
    return b.str();
}

std::string field(const std::string& text, const std::string& key) {
    const auto at = text.find(key + " = ");
    if (at == std::string::npos) return {};
    const auto start = at + key.size() + 3;
    return text.substr(start, text.find('\n', start) - start);
}

fs::path identity_checkpoint(const fs::path& dir, std::size_t channels) {
    model::ModelConfig c = model::ModelConfig::desk();
    c.image_channels = channels;
    model::Model m(c, 1);
    m.identity_init();
    const fs::path p = dir / ("identity" + std::to_string(channels) + ".sfck");
    model::save_checkpoint(p, model::make_checkpoint(m));
    return p;
}

} // namespace

TEST_CASE("usage errors exit 2 with a one-line reason") {
    CHECK(sfim_run({"--help"}).code == 0);
    CHECK(sfim_run({}).code == cli::kExitUsage);
    const Result missing = sfim_run({"train", "--out", "/tmp/sfim_cli_unused"});
    CHECK(missing.code == cli::kExitUsage);
    CHECK(missing.err.find("--config") != std::string::npos);
    CHECK(std::count(missing.err.begin(), missing.err.end(), '\n') == 1);
    CHECK(sfim_run({"train", "--config", "/nonexistent/train.ini", "--out", "/tmp/sfim_cli_unused"}).code == cli::kExitUsage);
    CHECK(sfim_run({"degrade", "--procedural", "2", "--out", "/tmp/x", "--bogus"}).code == cli::kExitUsage);
    CHECK(sfim_run({"gradcheck", "--scope", "everything"}).code == cli::kExitUsage);
    CHECK(sfim_run({"degrade", "--out", "/tmp/x"}).code == cli::kExitUsage);
}

TEST_CASE("degrade: pairs, manifest, determinism, invalid spec") {
    const fs::path dir = scratch("sfim_cli_degrade");
    const Result a = sfim_run({"degrade", "--procedural", "5", "--seed", "4", "--size", "32", "--out", (dir / "a").string()});
    REQUIRE(a.code == 0);
    CHECK(fs::exists(dir / "a" / "manifest.ini"));
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(dir / "a")) files += e.path().extension() == ".sftn";
    CHECK(files == 10);
    const Result b = sfim_run({"degrade", "--procedural", "5", "--seed", "4", "--size", "32", "--out", (dir / "b").string()});
    CHECK(field(a.out, "manifest_hash") == field(b.out, "manifest_hash"));
    CHECK(slurp(dir / "a" / "manifest.ini") == slurp(dir / "b" / "manifest.ini"));
    const Result c = sfim_run({"degrade", "--procedural", "5", "--seed", "5", "--size", "32", "--out", (dir / "c").string()});
    CHECK(field(a.out, "manifest_hash") != field(c.out, "manifest_hash"));

    std::ofstream(dir / "bad.ini") << "[degrade]\nnoise_min = 0.3\nnoise_max = 0.1\n";
    CHECK(sfim_run({"degrade", "--procedural", "2", "--spec", (dir / "bad.ini").string(), "--out", (dir / "d").string()}).code ==
          cli::kExitUsage);

    // crops of a user image
    io::write_png(dir / "src.png", test::random_tensor({3, 40, 48}, 3, 0.0, 1.0));
    const Result crops = sfim_run({"degrade", "--in", (dir / "src.png").string(), "--count", "3", "--size", "32", "--out",
                                   (dir / "e").string()});
    CHECK(crops.code == 0);
    CHECK(field(crops.out, "pairs") == "3");
    fs::remove_all(dir);
}

TEST_CASE("analyze: zero maps for identical inputs, flare beats noise, deterministic files") {
    const fs::path dir = scratch("sfim_cli_analyze");
    const Tensor img = test::random_tensor({3, 32, 32}, 8, 0.0, 1.0);
    save_tensor(dir / "img.sftn", img);
    const Result same = sfim_run({"analyze", "--deg", (dir / "img.sftn").string(), "--gt", (dir / "img.sftn").string(),
                                  "--out", (dir / "same").string()});
    REQUIRE(same.code == 0);
    CHECK(std::stod(field(same.out, "flare_prior_score")) == 0.0);
    CHECK(std::stod(field(same.out, "psnr")) == analyze::kPsnrCap);
    const Tensor map = load_tensor(dir / "same" / "spectral_diff.sftn");
    for (double v : map.values()) CHECK(v == 0.0);
    const Tensor spatial = io::read_png(dir / "same" / "spatial_diff.png");
    for (double v : spatial.values()) CHECK(v == 0.0);

    const analyze::FlareProbe probe = analyze::flare_probe(128, 2);
    save_tensor(dir / "clean.sftn", probe.clean);
    save_tensor(dir / "flare.sftn", probe.flared);
    save_tensor(dir / "noise.sftn", probe.noisy);
    const Result flare = sfim_run({"analyze", "--deg", (dir / "flare.sftn").string(), "--gt", (dir / "clean.sftn").string(),
                                   "--out", (dir / "flare").string()});
    const Result noise = sfim_run({"analyze", "--deg", (dir / "noise.sftn").string(), "--gt", (dir / "clean.sftn").string(),
                                   "--out", (dir / "noise").string()});
    CHECK(std::stod(field(flare.out, "flare_prior_score")) > std::stod(field(noise.out, "flare_prior_score")));

    const Result again = sfim_run({"analyze", "--deg", (dir / "flare.sftn").string(), "--gt", (dir / "clean.sftn").string(),
                                   "--out", (dir / "flare2").string()});
    CHECK(again.out == flare.out);
    for (const char* f : {"spatial_diff.png", "spectral_diff.png", "spectral_diff.sftn", "analysis.ini"}) {
        CHECK(slurp(dir / "flare" / f) == slurp(dir / "flare2" / f));
    }
    CHECK(sfim_run({"analyze", "--deg", (dir / "img.sftn").string(), "--gt", (dir / "clean.sftn").string(), "--out",
                    (dir / "x").string()}).code == cli::kExitUsage);
    fs::remove_all(dir);
}

TEST_CASE("restore: identity model, PNG and raw 4-channel inputs, error codes") {
    const fs::path dir = scratch("sfim_cli_restore");
    const fs::path ck3 = identity_checkpoint(dir, 3), ck4 = identity_checkpoint(dir, 4);
    io::write_png(dir / "in.png", test::random_tensor({3, 37, 45}, 9, 0.0, 1.0));
    const Result r = sfim_run({"restore", "--ckpt", ck3.string(), "--in", (dir / "in.png").string(), "--gt",
                               (dir / "in.png").string(), "--out", (dir / "out.png").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("restored psnr=100.0000") != std::string::npos);
    CHECK(slurp(dir / "out.png") == slurp(dir / "in.png"));

    const Tensor raw = test::random_tensor({4, 24, 40}, 10, 0.0, 1.0);
    save_tensor(dir / "raw.sftn", raw);
    CHECK(sfim_run({"restore", "--ckpt", ck4.string(), "--in", (dir / "raw.sftn").string(), "--out",
                    (dir / "raw_out.sftn").string(), "--tile", "32", "--overlap", "8"}).code == 0);
    CHECK(max_abs_diff(load_tensor(dir / "raw_out.sftn"), raw) < 1e-12);  // tile weights renormalize

    // wrong channel count, missing file, corrupted checkpoint, non-finite input
    CHECK(sfim_run({"restore", "--ckpt", ck3.string(), "--in", (dir / "raw.sftn").string(), "--out",
                    (dir / "x.sftn").string()}).code == cli::kExitUsage);
    CHECK(sfim_run({"restore", "--ckpt", ck3.string(), "--in", (dir / "missing.png").string(), "--out",
                    (dir / "x.png").string()}).code == cli::kExitIo);
    std::ofstream(dir / "junk.sfck") << "JUNKJUNKJUNK";
    CHECK(sfim_run({"restore", "--ckpt", (dir / "junk.sfck").string(), "--in", (dir / "in.png").string(), "--out",
                    (dir / "x.png").string()}).code == cli::kExitIo);
    Tensor bad = test::random_tensor({3, 16, 16}, 11, 0.0, 1.0);
    bad.mutable_values()[7] = std::numeric_limits<double>::quiet_NaN();
    save_tensor(dir / "nan.sftn", bad);
    CHECK(sfim_run({"restore", "--ckpt", ck3.string(), "--in", (dir / "nan.sftn").string(), "--out",
                    (dir / "x.sftn").string()}).code == cli::kExitNumeric);
    fs::remove_all(dir);
}

TEST_CASE("train: seed override, checkpoints, summary and resume") {
    const fs::path dir = scratch("sfim_cli_train");
    std::ofstream(dir / "tiny.ini") << "[data]\ntrain_pairs = 4\nholdout_pairs = 2\nsize = 32\nseed = 3\n"
                                       "[phase.0]\nsteps = 3\npatch = 16\nbatch = 2\nlr_max = 1e-3\nlr_min = 1e-5\n"
                                       "[phase.1]\nsteps = 2\npatch = 32\nbatch = 1\nlr_max = 5e-4\nlr_min = 1e-6\n"
                                       "[train]\nseed = 5\nval_every = 2\nlog_every = 1\n";
    const Result r = sfim_run({"train", "--config", (dir / "tiny.ini").string(), "--seed", "11", "--out", (dir / "run").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("== summary ==") != std::string::npos);
    CHECK(Ini::load((dir / "run" / "config.ini").string()).get("train", "seed") == "11");
    std::size_t checkpoints = 0;
    for (const auto& e : fs::directory_iterator(dir / "run")) checkpoints += e.path().extension() == ".sfck";
    CHECK(checkpoints >= 2);
    for (const char* f : {"phase1.sfck", "phase2.sfck", "best.sfck", "final.sfck", "train.log", "summary.txt"}) {
        CHECK(fs::exists(dir / "run" / f));
    }

    // interrupted and resumed run ends on the same checkpoint
    CHECK(sfim_run({"train", "--config", (dir / "tiny.ini").string(), "--seed", "11", "--out", (dir / "part").string(),
                    "--max-steps", "2"}).code == 0);
    CHECK(fs::exists(dir / "part" / "last.sfck"));
    const Result none = sfim_run({"train", "--config", (dir / "tiny.ini").string(), "--out", (dir / "none").string(),
                                  "--max-steps", "0"});
    CHECK(none.code == 0);
    CHECK(none.out.find("steps = 0 / 5") != std::string::npos);
    CHECK(sfim_run({"train", "--config", (dir / "tiny.ini").string(), "--seed", "11", "--out", (dir / "part").string(),
                    "--resume", (dir / "part" / "last.sfck").string()}).code == 0);
    CHECK(slurp(dir / "part" / "final.sfck") == slurp(dir / "run" / "final.sfck"));
    // a checkpoint from another seed is refused
    CHECK(sfim_run({"train", "--config", (dir / "tiny.ini").string(), "--seed", "12", "--out", (dir / "other").string(),
                    "--resume", (dir / "part" / "last.sfck").string()}).code == cli::kExitUsage);
    fs::remove_all(dir);
}

TEST_CASE("gradcheck and selftest") {
    const Result blocks = sfim_run({"gradcheck", "--scope", "blocks"});
    CHECK(blocks.code == 0);
    CHECK(blocks.out.find("coverage: 11/11 block kinds") != std::string::npos);
    CHECK(sfim_run({"gradcheck", "--scope", "tensor", "--seed", "3"}).code == 0);
    const Result st = sfim_run({"selftest"});
    CHECK(st.code == 0);
    CHECK(st.out.find("selftest: PASS") != std::string::npos);
}

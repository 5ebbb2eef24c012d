#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "eegmtl/train.hpp"

// Drives the real binary end to end; EEGMTL_BIN_PATH is injected by the build.

namespace fs = std::filesystem;

namespace {

const std::string kBin = EEGMTL_BIN_PATH;

struct Unsetter {
    Unsetter() { unsetenv("EEGMTL_OUT"); }
} unset_out_dir;

fs::path scratch_root() {
    return fs::temp_directory_path() / "eegmtl_cli_tests";
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = scratch_root() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

struct CmdResult {
    int code = -1;
    std::string output;
};

std::string slurp(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

CmdResult run_cmd(const std::string& args, const std::string& env_prefix = "") {
    fs::create_directories(scratch_root());
    const fs::path log = scratch_root() / "last_run.log";
    const std::string cmd =
        env_prefix + "\"" + kBin + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    CmdResult r;
    if (status != -1 && WIFEXITED(status)) r.code = WEXITSTATUS(status);
    r.output = slurp(log);
    return r;
}

std::size_t count_occurrences(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (std::size_t pos = hay.find(needle); pos != std::string::npos;
         pos = hay.find(needle, pos + needle.size())) {
        ++n;
    }
    return n;
}

std::size_t line_count(const std::string& text) {
    return count_occurrences(text, "\n");
}

std::string gen_dataset(const fs::path& dir, int n, int seed, const std::string& extra = "") {
    const std::string path = (dir / "data.eegc").string();
    const CmdResult r = run_cmd("gen -n " + std::to_string(n) + " --seed " + std::to_string(seed) +
                                " --out \"" + path + "\" " + extra);
    REQUIRE(r.code == 0);
    return path;
}

} // namespace

TEST_CASE("gen writes byte-identical containers per seed") {
    const fs::path dir = fresh_dir("gen_determinism");
    const CmdResult a =
        run_cmd("gen -n 24 --seed 7 --out \"" + (dir / "a.eegc").string() + "\"");
    REQUIRE(a.code == 0);
    CHECK(a.output.find("n=24") != std::string::npos);
    CHECK(a.output.find("channels=8") != std::string::npos);
    CHECK(a.output.find("timesteps=64") != std::string::npos);
    CHECK(a.output.find("pupil=yes") != std::string::npos);
    CHECK(a.output.find("seed=7") != std::string::npos);

    const CmdResult b =
        run_cmd("gen -n 24 --seed 7 --out \"" + (dir / "b.eegc").string() + "\"");
    REQUIRE(b.code == 0);
    CHECK(slurp(dir / "a.eegc") == slurp(dir / "b.eegc"));

    const CmdResult c =
        run_cmd("gen -n 24 --seed 8 --out \"" + (dir / "c.eegc").string() + "\"");
    REQUIRE(c.code == 0);
    CHECK(slurp(dir / "a.eegc") != slurp(dir / "c.eegc"));
}

TEST_CASE("bad invocations exit with the usage code") {
    const fs::path dir = fresh_dir("usage");
    CHECK(run_cmd("gen -n 0 --out \"" + (dir / "x.eegc").string() + "\"").code == 2);
    CHECK(run_cmd("gen").code == 2);          // -n is required
    CHECK(run_cmd("").code == 2);             // a subcommand is required
    CHECK(run_cmd("frobnicate").code == 2);
    CHECK(run_cmd("gen -n 4 --bogus-flag 1").code == 2);
    CHECK(run_cmd("train --data x.eegc --variant mtl9").code == 2);
}

TEST_CASE("data problems exit with the data code") {
    const fs::path dir = fresh_dir("data_errors");
    CHECK(run_cmd("train --data \"" + (dir / "missing.eegc").string() + "\"").code == 3);
    CHECK(run_cmd("eval --data \"" + (dir / "missing.eegc").string() + "\" --weights \"" +
                  (dir / "missing.eegw").string() + "\"")
              .code == 3);

    // pupil variant against a container generated without pupil targets
    const std::string dry = gen_dataset(dir, 12, 1, "--no-pupil");
    const CmdResult r = run_cmd("train --data \"" + dry + "\" --variant mtl2 --epochs 1 --out \"" +
                                dir.string() + "\"");
    CHECK(r.code == 3);
    CHECK(r.output.find("pupil") != std::string::npos);
}

TEST_CASE("train writes a checkpoint and reports, eval reproduces the test score") {
    const fs::path dir = fresh_dir("train_eval");
    const std::string data = gen_dataset(dir, 12, 3);

    const CmdResult t = run_cmd("train --data \"" + data +
                                "\" --variant base --epochs 2 --batch-size 5 --seed 3 --out \"" +
                                dir.string() + "\"");
    REQUIRE(t.code == 0);
    CHECK(t.output.find("best_epoch") != std::string::npos);
    CHECK(t.output.find("model.eegw") != std::string::npos);
    REQUIRE(fs::exists(dir / "model.eegw"));
    REQUIRE(fs::exists(dir / "report.txt"));
    REQUIRE(fs::exists(dir / "report.json"));

    const nlohmann::json report = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(report.at("epochs").size() == 2);
    CHECK(report.at("best_val_rmse_mm").get<double>() > 0.0);

    const fs::path eval_dir = dir / "eval";
    const CmdResult e = run_cmd("eval --data \"" + data + "\" --weights \"" +
                                (dir / "model.eegw").string() + "\" --split test --seed 3 --out \"" +
                                eval_dir.string() + "\"");
    REQUIRE(e.code == 0);
    CHECK(e.output.find("rmse_mm=") != std::string::npos);
    const nlohmann::json ev = nlohmann::json::parse(slurp(eval_dir / "eval.json"));
    CHECK(ev.at("rmse_mm").get<double>() == report.at("test_rmse_mm").get<double>());

    const CmdResult all = run_cmd("eval --data \"" + data + "\" --weights \"" +
                                  (dir / "model.eegw").string() + "\" --split all --seed 3");
    REQUIRE(all.code == 0);
    CHECK(all.output.find("n=12") != std::string::npos);

    // a checkpoint can warm-start another run's encoder
    const CmdResult warm = run_cmd("train --data \"" + data +
                                   "\" --variant base --epochs 1 --batch-size 5 --seed 4 "
                                   "--init-encoder \"" +
                                   (dir / "model.eegw").string() + "\" --out \"" +
                                   (dir / "warm").string() + "\"");
    CHECK(warm.code == 0);

    // geometry mismatch between checkpoint and container
    const fs::path narrow_dir = fresh_dir("train_eval_narrow");
    const std::string narrow = gen_dataset(narrow_dir, 12, 3, "--channels 4");
    const CmdResult bad = run_cmd("eval --data \"" + narrow + "\" --weights \"" +
                                  (dir / "model.eegw").string() + "\" --seed 3");
    CHECK(bad.code == 3);
}

TEST_CASE("gradcheck exits clean normally and loudly with an injected bug") {
    const CmdResult ok = run_cmd("gradcheck --skip-model");
    CHECK(ok.code == 0);
    CHECK(ok.output.find("gradcheck passed") != std::string::npos);
    CHECK(ok.output.find("[FAIL]") == std::string::npos);

    const CmdResult bad = run_cmd("gradcheck --skip-model --inject-bug");
    CHECK(bad.code == 5);
    CHECK(bad.output.find("gradcheck FAILED") != std::string::npos);
    CHECK(bad.output.find("[FAIL]") != std::string::npos);
}

TEST_CASE("sweep emits one row per weight-seed pair plus per-weight summaries") {
    const fs::path dir = fresh_dir("sweep");
    const std::string data = gen_dataset(dir, 12, 5);
    const CmdResult r = run_cmd("sweep --data \"" + data +
                                "\" --alpha-grid 0 10 --seeds 1 2 --epochs 1 --batch-size 6 "
                                "--out \"" +
                                dir.string() + "\"");
    REQUIRE(r.code == 0);
    CHECK(r.output.find("alpha_recon,n_ok") != std::string::npos);

    const std::string rows = slurp(dir / "sweep_rows.csv");
    CHECK(line_count(rows) == 1 + 2 * 2);
    CHECK(count_occurrences(rows, ",ok") == 4);
    CHECK(rows.rfind("alpha_recon,seed,test_rmse_mm,status\n", 0) == 0);

    const std::string summary = slurp(dir / "sweep_summary.csv");
    CHECK(line_count(summary) == 1 + 2);
    CHECK(summary.rfind("alpha_recon,n_ok,mean_rmse_mm,std_rmse_mm\n", 0) == 0);

    // decreasing weights violate the grid contract
    CHECK(run_cmd("sweep --data \"" + data + "\" --alpha-grid 10 5 --epochs 1 --out \"" +
                  dir.string() + "\"")
              .code == 3);
}

TEST_CASE("plot writes n csv rows and 2n svg glyphs") {
    const fs::path dir = fresh_dir("plot");
    const std::string data = gen_dataset(dir, 12, 6);
    const CmdResult t = run_cmd("train --data \"" + data +
                                "\" --variant base --epochs 1 --batch-size 6 --seed 6 --out \"" +
                                dir.string() + "\"");
    REQUIRE(t.code == 0);

    const CmdResult p = run_cmd("plot --data \"" + data + "\" --weights \"" +
                                (dir / "model.eegw").string() + "\" --split all --seed 6 --out \"" +
                                dir.string() + "\"");
    REQUIRE(p.code == 0);

    const std::string csv = slurp(dir / "scatter.csv");
    CHECK(line_count(csv) == 1 + 12);
    CHECK(csv.rfind("true_x_mm,true_y_mm,pred_x_mm,pred_y_mm\n", 0) == 0);

    const std::string svg = slurp(dir / "scatter.svg");
    CHECK(count_occurrences(svg, "class=\"glyph\"") == 24);
    CHECK(count_occurrences(svg, "class=\"legend-swatch\"") == 2);
    CHECK(svg.find("</svg>") != std::string::npos);
}

TEST_CASE("config files feed options and explicit flags override them") {
    const fs::path dir = fresh_dir("config_file");
    const fs::path cfg = dir / "run.ini";
    std::ofstream(cfg) << "[gen]\ncount=24\nseed=7\n";

    const CmdResult from_file = run_cmd("--config \"" + cfg.string() + "\" gen --out \"" +
                                        (dir / "file.eegc").string() + "\"");
    REQUIRE(from_file.code == 0);
    const CmdResult from_flags =
        run_cmd("gen -n 24 --seed 7 --out \"" + (dir / "flags.eegc").string() + "\"");
    REQUIRE(from_flags.code == 0);
    CHECK(slurp(dir / "file.eegc") == slurp(dir / "flags.eegc"));

    const CmdResult overridden = run_cmd("--config \"" + cfg.string() + "\" gen --seed 9 --out \"" +
                                         (dir / "override.eegc").string() + "\"");
    REQUIRE(overridden.code == 0);
    const CmdResult direct =
        run_cmd("gen -n 24 --seed 9 --out \"" + (dir / "direct.eegc").string() + "\"");
    REQUIRE(direct.code == 0);
    CHECK(slurp(dir / "override.eegc") == slurp(dir / "direct.eegc"));
    CHECK(slurp(dir / "override.eegc") != slurp(dir / "file.eegc"));

    // a config file that points nowhere is a data error
    CHECK(run_cmd("--config \"" + (dir / "absent.ini").string() + "\" gen -n 4").code != 0);
}

TEST_CASE("the out-dir environment variable stands in for --out") {
    const fs::path dir = fresh_dir("env_out");
    const CmdResult r =
        run_cmd("gen -n 4 --seed 1", "EEGMTL_OUT=\"" + dir.string() + "\" ");
    REQUIRE(r.code == 0);
    CHECK(fs::exists(dir / "data.eegc"));
}

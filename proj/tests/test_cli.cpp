#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "jedi/entropy.hpp"
#include "jedi/image_io.hpp"
#include "jedi/synthetic.hpp"
#include "support.hpp"

using namespace jedi;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string stdout_text;
};

const fs::path& work_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "jedi_cli_tests";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

RunResult run_cli(const std::string& args) {
    const fs::path out_file = work_dir() / "cli_stdout.txt";
    const std::string cmd =
        std::string(JEDI_CLI_PATH) + " " + args + " > " + out_file.string() + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    RunResult result;
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out_file);
    std::stringstream ss;
    ss << in.rdbuf();
    result.stdout_text = ss.str();
    return result;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const fs::path& scene_dir() {
    static const fs::path dir = [] {
        const fs::path d = work_dir() / "scenes";
        fs::create_directories(d);
        for (int i = 0; i < 6; ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "scene-%02d.png", i);
            save_image(gen_smooth_scene(96, 96, 7000 + i), (d / name).string());
        }
        return d;
    }();
    return dir;
}

} // namespace

TEST_CASE("help works for every subcommand") {
    CHECK(run_cli("--help").exit_code == 0);
    for (const char* sub :
         {"stats", "heatmap", "detect", "defend", "train-ae", "eval", "adaptive-patch"}) {
        CAPTURE(sub);
        const RunResult r = run_cli(std::string(sub) + " --help");
        CHECK(r.exit_code == 0);
        CHECK(r.stdout_text.find("--") != std::string::npos);
    }
}

TEST_CASE("usage errors exit with code 2") {
    CHECK(run_cli("").exit_code == 2);
    CHECK(run_cli("stats --images /nonexistent").exit_code == 2); // missing --out
    CHECK(run_cli("frobnicate").exit_code == 2);
    CHECK(run_cli("eval --out x.json").exit_code == 2); // neither --dataset nor --synthetic
}

TEST_CASE("data errors exit with code 3 and can emit machine-readable JSON") {
    const RunResult plain = run_cli("heatmap --in /nonexistent.png --out-json " +
                                    (work_dir() / "hm.json").string());
    CHECK(plain.exit_code == 3);

    const RunResult with_json = run_cli("--json-errors heatmap --in /nonexistent.png --out-json " +
                                        (work_dir() / "hm.json").string());
    CHECK(with_json.exit_code == 3);
    const auto j = nlohmann::json::parse(with_json.stdout_text);
    CHECK(j.at("schema") == "jedi-error/1");
    CHECK(j.at("code") == 3);
    CHECK(j.at("error") == "data");
}

TEST_CASE("stats command matches the library fit") {
    const fs::path out = work_dir() / "stats.json";
    const RunResult r =
        run_cli("stats --images " + scene_dir().string() + " --out " + out.string());
    REQUIRE(r.exit_code == 0);

    std::vector<Image> images;
    for (int i = 0; i < 6; ++i) images.push_back(gen_smooth_scene(96, 96, 7000 + i));
    const CleanEntropyStats expected = fit_clean_stats(images, WindowGeometry(8, 4));

    std::ifstream in(out);
    nlohmann::json j;
    in >> j;
    const CleanEntropyStats got = stats_from_json(j);
    CHECK(got.mu == expected.mu);
    CHECK(got.sigma == expected.sigma);
    CHECK(got.n_windows == expected.n_windows);

    // Same invocation twice produces an identical file.
    const std::string first = read_file(out);
    REQUIRE(run_cli("stats --images " + scene_dir().string() + " --out " + out.string())
                .exit_code == 0);
    CHECK(read_file(out) == first);
}

TEST_CASE("heatmap command writes JSON and PNG views") {
    const fs::path img = work_dir() / "input.png";
    save_image(gen_smooth_scene(96, 96, 3), img.string());
    const fs::path out_json = work_dir() / "hm.json";
    const fs::path out_png = work_dir() / "hm.png";

    const RunResult r = run_cli("heatmap --in " + img.string() + " --out-json " +
                                out_json.string() + " --out-png " + out_png.string());
    REQUIRE(r.exit_code == 0);

    std::ifstream in(out_json);
    nlohmann::json j;
    in >> j;
    CHECK(j.at("window") == 8);
    CHECK(j.at("stride") == 4);
    const auto grid = j.at("grid");
    CHECK(grid.size() == 23u); // (96-8)/4+1
    const Image png = load_image(out_png.string());
    CHECK(png.width == 23);
    CHECK(png.height == 23);

    // Geometry overrides change the grid.
    const RunResult r2 = run_cli("heatmap --in " + img.string() + " --out-json " +
                                 out_json.string() + " --window 16 --stride 8");
    REQUIRE(r2.exit_code == 0);
    std::ifstream in2(out_json);
    nlohmann::json j2;
    in2 >> j2;
    CHECK(j2.at("window") == 16);
    CHECK(j2.at("grid").size() == 11u);
}

TEST_CASE("train-ae writes a loadable model") {
    const fs::path model = work_dir() / "tiny_model.json";
    const RunResult r = run_cli("train-ae --count 24 --epochs 6 --seed 5 --grid 16 --out " +
                                model.string());
    REQUIRE(r.exit_code == 0);
    CHECK(r.stdout_text.find("loss:") != std::string::npos);

    std::ifstream in(model);
    nlohmann::json j;
    in >> j;
    CHECK(j.at("format") == "jedi-sae/1");
    CHECK(j.at("input_grid") == 16);
    CHECK(j.at("hidden") == 100);
}

TEST_CASE("detect and defend run end to end deterministically") {
    // Corpus stats over 224px scenes.
    const fs::path big_scenes = work_dir() / "big_scenes";
    fs::create_directories(big_scenes);
    for (int i = 0; i < 8; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "scene-%02d.png", i);
        save_image(gen_smooth_scene(224, 224, 7100 + i), (big_scenes / name).string());
    }
    const fs::path stats = work_dir() / "stats224.json";
    REQUIRE(run_cli("stats --images " + big_scenes.string() + " --out " + stats.string())
                .exit_code == 0);

    // Small but functional model.
    const fs::path model = work_dir() / "model.json";
    REQUIRE(run_cli("train-ae --count 160 --epochs 60 --seed 7 --out " + model.string())
                .exit_code == 0);

    // Attacked input.
    const fs::path attacked_path = work_dir() / "attacked.png";
    const Image scene = gen_smooth_scene(224, 224, 8000);
    const Patch patch = gen_noise_patch(50, 8001);
    save_image(apply_patch(scene, patch, 60, 90).image, attacked_path.string());

    const fs::path repaired = work_dir() / "repaired.png";
    const fs::path mask = work_dir() / "mask.png";
    const fs::path summary = work_dir() / "summary.json";
    const std::string defend_cmd = "defend --in " + attacked_path.string() + " --stats " +
                                   stats.string() + " --model " + model.string() + " --out " +
                                   repaired.string() + " --mask-out " + mask.string() +
                                   " --summary " + summary.string();
    REQUIRE(run_cli(defend_cmd).exit_code == 0);

    std::ifstream in(summary);
    nlohmann::json j;
    in >> j;
    CHECK(j.at("schema") == "jedi-defend/1");
    CHECK(j.at("mask_area").get<long>() > 0);
    const BinaryMask mask_loaded = load_mask(mask.string());
    CHECK(mask_loaded.popcount() == j.at("mask_area").get<std::size_t>());

    // Bitwise-identical outputs on a second run.
    const std::string repaired_bytes = read_file(repaired);
    const std::string mask_bytes = read_file(mask);
    REQUIRE(run_cli(defend_cmd).exit_code == 0);
    CHECK(read_file(repaired) == repaired_bytes);
    CHECK(read_file(mask) == mask_bytes);

    // detect on a clean flat image: empty mask.
    const fs::path flat_path = work_dir() / "flat.png";
    save_image(Image::filled(224, 224, 1, 128), flat_path.string());
    const fs::path flat_mask = work_dir() / "flat_mask.png";
    const fs::path flat_summary = work_dir() / "flat_summary.json";
    REQUIRE(run_cli("detect --in " + flat_path.string() + " --stats " + stats.string() +
                    " --model " + model.string() + " --mask-out " + flat_mask.string() +
                    " --summary " + flat_summary.string())
                .exit_code == 0);
    CHECK(load_mask(flat_mask.string()).popcount() == 0u);

    // The ae masker without --model is a usage error.
    CHECK(run_cli("detect --in " + flat_path.string() + " --stats " + stats.string() +
                  " --mask-out " + flat_mask.string())
              .exit_code == 2);
}

TEST_CASE("eval --synthetic with identity defense reports robust == adversarial") {
    const fs::path report = work_dir() / "report_identity.json";
    const fs::path dataset = work_dir() / "dumped";
    const RunResult r = run_cli("eval --synthetic 8 --scene-size 128 --identity-defense --seed 3 "
                                "--dump-dataset " +
                                dataset.string() + " --out " + report.string());
    REQUIRE(r.exit_code == 0);

    std::ifstream in(report);
    nlohmann::json j;
    in >> j;
    CHECK(j.at("schema") == "jedi-report/1");
    CHECK(j.at("n_trials") == 8);
    CHECK(j.at("robust_accuracy").at("numerator") ==
          j.at("adversarial_accuracy").at("numerator"));

    // The dumped dataset is reusable through --dataset.
    REQUIRE(fs::exists(dataset / "labels.json"));
    const fs::path report2 = work_dir() / "report_dataset.json";
    const RunResult r2 = run_cli("eval --dataset " + dataset.string() +
                                 " --identity-defense --seed 3 --out " + report2.string());
    REQUIRE(r2.exit_code == 0);
    std::ifstream in2(report2);
    nlohmann::json j2;
    in2 >> j2;
    CHECK(j2.at("records") == j.at("records"));
}

TEST_CASE("eval with the mi masker and builtin oracle produces a full report") {
    const fs::path report = work_dir() / "report_mi.json";
    const RunResult r = run_cli(
        "eval --synthetic 8 --scene-size 128 --masker mi --seed 11 --out " + report.string());
    REQUIRE(r.exit_code == 0);
    std::ifstream in(report);
    nlohmann::json j;
    in >> j;
    CHECK(j.at("n_trials") == 8);
    CHECK(j.at("records").size() == 8u);
    CHECK(r.stdout_text.find("recovery rate") != std::string::npos);
}

TEST_CASE("eval with a subprocess oracle exercises the wire protocol") {
    const fs::path report = work_dir() / "report_subprocess.json";
    const std::string child =
        "python3 -c \\\"import sys, json\n"
        "for line in sys.stdin:\n"
        "    req = json.loads(line)\n"
        "    print(json.dumps({'id': req['id'], 'label': 'static'}), flush=True)\\\"";
    const RunResult r = run_cli("eval --synthetic 4 --scene-size 96 --identity-defense "
                                "--oracle subprocess --oracle-cmd \"" +
                                child + "\" --seed 2 --out " + report.string());
    REQUIRE(r.exit_code == 0);
    std::ifstream in(report);
    nlohmann::json j;
    in >> j;
    // A constant oracle never matches the shape labels: zero accuracy.
    CHECK(j.at("clean_accuracy").at("numerator") == 0);

    // A dead oracle must exit with code 4.
    const RunResult dead = run_cli("eval --synthetic 4 --scene-size 96 --identity-defense "
                                   "--oracle subprocess --oracle-cmd true --seed 2 --out " +
                                   report.string());
    CHECK(dead.exit_code == 4);
}

TEST_CASE("adaptive-patch respects the entropy budget end to end") {
    const fs::path patch_path = work_dir() / "adaptive.png";
    const fs::path trace_path = work_dir() / "trace.json";
    const RunResult r = run_cli(
        "adaptive-patch --epsilon 5 --check-freq 3 --epochs 1 --samples 3 --scene-size 64 "
        "--patch-size 16 --mutation-block 8 --seed 4 --out " +
        patch_path.string() + " --trace " + trace_path.string());
    REQUIRE(r.exit_code == 0);

    const Image patch = load_image(patch_path.string());
    CHECK(patch.width == 16);
    const double h = histogram_entropy(patch.data);
    CHECK(h <= 5.0);

    std::ifstream in(trace_path);
    nlohmann::json j;
    in >> j;
    REQUIRE(j.is_array());
    REQUIRE_FALSE(j.empty());
    CHECK(j.back().contains("success_rate"));
}

TEST_CASE("config file values apply and explicit flags override them") {
    const fs::path config = work_dir() / "run_config.json";
    {
        std::ofstream out(config);
        out << R"({"window": 16, "stride": 8, "w_tolerance": 2.0})";
    }
    const fs::path img = work_dir() / "cfg_input.png";
    save_image(gen_smooth_scene(96, 96, 31), img.string());
    const fs::path out_json = work_dir() / "cfg_hm.json";

    // Config file wins over defaults.
    REQUIRE(run_cli("heatmap --in " + img.string() + " --config " + config.string() +
                    " --out-json " + out_json.string())
                .exit_code == 0);
    {
        std::ifstream in(out_json);
        nlohmann::json j;
        in >> j;
        CHECK(j.at("window") == 16);
        CHECK(j.at("stride") == 8);
    }

    // Explicit flag wins over the config file.
    REQUIRE(run_cli("heatmap --in " + img.string() + " --config " + config.string() +
                    " --window 8 --stride 4 --out-json " + out_json.string())
                .exit_code == 0);
    {
        std::ifstream in(out_json);
        nlohmann::json j;
        in >> j;
        CHECK(j.at("window") == 8);
    }

    // Unknown config keys are usage errors.
    const fs::path bad_config = work_dir() / "bad_config.json";
    {
        std::ofstream out(bad_config);
        out << R"({"window": 8, "wat": 1})";
    }
    CHECK(run_cli("heatmap --in " + img.string() + " --config " + bad_config.string() +
                  " --out-json " + out_json.string())
              .exit_code == 2);
}

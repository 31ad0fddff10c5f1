// jedi — entropy-based localization and removal of adversarial patches.
//
// Subcommands: stats, heatmap, detect, defend, train-ae, eval,
// adaptive-patch. Every run is deterministic given its inputs and --seed.
// Exit codes: 0 ok, 2 usage, 3 data error, 4 oracle error.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "jedi/adaptive.hpp"
#include "jedi/defense.hpp"
#include "jedi/entropy.hpp"
#include "jedi/image_io.hpp"
#include "jedi/mask_ae.hpp"
#include "jedi/metrics.hpp"
#include "jedi/oracle.hpp"
#include "jedi/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw jedi::DataError("cannot open file: " + path);
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        throw jedi::FormatError("bad JSON in " + path + ": " + e.what());
    }
}

void write_json_file(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw jedi::DataError("cannot write file: " + path);
    out << j.dump(2) << "\n";
}

std::vector<std::string> list_images(const std::string& dir) {
    if (!fs::is_directory(dir)) throw jedi::DataError("not a directory: " + dir);
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".png" || ext == ".pgm" || ext == ".ppm")
            paths.push_back(entry.path().string());
    }
    std::sort(paths.begin(), paths.end());
    return paths;
}

// Settings shared by detect/defend/eval; file values override defaults,
// explicit flags override the file.
struct PipelineSettings {
    jedi::DefenseConfig defense;
    std::string oracle_kind = "builtin";
    std::string oracle_command;
    double trip = 6.5;
    std::uint64_t seed = 0;

    void apply_config_file(const json& j) {
        static const std::set<std::string> known{"window", "stride", "w_tolerance", "masker",
                                                 "min_cells", "mi", "inpaint", "oracle", "seed"};
        for (const auto& [key, value] : j.items())
            if (!known.count(key)) throw UsageError("unknown config key: " + key);

        auto dim = [](const json& v, const char* name) -> std::optional<int> {
            if (v.is_string() && v.get<std::string>() == "auto") return std::nullopt;
            if (v.is_number_integer()) return v.get<int>();
            throw UsageError(std::string(name) + " must be an integer or \"auto\"");
        };
        if (j.contains("window")) defense.window = dim(j["window"], "window");
        if (j.contains("stride")) defense.stride = dim(j["stride"], "stride");
        if (j.contains("w_tolerance")) defense.w_tolerance = j["w_tolerance"].get<double>();
        if (j.contains("masker")) defense.masker = j["masker"].get<std::string>();
        if (j.contains("min_cells")) defense.min_cells = j["min_cells"].get<int>();
        if (j.contains("mi")) {
            const json& m = j["mi"];
            static const std::set<std::string> mi_keys{"k_percent", "radius",
                                                       "mi_ratio_threshold", "bins"};
            for (const auto& [key, value] : m.items())
                if (!mi_keys.count(key)) throw UsageError("unknown mi config key: " + key);
            if (m.contains("k_percent")) defense.mi.k_percent = m["k_percent"].get<double>();
            if (m.contains("radius")) defense.mi.radius = m["radius"].get<int>();
            if (m.contains("mi_ratio_threshold"))
                defense.mi.mi_ratio_threshold = m["mi_ratio_threshold"].get<double>();
            if (m.contains("bins")) defense.mi.bins = m["bins"].get<int>();
        }
        if (j.contains("inpaint")) {
            const json& p = j["inpaint"];
            static const std::set<std::string> in_keys{"radius", "sigma", "epsilon"};
            for (const auto& [key, value] : p.items())
                if (!in_keys.count(key)) throw UsageError("unknown inpaint config key: " + key);
            if (p.contains("radius")) defense.inpaint_params.radius = p["radius"].get<int>();
            if (p.contains("sigma")) defense.inpaint_params.sigma = p["sigma"].get<double>();
            if (p.contains("epsilon"))
                defense.inpaint_params.epsilon = p["epsilon"].get<double>();
        }
        if (j.contains("oracle")) {
            const json& o = j["oracle"];
            static const std::set<std::string> o_keys{"kind", "trip", "command"};
            for (const auto& [key, value] : o.items())
                if (!o_keys.count(key)) throw UsageError("unknown oracle config key: " + key);
            if (o.contains("kind")) oracle_kind = o["kind"].get<std::string>();
            if (o.contains("trip")) trip = o["trip"].get<double>();
            if (o.contains("command")) oracle_command = o["command"].get<std::string>();
        }
        if (j.contains("seed")) seed = j["seed"].get<std::uint64_t>();
    }
};

// Per-subcommand flag bundle wired into CLI11; values move into
// PipelineSettings only when the user actually passed them.
struct PipelineFlags {
    std::string config_path;
    std::string window = "auto";
    std::string stride = "auto";
    double w_tolerance = 1.0;
    std::string masker = "ae";
    int min_cells = 4;
    double mi_k_percent = 10.0;
    int mi_radius = 2;
    double mi_ratio = 0.5;
    int mi_bins = 32;
    int inpaint_radius = 5;
    double inpaint_sigma = 1.5;
    std::uint64_t seed = 0;

    CLI::Option* config_opt = nullptr;
    CLI::Option* window_opt = nullptr;
    CLI::Option* stride_opt = nullptr;
    CLI::Option* w_tolerance_opt = nullptr;
    CLI::Option* masker_opt = nullptr;
    CLI::Option* min_cells_opt = nullptr;
    CLI::Option* mi_k_opt = nullptr;
    CLI::Option* mi_radius_opt = nullptr;
    CLI::Option* mi_ratio_opt = nullptr;
    CLI::Option* mi_bins_opt = nullptr;
    CLI::Option* inpaint_radius_opt = nullptr;
    CLI::Option* inpaint_sigma_opt = nullptr;
    CLI::Option* seed_opt = nullptr;

    void add_to(CLI::App* cmd, bool with_inpaint) {
        config_opt = cmd->add_option("--config", config_path, "JSON config file");
        window_opt = cmd->add_option("--window", window, "window side in pixels, or 'auto'");
        stride_opt = cmd->add_option("--stride", stride, "window stride in pixels, or 'auto'");
        w_tolerance_opt =
            cmd->add_option("--w-tolerance", w_tolerance, "risk-strategy threshold weight");
        masker_opt = cmd->add_option("--masker", masker, "mask builder: ae or mi");
        min_cells_opt =
            cmd->add_option("--min-cells", min_cells, "scatter filter minimum cluster size");
        mi_k_opt = cmd->add_option("--mi-k-percent", mi_k_percent, "MI peak threshold");
        mi_radius_opt = cmd->add_option("--mi-radius", mi_radius, "MI expansion radius (cells)");
        mi_ratio_opt = cmd->add_option("--mi-ratio", mi_ratio, "MI acceptance ratio");
        mi_bins_opt = cmd->add_option("--mi-bins", mi_bins, "MI histogram bins");
        if (with_inpaint) {
            inpaint_radius_opt =
                cmd->add_option("--inpaint-radius", inpaint_radius, "inpainting radius");
            inpaint_sigma_opt = cmd->add_option("--inpaint-sigma", inpaint_sigma,
                                                "structure tensor Gaussian sigma");
        }
        seed_opt = cmd->add_option("--seed", seed, "master random seed");
    }

    static std::optional<int> parse_dim(const std::string& text, const char* name) {
        if (text == "auto") return std::nullopt;
        try {
            std::size_t pos = 0;
            const int v = std::stoi(text, &pos);
            if (pos != text.size()) throw std::invalid_argument(text);
            return v;
        } catch (const std::exception&) {
            throw UsageError(std::string("--") + name + " must be an integer or 'auto'");
        }
    }

    PipelineSettings resolve() const {
        PipelineSettings s;
        if (config_opt && config_opt->count())
            s.apply_config_file(load_json_file(config_path));
        if (window_opt->count()) s.defense.window = parse_dim(window, "window");
        if (stride_opt->count()) s.defense.stride = parse_dim(stride, "stride");
        if (w_tolerance_opt->count()) s.defense.w_tolerance = w_tolerance;
        if (masker_opt->count()) s.defense.masker = masker;
        if (min_cells_opt->count()) s.defense.min_cells = min_cells;
        if (mi_k_opt->count()) s.defense.mi.k_percent = mi_k_percent;
        if (mi_radius_opt->count()) s.defense.mi.radius = mi_radius;
        if (mi_ratio_opt->count()) s.defense.mi.mi_ratio_threshold = mi_ratio;
        if (mi_bins_opt->count()) s.defense.mi.bins = mi_bins;
        if (inpaint_radius_opt && inpaint_radius_opt->count())
            s.defense.inpaint_params.radius = inpaint_radius;
        if (inpaint_sigma_opt && inpaint_sigma_opt->count())
            s.defense.inpaint_params.sigma = inpaint_sigma;
        if (seed_opt->count()) s.seed = seed;
        return s;
    }
};

jedi::WindowGeometry resolve_geometry(const std::optional<int>& window,
                                      const std::optional<int>& stride, int width, int height) {
    const int w = window.value_or(jedi::auto_window_size(width, height));
    const int s = stride.value_or(jedi::auto_stride(w));
    return jedi::WindowGeometry(w, s);
}

// ---- stats ----

struct StatsArgs {
    std::string images_dir;
    std::string out_path;
    PipelineFlags flags;
};

int run_stats(const StatsArgs& args) {
    const PipelineSettings settings = args.flags.resolve();
    const std::vector<std::string> paths = list_images(args.images_dir);
    if (paths.empty()) throw jedi::DataError("no images in directory: " + args.images_dir);

    std::vector<jedi::Image> images;
    images.reserve(paths.size());
    for (const auto& p : paths) images.push_back(jedi::load_image(p));

    const jedi::WindowGeometry geometry = resolve_geometry(
        settings.defense.window, settings.defense.stride, images[0].width, images[0].height);
    const jedi::CleanEntropyStats stats = jedi::fit_clean_stats(images, geometry);
    write_json_file(jedi::stats_to_json(stats), args.out_path);

    std::cout << "images: " << images.size() << "\n"
              << "window: " << geometry.window << "  stride: " << geometry.stride << "\n"
              << "mu: " << stats.mu << "  sigma: " << stats.sigma
              << "  n_windows: " << stats.n_windows << "\n";
    return 0;
}

// ---- heatmap ----

struct HeatmapArgs {
    std::string in_path;
    std::string out_json;
    std::string out_png;
    PipelineFlags flags;
};

int run_heatmap(const HeatmapArgs& args) {
    if (args.out_json.empty() && args.out_png.empty())
        throw UsageError("heatmap: provide --out-json and/or --out-png");
    const PipelineSettings settings = args.flags.resolve();
    const jedi::Image image = jedi::load_image(args.in_path);
    const jedi::WindowGeometry geometry = resolve_geometry(
        settings.defense.window, settings.defense.stride, image.width, image.height);
    const jedi::EntropyHeatmap map = jedi::compute_heatmap(image, geometry);

    if (!args.out_json.empty()) write_json_file(jedi::heatmap_to_json(map), args.out_json);
    if (!args.out_png.empty()) jedi::save_image(jedi::heatmap_to_image(map), args.out_png);
    std::cout << "grid: " << map.rows << "x" << map.cols << "  window: " << geometry.window
              << "  stride: " << geometry.stride << "\n";
    return 0;
}

// ---- detect / defend ----

struct DefendArgs {
    std::string in_path;
    std::string stats_path;
    std::string model_path;
    std::string out_path;      // defend only
    std::string mask_out;
    std::string summary_path;
    PipelineFlags flags;
};

int run_defend(const DefendArgs& args, bool do_inpaint) {
    const PipelineSettings settings = args.flags.resolve();
    const jedi::Image image = jedi::load_image(args.in_path);
    const jedi::CleanEntropyStats stats = jedi::stats_from_json(load_json_file(args.stats_path));

    std::optional<jedi::SparseAEModel> model;
    if (!args.model_path.empty())
        model = jedi::model_from_json(load_json_file(args.model_path));
    if (settings.defense.masker == "ae" && !model)
        throw UsageError("the ae masker needs --model");

    const jedi::DefenseResult result = jedi::run_defense(
        image, stats, model ? &*model : nullptr, settings.defense, do_inpaint);

    if (do_inpaint) jedi::save_image(result.repaired, args.out_path);
    if (!args.mask_out.empty()) jedi::save_mask(result.mask, args.mask_out);
    if (!args.summary_path.empty())
        write_json_file(jedi::summary_to_json(result.summary), args.summary_path);

    std::cout << "thr: " << result.summary.thr << "  w_image: " << result.summary.w_image
              << "  kernels: " << result.summary.kernel_cells << "/"
              << result.summary.kernel_cells_raw << "  mask area: " << result.mask.popcount()
              << "\n";
    return 0;
}

// ---- train-ae ----

struct TrainArgs {
    int count = 2000;
    int epochs = 500;
    std::uint64_t seed = 0;
    std::string out_path;
    int grid = 64;
    int hidden = 100;
    double lr = 0.5;
    double rho = 0.15;
    double beta = 4.0;
};

int run_train(const TrainArgs& args) {
    const jedi::MaskTrainingSet data =
        jedi::generate_training_masks(args.count, args.grid, args.seed);
    const jedi::TrainResult result =
        jedi::train_sae(data, args.epochs, args.lr, args.seed, args.hidden, args.rho, args.beta);
    write_json_file(jedi::model_to_json(result.model), args.out_path);
    std::cout << "trained on " << args.count << " masks (grid " << args.grid << ")\n"
              << "loss: " << result.initial_loss << " -> " << result.final_loss << " ("
              << result.accepted_steps << " accepted, " << result.rejected_steps
              << " rejected steps)\n";
    return 0;
}

// ---- eval ----

struct EvalArgs {
    std::string dataset_dir;
    int synthetic = 0;
    int scene_size = 224;
    std::string dump_dataset;
    std::string patch_path;
    int patch_size = 50;
    std::string stats_path;
    std::string model_path;
    bool identity_defense = false;
    std::string oracle_kind;
    std::string oracle_cmd;
    double trip = 6.5;
    std::string out_path;
    PipelineFlags flags;
    CLI::Option* oracle_opt = nullptr;
    CLI::Option* trip_opt = nullptr;
};

std::vector<jedi::EvalSample> load_dataset(const std::string& dir) {
    const fs::path labels_path = fs::path(dir) / "labels.json";
    if (!fs::exists(labels_path))
        throw jedi::DataError("dataset is missing labels.json: " + labels_path.string());
    const json labels = load_json_file(labels_path.string());

    std::vector<jedi::EvalSample> dataset;
    for (const auto& path : list_images(dir)) {
        const std::string name = fs::path(path).filename().string();
        if (!labels.contains(name))
            throw jedi::DataError("no label for dataset image: " + name);
        dataset.push_back({name, jedi::load_image(path), labels.at(name).get<std::string>()});
    }
    if (dataset.empty()) throw jedi::DataError("dataset directory has no images: " + dir);
    return dataset;
}

int run_eval(const EvalArgs& args) {
    PipelineSettings settings = args.flags.resolve();
    if (args.oracle_opt->count()) settings.oracle_kind = args.oracle_kind;
    if (args.trip_opt->count()) settings.trip = args.trip;

    if (args.dataset_dir.empty() == (args.synthetic == 0))
        throw UsageError("eval: provide exactly one of --dataset or --synthetic N");

    std::vector<jedi::EvalSample> dataset;
    if (!args.dataset_dir.empty()) {
        dataset = load_dataset(args.dataset_dir);
    } else {
        for (int i = 0; i < args.synthetic; ++i) {
            const jedi::SyntheticScene scene = jedi::gen_scene(
                args.scene_size, args.scene_size, jedi::derive_seed(settings.seed, 100 + i));
            char name[32];
            std::snprintf(name, sizeof(name), "scene-%03d.png", i);
            dataset.push_back({name, scene.image, scene.label});
        }
        if (!args.dump_dataset.empty()) {
            fs::create_directories(args.dump_dataset);
            json labels = json::object();
            for (const auto& sample : dataset) {
                jedi::save_image(sample.image, (fs::path(args.dump_dataset) / sample.id).string());
                labels[sample.id] = sample.label;
            }
            write_json_file(labels, (fs::path(args.dump_dataset) / "labels.json").string());
        }
    }

    jedi::Patch patch;
    if (!args.patch_path.empty()) {
        patch.image = jedi::load_image(args.patch_path);
        patch.id = fs::path(args.patch_path).filename().string();
    } else {
        patch = jedi::gen_noise_patch(args.patch_size, jedi::derive_seed(settings.seed, 7));
    }

    std::unique_ptr<jedi::ModelOracle> oracle;
    if (settings.oracle_kind == "builtin") {
        oracle = std::make_unique<jedi::ToyShapeOracle>(settings.trip);
    } else if (settings.oracle_kind == "subprocess") {
        const std::string cmd =
            args.oracle_opt->count() || settings.oracle_command.empty() ? args.oracle_cmd
                                                                        : settings.oracle_command;
        if (cmd.empty()) throw UsageError("subprocess oracle needs --oracle-cmd");
        oracle = std::make_unique<jedi::SubprocessOracle>(cmd);
    } else {
        throw UsageError("unknown oracle kind: " + settings.oracle_kind);
    }

    jedi::DefenseFn defense;
    std::optional<jedi::SparseAEModel> model;
    std::optional<jedi::CleanEntropyStats> stats;
    if (args.identity_defense) {
        defense = jedi::identity_defense();
    } else {
        if (!args.stats_path.empty()) {
            stats = jedi::stats_from_json(load_json_file(args.stats_path));
        } else {
            // No stats supplied: fit them from the clean evaluation images,
            // which is exactly the "known clean dataset" the threshold wants.
            std::vector<jedi::Image> clean;
            for (const auto& sample : dataset) clean.push_back(sample.image);
            const jedi::WindowGeometry geometry =
                resolve_geometry(settings.defense.window, settings.defense.stride,
                                 clean[0].width, clean[0].height);
            stats = jedi::fit_clean_stats(clean, geometry);
        }
        if (settings.defense.masker == "ae") {
            if (args.model_path.empty())
                throw UsageError("eval with the ae masker needs --model (or --identity-defense)");
            model = jedi::model_from_json(load_json_file(args.model_path));
        }
        defense = [&settings, &model, &stats](const jedi::Image& attacked,
                                              const jedi::TrialContext&) {
            const jedi::DefenseResult r = jedi::run_defense(
                attacked, *stats, model ? &*model : nullptr, settings.defense, true);
            return jedi::DefenseOutcome{r.repaired, r.mask};
        };
    }

    const jedi::EvalReport report =
        jedi::evaluate(dataset, patch, *oracle, defense, settings.seed);
    write_json_file(jedi::report_to_json(report), args.out_path);
    std::cout << jedi::report_to_text(report);
    return 0;
}

// ---- adaptive-patch ----

struct AdaptiveArgs {
    double epsilon = 5.0;
    int check_freq = 10;
    int epochs = 3;
    int n_colors = 10;
    int patch_size = 50;
    int samples = 6;
    int scene_size = 96;
    double trip = 6.5;
    int mutation_block = 16;
    std::uint64_t seed = 0;
    std::string out_path;
    std::string trace_path;
};

int run_adaptive(const AdaptiveArgs& args) {
    jedi::AdaptiveConfig config;
    config.epsilon = args.epsilon;
    config.check_freq = args.check_freq;
    config.n_epochs = args.epochs;
    config.n_colors = args.n_colors;
    config.patch_size = args.patch_size;
    config.seed = args.seed;
    config.validate();

    std::vector<jedi::Image> scenes;
    for (int i = 0; i < args.samples; ++i)
        scenes.push_back(jedi::gen_smooth_scene(args.scene_size, args.scene_size,
                                                jedi::derive_seed(args.seed, 500 + i)));
    jedi::ToyPatchAttack oracle(std::move(scenes), args.trip, jedi::derive_seed(args.seed, 9),
                                args.mutation_block);

    const jedi::AdaptiveResult result = jedi::generate_low_entropy_patch(oracle, config);
    jedi::save_image(result.patch.image, args.out_path);
    if (!args.trace_path.empty()) write_json_file(jedi::trace_to_json(result.trace), args.trace_path);

    std::cout << "final entropy: " << jedi::patch_entropy(result.patch)
              << " bits (budget " << args.epsilon << ")\n"
              << "final success rate: " << oracle.success_rate(result.patch) << "\n"
              << "iterations traced: " << result.trace.size() << "\n";
    return 0;
}

int error_exit(int code, const std::string& kind, const std::string& message, bool json_errors) {
    if (json_errors) {
        std::cout << json{{"schema", "jedi-error/1"},
                          {"code", code},
                          {"error", kind},
                          {"message", message}}
                         .dump()
                  << "\n";
    }
    std::cerr << "jedi: " << message << "\n";
    return code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"jedi: entropy-based localization and removal of adversarial patches"};
    app.require_subcommand(1);
    bool json_errors = false;
    app.add_flag("--json-errors", json_errors, "emit a machine-readable error JSON on failure");

    StatsArgs stats_args;
    auto* stats_cmd =
        app.add_subcommand("stats", "fit clean entropy statistics over an image directory");
    stats_cmd->add_option("--images", stats_args.images_dir, "directory of clean images")
        ->required();
    stats_cmd->add_option("--out", stats_args.out_path, "output stats JSON")->required();
    stats_args.flags.add_to(stats_cmd, false);

    HeatmapArgs heatmap_args;
    auto* heatmap_cmd = app.add_subcommand("heatmap", "compute a local entropy heatmap");
    heatmap_cmd->add_option("--in", heatmap_args.in_path, "input image")->required();
    heatmap_cmd->add_option("--out-json", heatmap_args.out_json, "heatmap matrix JSON");
    heatmap_cmd->add_option("--out-png", heatmap_args.out_png, "normalized heatmap PNG");
    heatmap_args.flags.add_to(heatmap_cmd, false);

    DefendArgs detect_args;
    auto* detect_cmd = app.add_subcommand("detect", "locate a patch without repairing");
    detect_cmd->add_option("--in", detect_args.in_path, "input image")->required();
    detect_cmd->add_option("--stats", detect_args.stats_path, "clean stats JSON")->required();
    detect_cmd->add_option("--model", detect_args.model_path, "trained AE model JSON");
    detect_cmd->add_option("--mask-out", detect_args.mask_out, "predicted mask PNG");
    detect_cmd->add_option("--summary", detect_args.summary_path, "summary JSON");
    detect_args.flags.add_to(detect_cmd, false);

    DefendArgs defend_args;
    auto* defend_cmd = app.add_subcommand("defend", "locate, mask and inpaint a patch");
    defend_cmd->add_option("--in", defend_args.in_path, "input image")->required();
    defend_cmd->add_option("--stats", defend_args.stats_path, "clean stats JSON")->required();
    defend_cmd->add_option("--model", defend_args.model_path, "trained AE model JSON");
    defend_cmd->add_option("--out", defend_args.out_path, "repaired image")->required();
    defend_cmd->add_option("--mask-out", defend_args.mask_out, "predicted mask PNG");
    defend_cmd->add_option("--summary", defend_args.summary_path, "summary JSON");
    defend_args.flags.add_to(defend_cmd, true);

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train-ae", "train the sparse autoencoder masker");
    train_cmd->add_option("--count", train_args.count, "training mask count");
    train_cmd->add_option("--epochs", train_args.epochs, "training epochs");
    train_cmd->add_option("--seed", train_args.seed, "master random seed");
    train_cmd->add_option("--out", train_args.out_path, "output model JSON")->required();
    train_cmd->add_option("--grid", train_args.grid, "internal mask grid G");
    train_cmd->add_option("--hidden", train_args.hidden, "hidden neurons");
    train_cmd->add_option("--lr", train_args.lr, "learning rate");
    train_cmd->add_option("--rho", train_args.rho, "sparsity proportion");
    train_cmd->add_option("--beta", train_args.beta, "sparsity regularization");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "run the evaluation harness");
    eval_cmd->add_option("--dataset", eval_args.dataset_dir,
                         "dataset directory (images + labels.json)");
    eval_cmd->add_option("--synthetic", eval_args.synthetic,
                         "evaluate on N generated scenes instead of a directory");
    eval_cmd->add_option("--scene-size", eval_args.scene_size, "generated scene side");
    eval_cmd->add_option("--dump-dataset", eval_args.dump_dataset,
                         "write the generated scenes and labels.json here");
    eval_cmd->add_option("--patch", eval_args.patch_path,
                         "patch image (default: generated noise patch)");
    eval_cmd->add_option("--patch-size", eval_args.patch_size, "generated patch side");
    eval_cmd->add_option("--stats", eval_args.stats_path,
                         "clean stats JSON (default: fit from the clean dataset)");
    eval_cmd->add_option("--model", eval_args.model_path, "trained AE model JSON");
    eval_cmd->add_flag("--identity-defense", eval_args.identity_defense,
                       "evaluate with a pass-through defense");
    eval_args.oracle_opt =
        eval_cmd->add_option("--oracle", eval_args.oracle_kind, "oracle kind: builtin|subprocess");
    eval_cmd->add_option("--oracle-cmd", eval_args.oracle_cmd, "subprocess oracle command line");
    eval_args.trip_opt =
        eval_cmd->add_option("--trip", eval_args.trip, "builtin oracle entropy trip value");
    eval_cmd->add_option("--out", eval_args.out_path, "output report JSON")->required();
    eval_args.flags.add_to(eval_cmd, true);

    AdaptiveArgs adaptive_args;
    auto* adaptive_cmd =
        app.add_subcommand("adaptive-patch", "generate an entropy-budgeted adversarial patch");
    adaptive_cmd->add_option("--epsilon", adaptive_args.epsilon, "entropy budget in bits")
        ->required();
    adaptive_cmd->add_option("--check-freq", adaptive_args.check_freq,
                             "iterations between entropy checks");
    adaptive_cmd->add_option("--epochs", adaptive_args.epochs, "outer training epochs");
    adaptive_cmd->add_option("--n-colors", adaptive_args.n_colors,
                             "random colors per reduction round");
    adaptive_cmd->add_option("--patch-size", adaptive_args.patch_size, "patch side in pixels");
    adaptive_cmd->add_option("--samples", adaptive_args.samples, "attack training scenes");
    adaptive_cmd->add_option("--scene-size", adaptive_args.scene_size, "attack scene side");
    adaptive_cmd->add_option("--trip", adaptive_args.trip, "builtin oracle trip value");
    adaptive_cmd->add_option("--mutation-block", adaptive_args.mutation_block,
                             "hill-climbing mutation block side");
    adaptive_cmd->add_option("--seed", adaptive_args.seed, "master random seed");
    adaptive_cmd->add_option("--out", adaptive_args.out_path, "output patch PNG")->required();
    adaptive_cmd->add_option("--trace", adaptive_args.trace_path, "per-iteration trace JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (stats_cmd->parsed()) return run_stats(stats_args);
        if (heatmap_cmd->parsed()) return run_heatmap(heatmap_args);
        if (detect_cmd->parsed()) return run_defend(detect_args, false);
        if (defend_cmd->parsed()) return run_defend(defend_args, true);
        if (train_cmd->parsed()) return run_train(train_args);
        if (eval_cmd->parsed()) return run_eval(eval_args);
        if (adaptive_cmd->parsed()) return run_adaptive(adaptive_args);
        throw UsageError("no subcommand given");
    } catch (const UsageError& e) {
        return error_exit(2, "usage", e.what(), json_errors);
    } catch (const jedi::OracleError& e) {
        return error_exit(4, "oracle", e.what(), json_errors);
    } catch (const jedi::Error& e) {
        return error_exit(3, "data", e.what(), json_errors);
    } catch (const std::exception& e) {
        return error_exit(3, "internal", e.what(), json_errors);
    }
}

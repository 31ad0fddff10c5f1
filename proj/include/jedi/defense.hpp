#pragma once

#include <chrono>
#include <optional>
#include <string>

#include <json.hpp>

#include "jedi/entropy.hpp"
#include "jedi/error.hpp"
#include "jedi/image.hpp"
#include "jedi/inpaint.hpp"
#include "jedi/kernels.hpp"
#include "jedi/mask_ae.hpp"
#include "jedi/mask_mi.hpp"

namespace jedi {

struct DefenseConfig {
    std::optional<int> window; // absent = 1% of the largest dimension, floor 8
    std::optional<int> stride; // absent = half the window
    double w_tolerance = 1.0;
    int min_cells = 4;         // scatter-filter threshold
    std::string masker = "ae"; // "ae" | "mi"
    MIConfig mi;
    InpaintConfig inpaint_params;
};

struct DefenseSummary {
    WindowGeometry geometry;
    double thr = 0.0;
    double w_image = 0.0;
    double w_tolerance = 1.0;
    std::string masker;
    std::size_t kernel_cells_raw = 0; // above threshold
    std::size_t kernel_cells = 0;     // after scatter filtering
    std::size_t mask_area = 0;
    double heatmap_ms = 0.0;
    double masker_ms = 0.0;
    double inpaint_ms = 0.0;
};

struct DefenseResult {
    BinaryMask mask;
    Image repaired;
    DefenseSummary summary;
};

namespace detail {

template <typename Fn>
auto defense_stage(const char* name, Fn&& fn) {
    auto tag = [&](const char* what) { return std::string(name) + ": " + what; };
    try {
        return fn();
    } catch (const FormatError& e) {
        throw FormatError(tag(e.what()));
    } catch (const GeometryError& e) {
        throw GeometryError(tag(e.what()));
    } catch (const DataError& e) {
        throw DataError(tag(e.what()));
    } catch (const TrainingError& e) {
        throw TrainingError(tag(e.what()));
    } catch (const Error& e) {
        throw Error(tag(e.what()));
    }
}

inline double elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
}

} // namespace detail

/// The full localization-plus-repair pipeline: entropy heatmap, dynamic
/// threshold, scatter filtering, mask reconstruction (autoencoder or
/// mutual-information expansion), then inpainting. When thresholding plus
/// scatter filtering leaves no kernels, the image is declared clean and the
/// maskers never run -- the MI path in particular extracts peaks relative
/// to the heatmap maximum and would hallucinate candidates on clean images.
inline DefenseResult run_defense(const Image& image, const CleanEntropyStats& stats,
                                 const SparseAEModel* model, const DefenseConfig& config,
                                 bool do_inpaint = true) {
    using clock = std::chrono::steady_clock;
    DefenseResult result;
    DefenseSummary& summary = result.summary;
    summary.masker = config.masker;
    summary.w_tolerance = config.w_tolerance;

    if (config.masker != "ae" && config.masker != "mi")
        throw DataError("unknown masker '" + config.masker + "' (expected ae or mi)");

    summary.geometry = detail::defense_stage("geometry", [&] {
        const int window = config.window.value_or(auto_window_size(image.width, image.height));
        const int stride = config.stride.value_or(auto_stride(window));
        return WindowGeometry(window, stride);
    });

    auto start = clock::now();
    const EntropyHeatmap heatmap = detail::defense_stage(
        "heatmap", [&] { return compute_heatmap(image, summary.geometry); });
    summary.heatmap_ms = detail::elapsed_ms(start);

    const ThresholdParams threshold = detail::defense_stage("threshold", [&] {
        const double w_image = compute_w_image(heatmap, stats);
        return dynamic_threshold(stats, config.w_tolerance, w_image);
    });
    summary.thr = threshold.thr;
    summary.w_image = threshold.w_image;

    const KernelMap kernels = detail::defense_stage("scatter-filter", [&] {
        const KernelMap raw = threshold_heatmap(heatmap, threshold.thr);
        summary.kernel_cells_raw = raw.count_true();
        return filter_scattered(raw, config.min_cells);
    });
    summary.kernel_cells = kernels.count_true();

    if (summary.kernel_cells == 0) {
        result.mask = BinaryMask(image.width, image.height);
        result.repaired = image;
        return result;
    }

    start = clock::now();
    result.mask = detail::defense_stage("masker", [&] {
        if (config.masker == "mi") return expand_kernels(image, heatmap, config.mi);
        if (!model) throw DataError("the AE masker requires a trained model");
        return refine_mask(*model, kernels);
    });
    summary.masker_ms = detail::elapsed_ms(start);
    summary.mask_area = result.mask.popcount();

    if (do_inpaint && summary.mask_area > 0) {
        start = clock::now();
        result.repaired = detail::defense_stage(
            "inpaint", [&] { return inpaint(image, result.mask, config.inpaint_params); });
        summary.inpaint_ms = detail::elapsed_ms(start);
    } else {
        result.repaired = image;
    }
    return result;
}

inline nlohmann::json summary_to_json(const DefenseSummary& summary) {
    return nlohmann::json{{"schema", "jedi-defend/1"},
                          {"window", summary.geometry.window},
                          {"stride", summary.geometry.stride},
                          {"thr", summary.thr},
                          {"w_image", summary.w_image},
                          {"w_tolerance", summary.w_tolerance},
                          {"masker", summary.masker},
                          {"kernel_cells_raw", summary.kernel_cells_raw},
                          {"kernel_cells", summary.kernel_cells},
                          {"mask_area", summary.mask_area},
                          {"timings_ms",
                           {{"heatmap", summary.heatmap_ms},
                            {"masker", summary.masker_ms},
                            {"inpaint", summary.inpaint_ms}}}};
}

} // namespace jedi

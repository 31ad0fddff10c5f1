#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "jedi/error.hpp"
#include "jedi/image.hpp"
#include "jedi/image_io.hpp"

namespace jedi {

/// Sliding-window geometry for local entropy analysis.
struct WindowGeometry {
    int window = 8;
    int stride = 4;

    WindowGeometry() = default;
    WindowGeometry(int w, int s) : window(w), stride(s) {
        if (w < 8) throw GeometryError("window must be at least 8 pixels");
        if (s < 1 || s > w) throw GeometryError("stride must be in [1, window]");
    }
};

/// Window side = 1% of the largest image dimension, floored at 8 pixels.
inline int auto_window_size(int width, int height) {
    if (width < 8 || height < 8) throw GeometryError("image too small for entropy windows");
    const long scaled = std::lround(0.01 * std::max(width, height));
    return static_cast<int>(std::max(8l, scaled));
}

/// Stride = half the window (integer division), at least 1.
inline int auto_stride(int window) {
    if (window < 8) throw GeometryError("window must be at least 8 pixels");
    return std::max(1, window / 2);
}

inline WindowGeometry auto_geometry(int width, int height) {
    const int w = auto_window_size(width, height);
    return WindowGeometry(w, auto_stride(w));
}

/// Plug-in Shannon entropy (bits) of a 256-bin intensity histogram.
inline double histogram_entropy(std::span<const std::uint8_t> samples) {
    std::array<std::uint32_t, 256> counts{};
    for (std::uint8_t v : samples) ++counts[v];
    const double n = static_cast<double>(samples.size());
    double acc = 0.0;
    for (std::uint32_t c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / n;
        acc += p * std::log2(p);
    }
    return -acc + 0.0;
}

/// Local Shannon entropy of a pixel block. Color blocks are converted to
/// BT.601 grayscale first.
inline double local_entropy(const Image& window) {
    if (window.pixel_count() == 0) throw DataError("empty window");
    const Image gray = to_grayscale(window);
    return histogram_entropy(gray.data);
}

/// Grid of per-window entropies. grid dims per axis:
/// floor((dim - window) / stride) + 1.
struct EntropyHeatmap {
    int rows = 0;
    int cols = 0;
    WindowGeometry geometry;
    int source_width = 0;
    int source_height = 0;
    std::vector<double> values;

    double at(int row, int col) const { return values[static_cast<std::size_t>(row) * cols + col]; }
    double& at(int row, int col) { return values[static_cast<std::size_t>(row) * cols + col]; }
    std::size_t cell_count() const { return values.size(); }
};

inline EntropyHeatmap compute_heatmap(const Image& image, const WindowGeometry& geometry) {
    if (geometry.window > image.width || geometry.window > image.height)
        throw GeometryError("window larger than image");

    EntropyHeatmap map;
    map.geometry = geometry;
    map.source_width = image.width;
    map.source_height = image.height;
    map.cols = (image.width - geometry.window) / geometry.stride + 1;
    map.rows = (image.height - geometry.window) / geometry.stride + 1;
    map.values.assign(static_cast<std::size_t>(map.rows) * map.cols, 0.0);

    const Image gray = to_grayscale(image);
    const int w = geometry.window;
    std::array<std::uint32_t, 256> counts;
    const double n = static_cast<double>(w) * w;
    for (int r = 0; r < map.rows; ++r) {
        const int y0 = r * geometry.stride;
        for (int c = 0; c < map.cols; ++c) {
            const int x0 = c * geometry.stride;
            counts.fill(0);
            for (int y = y0; y < y0 + w; ++y) {
                const std::uint8_t* row = &gray.data[gray.index(x0, y)];
                for (int x = 0; x < w; ++x) ++counts[row[x]];
            }
            double acc = 0.0;
            for (std::uint32_t cnt : counts) {
                if (cnt == 0) continue;
                const double p = static_cast<double>(cnt) / n;
                acc += p * std::log2(p);
            }
            map.at(r, c) = -acc + 0.0;
        }
    }
    return map;
}

/// Mean and population standard deviation of a pooled cell sample.
/// Entropy values are bounded in [0, 8], so plain long-double moment
/// accumulation is well conditioned here. Exposed so small hand cases are
/// testable without the fit's minimum-window floor.
struct RunningStats {
    long long count = 0;
    long double sum = 0.0L;
    long double sum_sq = 0.0L;

    void add(double x) {
        ++count;
        sum += x;
        sum_sq += static_cast<long double>(x) * x;
    }

    double mean_value() const {
        return count > 0 ? static_cast<double>(sum / static_cast<long double>(count)) : 0.0;
    }

    double sigma() const {
        if (count == 0) return 0.0;
        const long double n = static_cast<long double>(count);
        const long double mean = sum / n;
        const long double var = sum_sq / n - mean * mean;
        return static_cast<double>(std::sqrt(var > 0.0L ? var : 0.0L));
    }
};

/// Clean-distribution entropy statistics: the mu/sigma inputs of the
/// dynamic threshold.
struct CleanEntropyStats {
    double mu = 0.0;
    double sigma = 0.0;
    long long n_windows = 0;
    WindowGeometry geometry;
};

constexpr long long kMinCleanWindows = 100;

/// Pools every heatmap cell of every image and fits mu/sigma (population
/// sigma). Requires at least 100 pooled windows for a stable estimate.
inline CleanEntropyStats fit_clean_stats(const std::vector<Image>& images,
                                         const WindowGeometry& geometry) {
    RunningStats acc;
    for (const Image& img : images) {
        const EntropyHeatmap map = compute_heatmap(img, geometry);
        for (double v : map.values) acc.add(v);
    }
    if (acc.count < kMinCleanWindows)
        throw DataError("too few windows for clean statistics: got " +
                        std::to_string(acc.count) + ", need " + std::to_string(kMinCleanWindows));
    CleanEntropyStats stats;
    stats.mu = acc.mean_value();
    stats.sigma = acc.sigma();
    stats.n_windows = acc.count;
    stats.geometry = geometry;
    return stats;
}

/// Per-image threshold adjustment: the standardized shift of the heatmap's
/// median cell from the clean mean, clamped to [-1, +1]. The median is
/// robust to the patch's own high-entropy cells.
inline double compute_w_image(const EntropyHeatmap& map, const CleanEntropyStats& stats) {
    if (stats.sigma <= 0.0) return 0.0;
    if (map.cell_count() == 0) throw DataError("empty heatmap");

    std::vector<double> cells(map.values);
    std::sort(cells.begin(), cells.end());
    const std::size_t n = cells.size();
    const double median =
        (n % 2 == 1) ? cells[n / 2] : (cells[n / 2 - 1] + cells[n / 2]) / 2.0;

    return std::clamp((median - stats.mu) / stats.sigma, -1.0, 1.0);
}

/// Dynamic-threshold parameters: thr = mu + (w_tolerance + w_image) * sigma.
struct ThresholdParams {
    double w_tolerance = 1.0;
    double w_image = 0.0;
    double thr = 0.0;
};

inline ThresholdParams dynamic_threshold(const CleanEntropyStats& stats, double w_tolerance,
                                         double w_image) {
    ThresholdParams params;
    params.w_tolerance = w_tolerance;
    params.w_image = std::clamp(w_image, -1.0, 1.0);
    params.thr = stats.mu + (params.w_tolerance + params.w_image) * stats.sigma;
    return params;
}

// ---- serialization ----

inline nlohmann::json stats_to_json(const CleanEntropyStats& stats) {
    return nlohmann::json{{"mu", stats.mu},
                          {"sigma", stats.sigma},
                          {"n_windows", stats.n_windows},
                          {"window", stats.geometry.window},
                          {"stride", stats.geometry.stride}};
}

inline CleanEntropyStats stats_from_json(const nlohmann::json& j) {
    try {
        CleanEntropyStats stats;
        stats.mu = j.at("mu").get<double>();
        stats.sigma = j.at("sigma").get<double>();
        stats.n_windows = j.at("n_windows").get<long long>();
        stats.geometry = WindowGeometry(j.at("window").get<int>(), j.at("stride").get<int>());
        if (stats.sigma < 0) throw FormatError("sigma must be nonnegative");
        return stats;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad stats JSON: ") + e.what());
    }
}

inline nlohmann::json heatmap_to_json(const EntropyHeatmap& map) {
    nlohmann::json grid = nlohmann::json::array();
    for (int r = 0; r < map.rows; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < map.cols; ++c) row.push_back(map.at(r, c));
        grid.push_back(std::move(row));
    }
    return nlohmann::json{{"window", map.geometry.window},
                          {"stride", map.geometry.stride},
                          {"source_width", map.source_width},
                          {"source_height", map.source_height},
                          {"grid", std::move(grid)}};
}

/// 8-bit visualization: cell value v in [0, 8] bits maps to round(v / 8 * 255),
/// one pixel per grid cell.
inline Image heatmap_to_image(const EntropyHeatmap& map) {
    Image img(map.cols, map.rows, 1);
    for (int r = 0; r < map.rows; ++r)
        for (int c = 0; c < map.cols; ++c) {
            const double v = std::clamp(map.at(r, c), 0.0, 8.0);
            img.at(c, r) = static_cast<std::uint8_t>(std::lround(v / 8.0 * 255.0));
        }
    return img;
}

} // namespace jedi

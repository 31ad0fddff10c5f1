#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "jedi/entropy.hpp"
#include "jedi/error.hpp"
#include "jedi/image.hpp"

namespace jedi {

/// Boolean grid aligned cell-for-cell with an EntropyHeatmap: true marks a
/// high-entropy kernel (patch candidate).
struct KernelMap {
    int rows = 0;
    int cols = 0;
    WindowGeometry geometry;
    int source_width = 0;
    int source_height = 0;
    std::vector<std::uint8_t> cells;

    bool test(int row, int col) const {
        return cells[static_cast<std::size_t>(row) * cols + col] != 0;
    }
    void set(int row, int col, bool v) {
        cells[static_cast<std::size_t>(row) * cols + col] = v ? 1 : 0;
    }
    std::size_t count_true() const {
        std::size_t n = 0;
        for (auto c : cells) n += c ? 1 : 0;
        return n;
    }

    static KernelMap like(const EntropyHeatmap& map) {
        KernelMap k;
        k.rows = map.rows;
        k.cols = map.cols;
        k.geometry = map.geometry;
        k.source_width = map.source_width;
        k.source_height = map.source_height;
        k.cells.assign(map.cell_count(), 0);
        return k;
    }
};

/// Cell is a kernel iff its entropy strictly exceeds thr.
inline KernelMap threshold_heatmap(const EntropyHeatmap& map, double thr) {
    KernelMap k = KernelMap::like(map);
    for (std::size_t i = 0; i < map.values.size(); ++i) k.cells[i] = map.values[i] > thr ? 1 : 0;
    return k;
}

namespace detail {

/// Labels 8-connected components of a 0/1 grid; returns labels (0 = off)
/// and fills sizes[label]. Iterative BFS, deterministic.
inline std::vector<int> label_components(const std::vector<std::uint8_t>& grid, int rows,
                                         int cols, std::vector<std::size_t>& sizes) {
    std::vector<int> labels(grid.size(), 0);
    sizes.assign(1, 0); // index 0 unused
    std::vector<std::size_t> stack;
    int next_label = 0;
    for (std::size_t start = 0; start < grid.size(); ++start) {
        if (!grid[start] || labels[start]) continue;
        ++next_label;
        sizes.push_back(0);
        stack.push_back(start);
        labels[start] = next_label;
        while (!stack.empty()) {
            const std::size_t idx = stack.back();
            stack.pop_back();
            ++sizes[next_label];
            const int r = static_cast<int>(idx) / cols;
            const int c = static_cast<int>(idx) % cols;
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    if (dr == 0 && dc == 0) continue;
                    const int rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) continue;
                    const std::size_t nidx = static_cast<std::size_t>(rr) * cols + cc;
                    if (grid[nidx] && !labels[nidx]) {
                        labels[nidx] = next_label;
                        stack.push_back(nidx);
                    }
                }
        }
    }
    return labels;
}

} // namespace detail

/// Clears 8-connected components smaller than min_cells. Natural edges tend
/// to produce scattered lone kernels; real patches cover compact blocks.
inline KernelMap filter_scattered(const KernelMap& kernels, int min_cells) {
    if (min_cells < 1) throw DataError("min_cells must be >= 1");
    std::vector<std::size_t> sizes;
    const std::vector<int> labels =
        detail::label_components(kernels.cells, kernels.rows, kernels.cols, sizes);
    KernelMap out = kernels;
    for (std::size_t i = 0; i < out.cells.size(); ++i)
        if (labels[i] && sizes[static_cast<std::size_t>(labels[i])] < static_cast<std::size_t>(min_cells))
            out.cells[i] = 0;
    return out;
}

/// Union of the window footprints of all true cells, painted into an
/// image-resolution mask.
inline BinaryMask kernels_to_mask(const KernelMap& kernels) {
    BinaryMask mask(kernels.source_width, kernels.source_height);
    const int w = kernels.geometry.window;
    const int s = kernels.geometry.stride;
    for (int r = 0; r < kernels.rows; ++r)
        for (int c = 0; c < kernels.cols; ++c) {
            if (!kernels.test(r, c)) continue;
            const int x0 = c * s, y0 = r * s;
            for (int y = y0; y < y0 + w; ++y)
                for (int x = x0; x < x0 + w; ++x) mask.set(x, y, true);
        }
    return mask;
}

/// Keeps only the peaks of the heatmap: cells whose value reaches
/// (1 - k_percent/100) of the maximum. Everything else is discarded.
inline KernelMap peak_extract(const EntropyHeatmap& map, double k_percent) {
    if (!(k_percent > 0.0 && k_percent < 100.0))
        throw DataError("k_percent must be in (0, 100)");
    if (map.cell_count() == 0) throw DataError("empty heatmap");

    const double max_v = *std::max_element(map.values.begin(), map.values.end());
    const double cutoff = (1.0 - k_percent / 100.0) * max_v;
    KernelMap k = KernelMap::like(map);
    for (std::size_t i = 0; i < map.values.size(); ++i)
        k.cells[i] = map.values[i] >= cutoff ? 1 : 0;
    return k;
}

/// Debug visualization: each grid cell drawn as a stride x stride block.
inline Image kernels_to_debug_image(const KernelMap& kernels) {
    const int s = kernels.geometry.stride;
    Image img(std::max(1, kernels.cols * s), std::max(1, kernels.rows * s), 1);
    for (int r = 0; r < kernels.rows; ++r)
        for (int c = 0; c < kernels.cols; ++c) {
            if (!kernels.test(r, c)) continue;
            for (int y = r * s; y < (r + 1) * s; ++y)
                for (int x = c * s; x < (c + 1) * s; ++x) img.at(x, y) = 255;
        }
    return img;
}

} // namespace jedi

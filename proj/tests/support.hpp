#pragma once

// Independent oracles used by the unit and acceptance suites. Everything in
// this header is deliberately written from scratch, structured differently
// from the library implementation it checks.

#include <cmath>
#include <cstdint>
#include <map>
#include <queue>
#include <vector>

#include "jedi/image.hpp"
#include "jedi/rng.hpp"

namespace oracle {

// Plug-in entropy of one window, via an ordered value->count map and long
// double accumulation.
inline double window_entropy(const jedi::Image& gray, int x0, int y0, int w, int h) {
    std::map<int, long> counts;
    for (int y = y0; y < y0 + h; ++y)
        for (int x = x0; x < x0 + w; ++x) ++counts[gray.at(x, y)];
    const long double n = static_cast<long double>(w) * h;
    long double acc = 0.0L;
    for (const auto& [value, count] : counts) {
        const long double p = count / n;
        acc -= p * std::log2(p);
    }
    return static_cast<double>(acc);
}

// Grid of per-window entropies computed window by window from first
// principles.
inline std::vector<std::vector<double>> heatmap(const jedi::Image& image, int window,
                                                int stride) {
    const jedi::Image gray = jedi::to_grayscale(image);
    const int rows = (gray.height - window) / stride + 1;
    const int cols = (gray.width - window) / stride + 1;
    std::vector<std::vector<double>> grid(rows, std::vector<double>(cols, 0.0));
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            grid[r][c] = window_entropy(gray, c * stride, r * stride, window, window);
    return grid;
}

// Two-pass mean and population standard deviation.
inline std::pair<double, double> mean_sigma(const std::vector<double>& xs) {
    long double sum = 0.0L;
    for (double x : xs) sum += x;
    const long double mean = sum / static_cast<long double>(xs.size());
    long double sq = 0.0L;
    for (double x : xs) sq += (x - mean) * (x - mean);
    return {static_cast<double>(mean),
            static_cast<double>(std::sqrt(sq / static_cast<long double>(xs.size())))};
}

// 8-connected component labeling by breadth-first flood fill.
inline std::vector<int> flood_fill_labels(const std::vector<std::uint8_t>& grid, int rows,
                                          int cols) {
    std::vector<int> labels(grid.size(), 0);
    int next = 0;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const std::size_t idx = static_cast<std::size_t>(r) * cols + c;
            if (!grid[idx] || labels[idx]) continue;
            ++next;
            std::queue<std::pair<int, int>> q;
            q.push({r, c});
            labels[idx] = next;
            while (!q.empty()) {
                auto [cr, cc] = q.front();
                q.pop();
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        const int nr = cr + dr, nc = cc + dc;
                        if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) continue;
                        const std::size_t nidx = static_cast<std::size_t>(nr) * cols + nc;
                        if (grid[nidx] && !labels[nidx]) {
                            labels[nidx] = next;
                            q.push({nr, nc});
                        }
                    }
            }
        }
    return labels;
}

// Scatter filtering recomputed from the flood-fill labels.
inline std::vector<std::uint8_t> filter_small_components(const std::vector<std::uint8_t>& grid,
                                                         int rows, int cols, int min_cells) {
    const std::vector<int> labels = flood_fill_labels(grid, rows, cols);
    std::map<int, long> sizes;
    for (int l : labels)
        if (l) ++sizes[l];
    std::vector<std::uint8_t> out(grid.size(), 0);
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (labels[i] && sizes[labels[i]] >= min_cells) out[i] = 1;
    return out;
}

// Mutual information from an explicitly materialized joint histogram,
// accumulated in long double over (a, b) bin pairs.
inline double mutual_information(const jedi::Image& a, const jedi::Image& b, int bins) {
    const jedi::Image ga = jedi::to_grayscale(a);
    const jedi::Image gb = jedi::to_grayscale(b);
    const int shift = 8 - static_cast<int>(std::lround(std::log2(bins)));
    std::vector<std::vector<long>> joint(bins, std::vector<long>(bins, 0));
    std::vector<long> ma(bins, 0), mb(bins, 0);
    const std::size_t n = ga.data.size();
    for (std::size_t i = 0; i < n; ++i) {
        const int qa = ga.data[i] >> shift;
        const int qb = gb.data[i] >> shift;
        ++joint[qa][qb];
        ++ma[qa];
        ++mb[qb];
    }
    long double mi = 0.0L;
    for (int i = 0; i < bins; ++i)
        for (int j = 0; j < bins; ++j) {
            if (!joint[i][j]) continue;
            const long double pij = static_cast<long double>(joint[i][j]) / n;
            const long double pi = static_cast<long double>(ma[i]) / n;
            const long double pj = static_cast<long double>(mb[j]) / n;
            mi += pij * std::log2(pij / (pi * pj));
        }
    return static_cast<double>(mi);
}

// Seeded image of i.i.d. uniform bytes (kept distinct from the library's
// noise-patch generator).
inline jedi::Image random_image(int w, int h, std::uint64_t seed, int channels = 1) {
    jedi::Image img(w, h, channels);
    jedi::Rng rng(jedi::derive_seed(seed, 0x7e57));
    for (auto& v : img.data) v = rng.byte();
    return img;
}

} // namespace oracle

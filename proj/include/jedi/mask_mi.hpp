#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "jedi/entropy.hpp"
#include "jedi/error.hpp"
#include "jedi/image.hpp"
#include "jedi/kernels.hpp"

namespace jedi {

/// Parameters for the mutual-information mask builder, the alternate
/// localizer for deployments where the autoencoder is impractical.
struct MIConfig {
    double k_percent = 10.0;        // peak-extraction threshold
    int radius = 2;                 // Chebyshev neighborhood, in grid cells
    double mi_ratio_threshold = 0.5;
    int bins = 32;                  // histogram bins per axis

    void validate() const {
        if (!(k_percent > 0.0 && k_percent < 100.0))
            throw DataError("k_percent must be in (0, 100)");
        if (radius < 1) throw DataError("radius must be >= 1");
        if (!(mi_ratio_threshold > 0.0 && mi_ratio_threshold <= 1.0))
            throw DataError("mi_ratio_threshold must be in (0, 1]");
        if (bins < 2 || bins > 256 || (bins & (bins - 1)) != 0)
            throw DataError("bins must be a power of two in [2, 256]");
    }
};

namespace detail {

inline int quantize_shift(int bins) {
    int shift = 8;
    while ((1 << (8 - shift)) < bins) --shift;
    return shift;
}

} // namespace detail

/// Mutual information (bits) of the joint histogram of co-located pixel
/// pairs, intensities quantized to `bins` levels. Color inputs are reduced
/// to grayscale first.
inline double mutual_info(const Image& a, const Image& b, int bins = 32) {
    if (a.width != b.width || a.height != b.height)
        throw GeometryError("mutual_info windows must have equal dimensions");
    if (bins < 2 || bins > 256 || (bins & (bins - 1)) != 0)
        throw DataError("bins must be a power of two in [2, 256]");

    const Image ga = to_grayscale(a);
    const Image gb = to_grayscale(b);
    const int shift = detail::quantize_shift(bins);

    std::vector<std::uint32_t> joint(static_cast<std::size_t>(bins) * bins, 0);
    std::vector<std::uint32_t> ma(static_cast<std::size_t>(bins), 0);
    std::vector<std::uint32_t> mb(static_cast<std::size_t>(bins), 0);
    const std::size_t n = ga.data.size();
    for (std::size_t i = 0; i < n; ++i) {
        const int qa = ga.data[i] >> shift;
        const int qb = gb.data[i] >> shift;
        ++joint[static_cast<std::size_t>(qa) * bins + qb];
        ++ma[static_cast<std::size_t>(qa)];
        ++mb[static_cast<std::size_t>(qb)];
    }

    // long double accumulation keeps symmetry-order effects below 1e-12.
    long double mi = 0.0L;
    const long double nn = static_cast<long double>(n);
    for (int i = 0; i < bins; ++i) {
        for (int j = 0; j < bins; ++j) {
            const std::uint32_t c = joint[static_cast<std::size_t>(i) * bins + j];
            if (c == 0) continue;
            const long double pij = c / nn;
            const long double pi = ma[static_cast<std::size_t>(i)] / nn;
            const long double pj = mb[static_cast<std::size_t>(j)] / nn;
            mi += pij * std::log2(pij / (pi * pj));
        }
    }
    double out = static_cast<double>(mi);
    if (out < 0.0 && out > -1e-9) out = 0.0; // numeric dust on independent inputs
    return out;
}

/// Entropy of a window under the same quantization mutual_info uses
/// (MI(w, w) equals exactly this value).
inline double quantized_entropy(const Image& window, int bins = 32) {
    return mutual_info(window, window, bins);
}

/// Alternate mask builder: extract the heatmap peaks, then grow each peak
/// over its grid neighborhood by mutual-information similarity. A candidate
/// joins the mask iff MI(peak, candidate) / MI(peak, peak) exceeds the
/// ratio threshold; peak footprints are always included. A zero-entropy
/// heatmap has no peaks at all, so a flat image yields an empty mask.
inline BinaryMask expand_kernels(const Image& image, const EntropyHeatmap& heatmap,
                                 const MIConfig& config = {}) {
    config.validate();
    if (heatmap.source_width != image.width || heatmap.source_height != image.height)
        throw GeometryError("heatmap was not computed on this image");

    const double max_entropy = heatmap.cell_count() == 0
                                   ? 0.0
                                   : *std::max_element(heatmap.values.begin(),
                                                       heatmap.values.end());
    if (max_entropy <= 0.0) return BinaryMask(image.width, image.height);

    const KernelMap peaks = peak_extract(heatmap, config.k_percent);
    const Image gray = to_grayscale(image);
    const int w = heatmap.geometry.window;
    const int s = heatmap.geometry.stride;

    auto window_at = [&](int row, int col) { return crop(gray, col * s, row * s, w, w); };

    KernelMap selected = peaks;
    for (int r = 0; r < peaks.rows; ++r) {
        for (int c = 0; c < peaks.cols; ++c) {
            if (!peaks.test(r, c)) continue;
            const Image peak_window = window_at(r, c);
            const double self_mi = mutual_info(peak_window, peak_window, config.bins);
            if (self_mi <= 0.0) continue; // quantization collapsed the peak; keep it alone

            const int r0 = std::max(0, r - config.radius);
            const int r1 = std::min(peaks.rows - 1, r + config.radius);
            const int c0 = std::max(0, c - config.radius);
            const int c1 = std::min(peaks.cols - 1, c + config.radius);
            for (int rr = r0; rr <= r1; ++rr)
                for (int cc = c0; cc <= c1; ++cc) {
                    if (selected.test(rr, cc)) continue;
                    const double mi = mutual_info(peak_window, window_at(rr, cc), config.bins);
                    if (mi / self_mi > config.mi_ratio_threshold) selected.set(rr, cc, true);
                }
        }
    }
    return kernels_to_mask(selected);
}

} // namespace jedi

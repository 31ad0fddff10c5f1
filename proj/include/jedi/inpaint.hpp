#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "jedi/error.hpp"
#include "jedi/image.hpp"

namespace jedi {

struct InpaintConfig {
    int radius = 5;              // neighborhood radius in pixels
    double sigma = 1.5;          // Gaussian weight for the structure tensor
    double epsilon = 1e-8;       // weight floor

    void validate() const {
        if (radius < 1) throw DataError("inpaint radius must be >= 1");
        if (!(sigma > 0.0)) throw DataError("inpaint sigma must be positive");
        if (!(epsilon > 0.0)) throw DataError("inpaint epsilon must be positive");
    }
};

/// One filled sample with the range of the known values that contributed to
/// it; collected on request so tests can assert the convexity bound.
struct InpaintAudit {
    int x = 0, y = 0, channel = 0;
    double lo = 0.0, hi = 0.0;
    double value = 0.0; // unrounded weighted average
};

namespace detail {

struct DiskOffset {
    int dx, dy;
    double dist;
    double gauss; // structure-tensor weight at this distance
};

inline std::vector<DiskOffset> disk_offsets(int radius, double sigma) {
    std::vector<DiskOffset> offsets;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
            if (dx == 0 && dy == 0) continue;
            const int d2 = dx * dx + dy * dy;
            if (d2 > radius * radius) continue;
            offsets.push_back({dx, dy, std::sqrt(static_cast<double>(d2)),
                               std::exp(-d2 / (2.0 * sigma * sigma))});
        }
    return offsets;
}

// Distance-to-boundary layers over the masked region: a 4-connected BFS
// from the known pixels. Guarantees every layer-k pixel has a known
// neighbor at distance 1 once layers < k are filled, so the fill
// neighborhood is never empty for any radius >= 1.
inline std::vector<int> fill_layers(const BinaryMask& mask, int width, int height,
                                    int& max_layer) {
    std::vector<int> dist(mask.bits.size(), 0);
    std::vector<std::size_t> frontier;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            if (!mask.test(x, y)) continue;
            const bool boundary = (x > 0 && !mask.test(x - 1, y)) ||
                                  (x + 1 < width && !mask.test(x + 1, y)) ||
                                  (y > 0 && !mask.test(x, y - 1)) ||
                                  (y + 1 < height && !mask.test(x, y + 1));
            if (boundary) {
                const std::size_t idx = static_cast<std::size_t>(y) * width + x;
                dist[idx] = 1;
                frontier.push_back(idx);
            }
        }

    max_layer = frontier.empty() ? 0 : 1;
    std::vector<std::size_t> next;
    while (!frontier.empty()) {
        next.clear();
        for (std::size_t idx : frontier) {
            const int x = static_cast<int>(idx) % width;
            const int y = static_cast<int>(idx) / width;
            const int layer = dist[idx];
            const int nx[4] = {x - 1, x + 1, x, x};
            const int ny[4] = {y, y, y - 1, y + 1};
            for (int k = 0; k < 4; ++k) {
                if (nx[k] < 0 || nx[k] >= width || ny[k] < 0 || ny[k] >= height) continue;
                const std::size_t nidx = static_cast<std::size_t>(ny[k]) * width + nx[k];
                if (mask.bits[nidx] && dist[nidx] == 0) {
                    dist[nidx] = layer + 1;
                    max_layer = std::max(max_layer, layer + 1);
                    next.push_back(nidx);
                }
            }
        }
        frontier.swap(next);
    }
    return dist;
}

} // namespace detail

/// Coherence-transport inpainting. Masked pixels are filled in increasing
/// distance-to-boundary order (layer by layer, row-major within a layer);
/// each becomes a convex combination of already-known pixels within
/// `radius`, weighted by closeness and by alignment with the local
/// coherence direction (the minor eigenvector of the Gaussian-weighted
/// structure tensor of the known neighborhood). Pixels outside the mask are
/// never written.
inline Image inpaint(const Image& image, const BinaryMask& mask,
                     const InpaintConfig& config = {},
                     std::vector<InpaintAudit>* audit = nullptr) {
    config.validate();
    if (mask.width != image.width || mask.height != image.height)
        throw GeometryError("mask dimensions do not match image");

    const std::size_t n_masked = mask.popcount();
    if (n_masked == 0) return image;
    if (n_masked == image.pixel_count()) throw DataError("mask covers the entire image");

    const int width = image.width, height = image.height, channels = image.channels;
    Image out = image;
    Image gray = to_grayscale(out);

    std::vector<std::uint8_t> known(image.pixel_count());
    for (std::size_t i = 0; i < known.size(); ++i) known[i] = mask.bits[i] ? 0 : 1;

    int max_layer = 0;
    const std::vector<int> layer_of = detail::fill_layers(mask, width, height, max_layer);
    std::vector<std::vector<std::size_t>> layers(static_cast<std::size_t>(max_layer) + 1);
    for (std::size_t i = 0; i < layer_of.size(); ++i)
        if (layer_of[i] > 0) layers[static_cast<std::size_t>(layer_of[i])].push_back(i);

    const auto offsets = detail::disk_offsets(config.radius, config.sigma);
    const double eps = config.epsilon;

    auto gradient_at = [&](int x, int y, double& gx, double& gy) {
        auto is_known = [&](int xx, int yy) {
            return xx >= 0 && xx < width && yy >= 0 && yy < height &&
                   known[static_cast<std::size_t>(yy) * width + xx];
        };
        auto g = [&](int xx, int yy) {
            return static_cast<double>(gray.data[static_cast<std::size_t>(yy) * width + xx]);
        };
        const bool l = is_known(x - 1, y), r = is_known(x + 1, y);
        const bool u = is_known(x, y - 1), d = is_known(x, y + 1);
        gx = l && r ? (g(x + 1, y) - g(x - 1, y)) / 2.0
                    : (r ? g(x + 1, y) - g(x, y) : (l ? g(x, y) - g(x - 1, y) : 0.0));
        gy = u && d ? (g(x, y + 1) - g(x, y - 1)) / 2.0
                    : (d ? g(x, y + 1) - g(x, y) : (u ? g(x, y) - g(x, y - 1) : 0.0));
    };

    std::vector<double> sums(static_cast<std::size_t>(channels));
    std::vector<double> lo(static_cast<std::size_t>(channels));
    std::vector<double> hi(static_cast<std::size_t>(channels));
    for (int layer = 1; layer <= max_layer; ++layer) {
        for (std::size_t idx : layers[static_cast<std::size_t>(layer)]) {
            const int x = static_cast<int>(idx) % width;
            const int y = static_cast<int>(idx) / width;

            // Structure tensor of the known neighborhood.
            double jxx = 0.0, jxy = 0.0, jyy = 0.0;
            for (const auto& off : offsets) {
                const int qx = x + off.dx, qy = y + off.dy;
                if (qx < 0 || qx >= width || qy < 0 || qy >= height) continue;
                if (!known[static_cast<std::size_t>(qy) * width + qx]) continue;
                double gx, gy;
                gradient_at(qx, qy, gx, gy);
                jxx += off.gauss * gx * gx;
                jxy += off.gauss * gx * gy;
                jyy += off.gauss * gy * gy;
            }

            // Coherence direction: minor eigenvector (along level lines).
            const double half_tr = (jxx + jyy) / 2.0;
            const double root = std::sqrt(((jxx - jyy) / 2.0) * ((jxx - jyy) / 2.0) + jxy * jxy);
            const double lambda_min = half_tr - root;
            double vx = jxy, vy = lambda_min - jxx;
            const double alt_x = lambda_min - jyy, alt_y = jxy;
            if (alt_x * alt_x + alt_y * alt_y > vx * vx + vy * vy) {
                vx = alt_x;
                vy = alt_y;
            }
            double vnorm = std::hypot(vx, vy);
            if (vnorm < 1e-12) {
                vx = 1.0;
                vy = 0.0;
                vnorm = 1.0;
            }

            std::fill(sums.begin(), sums.end(), 0.0);
            std::fill(lo.begin(), lo.end(), 255.0);
            std::fill(hi.begin(), hi.end(), 0.0);
            double weight_sum = 0.0;
            for (const auto& off : offsets) {
                const int qx = x + off.dx, qy = y + off.dy;
                if (qx < 0 || qx >= width || qy < 0 || qy >= height) continue;
                const std::size_t qidx = static_cast<std::size_t>(qy) * width + qx;
                if (!known[qidx]) continue;
                const double cos_theta = (off.dx * vx + off.dy * vy) / (off.dist * vnorm);
                const double w = (1.0 / (eps + off.dist)) * (eps + std::abs(cos_theta));
                weight_sum += w;
                for (int c = 0; c < channels; ++c) {
                    const double v = out.data[qidx * channels + c];
                    sums[static_cast<std::size_t>(c)] += w * v;
                    lo[static_cast<std::size_t>(c)] = std::min(lo[static_cast<std::size_t>(c)], v);
                    hi[static_cast<std::size_t>(c)] = std::max(hi[static_cast<std::size_t>(c)], v);
                }
            }
            // A layer-k pixel always has a 4-neighbor in layer k-1 or in the
            // original known region, so weight_sum > 0 here.
            for (int c = 0; c < channels; ++c) {
                const double value = sums[static_cast<std::size_t>(c)] / weight_sum;
                long rounded = std::lround(value);
                rounded = std::clamp(rounded, 0l, 255l);
                out.data[idx * channels + c] = static_cast<std::uint8_t>(rounded);
                if (audit)
                    audit->push_back({x, y, c, lo[static_cast<std::size_t>(c)],
                                      hi[static_cast<std::size_t>(c)], value});
            }
            if (channels == 1) {
                gray.data[idx] = out.data[idx];
            } else {
                gray.data[idx] =
                    bt601_luma(out.data[idx * 3], out.data[idx * 3 + 1], out.data[idx * 3 + 2]);
            }
        }
        // Filled pixels become known only once the whole layer is done, so
        // every pixel of a layer reads previous layers exclusively.
        for (std::size_t idx : layers[static_cast<std::size_t>(layer)]) known[idx] = 1;
    }
    return out;
}

} // namespace jedi

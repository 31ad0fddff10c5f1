#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "jedi/error.hpp"
#include "jedi/image.hpp"
#include "jedi/rng.hpp"

namespace jedi {

/// A generated scene plus the kind of its dominant (largest) shape, which
/// serves as the ground-truth label for the toy classification task.
struct SyntheticScene {
    Image image;
    std::string label; // "rect" | "ellipse"
};

namespace detail {

struct ShapeSpec {
    bool is_rect = true;
    int x0 = 0, y0 = 0, w = 0, h = 0;
    double value = 0.0;
};

inline bool boxes_overlap(const ShapeSpec& a, const ShapeSpec& b, int gap) {
    return a.x0 - gap < b.x0 + b.w && b.x0 - gap < a.x0 + a.w && a.y0 - gap < b.y0 + b.h &&
           b.y0 - gap < a.y0 + a.h;
}

inline void fill_shape(std::vector<double>& buf, int width, const ShapeSpec& s) {
    if (s.is_rect) {
        for (int y = s.y0; y < s.y0 + s.h; ++y)
            for (int x = s.x0; x < s.x0 + s.w; ++x)
                buf[static_cast<std::size_t>(y) * width + x] = s.value;
        return;
    }
    const double cx = s.x0 + s.w / 2.0;
    const double cy = s.y0 + s.h / 2.0;
    const double rx = s.w / 2.0;
    const double ry = s.h / 2.0;
    for (int y = s.y0; y < s.y0 + s.h; ++y)
        for (int x = s.x0; x < s.x0 + s.w; ++x) {
            const double dx = (x + 0.5 - cx) / rx;
            const double dy = (y + 0.5 - cy) / ry;
            if (dx * dx + dy * dy <= 1.0)
                buf[static_cast<std::size_t>(y) * width + x] = s.value;
        }
}

} // namespace detail

/// Piecewise-smooth grayscale scene: a few clamped linear ramps plus 1-3
/// filled shapes, finished with a 3x3 box blur. Deterministic per seed.
/// The first (largest) shape is the dominant one and names the label.
inline SyntheticScene gen_scene(int width, int height, std::uint64_t seed) {
    if (width < 32 || height < 32) throw GeometryError("scene dimensions must be >= 32");

    Rng rng(derive_seed(seed, 0x5ce17e));
    const std::size_t n = static_cast<std::size_t>(width) * height;
    std::vector<double> buf(n, 0.0);

    // Sum of 2-4 full-frame linear gradients, rescaled so the combined
    // slope stays gentle, plus fine-grained value noise that the closing
    // box blur turns into correlated micro-texture. The texture pins local
    // entropy at a moderate level that barely grows with window size, the
    // way photographic content behaves; exactly flat regions would read as
    // zero entropy, which no natural image has.
    const int n_gradients = rng.range(2, 4);
    double sx = 0.0, sy = 0.0;
    for (int g = 0; g < n_gradients; ++g) {
        const double theta = rng.uniform(0.0, 6.283185307179586);
        const double weight = rng.uniform(0.4, 0.9);
        sx += weight * std::cos(theta);
        sy += weight * std::sin(theta);
    }
    const double target_slope = rng.uniform(0.35, 0.65); // gray levels per pixel
    const double norm = std::hypot(sx, sy);
    if (norm < 1e-9) {
        sx = target_slope;
        sy = 0.0;
    } else {
        sx *= target_slope / norm;
        sy *= target_slope / norm;
    }
    const double mid = 112.0 + rng.below(33);
    const double texture_amp = 20.0;
    const double cx = width / 2.0, cy = height / 2.0;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            buf[static_cast<std::size_t>(y) * width + x] =
                mid + sx * (x - cx) + sy * (y - cy) + rng.uniform(-texture_amp, texture_amp);

    const int m = std::min(width, height);
    const int n_shapes = rng.range(1, 3);
    std::vector<detail::ShapeSpec> placed;
    std::string label;
    for (int s = 0; s < n_shapes; ++s) {
        const bool dominant = s == 0;
        detail::ShapeSpec spec;
        spec.is_rect = rng.chance(0.5);
        const double lo = dominant ? 0.20 : 0.09;
        const double hi = dominant ? 0.32 : 0.14;
        spec.w = std::max(4, static_cast<int>(std::lround(rng.uniform(lo, hi) * m)));
        spec.h = std::max(4, static_cast<int>(std::lround(rng.uniform(lo, hi) * m)));

        bool ok = false;
        for (int attempt = 0; attempt < 20 && !ok; ++attempt) {
            spec.x0 = 2 + static_cast<int>(rng.below(static_cast<std::uint32_t>(width - spec.w - 3)));
            spec.y0 = 2 + static_cast<int>(rng.below(static_cast<std::uint32_t>(height - spec.h - 3)));
            ok = true;
            for (const auto& other : placed)
                if (detail::boxes_overlap(spec, other, 3)) ok = false;
        }
        if (!ok) continue; // crowded; skip this secondary shape

        const double local =
            buf[static_cast<std::size_t>(spec.y0 + spec.h / 2) * width + (spec.x0 + spec.w / 2)];
        const double contrast = dominant ? rng.uniform(60.0, 85.0) : rng.uniform(40.0, 55.0);
        spec.value = std::clamp(local > 127.0 ? local - contrast : local + contrast, 2.0, 253.0);
        detail::fill_shape(buf, width, spec);
        placed.push_back(spec);
        if (dominant) label = spec.is_rect ? "rect" : "ellipse";
    }

    // 3x3 box blur, edges clamped.
    std::vector<double> blurred(n);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            double sum = 0.0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int yy = std::clamp(y + dy, 0, height - 1);
                    const int xx = std::clamp(x + dx, 0, width - 1);
                    sum += buf[static_cast<std::size_t>(yy) * width + xx];
                }
            blurred[static_cast<std::size_t>(y) * width + x] = sum / 9.0;
        }

    SyntheticScene scene;
    scene.label = label;
    scene.image = Image(width, height, 1);
    for (std::size_t i = 0; i < n; ++i) {
        const long v = std::lround(blurred[i]);
        scene.image.data[i] = static_cast<std::uint8_t>(std::clamp(v, 0l, 255l));
    }
    return scene;
}

inline Image gen_smooth_scene(int width, int height, std::uint64_t seed) {
    return gen_scene(width, height, seed).image;
}

/// Square patch of i.i.d. uniform pixels; the high-entropy stand-in for a
/// freshly optimized adversarial patch.
inline Patch gen_noise_patch(int size, std::uint64_t seed, int channels = 1) {
    if (size < 8) throw GeometryError("patch size below the 8-pixel minimum");
    Rng rng(derive_seed(seed, 0x90135));
    Patch patch;
    patch.image = Image(size, size, channels);
    for (auto& sample : patch.image.data) sample = rng.byte();
    patch.id = "noise-" + std::to_string(size) + "-" + std::to_string(seed);
    return patch;
}

} // namespace jedi

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "jedi/entropy.hpp"
#include "jedi/error.hpp"
#include "jedi/image.hpp"
#include "jedi/metrics.hpp"
#include "jedi/oracle.hpp"
#include "jedi/rng.hpp"
#include "jedi/synthetic.hpp"

namespace jedi {

using Color = std::array<std::uint8_t, 3>; // grayscale patches use r == g == b

struct AdaptiveConfig {
    double epsilon = 5.0; // entropy budget in bits
    int check_freq = 10;  // iterations between entropy checks
    int n_colors = 10;    // random colors targeted per reduction round
    int n_epochs = 3;
    int patch_size = 50;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(epsilon >= 0.0 && epsilon <= 8.0))
            throw DataError("epsilon must be in [0, 8] bits");
        if (check_freq < 1) throw DataError("check_freq must be >= 1");
        if (n_colors < 1) throw DataError("n_colors must be >= 1");
        if (n_epochs < 1) throw DataError("n_epochs must be >= 1");
        if (patch_size < 8) throw DataError("patch_size must be >= 8");
    }
};

/// The attack backend: scores a patch against the victim model over a fixed
/// sample set, and performs one patch-improvement step. Implementations
/// must be deterministic given their construction seed.
class AttackOracle {
public:
    virtual ~AttackOracle() = default;
    virtual double success_rate(const Patch& patch) = 0;
    virtual Patch improve(const Patch& patch) = 0;
    virtual int sample_count() const = 0;
};

/// Whole-patch Shannon entropy over the grayscale histogram -- the same
/// estimator the defense uses, so attack and defense argue about the same
/// quantity.
inline double patch_entropy(const Patch& patch) {
    const Image gray = to_grayscale(patch.image);
    return histogram_entropy(gray.data);
}

namespace detail {

inline std::uint32_t pack_color(const Color& c) {
    return (static_cast<std::uint32_t>(c[0]) << 16) | (static_cast<std::uint32_t>(c[1]) << 8) |
           c[2];
}

inline Color unpack_color(std::uint32_t v) {
    return {static_cast<std::uint8_t>((v >> 16) & 0xff), static_cast<std::uint8_t>((v >> 8) & 0xff),
            static_cast<std::uint8_t>(v & 0xff)};
}

inline Color color_at(const Image& img, std::size_t pixel) {
    if (img.channels == 1) {
        const std::uint8_t v = img.data[pixel];
        return {v, v, v};
    }
    return {img.data[pixel * 3], img.data[pixel * 3 + 1], img.data[pixel * 3 + 2]};
}

inline long color_distance_sq(const Color& a, const Color& b) {
    const long dr = static_cast<long>(a[0]) - b[0];
    const long dg = static_cast<long>(a[1]) - b[1];
    const long db = static_cast<long>(a[2]) - b[2];
    return dr * dr + dg * dg + db * db;
}

} // namespace detail

/// Distinct colors present in a patch, in ascending packed order.
inline std::vector<Color> patch_palette(const Patch& patch) {
    std::set<std::uint32_t> packed;
    for (std::size_t p = 0; p < patch.image.pixel_count(); ++p)
        packed.insert(detail::pack_color(detail::color_at(patch.image, p)));
    std::vector<Color> palette;
    palette.reserve(packed.size());
    for (std::uint32_t v : packed) palette.push_back(detail::unpack_color(v));
    return palette;
}

inline bool patch_has_color(const Patch& patch, const Color& color) {
    for (std::size_t p = 0; p < patch.image.pixel_count(); ++p)
        if (detail::color_at(patch.image, p) == color) return true;
    return false;
}

/// The distinct color in the patch, other than target, closest to target in
/// Euclidean RGB distance. Ties break toward the lexicographically smaller
/// (R, G, B) triple.
inline Color find_nearest_color(const Patch& patch, const Color& target) {
    const std::vector<Color> palette = patch_palette(patch);
    if (palette.size() < 2) throw DataError("single-color patch has no nearest color");
    if (std::find(palette.begin(), palette.end(), target) == palette.end())
        throw DataError("target color not present in patch");

    const Color* best = nullptr;
    long best_dist = 0;
    for (const Color& c : palette) {
        if (c == target) continue;
        const long d = detail::color_distance_sq(c, target);
        if (!best || d < best_dist) { // palette is sorted, so first win is the lexicographic tie-break
            best = &c;
            best_dist = d;
        }
    }
    return *best;
}

/// Every pixel of color `from` becomes `to`; other pixels are untouched.
inline Patch replace_color(const Patch& patch, const Color& from, const Color& to) {
    Patch out = patch;
    for (std::size_t p = 0; p < out.image.pixel_count(); ++p) {
        if (detail::color_at(out.image, p) != from) continue;
        if (out.image.channels == 1) {
            out.image.data[p] = to[0];
        } else {
            out.image.data[p * 3] = to[0];
            out.image.data[p * 3 + 1] = to[1];
            out.image.data[p * 3 + 2] = to[2];
        }
    }
    return out;
}

/// One round of the variable-neighborhood color reduction: for each listed
/// color (absent ones are skipped), build a candidate with that color merged
/// into its nearest neighbor, score all candidates with the oracle, and
/// return the best (ties keep the earliest listed color).
inline Patch reduce_entropy(const Patch& patch, const std::vector<Color>& color_list,
                            AttackOracle& oracle) {
    const std::vector<Color> palette = patch_palette(patch);
    bool found = false;
    Patch best_patch;
    double best_rate = -1.0;
    if (palette.size() >= 2) {
        for (const Color& c : color_list) {
            if (std::find(palette.begin(), palette.end(), c) == palette.end()) continue;
            Patch candidate = replace_color(patch, c, find_nearest_color(patch, c));
            const double rate = oracle.success_rate(candidate);
            if (rate > best_rate) {
                best_rate = rate;
                best_patch = std::move(candidate);
                found = true;
            }
        }
    }
    if (!found)
        throw DataError("no reducible color: single-color patch or no listed color present");
    return best_patch;
}

struct TraceEntry {
    long iteration = 0;
    double entropy = 0.0;
    double success_rate = 0.0;
};

struct AdaptiveResult {
    Patch patch;
    std::vector<TraceEntry> trace;
};

/// Entropy-budgeted patch generation: alternate improvement steps with
/// projection back into the low-entropy space. Every check_freq iterations
/// (and once more at the end) the patch is reduced until its entropy is at
/// or below epsilon, so the returned patch always satisfies the budget.
/// Termination is structural: each reduction round removes one distinct
/// color, and a single-color patch has zero entropy.
inline AdaptiveResult generate_low_entropy_patch(AttackOracle& oracle,
                                                 const AdaptiveConfig& config) {
    config.validate();
    Rng rng(derive_seed(config.seed, 0xada));

    Patch patch;
    patch.image = Image::filled(config.patch_size, config.patch_size, 1, 128);
    patch.id = "adaptive-eps" + std::to_string(config.epsilon);

    auto enforce_budget = [&](Patch& p) {
        while (patch_entropy(p) > config.epsilon) {
            std::vector<Color> palette = patch_palette(p);
            // Partial Fisher-Yates draw of n_colors targets.
            const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(config.n_colors),
                                                        palette.size());
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t j =
                    i + rng.below(static_cast<std::uint32_t>(palette.size() - i));
                std::swap(palette[i], palette[j]);
            }
            palette.resize(n);
            p = reduce_entropy(p, palette, oracle);
        }
    };

    AdaptiveResult result;
    long it = 0;
    for (int epoch = 0; epoch < config.n_epochs; ++epoch) {
        for (int s = 0; s < oracle.sample_count(); ++s) {
            ++it;
            patch = oracle.improve(patch);
            if (it % config.check_freq == 0) enforce_budget(patch);
            result.trace.push_back({it, patch_entropy(patch), oracle.success_rate(patch)});
        }
    }
    if (patch_entropy(patch) > config.epsilon) {
        enforce_budget(patch);
        result.trace.push_back({++it, patch_entropy(patch), oracle.success_rate(patch)});
    }
    result.patch = std::move(patch);
    return result;
}

/// Attack backend against the built-in toy model: patch locations are fixed
/// per sample at construction (seeded), and the improvement step is random
/// block mutation hill-climbing -- a mutation survives only if the success
/// rate does not drop.
class ToyPatchAttack : public AttackOracle {
public:
    ToyPatchAttack(std::vector<Image> scenes, double trip, std::uint64_t seed,
                   int mutation_block = 16)
        : scenes_(std::move(scenes)),
          oracle_(trip),
          rng_(derive_seed(seed, 0xa77ac)),
          mutation_block_(mutation_block) {
        if (scenes_.empty()) throw DataError("attack oracle needs at least one scene");
        for (const Image& scene : scenes_) {
            clean_labels_.push_back(oracle_.label(scene));
            location_u_.push_back(rng_.unit());
            location_v_.push_back(rng_.unit());
        }
    }

    int sample_count() const override { return static_cast<int>(scenes_.size()); }

    double success_rate(const Patch& patch) override {
        int flipped = 0;
        for (std::size_t i = 0; i < scenes_.size(); ++i) {
            const Image& scene = scenes_[i];
            const int max_x = scene.width - patch.image.width;
            const int max_y = scene.height - patch.image.height;
            if (max_x < 0 || max_y < 0) throw GeometryError("patch larger than attack scene");
            const int x = static_cast<int>(location_u_[i] * (max_x + 1));
            const int y = static_cast<int>(location_v_[i] * (max_y + 1));
            const PatchApplication applied = apply_patch(scene, patch, x, y);
            if (oracle_.label(applied.image) != clean_labels_[i]) ++flipped;
        }
        return static_cast<double>(flipped) / static_cast<double>(scenes_.size());
    }

    Patch improve(const Patch& patch) override {
        Patch candidate = patch;
        const int bs = std::min(mutation_block_, candidate.image.width);
        const int bx = static_cast<int>(
            rng_.below(static_cast<std::uint32_t>(candidate.image.width - bs + 1)));
        const int by = static_cast<int>(
            rng_.below(static_cast<std::uint32_t>(candidate.image.height - bs + 1)));
        for (int y = by; y < by + bs; ++y)
            for (int x = bx; x < bx + bs; ++x)
                for (int c = 0; c < candidate.image.channels; ++c)
                    candidate.image.at(x, y, c) = rng_.byte();

        return success_rate(candidate) >= success_rate(patch) ? candidate : patch;
    }

private:
    std::vector<Image> scenes_;
    ToyShapeOracle oracle_;
    Rng rng_;
    int mutation_block_;
    std::vector<std::string> clean_labels_;
    std::vector<double> location_u_, location_v_;
};

inline nlohmann::json trace_to_json(const std::vector<TraceEntry>& trace) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& e : trace)
        rows.push_back(nlohmann::json{
            {"iteration", e.iteration}, {"entropy", e.entropy}, {"success_rate", e.success_rate}});
    return rows;
}

} // namespace jedi

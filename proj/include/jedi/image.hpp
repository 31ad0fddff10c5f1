#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "jedi/error.hpp"

namespace jedi {

/// 8-bit raster, row-major, channel-interleaved. Grayscale (1 channel) or
/// RGB (3 channels). Immutable by convention once built: operations return
/// new images instead of mutating inputs.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<std::uint8_t> data;

    Image() = default;

    Image(int w, int h, int c) : width(w), height(h), channels(c) {
        if (w < 1 || h < 1) throw GeometryError("image dimensions must be >= 1");
        if (c != 1 && c != 3) throw FormatError("image must have 1 or 3 channels");
        data.assign(static_cast<std::size_t>(w) * h * c, 0);
    }

    static Image filled(int w, int h, int c, std::uint8_t value) {
        Image img(w, h, c);
        img.data.assign(img.data.size(), value);
        return img;
    }

    std::size_t index(int x, int y, int c = 0) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }

    std::uint8_t at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }
    std::uint8_t& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

    bool same_dims(const Image& other) const {
        return width == other.width && height == other.height && channels == other.channels;
    }
};

/// Boolean mask at image resolution. bits holds 0/1 per pixel, row-major.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    BinaryMask() = default;

    BinaryMask(int w, int h) : width(w), height(h) {
        if (w < 1 || h < 1) throw GeometryError("mask dimensions must be >= 1");
        bits.assign(static_cast<std::size_t>(w) * h, 0);
    }

    bool test(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }

    void set(int x, int y, bool value) {
        bits[static_cast<std::size_t>(y) * width + x] = value ? 1 : 0;
    }

    std::size_t popcount() const {
        std::size_t n = 0;
        for (std::uint8_t b : bits) n += b ? 1 : 0;
        return n;
    }

    bool empty() const { return popcount() == 0; }

    bool same_dims(const BinaryMask& other) const {
        return width == other.width && height == other.height;
    }
};

/// An adversarial patch: pixels plus a label for bookkeeping.
struct Patch {
    Image image;
    std::string id;
};

/// ITU-R BT.601 luma, rounded to nearest integer. Fixed so grayscale-based
/// measurements are reproducible bit-exactly.
inline std::uint8_t bt601_luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const double y = 0.299 * r + 0.587 * g + 0.114 * b;
    long v = std::lround(y);
    if (v < 0) v = 0;
    if (v > 255) v = 255;
    return static_cast<std::uint8_t>(v);
}

inline Image to_grayscale(const Image& img) {
    if (img.channels == 1) return img;
    Image out(img.width, img.height, 1);
    const std::uint8_t* src = img.data.data();
    for (std::size_t p = 0; p < img.pixel_count(); ++p, src += 3)
        out.data[p] = bt601_luma(src[0], src[1], src[2]);
    return out;
}

inline Image crop(const Image& img, int x, int y, int w, int h) {
    if (x < 0 || y < 0 || w < 1 || h < 1 || x + w > img.width || y + h > img.height)
        throw GeometryError("crop rectangle outside image");
    Image out(w, h, img.channels);
    for (int row = 0; row < h; ++row) {
        const auto* src = &img.data[img.index(x, y + row)];
        auto* dst = &out.data[out.index(0, row)];
        std::copy(src, src + static_cast<std::size_t>(w) * img.channels, dst);
    }
    return out;
}

/// Ground-truth footprint of a patch pasted at (x, y).
inline BinaryMask footprint_mask(int image_w, int image_h, int patch_w, int patch_h,
                                 int x, int y) {
    BinaryMask mask(image_w, image_h);
    for (int row = 0; row < patch_h; ++row)
        for (int col = 0; col < patch_w; ++col)
            mask.set(x + col, y + row, true);
    return mask;
}

struct PatchApplication {
    Image image;
    BinaryMask footprint; // ground truth of where the patch landed
};

/// Pastes the patch verbatim at top-left (x, y). Pixels outside the
/// footprint are untouched.
inline PatchApplication apply_patch(const Image& image, const Patch& patch, int x, int y) {
    const Image& p = patch.image;
    if (p.channels != image.channels)
        throw FormatError("patch channel count does not match target image");
    if (x < 0 || y < 0 || x + p.width > image.width || y + p.height > image.height)
        throw GeometryError("patch placement outside image bounds");

    PatchApplication out{image, footprint_mask(image.width, image.height, p.width, p.height, x, y)};
    for (int row = 0; row < p.height; ++row) {
        const auto* src = &p.data[p.index(0, row)];
        auto* dst = &out.image.data[image.index(x, y + row)];
        std::copy(src, src + static_cast<std::size_t>(p.width) * p.channels, dst);
    }
    return out;
}

/// Renders a mask as a 0/255 single-channel image (the storage encoding).
inline Image mask_to_image(const BinaryMask& mask) {
    Image img(mask.width, mask.height, 1);
    for (std::size_t i = 0; i < mask.bits.size(); ++i) img.data[i] = mask.bits[i] ? 255 : 0;
    return img;
}

/// Any nonzero sample counts as set.
inline BinaryMask image_to_mask(const Image& img) {
    const Image gray = to_grayscale(img);
    BinaryMask mask(gray.width, gray.height);
    for (std::size_t i = 0; i < gray.data.size(); ++i) mask.bits[i] = gray.data[i] ? 1 : 0;
    return mask;
}

} // namespace jedi

#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <png.h>

#include "jedi/error.hpp"
#include "jedi/image.hpp"

namespace jedi {

namespace detail {

struct FileHandle {
    std::FILE* fp = nullptr;
    ~FileHandle() {
        if (fp) std::fclose(fp);
    }
};

// libpng reports errors through longjmp; the jump region below keeps only
// trivially-destructible locals so no destructors are skipped.
inline void read_png_rows(png_structp png, png_infop info, Image* out, bool* ok,
                          std::string* err) {
    if (setjmp(png_jmpbuf(png))) {
        *ok = false;
        return;
    }
    png_read_info(png, info);

    png_uint_32 width = png_get_image_width(png, info);
    png_uint_32 height = png_get_image_height(png, info);
    int bit_depth = png_get_bit_depth(png, info);
    int color_type = png_get_color_type(png, info);

    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) {
        *ok = false;
        *err = "unsupported PNG channel count";
        return;
    }
    if (width < 1 || height < 1) {
        *ok = false;
        return;
    }

    *out = Image(static_cast<int>(width), static_cast<int>(height), channels);
    std::size_t rowbytes = png_get_rowbytes(png, info);
    if (rowbytes != static_cast<std::size_t>(out->width) * channels) {
        *ok = false;
        return;
    }
    for (png_uint_32 y = 0; y < height; ++y)
        png_read_row(png, out->data.data() + out->index(0, static_cast<int>(y)), nullptr);
    png_read_end(png, nullptr);
    *ok = true;
}

inline Image load_png(const std::string& path) {
    FileHandle file;
    file.fp = std::fopen(path.c_str(), "rb");
    if (!file.fp) throw DataError("cannot open file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw Error("libpng: out of memory");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw Error("libpng: out of memory");
    }

    png_init_io(png, file.fp);
    Image out;
    bool ok = false;
    std::string err = "corrupt PNG file: " + path;
    read_png_rows(png, info, &out, &ok, &err);
    png_destroy_read_struct(&png, &info, nullptr);
    if (!ok) throw FormatError(err);
    return out;
}

inline void write_png_rows(png_structp png, png_infop info, const Image& img, bool* ok) {
    if (setjmp(png_jmpbuf(png))) {
        *ok = false;
        return;
    }
    const int color_type = img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y)
        png_write_row(png, const_cast<png_bytep>(img.data.data() + img.index(0, y)));
    png_write_end(png, nullptr);
    *ok = true;
}

inline void save_png(const Image& img, const std::string& path) {
    FileHandle file;
    file.fp = std::fopen(path.c_str(), "wb");
    if (!file.fp) throw DataError("cannot write file: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw Error("libpng: out of memory");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw Error("libpng: out of memory");
    }
    png_init_io(png, file.fp);
    bool ok = false;
    write_png_rows(png, info, img, &ok);
    png_destroy_write_struct(&png, &info);
    if (!ok) throw FormatError("failed to encode PNG: " + path);
}

struct MemoryWriteState {
    std::vector<std::uint8_t>* out;
};

inline void png_memory_write(png_structp png, png_bytep data, png_size_t length) {
    auto* state = static_cast<MemoryWriteState*>(png_get_io_ptr(png));
    state->out->insert(state->out->end(), data, data + length);
}

inline void png_memory_flush(png_structp) {}

inline Image load_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);

    auto fail = [&path]() -> Image { throw FormatError("corrupt PNM file: " + path); };

    std::string magic;
    in >> magic;
    int channels;
    if (magic == "P5")
        channels = 1;
    else if (magic == "P6")
        channels = 3;
    else
        return fail();

    auto next_int = [&](int& value) {
        // Skips whitespace and '#' comments between header tokens.
        for (;;) {
            int c = in.peek();
            if (c == '#') {
                std::string line;
                std::getline(in, line);
            } else if (std::isspace(c)) {
                in.get();
            } else {
                break;
            }
        }
        if (!(in >> value)) value = -1;
    };

    int w = -1, h = -1, maxval = -1;
    next_int(w);
    next_int(h);
    next_int(maxval);
    if (w < 1 || h < 1 || maxval < 1 || maxval > 255) return fail();
    in.get(); // single whitespace after maxval

    Image out(w, h, channels);
    in.read(reinterpret_cast<char*>(out.data.data()),
            static_cast<std::streamsize>(out.data.size()));
    if (in.gcount() != static_cast<std::streamsize>(out.data.size())) return fail();
    return out;
}

inline void save_pnm(const Image& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    out << (img.channels == 1 ? "P5" : "P6") << "\n"
        << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data.data()),
              static_cast<std::streamsize>(img.data.size()));
    if (!out) throw DataError("short write: " + path);
}

inline bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

} // namespace detail

/// Loads a PNG or binary PGM/PPM image, sniffing the format from the file's
/// magic bytes rather than its extension.
inline Image load_image(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw DataError("cannot open file: " + path);
    char magic[2] = {0, 0};
    probe.read(magic, 2);
    probe.close();

    if (magic[0] == '\x89' && magic[1] == 'P') return detail::load_png(path);
    if (magic[0] == 'P' && (magic[1] == '5' || magic[1] == '6')) return detail::load_pnm(path);
    throw FormatError("unsupported image format: " + path);
}

/// Saves to PNG or binary PGM/PPM depending on extension. Both formats are
/// lossless for 8-bit data, so save followed by load reproduces the samples
/// bit for bit.
inline void save_image(const Image& img, const std::string& path) {
    if (detail::ends_with(path, ".png")) {
        detail::save_png(img, path);
    } else if (detail::ends_with(path, ".pgm")) {
        if (img.channels != 1) throw FormatError("PGM requires a single-channel image");
        detail::save_pnm(img, path);
    } else if (detail::ends_with(path, ".ppm")) {
        if (img.channels != 3) throw FormatError("PPM requires a three-channel image");
        detail::save_pnm(img, path);
    } else {
        throw FormatError("unsupported output extension: " + path);
    }
}

/// PNG bytes in memory; used by the subprocess oracle protocol.
inline std::vector<std::uint8_t> encode_png(const Image& img) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw Error("libpng: out of memory");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw Error("libpng: out of memory");
    }
    std::vector<std::uint8_t> bytes;
    detail::MemoryWriteState state{&bytes};
    png_set_write_fn(png, &state, detail::png_memory_write, detail::png_memory_flush);
    bool ok = false;
    detail::write_png_rows(png, info, img, &ok);
    png_destroy_write_struct(&png, &info);
    if (!ok) throw FormatError("failed to encode PNG in memory");
    return bytes;
}

/// Masks are stored as single-channel PNGs with 0/255 samples.
inline void save_mask(const BinaryMask& mask, const std::string& path) {
    save_image(mask_to_image(mask), path);
}

inline BinaryMask load_mask(const std::string& path) { return image_to_mask(load_image(path)); }

} // namespace jedi

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "jedi/image.hpp"
#include "jedi/image_io.hpp"
#include "jedi/synthetic.hpp"
#include "support.hpp"

using namespace jedi;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "jedi_image_tests";
    fs::create_directories(dir);
    return dir / name;
}

} // namespace

TEST_CASE("image construction validates shape") {
    CHECK_THROWS_AS(Image(0, 5, 1), GeometryError);
    CHECK_THROWS_AS(Image(5, 0, 1), GeometryError);
    CHECK_THROWS_AS(Image(5, 5, 2), FormatError);
    const Image img(4, 3, 3);
    CHECK(img.data.size() == 4u * 3u * 3u);
}

TEST_CASE("apply_patch pastes verbatim and leaves the rest untouched") {
    const Image base = Image::filled(224, 224, 1, 7);
    Patch patch;
    patch.image = Image::filled(50, 50, 1, 200);

    const PatchApplication applied = apply_patch(base, patch, 0, 0);
    for (int y = 0; y < 224; ++y)
        for (int x = 0; x < 224; ++x) {
            const bool inside = x < 50 && y < 50;
            CAPTURE(x, y);
            if (applied.image.at(x, y) != (inside ? 200 : 7)) FAIL("pixel mismatch");
            if (applied.footprint.test(x, y) != inside) FAIL("footprint mismatch");
        }
    CHECK(applied.footprint.popcount() == 2500u);
}

TEST_CASE("apply_patch with identical content is a no-op") {
    const Image scene = gen_smooth_scene(64, 64, 11);
    Patch patch;
    patch.image = crop(scene, 10, 20, 16, 16);
    const PatchApplication applied = apply_patch(scene, patch, 10, 20);
    CHECK(applied.image.data == scene.data);
}

TEST_CASE("apply_patch rejects bad placements") {
    const Image base(224, 224, 1);
    Patch patch;
    patch.image = Image(50, 50, 1);
    CHECK_THROWS_AS(apply_patch(base, patch, 200, 200), GeometryError);
    CHECK_THROWS_AS(apply_patch(base, patch, -1, 0), GeometryError);

    Patch rgb;
    rgb.image = Image(8, 8, 3);
    CHECK_THROWS_AS(apply_patch(base, rgb, 0, 0), FormatError);
}

TEST_CASE("apply_patch never touches pixels outside the footprint") {
    // Exhaustive check over every placement on a small image.
    const Image base = oracle::random_image(20, 16, 41);
    Patch patch;
    patch.image = oracle::random_image(5, 4, 42);
    for (int y = 0; y + 4 <= 16; ++y)
        for (int x = 0; x + 5 <= 20; ++x) {
            const PatchApplication applied = apply_patch(base, patch, x, y);
            REQUIRE(applied.footprint.popcount() == 20u);
            for (int yy = 0; yy < 16; ++yy)
                for (int xx = 0; xx < 20; ++xx) {
                    if (applied.footprint.test(xx, yy)) {
                        if (applied.image.at(xx, yy) != patch.image.at(xx - x, yy - y))
                            FAIL("footprint pixel not from patch");
                    } else if (applied.image.at(xx, yy) != base.at(xx, yy)) {
                        FAIL("pixel outside footprint changed");
                    }
                }
        }
}

TEST_CASE("bt601 grayscale conversion") {
    CHECK(bt601_luma(255, 255, 255) == 255);
    CHECK(bt601_luma(0, 0, 0) == 0);
    // 0.299*100 + 0.587*50 + 0.114*200 = 82.05 -> 82
    CHECK(bt601_luma(100, 50, 200) == 82);
    // 0.299*10 + 0.587*10 + 0.114*10 = 10
    CHECK(bt601_luma(10, 10, 10) == 10);

    Image rgb(2, 1, 3);
    rgb.at(0, 0, 0) = 100;
    rgb.at(0, 0, 1) = 50;
    rgb.at(0, 0, 2) = 200;
    rgb.at(1, 0, 0) = 9;
    rgb.at(1, 0, 1) = 9;
    rgb.at(1, 0, 2) = 9;
    const Image gray = to_grayscale(rgb);
    CHECK(gray.channels == 1);
    CHECK(gray.at(0, 0) == 82);
    CHECK(gray.at(1, 0) == 9);
}

TEST_CASE("png round trip is lossless for gray and rgb") {
    const Image gray = oracle::random_image(33, 17, 1);
    const Image rgb = oracle::random_image(21, 29, 2, 3);

    const auto gpath = temp_file("gray.png");
    const auto cpath = temp_file("color.png");
    save_image(gray, gpath.string());
    save_image(rgb, cpath.string());

    const Image gback = load_image(gpath.string());
    const Image cback = load_image(cpath.string());
    CHECK(gback.channels == 1);
    CHECK(gback.data == gray.data);
    CHECK(cback.channels == 3);
    CHECK(cback.data == rgb.data);
}

TEST_CASE("pgm and ppm round trips are lossless") {
    const Image gray = oracle::random_image(15, 9, 3);
    const Image rgb = oracle::random_image(9, 15, 4, 3);

    const auto gpath = temp_file("img.pgm");
    const auto cpath = temp_file("img.ppm");
    save_image(gray, gpath.string());
    save_image(rgb, cpath.string());
    CHECK(load_image(gpath.string()).data == gray.data);
    CHECK(load_image(cpath.string()).data == rgb.data);

    CHECK_THROWS_AS(save_image(rgb, gpath.string()), FormatError);
    CHECK_THROWS_AS(save_image(gray, cpath.string()), FormatError);
}

TEST_CASE("loading truncated or alien files fails cleanly") {
    const auto png_path = temp_file("trunc.png");
    save_image(oracle::random_image(64, 64, 5), png_path.string());
    // Chop the file in half.
    auto bytes_size = fs::file_size(png_path);
    fs::resize_file(png_path, bytes_size / 2);
    CHECK_THROWS_AS(load_image(png_path.string()), FormatError);

    const auto pgm_path = temp_file("trunc.pgm");
    save_image(oracle::random_image(32, 32, 6), pgm_path.string());
    fs::resize_file(pgm_path, fs::file_size(pgm_path) - 100);
    CHECK_THROWS_AS(load_image(pgm_path.string()), FormatError);

    const auto alien = temp_file("alien.bin");
    {
        std::ofstream out(alien);
        out << "definitely not an image";
    }
    CHECK_THROWS_AS(load_image(alien.string()), FormatError);
    CHECK_THROWS_AS(load_image((alien.parent_path() / "missing.png").string()), DataError);
}

TEST_CASE("mask png encoding uses 0/255 and survives a round trip") {
    BinaryMask mask(13, 7);
    mask.set(0, 0, true);
    mask.set(12, 6, true);
    mask.set(5, 3, true);

    const auto path = temp_file("mask.png");
    save_mask(mask, path.string());
    const Image as_image = load_image(path.string());
    CHECK(as_image.channels == 1);
    CHECK(as_image.at(0, 0) == 255);
    CHECK(as_image.at(1, 0) == 0);

    const BinaryMask back = load_mask(path.string());
    CHECK(back.bits == mask.bits);
}

TEST_CASE("crop extracts the expected block") {
    const Image img = oracle::random_image(10, 10, 7);
    const Image block = crop(img, 2, 3, 4, 5);
    CHECK(block.width == 4);
    CHECK(block.height == 5);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 4; ++x) REQUIRE(block.at(x, y) == img.at(2 + x, 3 + y));
    CHECK_THROWS_AS(crop(img, 8, 8, 4, 4), GeometryError);
}

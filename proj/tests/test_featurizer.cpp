#include <png.h>

#include <cstdio>
#include <numbers>

#include "doctest.h"
#include "support.hpp"
#include "zsxm/featurizer.hpp"

using namespace zsxm;
using zsxm::test::TempDir;

namespace {

PixelImage from_fn(std::size_t w, std::size_t h, auto&& f) {
    std::vector<double> px(w * h);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) px[y * w + x] = f(x, y);
    return PixelImage(w, h, std::move(px));
}

void write_png(const std::filesystem::path& path, std::size_t w, std::size_t h, int color_type,
               const std::vector<unsigned char>& bytes) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    REQUIRE(fp);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
    for (std::size_t y = 0; y < h; ++y)
        png_write_row(png, const_cast<unsigned char*>(bytes.data() + y * w * channels));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

double norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("vertical step edge fills bin 0 of every cell") {
    FeaturizerConfig cfg;
    cfg.cell_size = 2;
    cfg.grid = 2;
    cfg.n_bins = 9;
    const auto img = from_fn(4, 4, [](std::size_t x, std::size_t) { return x >= 2 ? 1.0 : 0.0; });
    const auto f = extract(img, cfg);
    REQUIRE(f.size() == 36);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(f[i] == doctest::Approx(i % 9 == 0 ? 0.5 : 0.0).epsilon(1e-15));
}

TEST_CASE("horizontal step edge lands in the 90 degree bin") {
    FeaturizerConfig cfg;
    cfg.cell_size = 2;
    cfg.grid = 2;
    const auto img = from_fn(4, 4, [](std::size_t, std::size_t y) { return y >= 2 ? 1.0 : 0.0; });
    const auto f = extract(img, cfg);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(f[i] == doctest::Approx(i % 9 == 4 ? 0.5 : 0.0).epsilon(1e-15));
}

TEST_CASE("constant image yields the zero descriptor") {
    const auto f = extract(from_fn(20, 13, [](auto, auto) { return 0.3; }), FeaturizerConfig{});
    CHECK(f.size() == FeaturizerConfig{}.output_dim());
    CHECK(norm(f) == 0.0);
}

TEST_CASE("descriptor is nonnegative, unit norm and invariant to affine intensity changes") {
    Rng rng(5);
    FeaturizerConfig cfg;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t w = 8 + rng.index(40), h = 8 + rng.index(40);
        std::vector<double> base(w * h);
        for (auto& v : base) v = 0.1 + 0.4 * rng.uniform();
        const PixelImage img(w, h, base);
        const auto f = extract(img, cfg);
        CHECK(norm(f) == doctest::Approx(1.0).epsilon(1e-12));
        for (double x : f) CHECK(x >= 0.0);

        const double gain = 0.5 + rng.uniform(), offset = 0.05 * rng.uniform();
        std::vector<double> shifted(base);
        for (auto& v : shifted) v = gain * v + offset;
        const auto g = extract(PixelImage(w, h, shifted), cfg);
        for (std::size_t i = 0; i < f.size(); ++i) CHECK(g[i] == doctest::Approx(f[i]).epsilon(1e-9));
    }
}

TEST_CASE("binarize thresholds at one half") {
    FeaturizerConfig cfg;
    cfg.cell_size = 2;
    cfg.grid = 2;
    cfg.binarize = true;
    const auto soft = from_fn(4, 4, [](std::size_t x, std::size_t) { return x >= 2 ? 0.6 : 0.4; });
    const auto hard = from_fn(4, 4, [](std::size_t x, std::size_t) { return x >= 2 ? 1.0 : 0.0; });
    CHECK(extract(soft, cfg) == extract(hard, cfg));
    CHECK(cfg.hash() != FeaturizerConfig{2, 9, 2, false}.hash());
}

TEST_CASE("config validation and hashing") {
    FeaturizerConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.output_dim() == 144);
    CHECK(cfg.hash() == FeaturizerConfig{}.hash());
    FeaturizerConfig other = cfg;
    other.n_bins = 8;
    CHECK(other.hash() != cfg.hash());
    FeaturizerConfig zero = cfg;
    zero.cell_size = 0;
    CHECK_THROWS_AS(zero.validate(), Error);
    FeaturizerConfig tiny{1, 1, 1, false};
    CHECK_THROWS_AS(tiny.validate(), Error);
}

TEST_CASE("pixel images reject bad input") {
    CHECK_THROWS_AS(PixelImage(0, 3, {}), Error);
    CHECK_THROWS_AS(PixelImage(2, 2, {0.0, 0.0, 0.0}), Error);
    CHECK_THROWS_AS(PixelImage(1, 1, {std::nan("")}), Error);
    const auto img = PixelImage::from_bytes(2, 1, {0, 255});
    CHECK(img.at(0, 0) == 0.0);
    CHECK(img.at(1, 0) == 1.0);
}

TEST_CASE("pgm round trip preserves 8-bit levels") {
    TempDir dir;
    const auto img = from_fn(7, 5, [](std::size_t x, std::size_t y) { return static_cast<double>(x * 5 + y) / 255.0; });
    write_pgm(dir / "a.pgm", img);
    const auto back = read_image(dir / "a.pgm");
    REQUIRE(back.width() == 7);
    REQUIRE(back.height() == 5);
    CHECK(back.pixels() == img.pixels());

    zsxm::test::write(dir / "bad.pgm", "P2\n2 2\n255\n0 0 0 0\n");
    CHECK_THROWS_AS(read_pgm(dir / "bad.pgm"), Error);
    zsxm::test::write(dir / "short.pgm", std::string("P5\n4 4\n255\n") + std::string(3, '\0'));
    CHECK_THROWS_AS(read_pgm(dir / "short.pgm"), Error);
    CHECK_THROWS_AS(read_image(dir / "a.bmp"), Error);
}

TEST_CASE("png reader handles gray and colour files") {
    TempDir dir;
    const std::vector<unsigned char> gray = {0, 64, 128, 255, 10, 20};
    write_png(dir / "g.png", 3, 2, PNG_COLOR_TYPE_GRAY, gray);
    const auto g = read_png(dir / "g.png");
    REQUIRE(g.width() == 3);
    REQUIRE(g.height() == 2);
    for (std::size_t i = 0; i < gray.size(); ++i) CHECK(g.pixels()[i] == doctest::Approx(gray[i] / 255.0));

    std::vector<unsigned char> rgb;
    for (unsigned char v : gray) rgb.insert(rgb.end(), {v, v, v});
    write_png(dir / "c.png", 3, 2, PNG_COLOR_TYPE_RGB, rgb);
    const auto c = read_image(dir / "c.png");
    for (std::size_t i = 0; i < gray.size(); ++i) CHECK(c.pixels()[i] == doctest::Approx(gray[i] / 255.0).epsilon(0.01));

    zsxm::test::write(dir / "junk.png", "not a png at all");
    CHECK_THROWS_AS(read_png(dir / "junk.png"), Error);
}

TEST_CASE("directory featurization orders ids and reports unreadable files") {
    TempDir dir;
    const auto bar = from_fn(16, 16, [](std::size_t x, std::size_t) { return x > 7 ? 1.0 : 0.0; });
    for (const char* sub : {"sk/a", "sk/b", "im/c"}) std::filesystem::create_directories(dir / sub);
    write_pgm(dir / "sk" / "b" / "2.pgm", bar);
    write_pgm(dir / "sk" / "b" / "1.pgm", bar);
    write_pgm(dir / "sk" / "a" / "x.pgm", bar);
    zsxm::test::write(dir / "sk" / "a" / "broken.png", "nope");
    zsxm::test::write(dir / "sk" / "a" / "notes.txt", "ignored");
    FeaturizerConfig cfg;
    const auto res = featurize_directory(dir / "sk", cfg, Modality::Sketch);
    REQUIRE(res.instances.size() == 3);
    CHECK(res.instances[0].id == "sketch/a/x");
    CHECK(res.instances[1].id == "sketch/b/1");
    CHECK(res.instances[2].id == "sketch/b/2");
    CHECK(res.classes == std::vector<std::string>{"a", "b"});
    REQUIRE(res.warnings.size() == 1);
    CHECK(res.warnings[0].path.filename() == "broken.png");

    write_pgm(dir / "im" / "c" / "0.pgm", bar);
    auto im = featurize_directory(dir / "im", cfg, Modality::Image);
    const auto store = make_featurized_store({res, im}, cfg);
    CHECK(store.size() == 4);
    CHECK(store.dim() == cfg.output_dim());
    CHECK(store.featurizer_hash() == cfg.hash());
    CHECK(store.classes() == std::vector<std::string>{"a", "b", "c"});

    CHECK_THROWS_AS(featurize_directory(dir / "absent", cfg, Modality::Image), Error);
}

TEST_CASE("constant intensity offset leaves the descriptor unchanged") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        FeaturizerConfig cfg{2 + rng.index(6), 4 + rng.index(10), 2 + rng.index(4), false};
        // Native resolution skips interpolation; 1/1024 levels keep the shifted pixels exact.
        const std::size_t w = cfg.grid * cfg.cell_size, h = w;
        std::vector<double> base(w * h), shifted(w * h);
        for (std::size_t i = 0; i < base.size(); ++i) {
            base[i] = static_cast<double>(rng.index(700)) / 1024.0;
            shifted[i] = base[i] + 0.25;
        }
        const auto f = extract(PixelImage(w, h, base), cfg);
        const auto g = extract(PixelImage(w, h, shifted), cfg);
        REQUIRE(f.size() == cfg.output_dim());
        CHECK(f.size() == cfg.grid * cfg.grid * cfg.n_bins);
        for (std::size_t i = 0; i < f.size(); ++i) CHECK(std::abs(f[i] - g[i]) <= 1e-12);
    }
}

TEST_CASE("featurizing the same tree twice gives a byte-identical payload") {
    TempDir dir;
    std::filesystem::create_directories(dir / "sk" / "a");
    std::filesystem::create_directories(dir / "sk" / "b");
    Rng rng(1);
    for (const char* c : {"a", "b"})
        for (int k = 0; k < 2; ++k) {
            std::vector<double> px(100);
            for (auto& v : px) v = rng.uniform();
            write_pgm(dir / "sk" / c / (std::to_string(k) + ".pgm"), PixelImage(10, 10, px));
        }
    FeaturizerConfig cfg;
    auto run = [&](const std::string& name) {
        const auto store = make_featurized_store({featurize_directory(dir / "sk", cfg, Modality::Sketch)}, cfg);
        save_store(store, dir / name);
        return store;
    };
    const auto first = run("one.csv");
    run("two.csv");
    CHECK(first.size() == 4);
    CHECK(first.instances()[2].label == "b");
    CHECK(zsxm::test::slurp(dir / "one.features.csv") == zsxm::test::slurp(dir / "two.features.csv"));
}

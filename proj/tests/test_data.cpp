#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "handseg/data.hpp"
#include "test_util.hpp"

using namespace handseg;
using namespace handseg::test;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& leaf) {
    const fs::path p = fs::temp_directory_path() / "handseg_test_data" / leaf;
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("ppm round trip within quantization error") {
    const fs::path dir = scratch_dir("ppm");
    Rng rng(4);
    Tensor image = random_tensor(rng, {3, 17, 23}, 0, 1);
    write_ppm(dir / "a.ppm", image);
    Tensor back = read_ppm(dir / "a.ppm");
    REQUIRE(back.shape() == image.shape());
    for (std::size_t i = 0; i < image.size(); ++i)
        CHECK(std::abs(back.data()[i] - image.data()[i]) <= 0.5 / 255.0 + 1e-12);
}

TEST_CASE("pgm round trip and binary mask exactness") {
    const fs::path dir = scratch_dir("pgm");
    Tensor mask({1, 9, 11});
    Rng rng(5);
    for (auto& v : mask.data()) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
    write_pgm(dir / "m.pgm", mask);
    Tensor back = read_pgm(dir / "m.pgm");
    for (std::size_t i = 0; i < mask.size(); ++i) {
        const real rb = back.data()[i] > 0.5 ? 1.0 : 0.0;
        CHECK(rb == mask.data()[i]);
    }
}

TEST_CASE("pgm all-zero payload") {
    const fs::path dir = scratch_dir("pgm0");
    Tensor mask({1, 4, 4});
    write_pgm(dir / "z.pgm", mask);
    Tensor back = read_pgm(dir / "z.pgm");
    for (real v : back.data()) CHECK(v == 0.0);
}

TEST_CASE("netpbm reader diagnostics") {
    const fs::path dir = scratch_dir("bad");
    SUBCASE("ASCII variants are rejected with a clear message") {
        std::ofstream(dir / "ascii.ppm") << "P3\n2 2\n255\n0 0 0 0 0 0 0 0 0 0 0 0\n";
        CHECK_THROWS_WITH_AS(read_ppm(dir / "ascii.ppm"), doctest::Contains("ASCII"),
                             std::runtime_error);
    }
    SUBCASE("wrong maxval is rejected") {
        std::ofstream(dir / "max.pgm", std::ios::binary) << "P5\n2 2\n65535\n\0\0\0\0\0\0\0\0";
        CHECK_THROWS_AS(read_pgm(dir / "max.pgm"), std::runtime_error);
    }
    SUBCASE("truncated payload is rejected") {
        std::ofstream(dir / "trunc.ppm", std::ios::binary) << "P6\n4 4\n255\nabc";
        CHECK_THROWS_WITH_AS(read_ppm(dir / "trunc.ppm"), doctest::Contains("truncated"),
                             std::runtime_error);
    }
    SUBCASE("comments in the header are tolerated") {
        std::ofstream f(dir / "comment.pgm", std::ios::binary);
        f << "P5\n# a comment\n2 1\n255\n";
        f.put(char(0));
        f.put(char(255));
        f.close();
        Tensor t = read_pgm(dir / "comment.pgm");
        CHECK(t.shape() == Shape{1, 1, 2});
        CHECK(t.at(0, 0, 0) == 0.0);
        CHECK(t.at(0, 0, 1) == doctest::Approx(1.0));
    }
}

TEST_CASE("manifest round trip and diagnostics") {
    const fs::path dir = scratch_dir("manifest");
    DatasetManifest m;
    m.entries = {{"img/a.ppm", "msk/a.pgm", "train"},
                 {"img/b.ppm", "msk/b.pgm", "test"}};
    save_manifest(m, dir / "m.tsv");
    DatasetManifest back = load_manifest(dir / "m.tsv");
    REQUIRE(back.entries.size() == 2);
    CHECK(back.entries[0].image_path == "img/a.ppm");
    CHECK(back.entries[1].split == "test");

    SUBCASE("bad field count names the line") {
        std::ofstream(dir / "bad.tsv") << "a.ppm\ta.pgm\ttrain\nonly-one-field\n";
        CHECK_THROWS_WITH_AS(load_manifest(dir / "bad.tsv"), doctest::Contains("line 2"),
                             std::runtime_error);
    }
    SUBCASE("unknown split tag names the line") {
        std::ofstream(dir / "tag.tsv") << "a.ppm\ta.pgm\tvalid\n";
        CHECK_THROWS_WITH_AS(load_manifest(dir / "tag.tsv"), doctest::Contains("line 1"),
                             std::runtime_error);
    }
    SUBCASE("duplicate image paths are rejected") {
        std::ofstream(dir / "dup.tsv") << "a.ppm\ta.pgm\ttrain\na.ppm\tb.pgm\ttest\n";
        CHECK_THROWS_AS(load_manifest(dir / "dup.tsv"), std::runtime_error);
    }
}

TEST_CASE("split_dataset fractions") {
    auto entries_of = [](int n) {
        DatasetManifest m;
        for (int i = 0; i < n; ++i)
            m.entries.push_back({"i" + std::to_string(i), "m" + std::to_string(i), "train"});
        return m;
    };
    auto count_train = [](const DatasetManifest& m) {
        int c = 0;
        for (const auto& e : m.entries) c += e.split == "train";
        return c;
    };
    SUBCASE("348 entries at 0.9 give 314 train, 34 test") {
        DatasetManifest m = entries_of(348);
        split_dataset(m, 0.9, 1);
        CHECK(count_train(m) == 314);
    }
    SUBCASE("10 entries give 9 train, 1 test") {
        DatasetManifest m = entries_of(10);
        split_dataset(m, 0.9, 1);
        CHECK(count_train(m) == 9);
    }
    SUBCASE("never produces an empty side") {
        DatasetManifest m = entries_of(2);
        split_dataset(m, 0.999, 1);
        CHECK(count_train(m) == 1);
        DatasetManifest m2 = entries_of(2);
        split_dataset(m2, 0.001, 1);
        CHECK(count_train(m2) == 1);
    }
    SUBCASE("seed determines the assignment") {
        DatasetManifest a = entries_of(20), b = entries_of(20), c = entries_of(20);
        split_dataset(a, 0.9, 7);
        split_dataset(b, 0.9, 7);
        split_dataset(c, 0.9, 8);
        auto tags = [](const DatasetManifest& m) {
            std::vector<std::string> t;
            for (const auto& e : m.entries) t.push_back(e.image_path + ":" + e.split);
            return t;
        };
        CHECK(tags(a) == tags(b));
        CHECK(tags(a) != tags(c));
    }
    SUBCASE("rejects fewer than two entries") {
        DatasetManifest m = entries_of(1);
        CHECK_THROWS_AS(split_dataset(m, 0.9, 1), std::invalid_argument);
    }
}

TEST_CASE("generate_sample determinism and invariants") {
    SynthConfig cfg;
    cfg.height = 60;
    cfg.width = 94;
    SUBCASE("same seed, same sample") {
        Rng r1(31), r2(31);
        Sample a = generate_sample(r1, cfg);
        Sample b = generate_sample(r2, cfg);
        CHECK(a.image.data() == b.image.data());
        CHECK(a.mask.data() == b.mask.data());
    }
    SUBCASE("values stay in range, mask binary") {
        Rng rng(32);
        for (int i = 0; i < 10; ++i) {
            Sample s = generate_sample(rng, cfg);
            for (real v : s.image.data()) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
            for (real v : s.mask.data()) CHECK((v == 0.0 || v == 1.0));
        }
    }
    SUBCASE("hand fraction and border contact across many draws") {
        Rng rng(33);
        for (int i = 0; i < 200; ++i) {
            Sample s = generate_sample(rng, cfg);
            std::uint64_t hand = 0;
            bool touches_border = false;
            const int h = s.mask.height(), w = s.mask.width();
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    if (s.mask.at(0, y, x) > 0.5) {
                        ++hand;
                        if (y == 0 || x == 0 || y == h - 1 || x == w - 1) touches_border = true;
                    }
            const real frac = static_cast<real>(hand) / s.mask.size();
            CHECK(frac > 0.02);
            CHECK(frac < 0.60);
            CHECK(touches_border);
        }
    }
    SUBCASE("hand pixels stay inside the skin color support") {
        SynthConfig clean = cfg;
        clean.pixel_noise = 0;
        Rng rng(34);
        for (int i = 0; i < 20; ++i) {
            Sample s = generate_sample(rng, clean);
            for (int y = 0; y < s.mask.height(); ++y)
                for (int x = 0; x < s.mask.width(); ++x)
                    if (s.mask.at(0, y, x) > 0.5) {
                        CHECK(skin_support_contains(clean, s.image.at(0, y, x),
                                                    s.image.at(1, y, x), s.image.at(2, y, x)));
                    }
        }
    }
}

TEST_CASE("generate_dataset writes a loadable 90/10 corpus") {
    const fs::path dir = scratch_dir("corpus");
    SynthConfig cfg;
    cfg.count = 10;
    cfg.height = 40;
    cfg.width = 64;
    const fs::path manifest = generate_dataset(cfg, 9, dir);
    DatasetManifest m = load_manifest(manifest);
    REQUIRE(m.entries.size() == 10);
    int train = 0;
    for (const auto& e : m.entries) train += e.split == "train";
    CHECK(train == 9);

    auto test_samples = load_samples(manifest, "test");
    REQUIRE(test_samples.size() == 1);
    CHECK(test_samples[0].image.shape() == Shape{3, 40, 64});
    CHECK(test_samples[0].mask.shape() == Shape{1, 40, 64});

    SUBCASE("regeneration is byte-identical") {
        const fs::path dir2 = scratch_dir("corpus2");
        generate_dataset(cfg, 9, dir2);
        std::ifstream f1(dir / "img_00003.ppm", std::ios::binary);
        std::ifstream f2(dir2 / "img_00003.ppm", std::ios::binary);
        std::vector<char> b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
        std::vector<char> b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
        CHECK(b1 == b2);
        CHECK(!b1.empty());
    }
}

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <unistd.h>

#include "core/data.hpp"
#include "core/image_io.hpp"
#include "core/rng.hpp"
#include "core/util.hpp"
#include "doctest.h"

using namespace hamlet;
namespace fs = std::filesystem;

namespace {
struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("hamlet_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};
}  // namespace

TEST_CASE("manifest parsing") {
    TempDir dir;
    SUBCASE("empty file gives empty list") {
        write_file(dir.file("m.jsonl"), "");
        CHECK(load_manifest(dir.file("m.jsonl")).empty());
    }
    SUBCASE("single record with path resolution") {
        write_file(dir.file("m.jsonl"),
                   R"({"path":"a.ppm","label":1,"video_id":"v0","domain":"patch_swap"})"
                   "\n");
        auto recs = load_manifest(dir.file("m.jsonl"));
        REQUIRE(recs.size() == 1);
        CHECK(recs[0].path == dir.file("a.ppm"));
        CHECK(recs[0].label == 1);
        CHECK(recs[0].video_id == "v0");
        CHECK(recs[0].domain == "patch_swap");
    }
    SUBCASE("duplicate paths allowed, unknown keys ignored") {
        write_file(dir.file("m.jsonl"),
                   "{\"path\":\"a.ppm\",\"label\":0,\"extra\":42}\n"
                   "{\"path\":\"a.ppm\",\"label\":0}\n");
        CHECK(load_manifest(dir.file("m.jsonl")).size() == 2);
    }
    SUBCASE("malformed line reports its number") {
        write_file(dir.file("m.jsonl"), "{\"path\":\"a.ppm\",\"label\":0}\nnot json\n");
        CHECK_THROWS_WITH_AS(load_manifest(dir.file("m.jsonl")), doctest::Contains("line 2"),
                             DataError);
    }
    SUBCASE("missing label is an error") {
        write_file(dir.file("m.jsonl"), "{\"path\":\"a.ppm\"}\n");
        CHECK_THROWS_WITH_AS(load_manifest(dir.file("m.jsonl")), doctest::Contains("label"),
                             DataError);
    }
}

TEST_CASE("ppm decode of a single white pixel") {
    TempDir dir;
    std::string ppm = "P6\n1 1\n255\n";
    ppm.push_back(static_cast<char>(255));
    ppm.push_back(static_cast<char>(255));
    ppm.push_back(static_cast<char>(255));
    write_file(dir.file("w.ppm"), ppm);
    Tensor img = decode_image(dir.file("w.ppm"));
    CHECK(img.shape() == std::vector<std::size_t>{3, 1, 1});
    for (double v : img.data()) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("ppm maxval other than 255 is rejected") {
    TempDir dir;
    std::string ppm = "P6\n1 1\n65535\n";
    ppm.append(6, '\0');
    write_file(dir.file("bad.ppm"), ppm);
    CHECK_THROWS_AS(decode_image(dir.file("bad.ppm")), DataError);
    write_file(dir.file("bad2.ppm"), "P5\n1 1\n255\nx");
    CHECK_THROWS_AS(decode_image(dir.file("bad2.ppm")), DataError);
}

TEST_CASE("cten roundtrip is bit-identical") {
    TempDir dir;
    Rng rng(3);
    Tensor img = Tensor::uniform({3, 5, 7}, rng, 0.0, 1.0);
    write_cten(dir.file("x.cten"), img);
    Tensor back = decode_image(dir.file("x.cten"));
    REQUIRE(back.shape() == img.shape());
    for (std::size_t i = 0; i < img.numel(); ++i)
        CHECK(static_cast<float>(back.data()[i]) == static_cast<float>(img.data()[i]));
    // in f32 default precision the doubles themselves match
    for (std::size_t i = 0; i < img.numel(); ++i) CHECK(back.data()[i] == img.data()[i]);
}

TEST_CASE("ppm roundtrip quantizes to byte precision") {
    TempDir dir;
    Rng rng(4);
    Tensor img = Tensor::uniform({3, 8, 8}, rng, 0.0, 1.0);
    write_ppm(dir.file("x.ppm"), img);
    Tensor back = decode_image(dir.file("x.ppm"));
    for (std::size_t i = 0; i < img.numel(); ++i)
        CHECK(std::abs(back.data()[i] - img.data()[i]) <= 0.5 / 255.0 + 1e-9);
}

TEST_CASE("synthetic corpus determinism") {
    TempDir a, b;
    SynthSpec spec;
    spec.family = SynthFamily::patch_swap;
    spec.samples_per_class = 16;
    spec.frames_per_video = 8;
    spec.seed = 7;
    const std::string ma = synthesize_dataset(spec, a.path.string(), "train");
    const std::string mb = synthesize_dataset(spec, b.path.string(), "train");
    auto ra = load_manifest(ma);
    auto rb = load_manifest(mb);
    REQUIRE(ra.size() == rb.size());
    REQUIRE(ra.size() == 32);  // exact class balance
    std::size_t fakes = 0;
    for (const auto& r : ra) fakes += static_cast<std::size_t>(r.label);
    CHECK(fakes == 16);
    for (std::size_t i = 0; i < ra.size(); ++i)
        CHECK(file_digest(ra[i].path) == file_digest(rb[i].path));
}

TEST_CASE("different seeds give different corpora") {
    TempDir a;
    SynthSpec s1;
    s1.samples_per_class = 4;
    s1.frames_per_video = 4;
    s1.seed = 1;
    SynthSpec s2 = s1;
    s2.seed = 2;
    auto m1 = synthesize_dataset(s1, a.path.string(), "s1");
    auto m2 = synthesize_dataset(s2, a.path.string(), "s2");
    CHECK(file_digest(load_manifest(m1)[0].path) != file_digest(load_manifest(m2)[0].path));
}

TEST_CASE("manipulation support is local and within bounds for every family") {
    for (auto family : {SynthFamily::patch_swap, SynthFamily::hf_noise_blob,
                        SynthFamily::warp_band, SynthFamily::blend_seam}) {
        TempDir dir;
        SynthSpec spec;
        spec.family = family;
        spec.samples_per_class = 8;
        spec.frames_per_video = 4;
        spec.seed = 11;
        auto recs = load_manifest(synthesize_dataset(spec, dir.path.string(), "x"));
        REQUIRE(recs.size() == 16);
        for (std::size_t i = 0; i < 8; ++i) {
            Tensor real = decode_image(recs[i].path);
            Tensor fake = decode_image(recs[i + 8].path);  // paired by construction order
            REQUIRE(real.shape() == fake.shape());
            const std::size_t hw = real.size(1) * real.size(2);
            std::size_t modified = 0;
            for (std::size_t px = 0; px < hw; ++px) {
                bool diff = false;
                for (std::size_t c = 0; c < 3; ++c)
                    if (real.data()[c * hw + px] != fake.data()[c * hw + px]) diff = true;
                if (diff) ++modified;
            }
            const double frac = static_cast<double>(modified) / static_cast<double>(hw);
            CAPTURE(to_string(family));
            CHECK(frac >= 0.01);
            CHECK(frac <= 0.40);
        }
    }
}

TEST_CASE("perturbation severity zero is the identity for every kind") {
    Rng rng(5);
    Tensor img = Tensor::uniform({3, 32, 32}, rng, 0.0, 1.0);
    for (int k = 0; k < kPerturbationKinds; ++k) {
        Rng prng(9);
        Tensor out = perturb(img, {static_cast<PerturbationKind>(k), 0}, prng);
        CHECK(out.same_impl(img));
    }
    Rng prng(9);
    CHECK_THROWS_AS(perturb(img, {PerturbationKind::contrast, 6}, prng), ConfigError);
    CHECK_THROWS_AS(perturb(img, {PerturbationKind::contrast, -1}, prng), ConfigError);
}

TEST_CASE("contrast pivots at the mean") {
    Tensor img = Tensor::full({3, 16, 16}, 0.5);
    Rng prng(9);
    Tensor out = perturb(img, {PerturbationKind::contrast, 5}, prng);
    for (double v : out.data()) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("noise severity matches the declared sigma") {
    Tensor img = Tensor::full({3, 64, 64}, 0.5);
    const double sigmas[6] = {0.0, 0.02, 0.04, 0.08, 0.12, 0.16};
    for (int sev = 1; sev <= 3; ++sev) {  // far from the clamp range at 0.5
        Rng prng(100 + sev);
        Tensor out = perturb(img, {PerturbationKind::gaussian_noise, sev}, prng);
        double m = 0.0, m2 = 0.0;
        for (std::size_t i = 0; i < out.numel(); ++i) {
            const double d = out.data()[i] - 0.5;
            m += d;
            m2 += d * d;
        }
        m /= static_cast<double>(out.numel());
        const double stddev = std::sqrt(m2 / static_cast<double>(out.numel()) - m * m);
        CHECK(std::abs(stddev - sigmas[sev]) < 0.1 * sigmas[sev]);
    }
}

TEST_CASE("blur preserves constants and smooths edges") {
    Tensor flat = Tensor::full({3, 16, 16}, 0.25);
    Rng prng(1);
    Tensor out = perturb(flat, {PerturbationKind::gaussian_blur, 3}, prng);
    for (double v : out.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("occlusion paints gray blocks") {
    Tensor img = Tensor::full({3, 32, 32}, 1.0);
    Rng prng(2);
    Tensor out = perturb(img, {PerturbationKind::block_occlusion, 1}, prng);
    std::size_t grays = 0;
    for (double v : out.data()) grays += (v == 0.5);
    CHECK(grays == 3 * 64);  // one 8x8 block in all channels
}

TEST_CASE("pixelation averages blocks") {
    // 2x2 checkerboard scaled up: factor-16 pixelation of a 32x32 makes each
    // 16x16 cell constant at its mean
    std::vector<double> vals(3 * 32 * 32);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 32; ++y)
            for (std::size_t x = 0; x < 32; ++x)
                vals[(c * 32 + y) * 32 + x] = ((x / 4 + y / 4) % 2) ? 1.0 : 0.0;
    Tensor img = Tensor::from_data({3, 32, 32}, std::move(vals));
    Rng prng(3);
    Tensor out = perturb(img, {PerturbationKind::pixelation, 5}, prng);
    CHECK(out.data()[0] == doctest::Approx(0.5));
}

TEST_CASE("preprocess identity resize and standardization") {
    PreprocessConfig cfg;
    cfg.image_size = 8;
    Rng rng(6);
    Tensor img = Tensor::uniform({3, 8, 8}, rng, 0.0, 1.0);
    Tensor out = preprocess(img, cfg);
    for (std::size_t i = 0; i < img.numel(); ++i)
        CHECK(out.data()[i] == doctest::Approx((img.data()[i] - 0.5) / 0.5).epsilon(1e-6));

    Tensor flat = Tensor::full({3, 4, 4}, 0.5);
    Tensor z = preprocess(flat, cfg);
    for (double v : z.data()) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("2x2 to 1x1 bilinear averages the four pixels") {
    Tensor img = Tensor::from_data({3, 2, 2}, {0.0, 1.0, 0.5, 0.5,  //
                                               0.2, 0.4, 0.6, 0.8,  //
                                               1.0, 1.0, 0.0, 0.0});
    Tensor out = bilinear_resize(img, 1);
    CHECK(out.data()[0] == doctest::Approx(0.5));
    CHECK(out.data()[1] == doctest::Approx(0.5));
    CHECK(out.data()[2] == doctest::Approx(0.5));
}

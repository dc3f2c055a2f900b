#include <doctest.h>

#include <cmath>
#include <random>

#include "octarec/colormap.hpp"
#include "octarec/errors.hpp"
#include "octarec/image.hpp"
#include "octarec/pnm_io.hpp"
#include "test_util.hpp"

using namespace octarec;

TEST_CASE("bilinear_sample returns exact pixel values at integer coordinates") {
    Image2D img(4, 3);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<float> d(0.0f, 1.0f);
    for (auto& v : img.data) v = d(rng);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 4; ++x)
            CHECK(bilinear_sample(img, x, y) == img.at(x, y));
}

TEST_CASE("bilinear_sample blends the four neighbors") {
    Image2D img(2, 2);
    img.at(0, 0) = 0.0f;
    img.at(1, 0) = 1.0f;
    img.at(0, 1) = 2.0f;
    img.at(1, 1) = 3.0f;
    CHECK(bilinear_sample(img, 0.5, 0.5) == doctest::Approx(1.5));
    CHECK(bilinear_sample(img, 0.5, 0.0) == doctest::Approx(0.5));
    CHECK(bilinear_sample(img, 0.0, 0.5) == doctest::Approx(1.0));
}

TEST_CASE("bilinear_sample rejects out-of-range coordinates") {
    Image2D img(2, 2, 0.5f);
    CHECK_THROWS_AS(bilinear_sample(img, -0.1, 0.0), std::domain_error);
    CHECK_THROWS_AS(bilinear_sample(img, 0.0, 1.01), std::domain_error);
    CHECK_THROWS_AS(bilinear_sample(img, 2.0, 0.0), std::domain_error);
}

TEST_CASE("bilinear_sample is continuous and bounded by its neighbors") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<float> dv(0.0f, 1.0f);
    Image2D img(16, 16);
    for (auto& v : img.data) v = dv(rng);

    std::uniform_real_distribution<double> dc(0.0, 15.0);
    const double eps = 1e-4;
    for (int trial = 0; trial < 500; ++trial) {
        const double x = dc(rng), y = dc(rng);
        const double v = bilinear_sample(img, x, y);
        // bounded by the 4 surrounding pixel values
        const int x0 = std::min(static_cast<int>(x), 14), y0 = std::min(static_cast<int>(y), 14);
        float lo = 1e9f, hi = -1e9f;
        for (int dy = 0; dy <= 1; ++dy)
            for (int dx = 0; dx <= 1; ++dx) {
                lo = std::min(lo, img.at(x0 + dx, y0 + dy));
                hi = std::max(hi, img.at(x0 + dx, y0 + dy));
            }
        CHECK(v >= lo - 1e-6);
        CHECK(v <= hi + 1e-6);
        // continuity: a tiny step moves the value at most max-slope * step
        if (x + eps <= 15.0) {
            const double v2 = bilinear_sample(img, x + eps, y);
            CHECK(std::abs(v2 - v) <= eps * 2.0 + 1e-9); // values in [0,1] => slope <= 2/px
        }
    }
}

TEST_CASE("PGM: hand-encoded 2x2 file decodes to [0,1,0,1]") {
    testutil::TempDir td("pgm");
    const std::string bytes = std::string("P5\n2 2\n255\n") + '\x00' + '\xff' + '\x00' + '\xff';
    testutil::write_bytes(td / "a.pgm", bytes);
    Image2D img = load_pgm(td / "a.pgm");
    CHECK(img.width == 2);
    CHECK(img.height == 2);
    CHECK(img.data[0] == 0.0f);
    CHECK(img.data[1] == 1.0f);
    CHECK(img.data[2] == 0.0f);
    CHECK(img.data[3] == 1.0f);

    // writer emits exactly the same bytes back
    save_pgm(img, td / "b.pgm");
    auto out = testutil::read_bytes(td / "b.pgm");
    CHECK(std::string(out.begin(), out.end()) == bytes);
}

TEST_CASE("PGM round-trip is accurate to 1/255") {
    testutil::TempDir td("pgm_rt");
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> d(0.0f, 1.0f);
    Image2D img(9, 5);
    for (auto& v : img.data) v = d(rng);
    save_pgm(img, td / "x.pgm");
    Image2D back = load_pgm(td / "x.pgm");
    REQUIRE(back.width == img.width);
    for (size_t i = 0; i < img.size(); ++i)
        CHECK(std::abs(back.data[i] - img.data[i]) <= 0.5f / 255.0f + 1e-6f);
}

TEST_CASE("PGM rejects bad magic and truncated payloads") {
    testutil::TempDir td("pgm_bad");
    testutil::write_bytes(td / "p2.pgm", "P2\n2 2\n255\n0 1 0 1\n");
    CHECK_THROWS_AS(load_pgm(td / "p2.pgm"), format_error);
    testutil::write_bytes(td / "short.pgm", std::string("P5\n2 2\n255\n") + '\x00');
    CHECK_THROWS_AS(load_pgm(td / "short.pgm"), io_error);
    CHECK_THROWS_AS(load_pgm(td / "missing.pgm"), missing_input_error);
}

TEST_CASE("PGM reads 16-bit big-endian payloads") {
    testutil::TempDir td("pgm16");
    // one pixel, value 0x8000 = 32768 -> 32768/65535
    const std::string bytes = std::string("P5\n1 1\n65535\n") + '\x80' + '\x00';
    testutil::write_bytes(td / "w.pgm", bytes);
    Image2D img = load_pgm(td / "w.pgm");
    CHECK(img.data[0] == doctest::Approx(32768.0 / 65535.0));
}

TEST_CASE("PFM: 1x1 image at 0.5 produces the documented 16 bytes") {
    testutil::TempDir td("pfm");
    Image2D img(1, 1, 0.5f);
    save_pfm(img, td / "half.pfm");
    auto out = testutil::read_bytes(td / "half.pfm");
    const std::string expect = std::string("Pf\n1 1\n-1.0\n") + '\x00' + '\x00' + '\x00' + '\x3f';
    CHECK(std::string(out.begin(), out.end()) == expect);
}

TEST_CASE("PFM round-trip is bit exact") {
    testutil::TempDir td("pfm_rt");
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<float> d(-10.0f, 10.0f);
    Image2D img(7, 4);
    for (auto& v : img.data) v = d(rng);
    save_pfm(img, td / "r.pfm");
    Image2D back = load_pfm(td / "r.pfm");
    REQUIRE(back.width == img.width);
    REQUIRE(back.height == img.height);
    for (size_t i = 0; i < img.size(); ++i) CHECK(back.data[i] == img.data[i]);
}

TEST_CASE("PFM rejects 3-channel and big-endian variants") {
    testutil::TempDir td("pfm_bad");
    testutil::write_bytes(td / "color.pfm", "PF\n1 1\n-1.0\n............");
    CHECK_THROWS_AS(load_pfm(td / "color.pfm"), format_error);
    testutil::write_bytes(td / "be.pfm", std::string("Pf\n1 1\n1.0\n") + "\x3f\x00\x00\x00");
    CHECK_THROWS_AS(load_pfm(td / "be.pfm"), format_error);
}

TEST_CASE("depth colormap hits the documented palette anchors") {
    DepthMap d(3, 1);
    d.valid = BinaryMask(3, 1, 1);
    d.image.at(0, 0) = 0.0f;
    d.image.at(1, 0) = 0.5f;
    d.image.at(2, 0) = 1.0f;
    Rgb8Image rgb = depth_colormap_encode(d);
    CHECK(rgb.px(0, 0)[0] == 255);
    CHECK(rgb.px(0, 0)[1] == 0);
    CHECK(rgb.px(0, 0)[2] == 0);
    CHECK(rgb.px(1, 0)[0] == 0);
    CHECK(rgb.px(1, 0)[1] == 255);
    CHECK(rgb.px(1, 0)[2] == 0);
    CHECK(rgb.px(2, 0)[0] == 0);
    CHECK(rgb.px(2, 0)[1] == 0);
    CHECK(rgb.px(2, 0)[2] == 255);
}

TEST_CASE("depth colormap round-trips within 1/255 and keeps the valid mask") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<float> d(0.0f, 1.0f);
    DepthMap dm(40, 25);
    for (int y = 0; y < 25; ++y)
        for (int x = 0; x < 40; ++x) {
            const bool v = (x + y) % 3 != 0;
            dm.valid.at(x, y) = v;
            dm.image.at(x, y) = v ? d(rng) : 0.0f;
        }
    DepthMap back = depth_colormap_decode(depth_colormap_encode(dm));
    int checked = 0;
    for (int y = 0; y < 25; ++y)
        for (int x = 0; x < 40; ++x) {
            CHECK(back.valid.at(x, y) == dm.valid.at(x, y));
            if (dm.valid.at(x, y)) {
                CHECK(std::abs(back.image.at(x, y) - dm.image.at(x, y)) <= 1.0f / 255.0f);
                ++checked;
            }
        }
    CHECK(checked > 500);
}

TEST_CASE("type invariants are enforced") {
    Image2D img(2, 2, 0.0f);
    img.data[1] = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(img.validate(), std::invalid_argument);

    BinaryMask m(2, 2);
    m.bits[0] = 2;
    CHECK_THROWS_AS(m.validate(), std::invalid_argument);

    DepthMap dm(2, 2);
    dm.valid.bits[0] = 1;
    dm.image.data[0] = 1.5f;
    CHECK_THROWS_AS(dm.validate(), std::invalid_argument);
}

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <vector>

#include "dsn/common.hpp"
#include "dsn/rng.hpp"
#include "dsn/superpixel.hpp"
#include "testutil.hpp"

using testutil::TempDir;

namespace {

// Independent (color, position) clustering: full scans, no search windows.
// Matches the production assignment rule whenever the SLIC windows cover the
// whole image, which holds for the small sizes used here.
std::vector<std::int32_t> brute_force_labels(const dsn::ImageSample& image,
                                             const dsn::SegmenterConfig& config) {
    const int h = image.height(), w = image.width(), n = config.n_superpixels;
    std::vector<double> L(static_cast<std::size_t>(h) * w), A(L.size()), B(L.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            dsn::rgb_to_lab(image.pixels.at(0, y, x), image.pixels.at(1, y, x),
                            image.pixels.at(2, y, x), L[i], A[i], B[i]);
        }
    const dsn::SlicSeedGrid grid = dsn::slic_seed_grid(w, h, n);
    const double step = std::sqrt(static_cast<double>(h) * w / n);
    const double sw = (config.slic_compactness / step) * (config.slic_compactness / step);

    struct C {
        double l, a, b, x, y;
    };
    std::vector<C> centers(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        const int px = std::clamp<int>(static_cast<int>(std::lround(grid.x[k])), 0, w - 1);
        const int py = std::clamp<int>(static_cast<int>(std::lround(grid.y[k])), 0, h - 1);
        const std::size_t i = static_cast<std::size_t>(py) * w + px;
        centers[k] = {L[i], A[i], B[i], grid.x[k], grid.y[k]};
    }

    std::vector<std::int32_t> labels(L.size(), -1);
    for (int it = 0; it < config.slic_iterations; ++it) {
        std::vector<std::int32_t> next(L.size(), -1);
        for (std::size_t i = 0; i < L.size(); ++i) {
            const int x = static_cast<int>(i) % w;
            const int y = static_cast<int>(i) / w;
            double best = std::numeric_limits<double>::infinity();
            for (int k = 0; k < n; ++k) {
                const C& c = centers[k];
                const double dl = L[i] - c.l, da = A[i] - c.a, db = B[i] - c.b;
                const double dx = x - c.x, dy = y - c.y;
                const double d = dl * dl + da * da + db * db + sw * (dx * dx + dy * dy);
                if (d < best) {
                    best = d;
                    next[i] = k;
                }
            }
        }
        const bool converged = (next == labels);
        labels = std::move(next);
        if (converged) break;
        std::vector<C> sums(static_cast<std::size_t>(n), {0, 0, 0, 0, 0});
        std::vector<std::int64_t> counts(static_cast<std::size_t>(n), 0);
        for (std::size_t i = 0; i < L.size(); ++i) {
            const int k = labels[i];
            sums[k].l += L[i];
            sums[k].a += A[i];
            sums[k].b += B[i];
            sums[k].x += static_cast<int>(i) % w;
            sums[k].y += static_cast<int>(i) / w;
            ++counts[k];
        }
        for (int k = 0; k < n; ++k) {
            if (counts[k] == 0) continue;
            const double inv = 1.0 / static_cast<double>(counts[k]);
            centers[k] = {sums[k].l * inv, sums[k].a * inv, sums[k].b * inv, sums[k].x * inv,
                          sums[k].y * inv};
        }
    }
    return labels;
}

dsn::ImageSample half_black_white(int h, int w) {
    dsn::ImageSample s;
    s.pixels = dsn::Tensor({3, h, w});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) s.pixels.at(c, y, x) = x < w / 2 ? 0.0 : 1.0;
    s.score = 0.0;
    return s;
}

}  // namespace

TEST_CASE("rgb_to_lab matches published sRGB reference values") {
    double l, a, b;
    dsn::rgb_to_lab(1.0, 1.0, 1.0, l, a, b);
    CHECK(l == doctest::Approx(100.0).epsilon(1e-4));
    CHECK(std::fabs(a) < 0.01);
    CHECK(std::fabs(b) < 0.01);

    dsn::rgb_to_lab(0.0, 0.0, 0.0, l, a, b);
    CHECK(l == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));

    dsn::rgb_to_lab(1.0, 0.0, 0.0, l, a, b);
    CHECK(l == doctest::Approx(53.2408).epsilon(1e-3));
    CHECK(a == doctest::Approx(80.0925).epsilon(1e-3));
    CHECK(b == doctest::Approx(67.2032).epsilon(1e-3));

    dsn::rgb_to_lab(0.0, 1.0, 0.0, l, a, b);
    CHECK(l == doctest::Approx(87.7347).epsilon(1e-3));
    CHECK(a == doctest::Approx(-86.1827).epsilon(1e-3));
    CHECK(b == doctest::Approx(83.1793).epsilon(1e-3));

    dsn::rgb_to_lab(0.0, 0.0, 1.0, l, a, b);
    CHECK(l == doctest::Approx(32.2970).epsilon(1e-3));
    CHECK(a == doctest::Approx(79.1875).epsilon(1e-3));
    CHECK(b == doctest::Approx(-107.8602).epsilon(1e-3));
}

TEST_CASE("seed grid picks the squarest factorization, ties to more columns") {
    dsn::SlicSeedGrid g = dsn::slic_seed_grid(10, 10, 2);
    CHECK(g.nx == 2);
    CHECK(g.ny == 1);
    CHECK(g.x[0] == doctest::Approx(2.5));
    CHECK(g.x[1] == doctest::Approx(7.5));
    CHECK(g.y[0] == doctest::Approx(5.0));

    g = dsn::slic_seed_grid(12, 8, 6);
    CHECK(g.nx == 3);
    CHECK(g.ny == 2);

    g = dsn::slic_seed_grid(20, 20, 4);
    CHECK(g.nx == 2);
    CHECK(g.ny == 2);

    CHECK_THROWS_WITH_AS(dsn::slic_seed_grid(4, 4, 5), doctest::Contains("InvalidConfig"),
                         dsn::Error);
}

TEST_CASE("slic separates the half-black half-white image into its halves") {
    dsn::ImageSample img = half_black_white(10, 10);
    dsn::SegmenterConfig cfg;
    cfg.n_superpixels = 2;
    std::vector<std::int32_t> labels = dsn::slic_segment_labels(img, cfg);

    const std::int32_t left = labels[0];
    const std::int32_t right = labels[5];
    CHECK(left != right);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x)
            CHECK(labels[static_cast<std::size_t>(y) * 10 + x] == (x < 5 ? left : right));

    std::vector<std::int32_t> oracle = brute_force_labels(img, cfg);
    CHECK(labels == oracle);
}

TEST_CASE("slic equals the brute-force clustering oracle on random images") {
    dsn::Rng rng(2024);
    const struct {
        int h, w, n;
    } cases[] = {{12, 12, 4}, {10, 14, 2}, {16, 16, 4}, {9, 9, 3}};
    for (const auto& tc : cases) {
        dsn::ImageSample img;
        img.pixels = dsn::Tensor({3, tc.h, tc.w});
        for (std::int64_t i = 0; i < img.pixels.numel(); ++i)
            img.pixels[i] = rng.uniform(0.0, 1.0);
        dsn::SegmenterConfig cfg;
        cfg.n_superpixels = tc.n;
        CAPTURE(tc.h);
        CAPTURE(tc.w);
        CAPTURE(tc.n);
        CHECK(dsn::slic_segment_labels(img, cfg) == brute_force_labels(img, cfg));
    }
}

TEST_CASE("slic labels cover every pixel and stay within range") {
    dsn::ImageSample img = testutil::make_sample(24, 33, 0.0, 8);
    dsn::SegmenterConfig cfg;
    cfg.n_superpixels = 6;
    std::vector<std::int32_t> labels = dsn::slic_segment_labels(img, cfg);
    REQUIRE(labels.size() == 24u * 33u);
    for (std::int32_t l : labels) {
        CHECK(l >= 0);
        CHECK(l < 6);
    }
}

TEST_CASE("slic probability map is one-hot") {
    dsn::ImageSample img = testutil::make_sample(14, 18, 0.0, 9);
    dsn::SegmenterConfig cfg;
    cfg.n_superpixels = 4;
    dsn::SuperpixelProbMap map = dsn::segment(img, cfg);
    REQUIRE(map.probs.shape() == std::vector<int>{4, 14, 18});
    std::vector<std::int32_t> labels = dsn::slic_segment_labels(img, cfg);
    for (int y = 0; y < 14; ++y)
        for (int x = 0; x < 18; ++x) {
            double sum = 0.0;
            for (int c = 0; c < 4; ++c) {
                const double p = map.probs.at(c, y, x);
                CHECK((p == 0.0 || p == 1.0));
                sum += p;
            }
            CHECK(sum == doctest::Approx(1.0));
            CHECK(map.probs.at(labels[static_cast<std::size_t>(y) * 18 + x], y, x) == 1.0);
        }
}

TEST_CASE("cnn probability map rows sum to one for odd sizes") {
    dsn::SegmenterConfig cfg;
    cfg.backend = dsn::SegmenterBackend::Cnn;
    cfg.n_superpixels = 6;
    cfg.cnn_channels = {4, 4, 4, 4};
    dsn::Rng rng(77);
    dsn::CnnSegmenterParams params = dsn::init_cnn_segmenter(cfg, rng);

    for (auto [h, w] : {std::pair{15, 21}, std::pair{32, 17}}) {
        dsn::ImageSample img = testutil::make_sample(h, w, 0.0, 31);
        dsn::SuperpixelProbMap map = dsn::segment(img, cfg, &params);
        REQUIRE(map.probs.shape() == std::vector<int>{6, h, w});
        double worst = 0.0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double sum = 0.0;
                for (int c = 0; c < 6; ++c) sum += map.probs.at(c, y, x);
                worst = std::max(worst, std::fabs(sum - 1.0));
            }
        CHECK(worst < 1e-5);
    }
}

TEST_CASE("cnn backend requires parameters and matching widths") {
    dsn::SegmenterConfig cfg;
    cfg.backend = dsn::SegmenterBackend::Cnn;
    cfg.n_superpixels = 6;
    cfg.cnn_channels = {4, 4, 4, 4};
    dsn::ImageSample img = testutil::make_sample(12, 12, 0.0, 3);
    CHECK_THROWS_WITH_AS(dsn::segment(img, cfg), doctest::Contains("BackendParamsMissing"),
                         dsn::Error);

    dsn::Rng rng(1);
    dsn::SegmenterConfig other = cfg;
    other.n_superpixels = 5;
    dsn::CnnSegmenterParams wrong = dsn::init_cnn_segmenter(other, rng);
    CHECK_THROWS_WITH_AS(dsn::segment(img, cfg, &wrong), doctest::Contains("ParamShapeMismatch"),
                         dsn::Error);
}

TEST_CASE("to_label_map breaks ties toward the lowest channel") {
    dsn::SuperpixelProbMap map;
    map.n_superpixels = 3;
    map.probs = dsn::Tensor({3, 1, 2});
    map.probs.at(0, 0, 0) = 0.4;
    map.probs.at(1, 0, 0) = 0.4;
    map.probs.at(2, 0, 0) = 0.2;
    map.probs.at(0, 0, 1) = 0.1;
    map.probs.at(1, 0, 1) = 0.2;
    map.probs.at(2, 0, 1) = 0.7;
    std::vector<std::int32_t> labels = dsn::to_label_map(map);
    CHECK(labels[0] == 0);
    CHECK(labels[1] == 2);
}

TEST_CASE("probability blob round trip and corruption handling") {
    TempDir dir("blob");
    dsn::ImageSample img = testutil::make_sample(11, 13, 0.0, 19);
    dsn::SegmenterConfig cfg;
    cfg.backend = dsn::SegmenterBackend::Cnn;
    cfg.n_superpixels = 4;
    cfg.cnn_channels = {3, 3, 3, 3};
    dsn::Rng rng(5);
    dsn::CnnSegmenterParams params = dsn::init_cnn_segmenter(cfg, rng);
    dsn::SuperpixelProbMap map = dsn::segment(img, cfg, &params);

    const std::string path = dir.file("map.bin");
    dsn::write_probmap_blob(path, map);
    dsn::SuperpixelProbMap back = dsn::read_probmap_blob(path);
    REQUIRE(back.probs.shape() == map.probs.shape());
    CHECK(back.n_superpixels == 4);
    double worst = 0.0;
    for (std::int64_t i = 0; i < map.probs.numel(); ++i)
        worst = std::max(worst, std::fabs(map.probs[i] - back.probs[i]));
    CHECK(worst < 1e-6);  // float32 storage

    // truncation
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::ofstream(dir.file("short.bin"), std::ios::binary)
        << bytes.substr(0, bytes.size() / 2);
    CHECK_THROWS_WITH_AS(dsn::read_probmap_blob(dir.file("short.bin")),
                         doctest::Contains("IoError"), dsn::Error);

    // magic corruption
    bytes[0] = 'Q';
    std::ofstream(dir.file("bad.bin"), std::ios::binary) << bytes;
    CHECK_THROWS_WITH_AS(dsn::read_probmap_blob(dir.file("bad.bin")),
                         doctest::Contains("IoError"), dsn::Error);
}

TEST_CASE("label png uses at most n distinct palette colors") {
    TempDir dir("labelpng");
    dsn::ImageSample img = testutil::make_sample(20, 20, 0.0, 55);
    dsn::SegmenterConfig cfg;
    cfg.n_superpixels = 4;
    std::vector<std::int32_t> labels = dsn::slic_segment_labels(img, cfg);
    dsn::write_label_png(dir.file("lab.png"), labels, 20, 20);

    dsn::ImageSample decoded = dsn::decode_image(dir.file("lab.png"));
    std::set<std::array<int, 3>> colors;
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 20; ++x)
            colors.insert({static_cast<int>(std::lround(decoded.pixels.at(0, y, x) * 255)),
                           static_cast<int>(std::lround(decoded.pixels.at(1, y, x) * 255)),
                           static_cast<int>(std::lround(decoded.pixels.at(2, y, x) * 255))});
    CHECK(colors.size() <= 4u);
    CHECK(colors.size() >= 2u);

    // palette entries for distinct labels differ
    unsigned char r0, g0, b0, r1, g1, b1;
    dsn::palette_color(0, r0, g0, b0);
    dsn::palette_color(1, r1, g1, b1);
    CHECK((r0 != r1 || g0 != g1 || b0 != b1));
}

TEST_CASE("segmenter rejects more superpixels than pixels") {
    dsn::ImageSample img = testutil::make_sample(5, 5, 0.0, 2);
    dsn::SegmenterConfig cfg;
    cfg.n_superpixels = 26;
    CHECK_THROWS_WITH_AS(dsn::slic_segment_labels(img, cfg), doctest::Contains("InvalidConfig"),
                         dsn::Error);
}

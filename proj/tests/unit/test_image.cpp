#include <doctest.h>

#include <fstream>
#include <string>

#include "dsn/common.hpp"
#include "dsn/image.hpp"
#include "testutil.hpp"

using testutil::TempDir;

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    os << text;
}

}  // namespace

TEST_CASE("manifest loads scores, optional columns, and score scale") {
    TempDir dir("manifest");
    for (const char* name : {"a.png", "b.png", "c.png"})
        dsn::write_image_png(dir.file(name), testutil::make_rgb(4, 4, 1));
    write_text(dir.file("m.csv"),
               "image_path,score,distortion_type,reference_id\n"
               "a.png,10.5,blur,r1\n"
               "b.png,90,,r2\n"
               "c.png,50.25,jpeg,\n");
    dsn::DatasetManifest m = dsn::load_manifest(dir.file("m.csv"));
    CHECK(m.name == "m");
    REQUIRE(m.entries.size() == 3);
    CHECK(m.entries[0].image_path == "a.png");
    CHECK(m.entries[0].score == doctest::Approx(10.5));
    CHECK(m.entries[0].distortion_type.value() == "blur");
    CHECK_FALSE(m.entries[1].distortion_type.has_value());
    CHECK(m.entries[1].reference_id.value() == "r2");
    CHECK_FALSE(m.entries[2].reference_id.has_value());
    CHECK(m.score_scale.first == doctest::Approx(10.5));
    CHECK(m.score_scale.second == doctest::Approx(90.0));
    CHECK(m.score_range() == doctest::Approx(79.5));
}

TEST_CASE("manifest tolerates reordered columns and quoted fields") {
    TempDir dir("manifest2");
    for (const char* name : {"with, comma.png", "plain.png"})
        dsn::write_image_png(dir.file(name), testutil::make_rgb(4, 4, 2));
    write_text(dir.file("m.csv"),
               "score,reference_id,image_path\n"
               "5,r1,\"with, comma.png\"\n"
               "7,\"r\"\"2\",plain.png\n");
    dsn::DatasetManifest m = dsn::load_manifest(dir.file("m.csv"));
    REQUIRE(m.entries.size() == 2);
    CHECK(m.entries[0].image_path == "with, comma.png");
    CHECK(m.entries[1].reference_id.value() == "r\"2");
}

TEST_CASE("manifest contract errors") {
    TempDir dir("manifest3");
    write_text(dir.file("noscore.csv"), "image_path,mos\na.png,3\n");
    CHECK_THROWS_WITH_AS(dsn::load_manifest(dir.file("noscore.csv")),
                         doctest::Contains("MissingColumn"), dsn::Error);

    write_text(dir.file("empty.csv"), "image_path,score\n");
    CHECK_THROWS_WITH_AS(dsn::load_manifest(dir.file("empty.csv")),
                         doctest::Contains("EmptyManifest"), dsn::Error);

    write_text(dir.file("bad.csv"), "image_path,score\na.png,abc\n");
    CHECK_THROWS_WITH_AS(dsn::load_manifest(dir.file("bad.csv")),
                         doctest::Contains("UnparsableScore"), dsn::Error);

    CHECK_THROWS_AS(dsn::load_manifest(dir.file("absent.csv")), dsn::Error);
    try {
        dsn::load_manifest(dir.file("absent.csv"));
    } catch (const dsn::Error& e) {
        CHECK(e.code() == dsn::Errc::IoError);
    }
}

TEST_CASE("csv splitter honors quoting") {
    auto f = dsn::split_csv_line("a,\"b,c\",\"d\"\"e\",f,");
    REQUIRE(f.size() == 5);
    CHECK(f[0] == "a");
    CHECK(f[1] == "b,c");
    CHECK(f[2] == "d\"e");
    CHECK(f[3] == "f");
    CHECK(f[4] == "");
}

TEST_CASE("png round trip preserves 8-bit pixels and relative path resolution") {
    TempDir dir("png");
    dsn::Tensor img = testutil::make_rgb(20, 30, 77);
    // snap to the 8-bit grid so the round trip is exact
    for (std::int64_t i = 0; i < img.numel(); ++i)
        img[i] = std::round(img[i] * 255.0) / 255.0;
    std::filesystem::create_directories(dir.path() / "sub");
    dsn::write_image_png(dir.file("sub/x.png"), img);

    write_text(dir.file("m.csv"), "image_path,score\nsub/x.png,42\n");
    dsn::DatasetManifest m = dsn::load_manifest(dir.file("m.csv"));
    dsn::AccessLog log;
    dsn::ImageSample s = dsn::load_sample(m, m.entries[0], &log);
    CHECK(s.height() == 20);
    CHECK(s.width() == 30);
    CHECK(s.score == doctest::Approx(42.0));
    REQUIRE(log.paths().size() == 1);
    CHECK(log.paths()[0] == dsn::resolve_entry_path(m, m.entries[0]));
    double max_err = 0.0;
    for (std::int64_t i = 0; i < img.numel(); ++i)
        max_err = std::max(max_err, std::fabs(s.pixels[i] - img[i]));
    CHECK(max_err < 1e-9);
}

TEST_CASE("decode_image rejects missing files with an io error") {
    try {
        dsn::decode_image("/nonexistent/nowhere.png");
        FAIL("expected a throw");
    } catch (const dsn::Error& e) {
        CHECK(e.code() == dsn::Errc::IoError);
    }
}

TEST_CASE("random_crop is deterministic per seed and respects bounds") {
    dsn::ImageSample s = testutil::make_sample(40, 50, 3.0, 5);
    dsn::ImageSample a = dsn::random_crop(s, 16, 24, 999);
    dsn::ImageSample b = dsn::random_crop(s, 16, 24, 999);
    dsn::ImageSample c = dsn::random_crop(s, 16, 24, 1000);
    CHECK(a.height() == 16);
    CHECK(a.width() == 24);
    CHECK(a.score == doctest::Approx(3.0));
    CHECK(a.pixels.vec() == b.pixels.vec());
    bool differs = false;
    for (std::int64_t i = 0; i < a.pixels.numel() && !differs; ++i)
        differs = a.pixels[i] != c.pixels[i];
    CHECK(differs);

    // crop contents must be a contiguous window of the source
    bool found = false;
    for (int oy = 0; oy + 16 <= 40 && !found; ++oy)
        for (int ox = 0; ox + 24 <= 50 && !found; ++ox) {
            bool match = true;
            for (int y = 0; y < 16 && match; ++y)
                for (int x = 0; x < 24 && match; ++x)
                    match = s.pixels.at(0, oy + y, ox + x) == a.pixels.at(0, y, x);
            found = match;
        }
    CHECK(found);
}

TEST_CASE("random_crop at the exact size is the whole image") {
    dsn::ImageSample s = testutil::make_sample(12, 9, 1.0, 6);
    dsn::ImageSample a = dsn::random_crop(s, 12, 9, 4);
    CHECK(a.pixels.vec() == s.pixels.vec());
}

TEST_CASE("random_crop larger than the image is rejected") {
    dsn::ImageSample s = testutil::make_sample(12, 9, 1.0, 6);
    CHECK_THROWS_WITH_AS(dsn::random_crop(s, 13, 9, 4), doctest::Contains("CropTooLarge"),
                         dsn::Error);
}

TEST_CASE("write_manifest_csv round-trips with absolute paths") {
    TempDir dir("wm");
    testutil::CorpusOptions opt;
    opt.count = 4;
    std::string path = testutil::write_corpus(dir, opt);
    dsn::DatasetManifest m = dsn::load_manifest(path);
    dsn::write_manifest_csv(dir.file("out.csv"), m);
    dsn::DatasetManifest back = dsn::load_manifest(dir.file("out.csv"));
    REQUIRE(back.entries.size() == m.entries.size());
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        CHECK(back.entries[i].score == doctest::Approx(m.entries[i].score));
        CHECK(back.entries[i].image_path ==
              dsn::resolve_entry_path(m, m.entries[i]));
        CHECK(back.entries[i].reference_id == m.entries[i].reference_id);
    }
    // absolute entries resolve to themselves wherever the manifest lives
    dsn::ImageSample s = dsn::load_sample(back, back.entries[0]);
    CHECK(s.height() == 48);
}

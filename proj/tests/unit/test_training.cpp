#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "dsn/common.hpp"
#include "dsn/model.hpp"
#include "dsn/training.hpp"
#include "testutil.hpp"

using testutil::TempDir;
namespace nn = dsn::nn;

namespace {

dsn::TrainConfig quick_train(int epochs = 2, std::uint64_t seed = 7) {
    dsn::TrainConfig tc;
    tc.epochs = epochs;
    tc.batch_size = 4;
    tc.learning_rate = 1e-3;
    tc.seed = seed;
    return tc;
}

}  // namespace

TEST_CASE("l1 loss averages absolute errors") {
    CHECK(dsn::l1_loss({1.0, 2.0, 3.0}, {1.0, 4.0, 0.0}) == doctest::Approx(5.0 / 3.0));
    CHECK(dsn::l1_loss({5.0}, {5.0}) == doctest::Approx(0.0));
    CHECK_THROWS_WITH_AS(dsn::l1_loss({}, {}), doctest::Contains("EmptyBatch"), dsn::Error);
    CHECK_THROWS_WITH_AS(dsn::l1_loss({1.0}, {1.0, 2.0}), doctest::Contains("LengthMismatch"),
                         dsn::Error);
}

TEST_CASE("regularized loss adds lambda times squared trainable weights") {
    dsn::PipelineConfig pipe = testutil::tiny_pipeline(dsn::AblationVariant::BaselineArbitrary);
    dsn::ModelBundle bundle = dsn::init_bundle(pipe, 3);

    double manual = 0.0;
    for (auto* p : bundle.trainable_params())
        for (std::int64_t i = 0; i < p->value.numel(); ++i) manual += p->value[i] * p->value[i];

    CHECK(dsn::sum_squared_weights(bundle) == doctest::Approx(manual).epsilon(1e-12));
    const double base = 2.5;
    CHECK(dsn::regularized_loss(base, bundle, 5e-4) ==
          doctest::Approx(base + 5e-4 * manual).epsilon(1e-12));
    CHECK(dsn::regularized_loss(base, bundle, 0.0) == base);  // exact identity
    CHECK_THROWS_WITH_AS(dsn::regularized_loss(base, bundle, -1.0),
                         doctest::Contains("InvalidConfig"), dsn::Error);
}

TEST_CASE("step schedule halves the rate every step window") {
    dsn::TrainConfig tc;
    tc.learning_rate = 1e-3;
    tc.lr_gamma = 0.5;
    tc.lr_step_epochs = 10;
    CHECK(tc.lr_at_epoch(0) == doctest::Approx(1e-3));
    CHECK(tc.lr_at_epoch(9) == doctest::Approx(1e-3));
    CHECK(tc.lr_at_epoch(10) == doctest::Approx(5e-4));
    CHECK(tc.lr_at_epoch(25) == doctest::Approx(2.5e-4));

    tc.schedule = dsn::LrSchedule::None;
    CHECK(tc.lr_at_epoch(25) == doctest::Approx(1e-3));
}

TEST_CASE("train config validation") {
    dsn::TrainConfig tc;
    tc.learning_rate = 0.0;
    CHECK_THROWS_WITH_AS(tc.validate(), doctest::Contains("InvalidConfig"), dsn::Error);
    tc = dsn::TrainConfig{};
    tc.batch_size = 0;
    CHECK_THROWS_AS(tc.validate(), dsn::Error);
    tc = dsn::TrainConfig{};
    tc.epochs = -1;
    CHECK_THROWS_AS(tc.validate(), dsn::Error);
    tc = dsn::TrainConfig{};
    tc.crop_size = {{0, 16}};
    CHECK_THROWS_AS(tc.validate(), dsn::Error);
}

TEST_CASE("adam drives a parameter toward a fixed target") {
    nn::ParamTensor w("w", dsn::Tensor({1}));
    w.value[0] = 5.0;
    dsn::Adam opt({&w});
    for (int i = 0; i < 400; ++i) {
        nn::zero_grads({&w});
        nn::Var loss = nn::abs_diff(nn::pick(nn::leaf(w), 0), 1.25);
        nn::backward(loss);
        opt.step(0.05);
    }
    CHECK(std::fabs(w.value[0] - 1.25) < 0.05);
}

TEST_CASE("training decreases loss on a small corpus and logs the schedule") {
    TempDir dir("train");
    testutil::CorpusOptions opt;
    opt.count = 6;
    opt.height = 32;
    opt.width = 32;
    dsn::DatasetManifest m = dsn::load_manifest(testutil::write_corpus(dir, opt));

    dsn::PipelineConfig pipe = testutil::tiny_pipeline(dsn::AblationVariant::Full);
    dsn::TrainConfig tc = quick_train(12, 21);
    tc.learning_rate = 5e-3;
    tc.lr_step_epochs = 5;
    dsn::TrainResult res = dsn::train_on_manifest(m, tc, pipe);

    REQUIRE(res.log.size() == 12);
    CHECK(res.log.front().epoch == 1);
    CHECK(res.log.back().epoch == 12);
    CHECK(res.log[0].lr == doctest::Approx(5e-3));
    CHECK(res.log[5].lr == doctest::Approx(2.5e-3));
    CHECK(res.log[10].lr == doctest::Approx(1.25e-3));
    CHECK(res.log.back().mean_loss < res.log.front().mean_loss);

    const std::string log_path = dir.file("log.csv");
    dsn::write_training_log(log_path, res.log);
    std::ifstream is(log_path);
    std::string header;
    std::getline(is, header);
    CHECK(header == "epoch,mean_loss,lr");
    int rows = 0;
    std::string line;
    while (std::getline(is, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 12);
}

TEST_CASE("training is reproducible under the seed") {
    TempDir dir("repro");
    testutil::CorpusOptions opt;
    opt.count = 5;
    opt.height = 32;
    opt.width = 32;
    dsn::DatasetManifest m = dsn::load_manifest(testutil::write_corpus(dir, opt));
    dsn::PipelineConfig pipe = testutil::tiny_pipeline(dsn::AblationVariant::MultiOnly);

    dsn::TrainResult a = dsn::train_on_manifest(m, quick_train(3, 77), pipe);
    dsn::TrainResult b = dsn::train_on_manifest(m, quick_train(3, 77), pipe);
    dsn::TrainResult c = dsn::train_on_manifest(m, quick_train(3, 78), pipe);

    dsn::ImageSample probe = testutil::make_sample(40, 40, 0.0, 999);
    const double pa = dsn::score_image(a.bundle, probe);
    const double pb = dsn::score_image(b.bundle, probe);
    const double pc = dsn::score_image(c.bundle, probe);
    CHECK(pa == pb);
    CHECK(pa != pc);
    for (std::size_t i = 0; i < a.log.size(); ++i)
        CHECK(a.log[i].mean_loss == b.log[i].mean_loss);
}

TEST_CASE("weight decay changes the trajectory but not the first-batch loss") {
    TempDir dir("decay");
    testutil::CorpusOptions opt;
    opt.count = 4;
    opt.height = 32;
    opt.width = 32;
    dsn::DatasetManifest m = dsn::load_manifest(testutil::write_corpus(dir, opt));
    dsn::PipelineConfig pipe = testutil::tiny_pipeline(dsn::AblationVariant::BaselineArbitrary);

    dsn::TrainConfig plain = quick_train(2, 5);
    plain.batch_size = 4;  // one batch per epoch
    plain.weight_decay = 0.0;
    dsn::TrainConfig decayed = plain;
    decayed.weight_decay = 10.0;

    dsn::TrainResult a = dsn::train_on_manifest(m, plain, pipe);
    dsn::TrainResult b = dsn::train_on_manifest(m, decayed, pipe);
    // epoch 1 is evaluated before any update difference can appear
    CHECK(a.log[0].mean_loss == doctest::Approx(b.log[0].mean_loss).epsilon(1e-12));
    CHECK(a.log[1].mean_loss != b.log[1].mean_loss);

    dsn::ImageSample probe = testutil::make_sample(32, 32, 0.0, 31);
    CHECK(dsn::score_image(a.bundle, probe) != dsn::score_image(b.bundle, probe));
}

TEST_CASE("mixed sizes require a crop and crops must fit") {
    TempDir dir("mixed");
    std::filesystem::create_directories(dir.path() / "img");
    dsn::write_image_png(dir.file("img/a.png"), testutil::make_rgb(32, 32, 1));
    dsn::write_image_png(dir.file("img/b.png"), testutil::make_rgb(40, 36, 2));
    std::ofstream(dir.file("m.csv")) << "image_path,score\nimg/a.png,10\nimg/b.png,20\n";
    dsn::DatasetManifest m = dsn::load_manifest(dir.file("m.csv"));
    dsn::PipelineConfig pipe = testutil::tiny_pipeline(dsn::AblationVariant::BaselineArbitrary);

    dsn::TrainConfig tc = quick_train(1);
    CHECK_THROWS_WITH_AS(dsn::train_on_manifest(m, tc, pipe),
                         doctest::Contains("MixedSizeBatch"), dsn::Error);

    tc.crop_size = {{32, 32}};
    dsn::TrainResult res = dsn::train_on_manifest(m, tc, pipe);
    CHECK(res.log.size() == 1);

    tc.crop_size = {{36, 36}};  // taller than image a
    CHECK_THROWS_WITH_AS(dsn::train_on_manifest(m, tc, pipe), doctest::Contains("CropTooLarge"),
                         dsn::Error);
}

TEST_CASE("empty manifests cannot be trained") {
    dsn::DatasetManifest m;
    m.name = "empty";
    dsn::PipelineConfig pipe = testutil::tiny_pipeline(dsn::AblationVariant::BaselineArbitrary);
    CHECK_THROWS_WITH_AS(dsn::train_on_manifest(m, quick_train(1), pipe),
                         doctest::Contains("EmptySplit"), dsn::Error);
}

TEST_CASE("frozen backbone keeps trunk weights at their initial values") {
    TempDir dir("freeze");
    testutil::CorpusOptions opt;
    opt.count = 4;
    opt.height = 32;
    opt.width = 32;
    dsn::DatasetManifest m = dsn::load_manifest(testutil::write_corpus(dir, opt));
    dsn::PipelineConfig pipe = testutil::tiny_pipeline(dsn::AblationVariant::BaselineArbitrary);

    dsn::TrainConfig tc = quick_train(2, 13);
    tc.freeze_backbone = true;
    dsn::TrainResult trained = dsn::train_on_manifest(m, tc, pipe);

    dsn::PipelineConfig frozen_pipe = pipe;
    frozen_pipe.backbone.freeze_trunk = true;
    dsn::ModelBundle fresh = dsn::init_bundle(frozen_pipe, 13);

    auto find = [](dsn::ModelBundle& b, const std::string& name) -> nn::ParamTensor* {
        for (auto* p : b.all_params())
            if (p->name == name) return p;
        return nullptr;
    };
    nn::ParamTensor* trained_trunk = find(trained.bundle, "trunk.conv1.weight");
    nn::ParamTensor* fresh_trunk = find(fresh, "trunk.conv1.weight");
    REQUIRE(trained_trunk != nullptr);
    REQUIRE(fresh_trunk != nullptr);
    CHECK(trained_trunk->value.vec() == fresh_trunk->value.vec());

    nn::ParamTensor* trained_fc = find(trained.bundle, "pred.fc2.weight");
    nn::ParamTensor* fresh_fc = find(fresh, "pred.fc2.weight");
    REQUIRE(trained_fc != nullptr);
    CHECK(trained_fc->value.vec() != fresh_fc->value.vec());
}

TEST_CASE("checkpoint round trip preserves forwards, bytes, and metadata") {
    TempDir dir("ckpt");
    dsn::PipelineConfig pipe =
        testutil::tiny_pipeline(dsn::AblationVariant::Full, dsn::SegmenterBackend::Cnn, 6);
    dsn::ModelBundle bundle = dsn::init_bundle(pipe, 99);

    const std::string path = dir.file("m.ckpt");
    dsn::save_checkpoint(bundle, path);
    dsn::ModelBundle back = dsn::load_checkpoint(path);

    CHECK(back.seed == 99);
    CHECK(back.config.variant == dsn::AblationVariant::Full);
    CHECK(back.config.segmenter.backend == dsn::SegmenterBackend::Cnn);
    CHECK(back.parameter_count() == bundle.parameter_count());

    dsn::ImageSample probe = testutil::make_sample(36, 44, 0.0, 123);
    const double before = dsn::score_image(bundle, probe);
    const double after = dsn::score_image(back, probe);
    CHECK(std::fabs(before - after) < 1e-6);

    // a second save of the loaded bundle is byte-identical
    dsn::save_checkpoint(back, dir.file("m2.ckpt"));
    std::ifstream f1(path, std::ios::binary), f2(dir.file("m2.ckpt"), std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
}

TEST_CASE("corrupted and mismatched checkpoints are rejected") {
    TempDir dir("ckptbad");
    dsn::PipelineConfig pipe = testutil::tiny_pipeline(dsn::AblationVariant::BaselineArbitrary);
    dsn::ModelBundle bundle = dsn::init_bundle(pipe, 1);
    const std::string path = dir.file("m.ckpt");
    dsn::save_checkpoint(bundle, path);

    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();

    // truncation
    std::ofstream(dir.file("short.ckpt"), std::ios::binary)
        << bytes.substr(0, bytes.size() - 64);
    CHECK_THROWS_WITH_AS(dsn::load_checkpoint(dir.file("short.ckpt")),
                         doctest::Contains("CorruptCheckpoint"), dsn::Error);

    // magic corruption
    {
        std::string bad = bytes;
        bad[2] = 'X';
        std::ofstream(dir.file("magic.ckpt"), std::ios::binary) << bad;
        CHECK_THROWS_WITH_AS(dsn::load_checkpoint(dir.file("magic.ckpt")),
                             doctest::Contains("CorruptCheckpoint"), dsn::Error);
    }

    // payload bit flip breaks the digest
    {
        std::string bad = bytes;
        bad[bytes.size() - 10] = static_cast<char>(bad[bytes.size() - 10] ^ 0x40);
        std::ofstream(dir.file("flip.ckpt"), std::ios::binary) << bad;
        CHECK_THROWS_WITH_AS(dsn::load_checkpoint(dir.file("flip.ckpt")),
                             doctest::Contains("CorruptCheckpoint"), dsn::Error);
    }

    // future format version
    {
        std::string bad = bytes;
        bad[8] = 2;  // u32 LE version right after the 8-byte magic
        std::ofstream(dir.file("ver.ckpt"), std::ios::binary) << bad;
        CHECK_THROWS_WITH_AS(dsn::load_checkpoint(dir.file("ver.ckpt")),
                             doctest::Contains("VersionMismatch"), dsn::Error);
    }

    CHECK_THROWS_AS(dsn::load_checkpoint(dir.file("missing.ckpt")), dsn::Error);
}

TEST_CASE("baseline-fixed training demands 224x224 crops") {
    TempDir dir("fixed");
    testutil::CorpusOptions opt;
    opt.count = 3;
    opt.height = 240;
    opt.width = 260;
    dsn::DatasetManifest m = dsn::load_manifest(testutil::write_corpus(dir, opt));
    dsn::PipelineConfig pipe = testutil::tiny_pipeline(dsn::AblationVariant::BaselineFixed);

    dsn::TrainConfig tc = quick_train(1, 3);
    tc.crop_size = {{128, 128}};
    CHECK_THROWS_WITH_AS(dsn::train_on_manifest(m, tc, pipe),
                         doctest::Contains("InvalidConfig"), dsn::Error);

    tc.crop_size.reset();  // defaults to the fixed 224 input
    dsn::TrainResult res = dsn::train_on_manifest(m, tc, pipe);

    // evaluation center-crops larger inputs and rejects smaller ones
    dsn::ImageSample big = testutil::make_sample(300, 240, 0.0, 8);
    const double s = dsn::score_image(res.bundle, big);
    CHECK(std::isfinite(s));
    dsn::ImageSample small_img = testutil::make_sample(100, 100, 0.0, 9);
    CHECK_THROWS_WITH_AS(dsn::score_image(res.bundle, small_img),
                         doctest::Contains("CropTooLarge"), dsn::Error);
}

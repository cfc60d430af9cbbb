#include "dsn/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dsn/common.hpp"

namespace dsn {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& why) {
    raise(Errc::BadConfig, "key '" + key + "': " + why);
}

long long to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long long out = std::stoll(v, &used);
        if (used != v.size()) bad(key, "not an integer: " + v);
        return out;
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        bad(key, "not an integer: " + v);
    }
}

double to_real(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double out = std::stod(v, &used);
        if (used != v.size()) bad(key, "not a number: " + v);
        return out;
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        bad(key, "not a number: " + v);
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    bad(key, "not a boolean: " + v);
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ',')) {
        part = trim(part);
        if (!part.empty()) out.push_back(part);
    }
    return out;
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    for (const std::string& part : split_list(v))
        out.push_back(static_cast<int>(to_int(key, part)));
    return out;
}

}  // namespace

const std::set<std::string>& RunConfig::known_keys() {
    static const std::set<std::string> keys = {
        "seed",
        "output_dir",
        "variant",
        "backbone.variant",
        "backbone.tap_stages",
        "backbone.local_dims",
        "backbone.holistic_dim",
        "backbone.pool_h",
        "backbone.pool_w",
        "backbone.head_channels",
        "backbone.freeze_trunk",
        "backbone.pretrained_weights",
        "segmenter.backend",
        "segmenter.n_superpixels",
        "segmenter.compactness",
        "segmenter.iterations",
        "segmenter.cnn_channels",
        "segmenter.tv_weight",
        "spmapnet.conv_channels",
        "spmapnet.pool_h",
        "spmapnet.pool_w",
        "predictor.hidden",
        "train.learning_rate",
        "train.weight_decay",
        "train.batch_size",
        "train.epochs",
        "train.schedule",
        "train.lr_gamma",
        "train.lr_step_epochs",
        "train.crop",
        "train.freeze_backbone",
        "split.mode",
        "split.train_fraction",
        "experiment.kind",
        "experiment.train_manifest",
        "experiment.test_manifests",
        "experiment.repeats",
        "experiment.variant",
        "experiment.crop_sizes",
    };
    return keys;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (known_keys().count(key) == 0)
        raise(Errc::BadConfig, "unknown configuration key: " + key);
    values[key] = value;
}

std::string RunConfig::get_or(const std::string& key, const std::string& fallback) const {
    auto it = values.find(key);
    return it == values.end() ? fallback : it->second;
}

std::string RunConfig::digest() const {
    std::string canon;
    for (const auto& [k, v] : values) {
        canon += k;
        canon += '=';
        canon += v;
        canon += '\n';
    }
    return to_hex(fnv1a64(canon.data(), canon.size()));
}

RunConfig parse_config_text(const std::string& text) {
    RunConfig config;
    std::stringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            raise(Errc::BadConfig,
                  "line " + std::to_string(line_no) + " is not a key = value pair: " + line);
        config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return config;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) raise(Errc::IoError, "cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse_config_text(text);
}

void merge_into(RunConfig& base, const RunConfig& overrides) {
    for (const auto& [k, v] : overrides.values) base.values[k] = v;
}

std::uint64_t seed_of(const RunConfig& config) {
    const std::string v = config.get_or("seed", "0");
    try {
        std::size_t used = 0;
        const unsigned long long out = std::stoull(v, &used);
        if (used != v.size()) bad("seed", "not an unsigned integer: " + v);
        return out;
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        bad("seed", "not an unsigned integer: " + v);
    }
}

PipelineConfig make_pipeline(const RunConfig& config) {
    PipelineConfig p;
    p.variant = parse_ablation_variant(config.get_or("variant", "full"));

    p.backbone.variant = parse_variant(config.get_or("backbone.variant", "tiny"));
    if (config.has("backbone.tap_stages"))
        p.backbone.tap_stages = to_int_list("backbone.tap_stages", config.values.at("backbone.tap_stages"));
    if (config.has("backbone.local_dims")) {
        const std::vector<int> dims =
            to_int_list("backbone.local_dims", config.values.at("backbone.local_dims"));
        if (dims.size() != 3) bad("backbone.local_dims", "expected three integers");
        std::copy(dims.begin(), dims.end(), p.backbone.local_dims.begin());
    }
    p.backbone.holistic_dim = static_cast<int>(
        to_int("backbone.holistic_dim", config.get_or("backbone.holistic_dim", "224")));
    p.backbone.pool_h =
        static_cast<int>(to_int("backbone.pool_h", config.get_or("backbone.pool_h", "7")));
    p.backbone.pool_w =
        static_cast<int>(to_int("backbone.pool_w", config.get_or("backbone.pool_w", "7")));
    p.backbone.head_channels = static_cast<int>(
        to_int("backbone.head_channels", config.get_or("backbone.head_channels", "32")));
    p.backbone.freeze_trunk =
        to_bool("backbone.freeze_trunk", config.get_or("backbone.freeze_trunk", "false"));
    p.backbone.pretrained_weights = config.get_or("backbone.pretrained_weights", "");

    const std::string backend = config.get_or("segmenter.backend", "slic");
    if (backend == "slic")
        p.segmenter.backend = SegmenterBackend::Slic;
    else if (backend == "cnn")
        p.segmenter.backend = SegmenterBackend::Cnn;
    else
        bad("segmenter.backend", "expected slic or cnn, got " + backend);
    p.segmenter.n_superpixels = static_cast<int>(
        to_int("segmenter.n_superpixels", config.get_or("segmenter.n_superpixels", "100")));
    p.segmenter.slic_compactness =
        to_real("segmenter.compactness", config.get_or("segmenter.compactness", "10"));
    p.segmenter.slic_iterations = static_cast<int>(
        to_int("segmenter.iterations", config.get_or("segmenter.iterations", "10")));
    if (config.has("segmenter.cnn_channels"))
        p.segmenter.cnn_channels =
            to_int_list("segmenter.cnn_channels", config.values.at("segmenter.cnn_channels"));
    p.segmenter.tv_weight =
        to_real("segmenter.tv_weight", config.get_or("segmenter.tv_weight", "0"));

    if (config.has("spmapnet.conv_channels"))
        p.spmapnet.conv_channels =
            to_int_list("spmapnet.conv_channels", config.values.at("spmapnet.conv_channels"));
    p.spmapnet.pool_h =
        static_cast<int>(to_int("spmapnet.pool_h", config.get_or("spmapnet.pool_h", "7")));
    p.spmapnet.pool_w =
        static_cast<int>(to_int("spmapnet.pool_w", config.get_or("spmapnet.pool_w", "7")));

    p.predictor.hidden =
        static_cast<int>(to_int("predictor.hidden", config.get_or("predictor.hidden", "128")));
    return p;
}

TrainConfig make_train(const RunConfig& config) {
    TrainConfig t;
    t.learning_rate =
        to_real("train.learning_rate", config.get_or("train.learning_rate", "0.001"));
    t.weight_decay = to_real("train.weight_decay", config.get_or("train.weight_decay", "0.0005"));
    t.batch_size =
        static_cast<int>(to_int("train.batch_size", config.get_or("train.batch_size", "16")));
    t.epochs = static_cast<int>(to_int("train.epochs", config.get_or("train.epochs", "50")));
    const std::string schedule = config.get_or("train.schedule", "step");
    if (schedule == "none")
        t.schedule = LrSchedule::None;
    else if (schedule == "step")
        t.schedule = LrSchedule::Step;
    else
        bad("train.schedule", "expected none or step, got " + schedule);
    t.lr_gamma = to_real("train.lr_gamma", config.get_or("train.lr_gamma", "0.5"));
    t.lr_step_epochs = static_cast<int>(
        to_int("train.lr_step_epochs", config.get_or("train.lr_step_epochs", "10")));
    t.seed = seed_of(config);
    const std::string crop = config.get_or("train.crop", "none");
    if (crop != "none") {
        const std::size_t x = crop.find('x');
        if (x == std::string::npos) {
            const int edge = static_cast<int>(to_int("train.crop", crop));
            t.crop_size = {{edge, edge}};
        } else {
            t.crop_size = {{static_cast<int>(to_int("train.crop", crop.substr(0, x))),
                            static_cast<int>(to_int("train.crop", crop.substr(x + 1)))}};
        }
    }
    t.freeze_backbone =
        to_bool("train.freeze_backbone", config.get_or("train.freeze_backbone", "false"));
    return t;
}

SplitSpec make_split(const RunConfig& config) {
    SplitSpec s;
    const std::string mode = config.get_or("split.mode", "random-image");
    if (mode == "random-image")
        s.mode = SplitSpec::Mode::RandomImage;
    else if (mode == "by-reference-content")
        s.mode = SplitSpec::Mode::ByReferenceContent;
    else
        bad("split.mode", "expected random-image or by-reference-content, got " + mode);
    s.train_fraction =
        to_real("split.train_fraction", config.get_or("split.train_fraction", "0.8"));
    s.seed = seed_of(config);
    return s;
}

ExperimentConfig make_experiment(const RunConfig& config) {
    ExperimentConfig e;
    e.kind = parse_kind(config.get_or("experiment.kind", "individual"));
    e.train_manifest = config.get_or("experiment.train_manifest", "");
    for (const std::string& p : split_list(config.get_or("experiment.test_manifests", "")))
        e.test_manifests.push_back(p);
    e.repeats = static_cast<int>(
        to_int("experiment.repeats", config.get_or("experiment.repeats", "10")));
    if (config.has("experiment.variant"))
        e.ablation_variant = parse_ablation_variant(config.values.at("experiment.variant"));
    if (config.has("experiment.crop_sizes"))
        e.crop_sizes = to_int_list("experiment.crop_sizes", config.values.at("experiment.crop_sizes"));
    e.split = make_split(config);
    return e;
}

void write_run_header(const std::string& dir, const RunConfig& config) {
    std::filesystem::create_directories(dir);
    const std::string path = (std::filesystem::path(dir) / "run_header.txt").string();
    std::ofstream os(path);
    if (!os) raise(Errc::IoError, "cannot open for writing: " + path);
    os << "config_digest=" << config.digest() << "\n";
    os << "seed=" << seed_of(config) << "\n";
    os << "artifact_version=" << kArtifactVersion << "\n";
    os << "standardization=imagenet\n";
    if (!os) raise(Errc::IoError, "failed writing: " + path);
}

}  // namespace dsn

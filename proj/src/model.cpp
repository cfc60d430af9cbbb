#include "dsn/model.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <utility>

#include <json.hpp>

#include "dsn/common.hpp"

namespace dsn {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'D', 'S', 'N', 'C', 'K', 'P', 'T', '1'};
constexpr int kBaselineFixedSize = 224;

json backbone_to_json(const BackboneConfig& c) {
    return json{{"variant", variant_name(c.variant)},
                {"tap_stages", c.tap_stages},
                {"local_dims", c.local_dims},
                {"holistic_dim", c.holistic_dim},
                {"pool_h", c.pool_h},
                {"pool_w", c.pool_w},
                {"head_channels", c.head_channels},
                {"freeze_trunk", c.freeze_trunk},
                {"pretrained_weights", c.pretrained_weights}};
}

BackboneConfig backbone_from_json(const json& j) {
    BackboneConfig c;
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.tap_stages = j.at("tap_stages").get<std::vector<int>>();
    c.local_dims = j.at("local_dims").get<std::array<int, 3>>();
    c.holistic_dim = j.at("holistic_dim").get<int>();
    c.pool_h = j.at("pool_h").get<int>();
    c.pool_w = j.at("pool_w").get<int>();
    c.head_channels = j.at("head_channels").get<int>();
    c.freeze_trunk = j.at("freeze_trunk").get<bool>();
    c.pretrained_weights = j.at("pretrained_weights").get<std::string>();
    return c;
}

json segmenter_to_json(const SegmenterConfig& c) {
    return json{{"backend", c.backend == SegmenterBackend::Slic ? "slic" : "cnn"},
                {"n_superpixels", c.n_superpixels},
                {"slic_compactness", c.slic_compactness},
                {"slic_iterations", c.slic_iterations},
                {"cnn_channels", c.cnn_channels},
                {"tv_weight", c.tv_weight}};
}

SegmenterConfig segmenter_from_json(const json& j) {
    SegmenterConfig c;
    const std::string backend = j.at("backend").get<std::string>();
    if (backend == "slic")
        c.backend = SegmenterBackend::Slic;
    else if (backend == "cnn")
        c.backend = SegmenterBackend::Cnn;
    else
        raise(Errc::InvalidConfig, "unknown segmenter backend: " + backend);
    c.n_superpixels = j.at("n_superpixels").get<int>();
    c.slic_compactness = j.at("slic_compactness").get<double>();
    c.slic_iterations = j.at("slic_iterations").get<int>();
    c.cnn_channels = j.at("cnn_channels").get<std::vector<int>>();
    c.tv_weight = j.at("tv_weight").get<double>();
    return c;
}

json pipeline_to_json(const PipelineConfig& c) {
    return json{{"variant", variant_name(c.variant)},
                {"backbone", backbone_to_json(c.backbone)},
                {"segmenter", segmenter_to_json(c.segmenter)},
                {"spmapnet", json{{"conv_channels", c.spmapnet.conv_channels},
                                  {"pool_h", c.spmapnet.pool_h},
                                  {"pool_w", c.spmapnet.pool_w}}},
                {"predictor", json{{"hidden", c.predictor.hidden}}}};
}

PipelineConfig pipeline_from_json(const json& j) {
    PipelineConfig c;
    c.variant = parse_ablation_variant(j.at("variant").get<std::string>());
    c.backbone = backbone_from_json(j.at("backbone"));
    c.segmenter = segmenter_from_json(j.at("segmenter"));
    c.spmapnet.conv_channels = j.at("spmapnet").at("conv_channels").get<std::vector<int>>();
    c.spmapnet.pool_h = j.at("spmapnet").at("pool_h").get<int>();
    c.spmapnet.pool_w = j.at("spmapnet").at("pool_w").get<int>();
    c.predictor.hidden = j.at("predictor").at("hidden").get<int>();
    return c;
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, double v) {
    float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
}

std::uint32_t read_u32(const std::string& buf, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
    return v;
}

std::uint64_t read_u64(const std::string& buf, std::size_t off) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
    return v;
}

double read_f32(const std::string& buf, std::size_t off) {
    const std::uint32_t bits = read_u32(buf, off);
    float f;
    std::memcpy(&f, &bits, 4);
    return static_cast<double>(f);
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) raise(Errc::IoError, "cannot open: " + path);
    std::string buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return buf;
}

struct ArrayEntry {
    std::vector<int> shape;
    std::uint64_t offset = 0;  // bytes into the data section
    std::uint64_t count = 0;
    bool trainable = true;
};

struct ParsedCheckpoint {
    json meta;
    std::string data;
    std::map<std::string, ArrayEntry> arrays;
};

ParsedCheckpoint parse_checkpoint(const std::string& path) {
    const std::string buf = read_file(path);
    constexpr std::size_t header = sizeof(kMagic) + 4 + 8;
    if (buf.size() < header || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
        raise(Errc::CorruptCheckpoint, "not a checkpoint file: " + path);
    const std::uint32_t version = read_u32(buf, sizeof(kMagic));
    if (version != kCheckpointFormatVersion)
        raise(Errc::VersionMismatch, "checkpoint format version " + std::to_string(version) +
                                         ", expected " +
                                         std::to_string(kCheckpointFormatVersion));
    const std::uint64_t json_len = read_u64(buf, sizeof(kMagic) + 4);
    if (header + json_len > buf.size())
        raise(Errc::CorruptCheckpoint, "truncated checkpoint metadata: " + path);

    ParsedCheckpoint parsed;
    try {
        parsed.meta = json::parse(buf.substr(header, json_len));
    } catch (const json::exception&) {
        raise(Errc::CorruptCheckpoint, "unreadable checkpoint metadata: " + path);
    }
    if (parsed.meta.at("format_version").get<int>() != static_cast<int>(version))
        raise(Errc::VersionMismatch, "metadata format version disagrees with the header");

    parsed.data = buf.substr(header + json_len);
    std::uint64_t expected = 0;
    for (const json& a : parsed.meta.at("arrays")) {
        ArrayEntry e;
        e.shape = a.at("shape").get<std::vector<int>>();
        e.offset = a.at("offset").get<std::uint64_t>();
        e.count = a.at("count").get<std::uint64_t>();
        e.trainable = a.at("trainable").get<bool>();
        if (e.offset != expected) raise(Errc::CorruptCheckpoint, "non-contiguous array layout");
        expected += e.count * 4;
        parsed.arrays.emplace(a.at("name").get<std::string>(), std::move(e));
    }
    if (parsed.data.size() != expected)
        raise(Errc::CorruptCheckpoint, "checkpoint data section has the wrong length");
    const std::string digest =
        to_hex(fnv1a64(parsed.data.data(), parsed.data.size()));
    if (digest != parsed.meta.at("digest").get<std::string>())
        raise(Errc::CorruptCheckpoint, "integrity digest mismatch: " + path);
    return parsed;
}

void fill_param(nn::ParamTensor& p, const ArrayEntry& e, const std::string& data) {
    if (e.shape != p.value.shape() || static_cast<std::int64_t>(e.count) != p.value.numel())
        raise(Errc::ParamShapeMismatch, "array shape mismatch for " + p.name);
    for (std::int64_t i = 0; i < p.value.numel(); ++i)
        p.value.vec()[static_cast<std::size_t>(i)] =
            read_f32(data, e.offset + static_cast<std::uint64_t>(i) * 4);
}

}  // namespace

std::string variant_name(AblationVariant v) {
    switch (v) {
        case AblationVariant::BaselineFixed: return "baseline-fixed";
        case AblationVariant::BaselineArbitrary: return "baseline-arbitrary";
        case AblationVariant::MultiOnly: return "multi-only";
        case AblationVariant::Full: return "full";
    }
    return "full";
}

AblationVariant parse_ablation_variant(const std::string& name) {
    if (name == "baseline-fixed") return AblationVariant::BaselineFixed;
    if (name == "baseline-arbitrary") return AblationVariant::BaselineArbitrary;
    if (name == "multi-only") return AblationVariant::MultiOnly;
    if (name == "full") return AblationVariant::Full;
    raise(Errc::InvalidConfig, "unknown ablation variant: " + name);
}

int PipelineConfig::fused_dim() const {
    if (!uses_local_heads()) return backbone.holistic_dim;
    int d = backbone.holistic_dim;
    for (int l : backbone.local_dims) d += l;
    return d;
}

void PipelineConfig::validate() const {
    backbone.validate();
    predictor.validate();
    if (uses_superpixels()) {
        segmenter.validate();
        spmapnet.validate();
    }
}

ModelBundle init_bundle(const PipelineConfig& config, std::uint64_t seed) {
    config.validate();
    ModelBundle bundle;
    bundle.seed = seed;
    bundle.config = config;

    Rng backbone_rng(Rng::mix(seed, 1));
    bundle.backbone = init_backbone(config.backbone, config.uses_local_heads(), backbone_rng);
    if (config.uses_superpixels()) {
        Rng spmap_rng(Rng::mix(seed, 2));
        bundle.spmapnet = init_spmapnet(config.spmapnet, config.segmenter.n_superpixels,
                                        config.backbone.local_dims, config.backbone.holistic_dim,
                                        spmap_rng);
    }
    if (config.uses_cnn_segmenter()) {
        Rng seg_rng(Rng::mix(seed, 3));
        bundle.segmenter = init_cnn_segmenter(config.segmenter, seg_rng);
    }
    Rng pred_rng(Rng::mix(seed, 4));
    bundle.predictor = init_predictor(config.fused_dim(), config.predictor, pred_rng);

    if (!config.backbone.pretrained_weights.empty())
        load_arrays_into(config.backbone.pretrained_weights, bundle.backbone.all_params());
    return bundle;
}

std::vector<nn::ParamTensor*> ModelBundle::all_params() {
    std::vector<nn::ParamTensor*> out = backbone.all_params();
    if (config.uses_superpixels()) {
        for (nn::ParamTensor* p : spmapnet.all_params()) out.push_back(p);
    }
    if (config.uses_cnn_segmenter()) {
        for (nn::ParamTensor* p : segmenter.params()) out.push_back(p);
    }
    for (nn::ParamTensor* p : predictor.all_params()) out.push_back(p);
    return out;
}

std::vector<nn::ParamTensor*> ModelBundle::trainable_params() {
    std::vector<nn::ParamTensor*> out;
    for (nn::ParamTensor* p : all_params())
        if (p->trainable) out.push_back(p);
    return out;
}

std::int64_t ModelBundle::parameter_count() {
    std::int64_t n = 0;
    for (nn::ParamTensor* p : trainable_params()) n += p->value.numel();
    return n;
}

ImageSample center_crop(const ImageSample& image, int h, int w) {
    if (h > image.height() || w > image.width())
        raise(Errc::CropTooLarge, "center crop " + std::to_string(w) + "x" + std::to_string(h) +
                                      " exceeds image " + std::to_string(image.width()) + "x" +
                                      std::to_string(image.height()));
    const int oy = (image.height() - h) / 2;
    const int ox = (image.width() - w) / 2;
    ImageSample out = image;
    out.pixels = Tensor({3, h, w});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.pixels.at(c, y, x) = image.pixels.at(c, oy + y, ox + x);
    return out;
}

nn::Var build_forward(ModelBundle& bundle, const ImageSample& image) {
    check_image_size(image, bundle.config.backbone);
    nn::Var input = nn::constant(image.pixels);
    BackboneGraph bg = backbone_forward(input, bundle.backbone, bundle.config.backbone);

    nn::Var fused;
    switch (bundle.config.variant) {
        case AblationVariant::BaselineFixed:
        case AblationVariant::BaselineArbitrary:
            fused = bg.holistic;
            break;
        case AblationVariant::MultiOnly:
            fused = nn::concat({bg.locals[0], bg.locals[1], bg.locals[2], bg.holistic});
            break;
        case AblationVariant::Full: {
            nn::Var probmap;
            if (bundle.config.segmenter.backend == SegmenterBackend::Cnn) {
                probmap = cnn_segmenter_forward(input, bundle.segmenter);
            } else {
                probmap = nn::constant(segment(image, bundle.config.segmenter).probs);
            }
            AdjacencyGraph ag = spmapnet_forward(probmap, bundle.spmapnet, bundle.config.spmapnet);
            fused = fuse_vars({bg.locals[0], bg.locals[1], bg.locals[2], bg.holistic},
                              {ag.locals[0], ag.locals[1], ag.locals[2], ag.holistic});
            break;
        }
    }
    return predictor_forward(fused, bundle.predictor);
}

double score_image(ModelBundle& bundle, const ImageSample& image) {
    nn::NoGradGuard guard;
    if (bundle.config.variant == AblationVariant::BaselineFixed &&
        (image.height() != kBaselineFixedSize || image.width() != kBaselineFixedSize)) {
        ImageSample cropped = center_crop(image, kBaselineFixedSize, kBaselineFixedSize);
        return build_forward(bundle, cropped)->value.vec()[0];
    }
    return build_forward(bundle, image)->value.vec()[0];
}

void save_checkpoint(ModelBundle& bundle, const std::string& path) {
    std::string data;
    json arrays = json::array();
    for (nn::ParamTensor* p : bundle.all_params()) {
        json a;
        a["name"] = p->name;
        a["shape"] = p->value.shape();
        a["offset"] = data.size();
        a["count"] = p->value.numel();
        a["trainable"] = p->trainable;
        arrays.push_back(std::move(a));
        data.reserve(data.size() + static_cast<std::size_t>(p->value.numel()) * 4);
        for (std::int64_t i = 0; i < p->value.numel(); ++i)
            put_f32(data, p->value.vec()[static_cast<std::size_t>(i)]);
    }

    json meta;
    meta["format_version"] = bundle.format_version;
    meta["artifact_version"] = kArtifactVersion;
    meta["seed"] = bundle.seed;
    meta["config"] = pipeline_to_json(bundle.config);
    meta["arrays"] = std::move(arrays);
    meta["digest"] = to_hex(fnv1a64(data.data(), data.size()));
    const std::string meta_str = meta.dump();

    std::string out;
    out.append(kMagic, sizeof(kMagic));
    put_u32(out, static_cast<std::uint32_t>(bundle.format_version));
    put_u64(out, meta_str.size());
    out += meta_str;
    out += data;

    std::ofstream os(path, std::ios::binary);
    if (!os) raise(Errc::IoError, "cannot open for writing: " + path);
    os.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!os) raise(Errc::IoError, "failed writing: " + path);
}

ModelBundle load_checkpoint(const std::string& path) {
    ParsedCheckpoint parsed = parse_checkpoint(path);
    PipelineConfig config;
    std::uint64_t seed = 0;
    try {
        config = pipeline_from_json(parsed.meta.at("config"));
        seed = parsed.meta.at("seed").get<std::uint64_t>();
    } catch (const json::exception&) {
        raise(Errc::CorruptCheckpoint, "incomplete checkpoint metadata: " + path);
    }
    ModelBundle bundle = init_bundle(config, seed);
    bundle.format_version = parsed.meta.at("format_version").get<int>();
    std::size_t filled = 0;
    for (nn::ParamTensor* p : bundle.all_params()) {
        auto it = parsed.arrays.find(p->name);
        if (it == parsed.arrays.end())
            raise(Errc::CorruptCheckpoint, "checkpoint lacks array " + p->name);
        fill_param(*p, it->second, parsed.data);
        ++filled;
    }
    if (filled != parsed.arrays.size())
        raise(Errc::CorruptCheckpoint, "checkpoint holds arrays the model does not declare");
    return bundle;
}

void load_arrays_into(const std::string& path, const std::vector<nn::ParamTensor*>& params) {
    ParsedCheckpoint parsed = parse_checkpoint(path);
    for (nn::ParamTensor* p : params) {
        auto it = parsed.arrays.find(p->name);
        if (it == parsed.arrays.end())
            raise(Errc::ParamShapeMismatch, "weight file lacks array " + p->name);
        fill_param(*p, it->second, parsed.data);
    }
}

}  // namespace dsn

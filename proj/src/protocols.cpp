#include "dsn/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "dsn/common.hpp"
#include "dsn/rng.hpp"

namespace dsn {

namespace fs = std::filesystem;

namespace {

DatasetManifest subset_manifest(const DatasetManifest& base, const std::vector<std::size_t>& idx,
                                const std::string& suffix) {
    DatasetManifest out;
    out.name = base.name + suffix;
    out.base_dir = base.base_dir;
    for (std::size_t i : idx) out.entries.push_back(base.entries[i]);
    double lo = out.entries.front().score, hi = lo;
    for (const ManifestEntry& e : out.entries) {
        lo = std::min(lo, e.score);
        hi = std::max(hi, e.score);
    }
    out.score_scale = {lo, hi};
    return out;
}

std::string crop_label(int size) {
    if (size == 0) return "full";
    return std::to_string(size) + "x" + std::to_string(size);
}

void write_crop_plot(const std::string& path, const std::vector<std::string>& labels,
                     const std::vector<double>& srcc_series,
                     const std::vector<double>& plcc_series) {
    const int width = 720, height = 480;
    const int left = 70, right = 30, top = 40, bottom = 60;
    cv::Mat canvas(height, width, CV_8UC3, cv::Scalar(255, 255, 255));

    double lo = 1.0, hi = -1.0;
    for (double v : srcc_series) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (double v : plcc_series) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (lo > hi) {
        lo = 0.0;
        hi = 1.0;
    }
    const double pad = std::max(0.05, (hi - lo) * 0.15);
    lo = std::max(-1.0, lo - pad);
    hi = std::min(1.0, hi + pad);

    const int plot_w = width - left - right, plot_h = height - top - bottom;
    auto px = [&](std::size_t i) {
        const std::size_t n = std::max<std::size_t>(labels.size(), 2);
        return left + static_cast<int>(static_cast<double>(i) * plot_w /
                                       static_cast<double>(n - 1));
    };
    auto py = [&](double v) {
        return top + static_cast<int>((hi - v) / (hi - lo) * plot_h);
    };

    const cv::Scalar axis(60, 60, 60), srcc_color(180, 90, 30), plcc_color(40, 40, 200);
    cv::line(canvas, {left, top}, {left, top + plot_h}, axis, 1);
    cv::line(canvas, {left, top + plot_h}, {left + plot_w, top + plot_h}, axis, 1);
    for (int g = 0; g <= 4; ++g) {
        const double v = lo + (hi - lo) * g / 4.0;
        const int y = py(v);
        cv::line(canvas, {left - 4, y}, {left, y}, axis, 1);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", v);
        cv::putText(canvas, buf, {8, y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, axis, 1);
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        cv::putText(canvas, labels[i], {px(i) - 18, top + plot_h + 20},
                    cv::FONT_HERSHEY_SIMPLEX, 0.4, axis, 1);
    }
    auto draw_series = [&](const std::vector<double>& series, const cv::Scalar& color) {
        for (std::size_t i = 0; i < series.size(); ++i) {
            cv::circle(canvas, {px(i), py(series[i])}, 3, color, cv::FILLED);
            if (i > 0)
                cv::line(canvas, {px(i - 1), py(series[i - 1])}, {px(i), py(series[i])}, color, 2);
        }
    };
    draw_series(srcc_series, srcc_color);
    draw_series(plcc_series, plcc_color);
    cv::putText(canvas, "SRCC", {left + 8, top - 10}, cv::FONT_HERSHEY_SIMPLEX, 0.5, srcc_color,
                1);
    cv::putText(canvas, "PLCC", {left + 80, top - 10}, cv::FONT_HERSHEY_SIMPLEX, 0.5, plcc_color,
                1);
    cv::putText(canvas, "crop size", {left + plot_w / 2 - 30, height - 16},
                cv::FONT_HERSHEY_SIMPLEX, 0.45, axis, 1);
    if (!cv::imwrite(path, canvas)) raise(Errc::IoError, "cannot write plot: " + path);
}

void append_medians(std::vector<ProtocolRecord>& records, const std::string& kind,
                    const std::string& condition, const std::string& split_id,
                    std::uint64_t seed) {
    std::vector<double> srccs, plccs;
    int n = 0;
    for (const ProtocolRecord& r : records) {
        if (r.repeat_index < 0 || r.condition != condition) continue;
        srccs.push_back(r.srcc);
        plccs.push_back(r.plcc);
        ++n;
    }
    ProtocolRecord m;
    m.kind = kind;
    m.condition = condition;
    m.repeat_index = -1;
    m.seed = seed;
    m.split_id = split_id;
    m.srcc = median(srccs);
    m.plcc = median(plccs);
    m.n = n;
    records.push_back(std::move(m));
}

}  // namespace

void SplitSpec::validate() const {
    if (!(train_fraction > 0.0) || !(train_fraction < 1.0))
        raise(Errc::InvalidConfig, "train_fraction must lie strictly between 0 and 1");
}

std::string SplitSpec::id() const {
    const char* m = mode == Mode::RandomImage ? "image" : "content";
    return std::string(m) + "-s" + std::to_string(seed) + "-f" + format_real(train_fraction);
}

std::pair<DatasetManifest, DatasetManifest> split(const DatasetManifest& manifest,
                                                  const SplitSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);

    if (spec.mode == SplitSpec::Mode::RandomImage) {
        const std::size_t n = manifest.entries.size();
        if (n < 2) raise(Errc::TooFewItems, "need at least 2 images to split");
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(order);
        const auto train_count = static_cast<std::size_t>(std::clamp<long long>(
            std::llround(spec.train_fraction * static_cast<double>(n)), 1,
            static_cast<long long>(n) - 1));
        std::vector<std::size_t> train_idx(order.begin(),
                                           order.begin() + static_cast<std::ptrdiff_t>(train_count));
        std::vector<std::size_t> test_idx(order.begin() + static_cast<std::ptrdiff_t>(train_count),
                                          order.end());
        std::sort(train_idx.begin(), train_idx.end());
        std::sort(test_idx.begin(), test_idx.end());
        return {subset_manifest(manifest, train_idx, "-train"),
                subset_manifest(manifest, test_idx, "-test")};
    }

    std::vector<std::string> refs;  // first-appearance order
    std::map<std::string, std::size_t> ref_pos;
    for (const ManifestEntry& e : manifest.entries) {
        if (!e.reference_id || e.reference_id->empty())
            raise(Errc::MissingReferenceIds,
                  "entry " + e.image_path + " lacks the reference_id required by content splits");
        if (ref_pos.emplace(*e.reference_id, refs.size()).second) refs.push_back(*e.reference_id);
    }
    if (refs.size() < 2) raise(Errc::TooFewItems, "need at least 2 reference contents to split");
    std::vector<std::size_t> ref_order(refs.size());
    std::iota(ref_order.begin(), ref_order.end(), std::size_t{0});
    rng.shuffle(ref_order);
    const auto train_refs = static_cast<std::size_t>(std::clamp<long long>(
        std::llround(spec.train_fraction * static_cast<double>(refs.size())), 1,
        static_cast<long long>(refs.size()) - 1));
    std::set<std::string> train_set;
    for (std::size_t i = 0; i < train_refs; ++i) train_set.insert(refs[ref_order[i]]);

    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        if (train_set.count(*manifest.entries[i].reference_id))
            train_idx.push_back(i);
        else
            test_idx.push_back(i);
    }
    return {subset_manifest(manifest, train_idx, "-train"),
            subset_manifest(manifest, test_idx, "-test")};
}

double median(std::vector<double> values) {
    if (values.empty()) raise(Errc::TooFewItems, "median of an empty sequence");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

EvalOutcome evaluate_manifest(ModelBundle& bundle, const DatasetManifest& manifest,
                              std::uint64_t seed, const std::string& split_id, int repeat_index,
                              AccessLog* access) {
    EvalOutcome out;
    for (const ManifestEntry& e : manifest.entries) {
        const ImageSample sample = load_sample(manifest, e, access);
        out.predictions.push_back(score_image(bundle, sample));
        out.targets.push_back(sample.score);
        out.paths.push_back(sample.source_path);
    }
    out.report.srcc = srcc(out.predictions, out.targets);
    out.report.plcc = plcc(out.predictions, out.targets);
    out.report.n = static_cast<int>(out.predictions.size());
    out.report.seed = seed;
    out.report.split_id = split_id;
    out.report.repeat_index = repeat_index;
    return out;
}

std::string kind_name(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::Individual: return "individual";
        case ExperimentKind::CrossDb: return "cross-db";
        case ExperimentKind::PerDistortion: return "per-distortion";
        case ExperimentKind::Ablation: return "ablation";
        case ExperimentKind::CropSize: return "crop-size";
    }
    return "individual";
}

ExperimentKind parse_kind(const std::string& name) {
    if (name == "individual") return ExperimentKind::Individual;
    if (name == "cross-db") return ExperimentKind::CrossDb;
    if (name == "per-distortion") return ExperimentKind::PerDistortion;
    if (name == "ablation") return ExperimentKind::Ablation;
    if (name == "crop-size") return ExperimentKind::CropSize;
    raise(Errc::InvalidConfig, "unknown experiment kind: " + name);
}

void ExperimentConfig::validate() const {
    split.validate();
    if (repeats < 1) raise(Errc::InvalidConfig, "repeats must be at least 1");
    if (train_manifest.empty()) raise(Errc::InvalidConfig, "train_manifest is required");
    if (kind == ExperimentKind::Ablation && !ablation_variant)
        raise(Errc::InvalidConfig, "ablation experiments require ablation_variant");
    if (kind == ExperimentKind::CrossDb && test_manifests.empty())
        raise(Errc::InvalidConfig, "cross-db experiments require test_manifests");
    for (int s : crop_sizes)
        if (s < 0) raise(Errc::InvalidConfig, "crop sizes must be non-negative");
}

ProtocolReport run_experiment(const ExperimentConfig& config, const TrainConfig& train_config,
                              const PipelineConfig& pipeline) {
    config.validate();
    ProtocolReport report;
    report.kind = kind_name(config.kind);
    const DatasetManifest manifest = load_manifest(config.train_manifest);

    auto repeat_cycles = [&](const PipelineConfig& pipe, const std::string& condition) {
        for (int r = 0; r < config.repeats; ++r) {
            SplitSpec s = config.split;
            s.seed = config.split.seed + static_cast<std::uint64_t>(r);
            auto [train_m, test_m] = split(manifest, s);
            TrainConfig tc = train_config;
            tc.seed = train_config.seed + static_cast<std::uint64_t>(r);
            TrainResult res = train_on_manifest(train_m, tc, pipe);
            EvalOutcome out = evaluate_manifest(res.bundle, test_m, tc.seed, s.id(), r);
            report.records.push_back({report.kind, condition, r, tc.seed, s.id(),
                                      out.report.srcc, out.report.plcc, out.report.n});
        }
        append_medians(report.records, report.kind, condition, config.split.id(),
                       config.split.seed);
    };

    switch (config.kind) {
        case ExperimentKind::Individual:
            repeat_cycles(pipeline, manifest.name);
            break;

        case ExperimentKind::Ablation: {
            PipelineConfig pipe = pipeline;
            pipe.variant = *config.ablation_variant;
            report.parameter_count = init_bundle(pipe, train_config.seed).parameter_count();
            report.notes.push_back("parameter_count[" + std::string(variant_name(pipe.variant)) +
                                   "]=" + std::to_string(report.parameter_count));
            repeat_cycles(pipe, variant_name(pipe.variant));
            break;
        }

        case ExperimentKind::CrossDb: {
            AccessLog train_access;
            TrainResult res = train_on_manifest(manifest, train_config, pipeline, &train_access);
            std::set<std::string> accessed;
            for (const std::string& p : train_access.paths()) accessed.insert(p);
            bool clean = true;
            for (const std::string& path : config.test_manifests) {
                const DatasetManifest test_m = load_manifest(path);
                for (const ManifestEntry& e : test_m.entries)
                    if (accessed.count(resolve_entry_path(test_m, e))) clean = false;
                EvalOutcome out =
                    evaluate_manifest(res.bundle, test_m, train_config.seed, "none", 0);
                report.records.push_back({report.kind, test_m.name, 0, train_config.seed, "none",
                                          out.report.srcc, out.report.plcc, out.report.n});
            }
            report.notes.push_back(clean ? "access_audit=clean" : "access_audit=VIOLATION");
            break;
        }

        case ExperimentKind::PerDistortion: {
            auto [train_m, test_m] = split(manifest, config.split);
            TrainResult res = train_on_manifest(train_m, train_config, pipeline);
            std::map<std::string, std::vector<std::size_t>> by_label;
            for (std::size_t i = 0; i < test_m.entries.size(); ++i) {
                const auto& label = test_m.entries[i].distortion_type;
                if (!label || label->empty())
                    raise(Errc::MissingDistortionLabels,
                          "entry " + test_m.entries[i].image_path + " lacks distortion_type");
                by_label[*label].push_back(i);
            }
            for (const auto& [label, idx] : by_label) {
                if (idx.size() < 3) {
                    report.notes.push_back("skipped=" + label + " (fewer than 3 test images)");
                    continue;
                }
                const DatasetManifest m = subset_manifest(test_m, idx, "-" + label);
                EvalOutcome out = evaluate_manifest(res.bundle, m, train_config.seed,
                                                    config.split.id(), 0);
                report.records.push_back({report.kind, label, 0, train_config.seed,
                                          config.split.id(), out.report.srcc, out.report.plcc,
                                          out.report.n});
            }
            break;
        }

        case ExperimentKind::CropSize: {
            std::vector<int> sizes(config.crop_sizes);
            if (sizes.empty()) sizes.assign(std::begin(kCropSizePresets), std::end(kCropSizePresets));
            auto [train_m, test_m] = split(manifest, config.split);
            // One training run per crop size on a shared split and seed, so the
            // series varies in nothing but the crop.
            for (std::size_t i = 0; i < sizes.size(); ++i) {
                TrainConfig tc = train_config;
                if (sizes[i] > 0)
                    tc.crop_size = {{sizes[i], sizes[i]}};
                else
                    tc.crop_size.reset();
                TrainResult res = train_on_manifest(train_m, tc, pipeline);
                EvalOutcome out =
                    evaluate_manifest(res.bundle, test_m, tc.seed, config.split.id(), 0);
                report.records.push_back({report.kind, crop_label(sizes[i]), 0, tc.seed,
                                          config.split.id(), out.report.srcc, out.report.plcc,
                                          out.report.n});
            }
            break;
        }
    }
    return report;
}

void write_report(const ProtocolReport& report, const std::string& dir) {
    fs::create_directories(dir);

    std::ofstream txt(fs::path(dir) / "report.txt");
    if (!txt) raise(Errc::IoError, "cannot open report.txt under " + dir);
    txt << "kind=" << report.kind << "\n";
    txt << "artifact_version=" << kArtifactVersion << "\n";
    if (report.parameter_count >= 0) txt << "parameter_count=" << report.parameter_count << "\n";
    for (const std::string& note : report.notes) txt << "note=" << note << "\n";
    for (const ProtocolRecord& r : report.records) {
        txt << "record kind=" << r.kind << " condition=" << r.condition << " repeat="
            << (r.repeat_index < 0 ? std::string("median") : std::to_string(r.repeat_index))
            << " seed=" << r.seed << " split=" << r.split_id << " srcc=" << format_real(r.srcc)
            << " plcc=" << format_real(r.plcc) << " n=" << r.n << "\n";
    }
    if (!txt) raise(Errc::IoError, "failed writing report.txt under " + dir);

    std::ofstream csv(fs::path(dir) / "report.csv");
    if (!csv) raise(Errc::IoError, "cannot open report.csv under " + dir);
    csv << "kind,condition,repeat_index,seed,split_id,srcc,plcc,n\n";
    for (const ProtocolRecord& r : report.records)
        csv << r.kind << ',' << r.condition << ',' << r.repeat_index << ',' << r.seed << ','
            << r.split_id << ',' << format_real(r.srcc) << ',' << format_real(r.plcc) << ','
            << r.n << '\n';
    if (!csv) raise(Errc::IoError, "failed writing report.csv under " + dir);

    if (report.kind == "crop-size") {
        std::vector<std::string> labels;
        std::vector<double> srccs, plccs;
        for (const ProtocolRecord& r : report.records) {
            if (r.repeat_index < 0) continue;
            labels.push_back(r.condition);
            srccs.push_back(r.srcc);
            plccs.push_back(r.plcc);
        }
        write_crop_plot((fs::path(dir) / "plot.png").string(), labels, srccs, plccs);
    }
}

}  // namespace dsn

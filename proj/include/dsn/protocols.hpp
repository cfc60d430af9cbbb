#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dsn/image.hpp"
#include "dsn/metrics.hpp"
#include "dsn/model.hpp"
#include "dsn/training.hpp"

namespace dsn {

struct SplitSpec {
    enum class Mode { RandomImage, ByReferenceContent };
    Mode mode = Mode::RandomImage;
    double train_fraction = 0.8;
    std::uint64_t seed = 0;

    void validate() const;
    std::string id() const;  // compact split identifier for reports
};

// Deterministic under seed. Content mode keeps every reference_id wholly on
// one side.
std::pair<DatasetManifest, DatasetManifest> split(const DatasetManifest& manifest,
                                                  const SplitSpec& spec);

// Sort-and-pick; even counts average the two central values.
double median(std::vector<double> values);

struct EvalOutcome {
    EvalReport report;
    std::vector<double> predictions;
    std::vector<double> targets;
    std::vector<std::string> paths;
};

EvalOutcome evaluate_manifest(ModelBundle& bundle, const DatasetManifest& manifest,
                              std::uint64_t seed, const std::string& split_id, int repeat_index,
                              AccessLog* access = nullptr);

enum class ExperimentKind { Individual, CrossDb, PerDistortion, Ablation, CropSize };

std::string kind_name(ExperimentKind k);
ExperimentKind parse_kind(const std::string& name);

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::Individual;
    std::string train_manifest;
    std::vector<std::string> test_manifests;  // cross-db targets
    int repeats = 10;
    std::optional<AblationVariant> ablation_variant;
    std::vector<int> crop_sizes;  // square edge lengths, 0 = full size; empty = presets
    SplitSpec split;

    void validate() const;
};

constexpr int kCropSizePresets[6] = {32, 64, 128, 224, 320, 0};

struct ProtocolRecord {
    std::string kind;
    std::string condition;
    int repeat_index = 0;  // -1 marks a median row
    std::uint64_t seed = 0;
    std::string split_id;
    double srcc = 0.0;
    double plcc = 0.0;
    int n = 0;
};

struct ProtocolReport {
    std::string kind;
    std::vector<ProtocolRecord> records;
    std::vector<std::string> notes;
    std::int64_t parameter_count = -1;  // set by ablation runs
};

ProtocolReport run_experiment(const ExperimentConfig& config, const TrainConfig& train_config,
                              const PipelineConfig& pipeline);

// report.txt + report.csv under dir; crop-size runs add plot.png.
void write_report(const ProtocolReport& report, const std::string& dir);

}  // namespace dsn

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dsn/image.hpp"
#include "dsn/model.hpp"

namespace dsn {

enum class LrSchedule { None, Step };

struct TrainConfig {
    double learning_rate = 1e-3;
    double weight_decay = 5e-4;  // explicit loss term, not optimizer-internal
    int batch_size = 16;
    int epochs = 50;
    LrSchedule schedule = LrSchedule::Step;
    double lr_gamma = 0.5;
    int lr_step_epochs = 10;
    std::uint64_t seed = 0;
    std::optional<std::pair<int, int>> crop_size;  // (h,w); unset trains at native size
    bool freeze_backbone = false;

    void validate() const;
    double lr_at_epoch(int epoch_index) const;  // 0-based
};

struct TrainLogEntry {
    int epoch = 0;  // 1-based
    double mean_loss = 0.0;
    double lr = 0.0;
};

// (1/M) sum |pred - target|.
double l1_loss(const std::vector<double>& predictions, const std::vector<double>& targets);

double sum_squared_weights(ModelBundle& bundle);

// base + lambda * sum of squared trainable parameters; lambda = 0 returns
// base unchanged.
double regularized_loss(double base, ModelBundle& bundle, double lambda);

class Adam {
public:
    explicit Adam(std::vector<nn::ParamTensor*> params, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);
    void step(double lr);

private:
    std::vector<nn::ParamTensor*> params_;
    std::vector<Tensor> m_, v_;
    double beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
};

struct TrainResult {
    ModelBundle bundle;
    std::vector<TrainLogEntry> log;
};

// Trains a fresh bundle on every entry of the manifest. When crop_size is
// unset, all images must share one size; otherwise each epoch takes a fresh
// random crop per sample.
TrainResult train_on_manifest(const DatasetManifest& manifest, const TrainConfig& config,
                              const PipelineConfig& pipeline, AccessLog* access = nullptr);

// CSV: epoch,mean_loss,lr
void write_training_log(const std::string& path, const std::vector<TrainLogEntry>& log);

}  // namespace dsn

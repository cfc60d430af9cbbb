#include "dsn/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "dsn/common.hpp"

namespace dsn {

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) raise(Errc::InvalidConfig, "learning_rate must be positive");
    if (weight_decay < 0.0) raise(Errc::InvalidConfig, "weight_decay must be non-negative");
    if (batch_size < 1) raise(Errc::InvalidConfig, "batch_size must be at least 1");
    if (epochs < 1) raise(Errc::InvalidConfig, "epochs must be at least 1");
    if (schedule == LrSchedule::Step) {
        if (lr_gamma <= 0.0) raise(Errc::InvalidConfig, "lr_gamma must be positive");
        if (lr_step_epochs < 1) raise(Errc::InvalidConfig, "lr_step_epochs must be at least 1");
    }
    if (crop_size && (crop_size->first < 1 || crop_size->second < 1))
        raise(Errc::InvalidConfig, "crop_size must be positive");
}

double TrainConfig::lr_at_epoch(int epoch_index) const {
    if (schedule == LrSchedule::None) return learning_rate;
    return learning_rate * std::pow(lr_gamma, epoch_index / lr_step_epochs);
}

double l1_loss(const std::vector<double>& predictions, const std::vector<double>& targets) {
    if (predictions.empty()) raise(Errc::EmptyBatch, "loss over an empty batch");
    if (predictions.size() != targets.size())
        raise(Errc::LengthMismatch, "prediction and target counts differ");
    double sum = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i)
        sum += std::abs(predictions[i] - targets[i]);
    return sum / static_cast<double>(predictions.size());
}

double sum_squared_weights(ModelBundle& bundle) {
    double sum = 0.0;
    for (nn::ParamTensor* p : bundle.trainable_params())
        for (double w : p->value.vec()) sum += w * w;
    return sum;
}

double regularized_loss(double base, ModelBundle& bundle, double lambda) {
    if (lambda < 0.0) raise(Errc::InvalidConfig, "lambda must be non-negative");
    if (lambda == 0.0) return base;
    return base + lambda * sum_squared_weights(bundle);
}

Adam::Adam(std::vector<nn::ParamTensor*> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (nn::ParamTensor* p : params_) {
        m_.push_back(Tensor::zeros(p->value.shape()));
        v_.push_back(Tensor::zeros(p->value.shape()));
    }
}

void Adam::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        nn::ParamTensor* p = params_[i];
        auto& w = p->value.vec();
        auto& g = p->grad.vec();
        auto& m = m_[i].vec();
        auto& v = v_[i].vec();
        for (std::size_t k = 0; k < w.size(); ++k) {
            m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
            v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            w[k] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

TrainResult train_on_manifest(const DatasetManifest& manifest, const TrainConfig& config,
                              const PipelineConfig& pipeline, AccessLog* access) {
    config.validate();
    if (manifest.entries.empty()) raise(Errc::EmptySplit, "training manifest is empty");

    PipelineConfig effective = pipeline;
    effective.backbone.freeze_trunk = effective.backbone.freeze_trunk || config.freeze_backbone;
    if (effective.variant == AblationVariant::BaselineFixed) {
        const auto crop = config.crop_size.value_or(std::pair<int, int>{224, 224});
        if (crop.first != 224 || crop.second != 224)
            raise(Errc::InvalidConfig, "baseline-fixed trains at 224x224 only");
    }

    std::vector<ImageSample> samples = load_samples(manifest, access);
    std::optional<std::pair<int, int>> crop = config.crop_size;
    if (effective.variant == AblationVariant::BaselineFixed && !crop) crop = {{224, 224}};
    if (crop) {
        for (const ImageSample& s : samples)
            if (s.height() < crop->first || s.width() < crop->second)
                raise(Errc::CropTooLarge,
                      "training image " + s.source_path + " is smaller than the crop size");
    } else {
        for (const ImageSample& s : samples)
            if (s.height() != samples.front().height() || s.width() != samples.front().width())
                raise(Errc::MixedSizeBatch,
                      "images of differing sizes cannot share batches; set crop_size");
    }

    TrainResult result{init_bundle(effective, config.seed), {}};
    ModelBundle& bundle = result.bundle;
    Adam opt(bundle.trainable_params());
    Rng shuffle_rng(Rng::mix(config.seed, 101));
    Rng crop_rng(Rng::mix(config.seed, 202));

    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::vector<nn::ParamTensor*> trainable = bundle.trainable_params();

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = config.lr_at_epoch(epoch);
        shuffle_rng.shuffle(order);
        double abs_err_total = 0.0;
        for (std::size_t begin = 0; begin < order.size();
             begin += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end =
                std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
            const double inv_batch = 1.0 / static_cast<double>(end - begin);
            nn::zero_grads(trainable);
            for (std::size_t i = begin; i < end; ++i) {
                const ImageSample& base = samples[order[i]];
                nn::Var loss;
                if (crop) {
                    const ImageSample view =
                        random_crop(base, crop->first, crop->second, crop_rng.next_u64());
                    loss = nn::abs_diff(build_forward(bundle, view), view.score);
                } else {
                    loss = nn::abs_diff(build_forward(bundle, base), base.score);
                }
                abs_err_total += loss->value.vec()[0];
                nn::backward(loss, inv_batch);
            }
            if (config.weight_decay > 0.0) {
                for (nn::ParamTensor* p : trainable) {
                    auto& g = p->grad.vec();
                    const auto& w = p->value.vec();
                    for (std::size_t k = 0; k < g.size(); ++k)
                        g[k] += 2.0 * config.weight_decay * w[k];
                }
            }
            opt.step(lr);
        }
        result.log.push_back(
            {epoch + 1, abs_err_total / static_cast<double>(samples.size()), lr});
    }
    return result;
}

void write_training_log(const std::string& path, const std::vector<TrainLogEntry>& log) {
    std::ofstream os(path);
    if (!os) raise(Errc::IoError, "cannot open for writing: " + path);
    os << "epoch,mean_loss,lr\n";
    for (const TrainLogEntry& e : log)
        os << e.epoch << ',' << format_real(e.mean_loss) << ',' << format_real(e.lr) << '\n';
    if (!os) raise(Errc::IoError, "failed writing: " + path);
}

}  // namespace dsn

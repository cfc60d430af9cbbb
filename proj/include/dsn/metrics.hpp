#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dsn {

struct EvalReport {
    double srcc = 0.0;
    double plcc = 0.0;
    int n = 0;
    std::uint64_t seed = 0;
    std::string split_id;
    int repeat_index = 0;
    // PLCC here is raw Pearson on the predictions; some of the literature
    // first fits a logistic remapping, which this does not do.
    std::string plcc_method = "raw";
};

// Average (fractional) ranks, 1-based; ties share their rank mean.
std::vector<double> average_ranks(const std::vector<double>& values);

// Pearson correlation of the two rank vectors.
double srcc(const std::vector<double>& pred, const std::vector<double>& gt);

// covariance / (sigma_pred * sigma_gt).
double plcc(const std::vector<double>& pred, const std::vector<double>& gt);

}  // namespace dsn

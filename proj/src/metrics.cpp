#include "dsn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dsn/common.hpp"

namespace dsn {

namespace {

void check_pair(const std::vector<double>& pred, const std::vector<double>& gt) {
    if (pred.size() != gt.size()) raise(Errc::LengthMismatch, "vector lengths differ");
    if (pred.size() < 3) raise(Errc::TooFewSamples, "need at least 3 samples");
    for (double v : pred)
        if (!std::isfinite(v)) raise(Errc::DegenerateInput, "non-finite prediction");
    for (double v : gt)
        if (!std::isfinite(v)) raise(Errc::DegenerateInput, "non-finite ground truth");
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    const double mean_a = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mean_b = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double cov = 0.0, var_a = 0.0, var_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - mean_a;
        const double db = b[i] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if (var_a == 0.0 || var_b == 0.0)
        raise(Errc::DegenerateInput, "constant vector has no correlation");
    // sqrt(var_a * var_b) (one rounding) keeps self-correlation at exactly 1.
    const double r = cov / std::sqrt(var_a * var_b);
    return std::clamp(r, -1.0, 1.0);
}

}  // namespace

std::vector<double> average_ranks(const std::vector<double>& values) {
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(),
              [&values](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size(), 0.0);
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && values[idx[j + 1]] == values[idx[i]]) ++j;
        const double shared = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

double srcc(const std::vector<double>& pred, const std::vector<double>& gt) {
    check_pair(pred, gt);
    return pearson(average_ranks(pred), average_ranks(gt));
}

double plcc(const std::vector<double>& pred, const std::vector<double>& gt) {
    check_pair(pred, gt);
    return pearson(pred, gt);
}

}  // namespace dsn

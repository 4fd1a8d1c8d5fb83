#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "atytts/nn.hpp"

namespace testutil {

// Central finite differences against the analytic gradient of a scalar graph.
// Returns the worst relative error over all checked entries.
inline double grad_check(std::vector<aty::nn::Tensor> params,
                         const std::function<aty::nn::Tensor()>& loss_fn, double eps = 1e-4) {
    using namespace aty::nn;
    for (auto& p : params) p.grad().setZero();
    Tensor loss = loss_fn();
    backward(loss);

    double worst = 0.0;
    for (auto& p : params) {
        Matrix analytic = p.grad();
        Matrix& v = p.node()->value;
        for (long i = 0; i < v.rows(); ++i) {
            for (long j = 0; j < v.cols(); ++j) {
                double keep = v(i, j);
                v(i, j) = keep + eps;
                double up = loss_fn().scalar();
                v(i, j) = keep - eps;
                double dn = loss_fn().scalar();
                v(i, j) = keep;
                double fd = (up - dn) / (2.0 * eps);
                double ad = analytic(i, j);
                double denom = std::max({std::abs(fd), std::abs(ad), 1e-6});
                worst = std::max(worst, std::abs(fd - ad) / denom);
            }
        }
        p.grad().setZero();
    }
    return worst;
}

inline std::filesystem::path temp_dir(const std::string& tag) {
    auto p = std::filesystem::temp_directory_path() / ("atytts_test_" + tag);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace testutil

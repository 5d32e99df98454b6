#pragma once

// Independent gradient oracle for the tests: central finite differences of a
// forward-only loss over model parameters. Deliberately knows nothing about
// the analytic backward pass.

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <vector>

#include "metacal/model.hpp"

namespace testsupport {

inline double central_diff(const std::function<double()>& loss, double* param, double eps) {
    const double saved = *param;
    *param = saved + eps;
    const double up = loss();
    *param = saved - eps;
    const double down = loss();
    *param = saved;
    return (up - down) / (2.0 * eps);
}

inline double rel_err(double a, double b) {
    const double denom = std::max({std::fabs(a), std::fabs(b), 1e-6});
    return std::fabs(a - b) / denom;
}

// Worst relative error between the analytic head gradient and central
// differences, across every head parameter.
inline double max_head_grad_err(metacal::ModelState& model,
                                const std::function<double()>& loss,
                                const metacal::Gradient& analytic, double eps = 1e-4) {
    double worst = 0.0;
    for (auto& [id, row] : model.head.rows) {
        const auto& grad_row = analytic.head.at(id);
        for (std::size_t i = 0; i < row.w.size(); ++i) {
            worst = std::max(worst, rel_err(grad_row.w[i], central_diff(loss, &row.w[i], eps)));
        }
        worst = std::max(worst, rel_err(grad_row.b, central_diff(loss, &row.b, eps)));
    }
    return worst;
}

// Smallest |pre-activation| across all rectifier units and terms. Central
// differences are invalid when a perturbation can cross the rectifier kink,
// so gradient-check fixtures must keep this margin well above the step size.
inline double min_preactivation_margin(const metacal::ModelState& model,
                                       const std::vector<metacal::LossTerm>& terms) {
    double margin = std::numeric_limits<double>::infinity();
    for (const auto& term : terms) {
        std::vector<double> a = term.features.values;
        for (const auto& layer : model.encoder.layers) {
            a = metacal::affine(layer, a);
            for (double z : a) margin = std::min(margin, std::fabs(z));
            for (double& v : a) v = std::max(0.0, v);
        }
    }
    return margin;
}

// Worst relative error across every encoder parameter (weights and biases).
inline double max_encoder_grad_err(metacal::ModelState& model,
                                   const std::function<double()>& loss,
                                   const metacal::Gradient& analytic, double eps = 1e-4) {
    double worst = 0.0;
    for (std::size_t l = 0; l < model.encoder.layers.size(); ++l) {
        auto& layer = model.encoder.layers[l];
        const auto& glayer = analytic.encoder_layers[l];
        for (std::size_t i = 0; i < layer.w.size(); ++i) {
            worst = std::max(worst, rel_err(glayer.w[i], central_diff(loss, &layer.w[i], eps)));
        }
        for (std::size_t i = 0; i < layer.b.size(); ++i) {
            worst = std::max(worst, rel_err(glayer.b[i], central_diff(loss, &layer.b[i], eps)));
        }
    }
    return worst;
}

}  // namespace testsupport

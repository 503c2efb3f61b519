#pragma once

#include "subflow/errors.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace subflow {

/// Gauss-Legendre rule mapped to [0, 1].
struct GaussLegendre {
    std::vector<double> nodes;
    std::vector<double> weights;

    explicit GaussLegendre(std::size_t order) {
        if (order == 0) throw InvalidArgument("quadrature order must be positive");
        nodes.resize(order);
        weights.resize(order);
        const auto n = static_cast<double>(order);
        // Roots of P_n by Newton's method from the Tricomi initial guesses;
        // roots are symmetric so only half are computed.
        for (std::size_t i = 0; i < (order + 1) / 2; ++i) {
            double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (n + 0.5));
            double dp = 0.0;
            for (int iter = 0; iter < 100; ++iter) {
                double p0 = 1.0, p1 = x;
                for (std::size_t k = 2; k <= order; ++k) {
                    const auto kd = static_cast<double>(k);
                    const double p2 = ((2 * kd - 1) * x * p1 - (kd - 1) * p0) / kd;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (x * p1 - p0) / (x * x - 1.0);
                const double dx = p1 / dp;
                x -= dx;
                if (std::fabs(dx) <= 1e-16 * std::fabs(x) + 1e-300) break;
            }
            const double w = 2.0 / ((1.0 - x * x) * dp * dp);
            const std::size_t j = order - 1 - i;
            nodes[i] = 0.5 * (1.0 - x);
            nodes[j] = 0.5 * (1.0 + x);
            weights[i] = weights[j] = 0.5 * w;
        }
        if (order % 2 == 1) nodes[order / 2] = 0.5;
    }

    std::size_t order() const noexcept { return nodes.size(); }

    template <class F>
    double integrate(F&& f) const {
        double sum = 0.0;
        for (std::size_t i = 0; i < nodes.size(); ++i) sum += weights[i] * f(nodes[i]);
        return sum;
    }
};

} // namespace subflow

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace clusterrank {

/// Gauss-Hermite rule for the weight function exp(-x^2).
/// Nodes ascend and are exactly symmetric about 0; weights sum to sqrt(pi).
/// `adaptive` asks the likelihood code to recenter the rule at each expert's
/// conditional mode instead of using the raw prior scaling.
struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
    int order = 0;
    bool adaptive = false;
};

/// Order-n Gauss-Hermite nodes and weights (exact for polynomials of degree
/// <= 2n-1). Newton iteration on the normalized Hermite recurrence.
inline QuadratureRule gauss_hermite(int order, bool adaptive = false) {
    if (order < 1) throw std::invalid_argument("gauss_hermite: order must be >= 1");
    const int n = order;
    const double pim4 = 0.7511255444649425;  // pi^(-1/4)
    const int half = (n + 1) / 2;

    std::vector<double> x(n), w(n);
    double z = 0.0;
    for (int i = 0; i < half; ++i) {
        // Stieltjes-type initial guesses, largest root first.
        if (i == 0) {
            z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
        } else if (i == 1) {
            z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
        } else if (i == 2) {
            z = 1.86 * z - 0.86 * x[n - 1];
        } else if (i == 3) {
            z = 1.91 * z - 0.91 * x[n - 2];
        } else {
            z = 2.0 * z - x[n - i + 1];
        }
        double pp = 0.0;
        bool ok = false;
        for (int it = 0; it < 100; ++it) {
            double p1 = pim4, p2 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
            }
            pp = std::sqrt(2.0 * n) * p2;
            const double dz = p1 / pp;
            z -= dz;
            if (std::abs(dz) <= 1e-14 * (1.0 + std::abs(z))) {
                ok = true;
                break;
            }
        }
        if (!ok) throw std::runtime_error("gauss_hermite: node iteration failed to converge");
        if (2 * i + 1 == n) z = 0.0;  // middle root of an odd-order rule is exact
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = w[n - 1 - i] = 2.0 / (pp * pp);
    }

    QuadratureRule rule;
    rule.nodes = std::move(x);
    rule.weights = std::move(w);
    rule.order = n;
    rule.adaptive = adaptive;
    return rule;
}

}  // namespace clusterrank

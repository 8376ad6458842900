#include "tensorhub/predictor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "tensorhub/errors.hpp"

namespace tensorhub {

double entropy_feature(double p_hat) {
    if (!(p_hat >= 0.0 && p_hat <= 1.0))
        throw Error("p_hat out of range [0,1]: " + std::to_string(p_hat));
    if (p_hat == 0.0 || p_hat == 1.0) return 0.0;
    const double q = 1.0 - p_hat;
    const double s = -(p_hat * std::log(p_hat) + q * std::log(q)) / std::numbers::ln2;
    return 8.0 * s;
}

double predict_ratio(double p_hat, const PredictorCoefficients& c) {
    const double p = std::clamp(p_hat, 0.0, 1.0);
    const double tau = entropy_feature(p);
    const double r = c.alpha * p + c.beta * tau + c.gamma * (p * tau) + c.epsilon;
    return std::clamp(r, 0.0, 1.0);
}

PredictorCoefficients fit(std::span<const TrainingPair> pairs) {
    if (pairs.size() < 4)
        throw Error("fit requires at least 4 training pairs, got " +
                    std::to_string(pairs.size()));

    // Normal equations A x = b over features [p, tau, p*tau, 1].
    std::array<std::array<double, 4>, 4> a{};
    std::array<double, 4> b{};
    for (const auto& pr : pairs) {
        const double p = std::clamp(pr.p_hat, 0.0, 1.0);
        const double tau = entropy_feature(p);
        const std::array<double, 4> f{p, tau, p * tau, 1.0};
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) a[i][j] += f[i] * f[j];
            b[i] += f[i] * pr.measured_ratio;
        }
    }

    double scale = 0;
    for (int i = 0; i < 4; ++i) scale = std::max(scale, std::abs(a[i][i]));

    // Gaussian elimination with partial pivoting; a vanishing pivot means a
    // degenerate design (e.g. constant p_hat corpus).
    for (int col = 0; col < 4; ++col) {
        int piv = col;
        for (int r = col + 1; r < 4; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        if (std::abs(a[piv][col]) < 1e-10 * std::max(scale, 1.0))
            throw Error("rank-deficient design matrix: training pairs do not span "
                        "the feature space");
        std::swap(a[col], a[piv]);
        std::swap(b[col], b[piv]);
        for (int r = 0; r < 4; ++r) {
            if (r == col) continue;
            const double m = a[r][col] / a[col][col];
            for (int c = col; c < 4; ++c) a[r][c] -= m * a[col][c];
            b[r] -= m * b[col];
        }
    }

    PredictorCoefficients c;
    c.alpha = b[0] / a[0][0];
    c.beta = b[1] / a[1][1];
    c.gamma = b[2] / a[2][2];
    c.epsilon = b[3] / a[3][3];
    return c;
}

// Frozen from the fit harness over the synthetic bit-flip / additive-noise
// corpus (see tools fit subcommand); one set per codec because the two
// codecs compress residuals differently.
PredictorCoefficients default_coefficients_tensorx() {
    return {1.17743, -0.0672039, -0.242579, 0.962507};
}

PredictorCoefficients default_coefficients_fmpp() {
    return {-0.753042, -0.0257072, -0.0980325, 0.968647};
}

}  // namespace tensorhub

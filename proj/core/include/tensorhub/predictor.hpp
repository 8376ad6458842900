#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace tensorhub {

// Fitted coefficients of the reduction-ratio regression
// R = clip(alpha*p + beta*tau + gamma*(p*tau) + epsilon, 0, 1).
struct PredictorCoefficients {
    double alpha = 0;
    double beta = 0;
    double gamma = 0;
    double epsilon = 0;
};

// One measured (normalized distance, reduction ratio) observation.
// measured_ratio = 1 - compressed/raw from an actual codec run.
struct TrainingPair {
    double p_hat = 0;
    double measured_ratio = 0;
    std::uint64_t bytes = 0;
};

// tau = 8 * S(p_hat) where S is binary entropy with the 0*log0 = 0
// convention. Range [0, 8]; throws on p_hat outside [0, 1].
double entropy_feature(double p_hat);

// Predicted reduction ratio in [0, 1].
double predict_ratio(double p_hat, const PredictorCoefficients& c);

// Ordinary least squares over columns [p, tau, p*tau, 1]. Order-independent
// (normal equations). Throws Error on fewer than 4 pairs or a
// rank-deficient design (e.g. all pairs share one p_hat).
PredictorCoefficients fit(std::span<const TrainingPair> pairs);

// Coefficients fitted offline per codec on a synthetic perturbation corpus
// (the fit harness in the CLI reproduces them). Used until an operator
// installs a store-specific fit.
PredictorCoefficients default_coefficients_tensorx();
PredictorCoefficients default_coefficients_fmpp();

}  // namespace tensorhub

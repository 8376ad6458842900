#include <doctest.h>

#include <cmath>
#include <random>

#include "tensorhub/errors.hpp"
#include "tensorhub/predictor.hpp"

using namespace tensorhub;

TEST_SUITE("predictor") {

TEST_CASE("entropy feature") {
    CHECK(entropy_feature(0.0) == 0.0);  // 0 log 0 = 0 convention
    CHECK(entropy_feature(1.0) == 0.0);
    CHECK(entropy_feature(0.5) == doctest::Approx(8.0));  // S(1/2) = 1 bit
    // S(0.11) ~ 0.4999, a handy half-entropy point.
    CHECK(entropy_feature(0.11) == doctest::Approx(8 * 0.49992).epsilon(1e-3));
    CHECK(entropy_feature(0.25) == entropy_feature(0.75));  // symmetry
    CHECK_THROWS_AS(entropy_feature(-0.01), Error);
    CHECK_THROWS_AS(entropy_feature(1.01), Error);
}

TEST_CASE("prediction clips to the unit interval") {
    PredictorCoefficients high{0, 0, 0, 5.0};
    CHECK(predict_ratio(0.3, high) == 1.0);
    PredictorCoefficients low{0, 0, 0, -5.0};
    CHECK(predict_ratio(0.3, low) == 0.0);

    PredictorCoefficients c{0, 0, 0, 0.42};
    CHECK(predict_ratio(0.0, c) == doctest::Approx(0.42));  // features vanish at p=0
}

TEST_CASE("fit recovers a known model exactly") {
    const PredictorCoefficients truth{-0.4, -0.1, 0.2, 0.9};
    std::vector<TrainingPair> pairs;
    std::mt19937_64 rng(1);
    for (int i = 0; i < 200; ++i) {
        const double p = std::uniform_real_distribution<>(0.0, 0.6)(rng);
        const double tau = entropy_feature(p);
        // Unclipped synthetic responses keep the problem purely linear.
        pairs.push_back({p, truth.alpha * p + truth.beta * tau + truth.gamma * p * tau +
                                truth.epsilon});
    }
    const PredictorCoefficients c = fit(pairs);
    CHECK(c.alpha == doctest::Approx(truth.alpha).epsilon(1e-8));
    CHECK(c.beta == doctest::Approx(truth.beta).epsilon(1e-8));
    CHECK(c.gamma == doctest::Approx(truth.gamma).epsilon(1e-8));
    CHECK(c.epsilon == doctest::Approx(truth.epsilon).epsilon(1e-8));
}

TEST_CASE("fit is order independent") {
    std::vector<TrainingPair> pairs;
    std::mt19937_64 rng(2);
    for (int i = 0; i < 50; ++i) {
        const double p = std::uniform_real_distribution<>(0.001, 0.5)(rng);
        pairs.push_back({p, 0.9 - p + 0.01 * std::sin(100 * p)});
    }
    const auto a = fit(pairs);
    std::reverse(pairs.begin(), pairs.end());
    const auto b = fit(pairs);
    CHECK(a.alpha == doctest::Approx(b.alpha).epsilon(1e-10));
    CHECK(a.epsilon == doctest::Approx(b.epsilon).epsilon(1e-10));
}

TEST_CASE("degenerate designs are rejected") {
    CHECK_THROWS_AS(fit(std::vector<TrainingPair>{}), Error);
    std::vector<TrainingPair> three = {{0.1, 0.5}, {0.2, 0.4}, {0.3, 0.3}};
    CHECK_THROWS_AS(fit(three), Error);

    // All pairs share one p_hat: rank-deficient.
    std::vector<TrainingPair> flat(10, TrainingPair{0.2, 0.5});
    CHECK_THROWS_AS(fit(flat), Error);
}

TEST_CASE("default coefficients behave sanely") {
    for (const auto& c : {default_coefficients_fmpp(), default_coefficients_tensorx()}) {
        // Near-duplicates predict high reduction, random pairs predict low.
        CHECK(predict_ratio(0.0005, c) > 0.8);
        CHECK(predict_ratio(0.5, c) < 0.2);
        // Monotone-region sanity: near-dup region beats the divergent region.
        double lo = 0, hi = 0;
        for (double p = 0.001; p <= 0.02; p += 0.001) lo += predict_ratio(p, c);
        for (double p = 0.3; p <= 0.5; p += 0.01) hi += predict_ratio(p, c);
        CHECK(lo / 20 > hi / 21);
    }
}

}  // TEST_SUITE

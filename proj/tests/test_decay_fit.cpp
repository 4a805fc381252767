#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "seqmeta/decay_fit.hpp"
#include "seqmeta/errors.hpp"

using namespace seqmeta;

namespace {

std::vector<double> model_curve(double a, double tau, double chance, std::size_t T) {
    std::vector<double> c;
    for (std::size_t t = 1; t <= T; ++t) c.push_back(predict_F(a, tau, chance, t));
    return c;
}

// Reference value frozen from an independent statistics package.
constexpr double kReferenceR = 0.9904966287694352;
constexpr double kReferenceP = 0.0011105301176428293;

}  // namespace

TEST(PredictF, Examples) {
    EXPECT_EQ(predict_f(0.7, 10, 0.2, 3, 3), 0.7 + 0.2);
    EXPECT_NEAR(predict_f(0.7, 10, 0.2, 1, 11), 0.7 / std::exp(1.0) + 0.2, 1e-15);
    EXPECT_NEAR(predict_f(0.7, 10, 0.2, 1, 11), 0.45752, 1e-5);
    EXPECT_NEAR(predict_f(0.7, 10, 0.2, 1, 100000), 0.2, 1e-12);
    EXPECT_THROW(predict_f(0.7, 10, 0.2, 5, 4), Error);
    EXPECT_THROW(predict_f(0.7, 0, 0.2, 1, 4), Error);
}

TEST(PredictAggregate, Examples) {
    EXPECT_EQ(predict_F(0.7, 10, 0.2, 1), 0.7 + 0.2);
    const double inf = std::numeric_limits<double>::infinity();
    for (std::size_t t : {1u, 7u, 500u}) EXPECT_NEAR(predict_F(0.7, inf, 0.2, t), 0.9, 1e-15);
    EXPECT_THROW(predict_F(0.7, 0.0, 0.2, 3), Error);
    EXPECT_THROW(predict_F(0.7, -1.0, 0.2, 3), Error);
    EXPECT_THROW(predict_F(0.7, 1.0, 0.2, 0), Error);
}

TEST(PredictAggregate, ClosedFormMatchesExplicitSum) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> a(0.0, 0.8), tau(0.05, 500.0);
    for (int trial = 0; trial < 20; ++trial) {
        const double aa = a(rng), tt = tau(rng);
        for (std::size_t t = 1; t <= 200; ++t) {
            double sum = 0.0;
            for (std::size_t i = 1; i <= t; ++i) sum += predict_f(aa, tt, 0.2, i, t);
            EXPECT_NEAR(predict_F(aa, tt, 0.2, t), sum / static_cast<double>(t), 1e-12);
        }
    }
}

TEST(Jacobians, MatchFiniteDifferences) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> a(0.05, 0.8), tau(0.5, 200.0);
    std::uniform_int_distribution<std::size_t> tt(1, 80);
    for (int trial = 0; trial < 200; ++trial) {
        const double aa = a(rng), ta = tau(rng);
        const std::size_t t = tt(rng);
        const std::size_t i = std::min<std::size_t>(t, 1 + static_cast<std::size_t>(trial % 5));
        // Offsets cancel in the differences; dropping chance keeps roundoff
        // proportional to the decaying part.
        const double ha = 1e-6 * aa, ht = 1e-6 * ta;
        const auto close = [](double analytic, double numeric) {
            return std::abs(analytic - numeric) <= 1e-6 * std::max(std::abs(numeric), 1e-9);
        };
        const auto jf = predict_f_jacobian(aa, ta, i, t);
        const double fda = (predict_f(aa + ha, ta, 0.0, i, t) - predict_f(aa - ha, ta, 0.0, i, t)) / (2 * ha);
        const double fdt = (predict_f(aa, ta + ht, 0.0, i, t) - predict_f(aa, ta - ht, 0.0, i, t)) / (2 * ht);
        EXPECT_TRUE(close(jf[0], fda)) << jf[0] << " vs " << fda;
        EXPECT_TRUE(close(jf[1], fdt)) << jf[1] << " vs " << fdt;
        const auto jF = predict_F_jacobian(aa, ta, t);
        const double Fda = (predict_F(aa + ha, ta, 0.0, t) - predict_F(aa - ha, ta, 0.0, t)) / (2 * ha);
        const double Fdt = (predict_F(aa, ta + ht, 0.0, t) - predict_F(aa, ta - ht, 0.0, t)) / (2 * ht);
        EXPECT_TRUE(close(jF[0], Fda)) << jF[0] << " vs " << Fda;
        EXPECT_TRUE(close(jF[1], Fdt)) << jF[1] << " vs " << Fdt;
    }
}

TEST(NlsFit, NoiselessRecovery) {
    const auto fit = nls_fit(curve_problem(model_curve(0.7, 10.0, 0.2, 50), 0.2));
    EXPECT_TRUE(fit.converged);
    EXPECT_TRUE(fit.tau_identifiable);
    EXPECT_NEAR(fit.a, 0.7, 1e-4);
    EXPECT_NEAR(fit.tau, 10.0, 1e-4);
    EXPECT_LT(fit.residual_sse, 1e-20);
}

TEST(NlsFit, NoiselessRecoveryAcrossParameters) {
    for (double a : {0.1, 0.4, 0.75})
        for (double tau : {0.7, 3.0, 25.0, 90.0}) {
            const auto fit = nls_fit(curve_problem(model_curve(a, tau, 0.2, 60), 0.2));
            EXPECT_NEAR(fit.a, a, 1e-4) << a << " " << tau;
            EXPECT_NEAR(fit.tau, tau, 1e-4 * std::max(1.0, tau)) << a << " " << tau;
        }
}

TEST(NlsFit, SingleTaskModelRecovery) {
    FitProblem p;
    p.model = DecayModel::single_task_f;
    p.task_index = 3;
    p.chance = 0.25;
    for (std::size_t t = 3; t <= 40; ++t) p.observations.push_back({t, predict_f(0.6, 7.0, 0.25, 3, t)});
    const auto fit = nls_fit(p);
    EXPECT_NEAR(fit.a, 0.6, 1e-6);
    EXPECT_NEAR(fit.tau, 7.0, 1e-6);
    p.observations.push_back({2, 0.5});
    EXPECT_THROW(nls_fit(p), Error);
}

TEST(NlsFit, NoisyMonteCarlo) {
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> noise(0.0, 0.01);
    const auto clean = model_curve(0.7, 10.0, 0.2, 50);
    int within = 0;
    for (int trial = 0; trial < 200; ++trial) {
        auto noisy = clean;
        for (double& v : noisy) v += noise(rng);
        const auto fit = nls_fit(curve_problem(noisy, 0.2));
        if (std::abs(fit.tau - 10.0) <= 1.0) ++within;
    }
    EXPECT_GE(within, 190);
}

TEST(NlsFit, ObjectiveLogNonIncreasing) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> noise(0.0, 0.02);
    for (int trial = 0; trial < 30; ++trial) {
        auto curve = model_curve(0.5, 4.0 + trial, 0.2, 30);
        for (double& v : curve) v += noise(rng);
        const auto fit = nls_fit(curve_problem(curve, 0.2));
        ASSERT_FALSE(fit.objective_log.empty());
        for (std::size_t k = 1; k < fit.objective_log.size(); ++k)
            EXPECT_LE(fit.objective_log[k], fit.objective_log[k - 1]);
        EXPECT_EQ(fit.objective_log.back(), fit.residual_sse);
        EXPECT_GE(fit.a, 0.0);
        EXPECT_LE(fit.a, 0.8);
        EXPECT_GT(fit.tau, 0.0);
    }
}

TEST(NlsFit, InvariantToObservationOrder) {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> noise(0.0, 0.01);
    auto p = curve_problem(model_curve(0.6, 12.0, 0.2, 25), 0.2);
    for (auto& o : p.observations) o.value += noise(rng);
    const auto forward = nls_fit(p);
    std::shuffle(p.observations.begin(), p.observations.end(), rng);
    const auto shuffled = nls_fit(p);
    EXPECT_EQ(forward.a, shuffled.a);
    EXPECT_EQ(forward.tau, shuffled.tau);
}

TEST(NlsFit, BoundsRespected) {
    // Data above the amplitude bound pin a at its upper limit.
    std::vector<double> curve(20, 1.0);
    const auto fit = nls_fit(curve_problem(curve, 0.2));
    EXPECT_LE(fit.a, 0.8);
    EXPECT_LE(fit.tau, 1e6);
    EXPECT_GE(fit.tau, 1e-3);
}

TEST(NlsFit, DegenerateAndInvalidInputs) {
    const auto flat = nls_fit(curve_problem(std::vector<double>(10, 0.2), 0.2));
    EXPECT_FALSE(flat.converged);
    EXPECT_FALSE(flat.tau_identifiable);
    EXPECT_EQ(flat.a, 0.0);

    EXPECT_THROW(nls_fit(curve_problem(std::vector<double>{0.5, 0.4}, 0.2)), Error);
    EXPECT_THROW(nls_fit(curve_problem(std::vector<double>{0.5, std::nan(""), 0.3}, 0.2)), Error);
    auto dup = curve_problem(std::vector<double>{0.5, 0.4, 0.3}, 0.2);
    dup.observations[2].t = 2;
    EXPECT_THROW(nls_fit(dup), Error);
}

TEST(Pearson, Examples) {
    const std::vector<double> xs{1, 2, 3, 4, 7};
    std::vector<double> lin, neg;
    for (double x : xs) {
        lin.push_back(2 * x + 1);
        neg.push_back(-x);
    }
    EXPECT_NEAR(pearson_r(xs, lin).r, 1.0, 1e-15);
    EXPECT_NEAR(pearson_r(xs, neg).r, -1.0, 1e-15);
    EXPECT_THROW(pearson_r(xs, std::vector<double>(5, 3.0)), Error);
    EXPECT_THROW(pearson_r(xs, std::vector<double>{1, 2}), Error);
}

TEST(Pearson, ReferenceTimeConstantsRegression) {
    const std::vector<double> L{1, 5, 10, 20, 50};
    const std::vector<double> tau{5.8, 13.4, 15.9, 27.8, 48.8};
    const auto c = pearson_r(L, tau);
    EXPECT_EQ(c.n, 5u);
    EXPECT_NEAR(c.r, kReferenceR, 1e-12);
    EXPECT_NEAR(c.p, kReferenceP, 1e-9);
    EXPECT_GE(c.r, 0.98);
    EXPECT_LT(c.p, 0.01);
}

TEST(Pearson, InvariantUnderPositiveAffineMaps) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n(0, 1);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> x(12), y(12);
        for (std::size_t k = 0; k < 12; ++k) {
            x[k] = n(rng);
            y[k] = 0.5 * x[k] + n(rng);
        }
        const double r = pearson_r(x, y).r;
        std::vector<double> x2 = x, y2 = y;
        for (double& v : x2) v = 3.5 * v - 2.0;
        for (double& v : y2) v = 0.01 * v + 100.0;
        EXPECT_NEAR(pearson_r(x2, y).r, r, 1e-12);
        EXPECT_NEAR(pearson_r(x, y2).r, r, 1e-12);
    }
}

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace seqmeta {

/// f_i(t) = a * exp(-(t - i) / tau) + chance, for t >= i.
double predict_f(double a, double tau, double chance, std::size_t i, std::size_t t);

/// F(t) = (1/t) * sum_{i=1..t} f_i(t), evaluated with the closed-form
/// geometric sum. tau may be +inf (no decay).
double predict_F(double a, double tau, double chance, std::size_t t);

/// Partial derivatives (d/da, d/dtau) of the two models.
std::array<double, 2> predict_f_jacobian(double a, double tau, std::size_t i, std::size_t t);
std::array<double, 2> predict_F_jacobian(double a, double tau, std::size_t t);

enum class DecayModel { aggregate_F, single_task_f };

std::string to_string(DecayModel m);

struct Observation {
    std::size_t t = 0;
    double value = 0.0;
};

struct FitBounds {
    double a_min = 0.0;
    double a_max = 0.8;
    double tau_min = 1e-3;
    double tau_max = 1e6;
};

struct FitProblem {
    std::vector<Observation> observations;
    DecayModel model = DecayModel::aggregate_F;
    double chance = 0.2;
    /// Task index i for the single_task_f model.
    std::size_t task_index = 1;
    /// Defaults: a in [0, 1 - chance], tau in [1e-3, 1e6].
    std::optional<FitBounds> bounds;
    /// Defaults: a = max(value) - chance clipped into (0, 1 - chance],
    /// tau = (largest t) / 3. Without an explicit guess a second start taken
    /// from a log-spaced tau scan is also tried and the lower residual wins.
    std::optional<std::array<double, 2>> initial;
};

struct DecayFit {
    double a = 0.0;
    double tau = 0.0;
    double chance = 0.0;
    double residual_sse = 0.0;
    bool converged = false;
    std::size_t iterations = 0;
    /// False when the data sit at chance so tau carries no information.
    bool tau_identifiable = true;
    /// Objective after each accepted step, starting with the initial guess.
    std::vector<double> objective_log;
};

/// Bounded damped Gauss-Newton (Levenberg-Marquardt with projection onto the
/// box) minimizing the sum of squared residuals over (a, tau). Converges when
/// the projected gradient norm drops below 1e-10 or a step falls below 1e-12;
/// gives up after 500 iterations.
DecayFit nls_fit(const FitProblem& problem);

/// Builds the aggregate-model problem from a mean-previous-accuracy curve
/// indexed t = 1..T.
FitProblem curve_problem(std::span<const double> curve, double chance);

struct Correlation {
    double r = 0.0;
    double p = 1.0;
    std::size_t n = 0;
};

/// Sample Pearson correlation with a two-sided p-value from Student's t with
/// n - 2 degrees of freedom.
Correlation pearson_r(std::span<const double> xs, std::span<const double> ys);

}  // namespace seqmeta

#include "seqmeta/decay_fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/students_t.hpp>

#include "seqmeta/errors.hpp"

namespace seqmeta {

namespace {

constexpr std::size_t kMaxIterations = 500;
constexpr double kGradTol = 1e-10;
constexpr double kStepTol = 1e-12;

void check_tau(double tau) {
    if (!(tau > 0.0)) throw invalid_argument("decay time constant must be > 0");
}

// sum_{j=0}^{t-1} exp(-j / tau)
double geometric_sum(double tau, std::size_t t) {
    const double rate = 1.0 / tau;
    if (rate == 0.0) return static_cast<double>(t);
    return std::expm1(-static_cast<double>(t) * rate) / std::expm1(-rate);
}

struct Evaluation {
    std::vector<double> residuals;
    std::vector<std::array<double, 2>> jacobian;
    double sse = 0.0;
};

Evaluation evaluate(const FitProblem& p, const std::vector<Observation>& obs, double a, double tau, bool with_jac) {
    Evaluation e;
    e.residuals.reserve(obs.size());
    for (const auto& o : obs) {
        const double model = p.model == DecayModel::aggregate_F ? predict_F(a, tau, p.chance, o.t)
                                                                : predict_f(a, tau, p.chance, p.task_index, o.t);
        const double r = model - o.value;
        e.residuals.push_back(r);
        e.sse += r * r;
        if (with_jac)
            e.jacobian.push_back(p.model == DecayModel::aggregate_F ? predict_F_jacobian(a, tau, o.t)
                                                                    : predict_f_jacobian(a, tau, p.task_index, o.t));
    }
    return e;
}

}  // namespace

std::string to_string(DecayModel m) { return m == DecayModel::aggregate_F ? "aggregate_F" : "single_task_f"; }

double predict_f(double a, double tau, double chance, std::size_t i, std::size_t t) {
    check_tau(tau);
    if (t < i) throw invalid_argument("f_i(t) requires t >= i (t=" + std::to_string(t) + ", i=" + std::to_string(i) + ")");
    return a * std::exp(-static_cast<double>(t - i) / tau) + chance;
}

double predict_F(double a, double tau, double chance, std::size_t t) {
    check_tau(tau);
    if (t < 1) throw invalid_argument("F(t) requires t >= 1");
    return a * geometric_sum(tau, t) / static_cast<double>(t) + chance;
}

std::array<double, 2> predict_f_jacobian(double a, double tau, std::size_t i, std::size_t t) {
    check_tau(tau);
    if (t < i) throw invalid_argument("f_i(t) requires t >= i");
    const double lag = static_cast<double>(t - i);
    const double decay = std::exp(-lag / tau);
    return {decay, a * decay * lag / (tau * tau)};
}

std::array<double, 2> predict_F_jacobian(double a, double tau, std::size_t t) {
    check_tau(tau);
    if (t < 1) throw invalid_argument("F(t) requires t >= 1");
    // dS/dtau = sum_j (j / tau^2) exp(-j / tau); summed directly to stay
    // accurate when tau is large.
    double ds = 0.0;
    for (std::size_t j = 1; j < t; ++j) {
        const double jd = static_cast<double>(j);
        ds += jd * std::exp(-jd / tau);
    }
    ds /= tau * tau;
    const double inv_t = 1.0 / static_cast<double>(t);
    return {geometric_sum(tau, t) * inv_t, a * ds * inv_t};
}

FitProblem curve_problem(std::span<const double> curve, double chance) {
    FitProblem p;
    p.chance = chance;
    for (std::size_t t = 0; t < curve.size(); ++t) p.observations.push_back({t + 1, curve[t]});
    return p;
}

namespace {

DecayFit run_lm(const FitProblem& problem, const std::vector<Observation>& obs, const FitBounds& b,
                std::array<double, 2> x) {
    const auto clamp_a = [&](double a) { return std::clamp(a, b.a_min, b.a_max); };
    const auto clamp_tau = [&](double tau) { return std::clamp(tau, b.tau_min, b.tau_max); };
    x = {clamp_a(x[0]), clamp_tau(x[1])};

    DecayFit fit;
    fit.chance = problem.chance;
    Evaluation cur = evaluate(problem, obs, x[0], x[1], true);
    fit.objective_log.push_back(cur.sse);
    double lambda = -1.0;
    double nu = 2.0;
    const std::array<double, 2> lo{b.a_min, b.tau_min};
    const std::array<double, 2> hi{b.a_max, b.tau_max};

    std::size_t it = 0;
    bool need_linearization = true;
    double a00 = 0, a01 = 0, a11 = 0, g0 = 0, g1 = 0;
    while (it < kMaxIterations) {
        if (need_linearization) {
            a00 = a01 = a11 = g0 = g1 = 0.0;
            for (std::size_t k = 0; k < obs.size(); ++k) {
                const auto& jr = cur.jacobian[k];
                a00 += jr[0] * jr[0];
                a01 += jr[0] * jr[1];
                a11 += jr[1] * jr[1];
                g0 += jr[0] * cur.residuals[k];
                g1 += jr[1] * cur.residuals[k];
            }
            // Projected gradient: components pushing against an active bound vanish.
            double pg = 0.0;
            const std::array<double, 2> g{g0, g1};
            for (int j = 0; j < 2; ++j) {
                const double moved = std::clamp(x[j] - g[j], lo[j], hi[j]);
                pg += (x[j] - moved) * (x[j] - moved);
            }
            if (std::sqrt(pg) < kGradTol) {
                fit.converged = true;
                break;
            }
            if (lambda < 0) lambda = 1e-3 * std::max(a00, a11);
            need_linearization = false;
        }
        ++it;

        // Marquardt-scaled damping; the tiny floor keeps the system regular
        // when a column of the Jacobian vanishes.
        const double d0 = std::max(a00, 1e-300);
        const double d1 = std::max(a11, 1e-300);
        const double m00 = a00 + lambda * d0;
        const double m11 = a11 + lambda * d1;
        const double det = m00 * m11 - a01 * a01;
        std::array<double, 2> step{};
        if (det > 0.0 && std::isfinite(det)) {
            step[0] = (-g0 * m11 + g1 * a01) / det;
            step[1] = (-g1 * m00 + g0 * a01) / det;
        }
        const std::array<double, 2> trial{clamp_a(x[0] + step[0]), clamp_tau(x[1] + step[1])};
        const std::array<double, 2> taken{trial[0] - x[0], trial[1] - x[1]};
        const double step_norm = std::hypot(taken[0], taken[1]);
        if (step_norm < kStepTol) {
            fit.converged = true;
            break;
        }
        Evaluation next = evaluate(problem, obs, trial[0], trial[1], true);
        const double predicted = -(2.0 * (g0 * taken[0] + g1 * taken[1]) + a00 * taken[0] * taken[0] +
                                   2.0 * a01 * taken[0] * taken[1] + a11 * taken[1] * taken[1]);
        const double actual = cur.sse - next.sse;
        if (std::isfinite(next.sse) && actual > 0.0) {
            const double rho = predicted > 0.0 ? actual / predicted : 0.0;
            lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
            nu = 2.0;
            x = trial;
            cur = std::move(next);
            fit.objective_log.push_back(cur.sse);
            need_linearization = true;
        } else {
            lambda *= nu;
            nu *= 2.0;
            if (!std::isfinite(lambda)) break;
        }
    }

    fit.a = x[0];
    fit.tau = x[1];
    fit.residual_sse = cur.sse;
    fit.iterations = it;
    return fit;
}

// The model is linear in a, so for fixed tau the best amplitude has a closed
// form. Scanning tau on a log grid gives a start that avoids the flat region
// near tau -> 0 where d/dtau vanishes.
std::array<double, 2> grid_start(const FitProblem& p, const std::vector<Observation>& obs, const FitBounds& b) {
    const double lo = std::log(std::max(b.tau_min, 1e-2));
    const double hi = std::log(std::min(b.tau_max, 1e4));
    constexpr int kPoints = 80;
    std::array<double, 2> best{b.a_min, std::exp(lo)};
    double best_sse = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= kPoints; ++k) {
        const double tau = std::exp(lo + (hi - lo) * k / kPoints);
        double gg = 0.0, gy = 0.0;
        std::vector<double> basis;
        basis.reserve(obs.size());
        for (const auto& o : obs) {
            const double g = p.model == DecayModel::aggregate_F ? predict_F(1.0, tau, 0.0, o.t)
                                                                : predict_f(1.0, tau, 0.0, p.task_index, o.t);
            basis.push_back(g);
            gg += g * g;
            gy += g * (o.value - p.chance);
        }
        const double a = std::clamp(gg > 0.0 ? gy / gg : 0.0, b.a_min, b.a_max);
        double sse = 0.0;
        for (std::size_t j = 0; j < obs.size(); ++j) {
            const double r = a * basis[j] + p.chance - obs[j].value;
            sse += r * r;
        }
        if (sse < best_sse) {
            best_sse = sse;
            best = {a, tau};
        }
    }
    return best;
}

}  // namespace

DecayFit nls_fit(const FitProblem& problem) {
    if (problem.observations.size() < 3) throw invalid_argument("decay fit needs at least 3 observations");
    if (!(problem.chance >= 0.0 && problem.chance < 1.0)) throw invalid_argument("chance level must lie in [0, 1)");
    std::vector<Observation> obs = problem.observations;
    for (const auto& o : obs)
        if (!std::isfinite(o.value))
            throw invalid_argument("non-finite observation at t=" + std::to_string(o.t));
    std::sort(obs.begin(), obs.end(), [](const Observation& x, const Observation& y) { return x.t < y.t; });
    for (std::size_t k = 1; k < obs.size(); ++k)
        if (obs[k].t == obs[k - 1].t) throw invalid_argument("duplicate observation time t=" + std::to_string(obs[k].t));
    if (problem.model == DecayModel::single_task_f && obs.front().t < problem.task_index)
        throw invalid_argument("single_task_f observations must satisfy t >= task_index");

    const FitBounds b = problem.bounds.value_or(FitBounds{0.0, 1.0 - problem.chance, 1e-3, 1e6});
    if (!(b.a_min <= b.a_max) || !(b.tau_min > 0.0) || !(b.tau_min <= b.tau_max))
        throw invalid_argument("invalid fit bounds");

    std::array<double, 2> x{};
    if (problem.initial) {
        x = *problem.initial;
    } else {
        double max_value = -std::numeric_limits<double>::infinity();
        for (const auto& o : obs) max_value = std::max(max_value, o.value);
        const double a_hi = 1.0 - problem.chance;
        x[0] = std::clamp(max_value - problem.chance, std::min(1e-6, a_hi), a_hi);
        x[1] = static_cast<double>(obs.back().t) / 3.0;
    }

    const bool at_chance = std::all_of(obs.begin(), obs.end(),
                                       [&](const Observation& o) { return std::abs(o.value - problem.chance) <= 1e-9; });
    if (at_chance) {
        DecayFit fit;
        fit.chance = problem.chance;
        fit.a = 0.0;
        fit.tau = std::clamp(x[1], b.tau_min, b.tau_max);
        fit.residual_sse = evaluate(problem, obs, 0.0, fit.tau, false).sse;
        fit.converged = false;
        fit.tau_identifiable = false;
        return fit;
    }

    DecayFit fit = run_lm(problem, obs, b, x);
    if (!problem.initial) {
        DecayFit alt = run_lm(problem, obs, b, grid_start(problem, obs, b));
        if (alt.residual_sse < fit.residual_sse) fit = std::move(alt);
    }
    return fit;
}

Correlation pearson_r(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw invalid_argument("pearson_r requires equal-length inputs");
    const std::size_t n = xs.size();
    if (n < 3) throw invalid_argument("pearson_r requires at least 3 points");
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (!std::isfinite(xs[k]) || !std::isfinite(ys[k])) throw invalid_argument("pearson_r inputs must be finite");
        mx += xs[k];
        my += ys[k];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double dx = xs[k] - mx;
        const double dy = ys[k] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw invalid_argument("pearson_r undefined for zero-variance input");
    Correlation c;
    c.n = n;
    c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    const double df = static_cast<double>(n - 2);
    if (std::abs(c.r) >= 1.0) {
        c.p = 0.0;
    } else {
        const double t = std::abs(c.r) * std::sqrt(df / (1.0 - c.r * c.r));
        const boost::math::students_t dist(df);
        c.p = 2.0 * boost::math::cdf(boost::math::complement(dist, t));
    }
    return c;
}

}  // namespace seqmeta

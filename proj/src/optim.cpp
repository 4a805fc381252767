#include "seqmeta/optim.hpp"

#include <cmath>

#include "seqmeta/errors.hpp"

namespace seqmeta {

ParamVector sgd_step(const ParamVector& params, const ParamVector& grad, double lr) {
    if (params.size() != grad.size()) throw ShapeError("sgd gradient length", params.size(), grad.size());
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw invalid_argument("sgd learning rate must be finite and >= 0");
    ParamVector out = params;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= lr * grad[i];
    return out;
}

AdamState AdamState::zeros(std::size_t size) {
    AdamState s;
    s.first_moment = ParamVector(size, 0.0);
    s.second_moment = ParamVector(size, 0.0);
    return s;
}

AdamResult adam_step(const AdamState& state, const ParamVector& params, const ParamVector& grad, double lr) {
    if (grad.size() != params.size()) throw ShapeError("adam gradient length", params.size(), grad.size());
    if (state.first_moment.size() != params.size())
        throw ShapeError("adam first moment length", params.size(), state.first_moment.size());
    if (state.second_moment.size() != params.size())
        throw ShapeError("adam second moment length", params.size(), state.second_moment.size());
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw invalid_argument("adam learning rate must be finite and >= 0");

    AdamResult r{state, params};
    r.state.step_count = state.step_count + 1;
    const double t = static_cast<double>(r.state.step_count);
    const double correction1 = 1.0 - std::pow(state.beta1, t);
    const double correction2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        double& m = r.state.first_moment[i];
        double& v = r.state.second_moment[i];
        m = state.beta1 * m + (1.0 - state.beta1) * grad[i];
        v = state.beta2 * v + (1.0 - state.beta2) * grad[i] * grad[i];
        const double m_hat = m / correction1;
        const double v_hat = v / correction2;
        r.params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
    return r;
}

}  // namespace seqmeta

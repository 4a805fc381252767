#pragma once

#include <cstdint>

#include "seqmeta/param_vector.hpp"

namespace seqmeta {

/// params - lr * grad. A zero rate is accepted and returns params unchanged.
ParamVector sgd_step(const ParamVector& params, const ParamVector& grad, double lr);

struct AdamState {
    ParamVector first_moment;
    ParamVector second_moment;
    std::uint64_t step_count = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState zeros(std::size_t size);
};

struct AdamResult {
    AdamState state;
    ParamVector params;
};

/// Bias-corrected Adam.
AdamResult adam_step(const AdamState& state, const ParamVector& params, const ParamVector& grad, double lr);

}  // namespace seqmeta

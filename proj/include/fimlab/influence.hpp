#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "fimlab/common.hpp"
#include "fimlab/dynamics.hpp"

namespace fimlab {

// Per-dimension counterfactual influence of the joint action.
using InfluenceVector = std::vector<double>;

// Per-dimension eligibility values accumulating influence over time.
// Reset to zero at every episode start.
struct TraceVector {
    std::vector<double> values;
    double gamma = 0.99;

    TraceVector() = default;
    TraceVector(std::size_t dims, double gamma_) : values(dims, 0.0), gamma(gamma_) {
        if (gamma_ <= 0.0 || gamma_ > 1.0) throw ConfigError("trace decay must lie in (0,1]");
    }
    void reset() { std::fill(values.begin(), values.end(), 0.0); }
};

// Collective influence on each state dimension: the actual deviation
// |model(s,a)^d - s^d| minus, per agent, its expectation when that agent's
// action is replaced by a uniform random draw. The expectation is computed
// by exact enumeration over the agent's action set.
inline InfluenceVector counterfactual_influence(TransitionModel& model, const StateVector& state,
                                                const JointAction& action) {
    const std::vector<int>& sizes = model.action_space_sizes();
    if (action.size() != sizes.size()) throw InputError("joint action size mismatch");
    const std::size_t dims = state.size();

    StateVector actual = model.predict(state, action);
    if (!all_finite(actual)) throw ComputeError("non-finite model prediction");
    std::vector<double> actual_dev(dims);
    for (std::size_t d = 0; d < dims; ++d) actual_dev[d] = std::fabs(actual[d] - state[d]);

    InfluenceVector inf(dims, 0.0);
    JointAction cf = action;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        std::vector<double> mean_dev(dims, 0.0);
        for (int a = 0; a < sizes[i]; ++a) {
            cf[i] = a;
            const StateVector& pred = (a == action[i]) ? actual : model.predict(state, cf);
            if (!all_finite(pred)) throw ComputeError("non-finite model prediction");
            for (std::size_t d = 0; d < dims; ++d) mean_dev[d] += std::fabs(pred[d] - state[d]);
        }
        cf[i] = action[i];
        const double inv = 1.0 / static_cast<double>(sizes[i]);
        for (std::size_t d = 0; d < dims; ++d) inf[d] += actual_dev[d] - mean_dev[d] * inv;
    }
    return inf;
}

// e_t^d = gamma * e_{t-1}^d + Inf_t^d
inline TraceVector update_trace(const TraceVector& trace, const InfluenceVector& inf) {
    if (trace.values.size() != inf.size()) throw InputError("trace/influence length mismatch");
    TraceVector next = trace;
    for (std::size_t d = 0; d < inf.size(); ++d)
        next.values[d] = trace.gamma * trace.values[d] + inf[d];
    return next;
}

// r^AFI = sum_d Inf^d * max(e_prev^d, 1); the clamp keeps fresh dimensions
// from vanishing before their trace builds up.
inline double afi_reward(const InfluenceVector& inf, const TraceVector& trace_prev) {
    if (trace_prev.values.size() != inf.size()) throw InputError("trace/influence length mismatch");
    double r = 0.0;
    for (std::size_t d = 0; d < inf.size(); ++d)
        r += inf[d] * std::max(trace_prev.values[d], 1.0);
    return r;
}

}  // namespace fimlab

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "fimlab/common.hpp"

namespace fimlab {

// Empirical distribution of normalized per-dimension state deltas,
// discretized to two decimal places. Keys store round(delta * 100).
struct DeltaHistogram {
    std::vector<std::map<std::int64_t, std::int64_t>> bins;
    std::int64_t total = 0;

    std::size_t dims() const { return bins.size(); }
};

struct DimensionProfile {
    std::vector<double> scale;        // E|delta| + eps, strictly positive
    std::vector<double> raw_entropy;  // nats
    std::vector<double> entropy;      // min-max normalized to [0,1]
    std::vector<double> weight;       // softmax(-H/tau), sums to 1
};

inline constexpr double kScaleEpsilon = 1e-6;

// Mean absolute per-dimension change plus a stabilizing epsilon; the
// normalizer that makes entropies comparable across dimensions.
inline std::vector<double> estimate_scales(std::span<const Transition> transitions,
                                           double eps = kScaleEpsilon) {
    if (transitions.empty()) throw InputError("estimate_scales on an empty trajectory set");
    const std::size_t dims = transitions.front().state.size();
    std::vector<double> scale(dims, 0.0);
    for (const Transition& tr : transitions) {
        if (tr.state.size() != dims || tr.next_state.size() != dims)
            throw InputError("inconsistent state dimensionality");
        for (std::size_t d = 0; d < dims; ++d)
            scale[d] += std::fabs(tr.next_state[d] - tr.state[d]);
    }
    for (double& s : scale) s = s / static_cast<double>(transitions.size()) + eps;
    return scale;
}

inline DeltaHistogram build_histogram(std::span<const Transition> transitions,
                                      const std::vector<double>& scales) {
    for (double s : scales)
        if (!(s > 0.0)) throw InputError("scales must be strictly positive");
    DeltaHistogram h;
    h.bins.resize(scales.size());
    for (const Transition& tr : transitions) {
        for (std::size_t d = 0; d < scales.size(); ++d) {
            const double delta = (tr.next_state[d] - tr.state[d]) / scales[d];
            h.bins[d][std::llround(delta * 100.0)] += 1;
        }
        ++h.total;
    }
    return h;
}

struct EntropyEstimate {
    std::vector<double> raw;         // -sum p log p in nats
    std::vector<double> normalized;  // min-max over dimensions, all zero if degenerate
};

inline EntropyEstimate entropies(const DeltaHistogram& h) {
    EntropyEstimate out;
    out.raw.reserve(h.dims());
    for (const auto& bins : h.bins) {
        std::int64_t n = 0;
        for (const auto& [key, count] : bins) n += count;
        if (n == 0) throw InputError("entropy of a dimension with no samples");
        double ent = 0.0;
        for (const auto& [key, count] : bins) {
            const double p = static_cast<double>(count) / static_cast<double>(n);
            ent -= p * std::log(p);
        }
        out.raw.push_back(ent);
    }
    const auto [lo, hi] = std::minmax_element(out.raw.begin(), out.raw.end());
    out.normalized.resize(out.raw.size(), 0.0);
    if (*hi > *lo)
        for (std::size_t d = 0; d < out.raw.size(); ++d)
            out.normalized[d] = (out.raw[d] - *lo) / (*hi - *lo);
    return out;
}

// w_d = softmax(-H(d) / tau), computed with max-subtraction.
inline std::vector<double> weights_from_entropy(const std::vector<double>& entropy, double tau) {
    if (tau <= 0.0) throw InputError("softmax temperature must be positive");
    if (entropy.empty()) throw InputError("empty entropy vector");
    double best = -entropy[0];
    for (double h : entropy) best = std::max(best, -h);
    std::vector<double> w(entropy.size());
    double z = 0.0;
    for (std::size_t d = 0; d < entropy.size(); ++d) {
        w[d] = std::exp((-entropy[d] - best) / tau);
        z += w[d];
    }
    for (double& x : w) x /= z;
    return w;
}

inline void check_simplex(const std::vector<double>& w, const char* what) {
    double sum = 0.0;
    for (double x : w) {
        if (x < 0.0) throw InputError(std::string(what) + ": negative weight");
        sum += x;
    }
    if (std::fabs(sum - 1.0) > 1e-9) throw InputError(std::string(what) + ": weights must sum to 1");
}

inline std::vector<double> ema_update(const std::vector<double>& w_old,
                                      const std::vector<double>& w_new, double phi) {
    if (w_old.size() != w_new.size()) throw InputError("ema_update: length mismatch");
    if (phi < 0.0 || phi > 1.0) throw InputError("ema rate must lie in [0,1]");
    check_simplex(w_old, "ema_update old weights");
    check_simplex(w_new, "ema_update new weights");
    std::vector<double> w(w_old.size());
    for (std::size_t d = 0; d < w.size(); ++d) w[d] = (1.0 - phi) * w_old[d] + phi * w_new[d];
    return w;
}

// Smallest integer horizon T with T >= (H_target - H_initial) / E_d;
// zero when the target is already met.
inline std::int64_t required_horizon(double h_target, double h_initial, double per_step_entropy) {
    if (!(per_step_entropy > 0.0)) throw InputError("per-step entropy bound must be positive");
    if (h_initial >= h_target) return 0;
    return static_cast<std::int64_t>(std::ceil((h_target - h_initial) / per_step_entropy));
}

inline DimensionProfile build_profile(std::span<const Transition> transitions, double tau,
                                      double eps = kScaleEpsilon) {
    DimensionProfile p;
    p.scale = estimate_scales(transitions, eps);
    auto est = entropies(build_histogram(transitions, p.scale));
    p.raw_entropy = std::move(est.raw);
    p.entropy = std::move(est.normalized);
    p.weight = weights_from_entropy(p.entropy, tau);
    return p;
}

}  // namespace fimlab

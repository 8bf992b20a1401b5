#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace fimlab {

// D-dimensional real global state (flattened entity coordinates).
using StateVector = std::vector<double>;

// One action index in [0, n_actions) per agent.
using JointAction = std::vector<int>;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct StateError : std::logic_error {
    using std::logic_error::logic_error;
};
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ComputeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent, reproducible random streams derived from one run seed.
// Keeping concerns (env resets, exploration, batch sampling, ...) on
// separate streams means enabling/disabling one consumer does not shift
// the draws seen by the others.
class Rng {
public:
    Rng() : engine_(splitmix64(0)) {}
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : engine_(splitmix64(splitmix64(seed) ^ splitmix64(stream + 1))) {}

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    // Uniform integer in [0, n).
    int below(int n) { return std::uniform_int_distribution<int>(0, n - 1)(engine_); }
    double gaussian() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

// One environment step. Observations in Push-2-Box equal the flattened
// global state, so they are not duplicated here; consumers that need
// per-agent views read `state`/`next_state`. `reward` is the composed
// training reward; `reward_ext` keeps the raw environment payout.
struct Transition {
    StateVector state;
    JointAction action;
    double reward_ext = 0.0;
    double reward = 0.0;
    StateVector next_state;
    bool done = false;
};

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace fimlab

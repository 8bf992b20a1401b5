#pragma once

#include <vector>

#include "fimlab/common.hpp"
#include "fimlab/grid_env.hpp"
#include "fimlab/net.hpp"

namespace fimlab {

// Forward-model interface shared by the learned network and the exact
// simulator oracle, so influence queries are agnostic to which one answers.
class TransitionModel {
public:
    virtual ~TransitionModel() = default;
    virtual StateVector predict(const StateVector& state, const JointAction& action) = 0;
    virtual int state_dim() const = 0;
    virtual const std::vector<int>& action_space_sizes() const = 0;
};

// Three-layer MLP next-state predictor trained online by mean squared
// error. State coordinates are min-max scaled to [0,1] on the way in and
// predictions unscaled on the way out; actions enter as per-agent one-hots.
class LearnedDynamicsModel : public TransitionModel {
public:
    LearnedDynamicsModel(std::vector<double> state_lo, std::vector<double> state_hi,
                         std::vector<int> action_space_sizes, Rng& rng, int hidden = 128,
                         double learning_rate = 5e-4)
        : lo_(std::move(state_lo)),
          hi_(std::move(state_hi)),
          action_sizes_(std::move(action_space_sizes)) {
        if (lo_.size() != hi_.size()) throw ConfigError("state bound length mismatch");
        for (std::size_t d = 0; d < lo_.size(); ++d)
            if (!(hi_[d] > lo_[d])) throw ConfigError("state bounds must have positive range");
        int action_dims = 0;
        for (int n : action_sizes_) {
            if (n < 1) throw ConfigError("empty action set");
            action_dims += n;
        }
        const int d = static_cast<int>(lo_.size());
        net_ = Mlp({d + action_dims, hidden, hidden, d}, Activation::relu);
        net_.init_params(rng);
        opt_ = AdamOptimizer(net_.param_count(), learning_rate);
    }

    static LearnedDynamicsModel for_grid(const GridConfig& cfg, Rng& rng,
                                         double learning_rate = 5e-4) {
        const int d = 2 * (cfg.n_agents + cfg.n_boxes);
        std::vector<double> lo(d, 0.0), hi(d);
        for (int i = 0; i < d; ++i)
            hi[i] = (i % 2 == 0) ? static_cast<double>(cfg.width - 1)
                                 : static_cast<double>(cfg.height - 1);
        return LearnedDynamicsModel(std::move(lo), std::move(hi),
                                    std::vector<int>(cfg.n_agents, kNumActions), rng,
                                    128, learning_rate);
    }

    int state_dim() const override { return static_cast<int>(lo_.size()); }
    const std::vector<int>& action_space_sizes() const override { return action_sizes_; }
    Mlp& net() { return net_; }

    StateVector predict(const StateVector& state, const JointAction& action) override {
        auto out = net_.forward(encode(state, action));
        StateVector pred(lo_.size());
        for (std::size_t d = 0; d < lo_.size(); ++d) pred[d] = lo_[d] + out[d] * (hi_[d] - lo_[d]);
        return pred;
    }

    // One MSE step over the batch; returns mean squared prediction error
    // (squared L2 norm per sample, averaged over the batch).
    double train_step(const std::vector<Transition>& batch) {
        if (batch.empty()) throw InputError("dynamics train_step on an empty batch");
        const double inv_b = 1.0 / static_cast<double>(batch.size());
        double loss = 0.0;
        for (const Transition& sample : batch) {
            auto out = net_.forward(encode(sample.state, sample.action));
            std::vector<double> upstream(out.size());
            for (std::size_t d = 0; d < out.size(); ++d) {
                const double range = hi_[d] - lo_[d];
                const double pred = lo_[d] + out[d] * range;
                const double resid = pred - sample.next_state[d];
                loss += resid * resid * inv_b;
                upstream[d] = 2.0 * resid * range * inv_b;
            }
            net_.backward(upstream);
        }
        if (!std::isfinite(loss)) throw TrainingError("non-finite dynamics loss");
        opt_.step(net_);
        return loss;
    }

private:
    std::vector<double> lo_;
    std::vector<double> hi_;
    std::vector<int> action_sizes_;
    Mlp net_;
    AdamOptimizer opt_{1};

    std::vector<double> encode(const StateVector& state, const JointAction& action) const {
        if (state.size() != lo_.size()) throw InputError("dynamics predict: state size mismatch");
        if (action.size() != action_sizes_.size())
            throw InputError("dynamics predict: joint action size mismatch");
        std::vector<double> x;
        x.reserve(net_.input_size());
        for (std::size_t d = 0; d < state.size(); ++d)
            x.push_back((state[d] - lo_[d]) / (hi_[d] - lo_[d]));
        for (std::size_t i = 0; i < action.size(); ++i) {
            if (action[i] < 0 || action[i] >= action_sizes_[i])
                throw InputError("dynamics predict: action index out of range");
            for (int a = 0; a < action_sizes_[i]; ++a)
                x.push_back(a == action[i] ? 1.0 : 0.0);
        }
        return x;
    }
};

// Exact simulator transition behind the TransitionModel interface.
class OracleModel : public TransitionModel {
public:
    explicit OracleModel(PushBoxEnv env)
        : env_(std::move(env)), action_sizes_(env_.action_space_sizes()) {}

    int state_dim() const override { return env_.state_dim(); }
    const std::vector<int>& action_space_sizes() const override { return action_sizes_; }

    StateVector predict(const StateVector& state, const JointAction& action) override {
        return env_.oracle_next(unflatten_state(env_.config(), state), action);
    }

private:
    PushBoxEnv env_;
    std::vector<int> action_sizes_;
};

inline OracleModel make_oracle_model(const PushBoxEnv& env) { return OracleModel(env); }

}  // namespace fimlab

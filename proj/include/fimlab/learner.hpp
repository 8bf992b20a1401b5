#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <vector>

#include "fimlab/common.hpp"
#include "fimlab/net.hpp"

namespace fimlab {

struct LearnerConfig {
    int n_agents = 2;
    int obs_dim = 8;
    int n_actions = 8;
    std::vector<double> obs_lo;  // per-dimension bounds used to scale inputs
    std::vector<double> obs_hi;
    int agent_hidden = 64;
    int mixing_dim = 32;
    double gamma = 0.99;
    double learning_rate = 5e-4;
    int target_interval = 200;
    int batch_size = 32;
    std::size_t buffer_capacity = 5000;
    bool vdn = false;  // pure-sum mixer instead of the hypernetwork mixer

    void validate() const {
        if (n_agents < 1 || obs_dim < 1 || n_actions < 1) throw ConfigError("bad learner shape");
        if (obs_lo.size() != static_cast<std::size_t>(obs_dim) || obs_hi.size() != obs_lo.size())
            throw ConfigError("observation bounds must match obs_dim");
        if (gamma < 0.0 || gamma > 1.0) throw ConfigError("discount must lie in [0,1]");
        if (target_interval < 1 || batch_size < 1) throw ConfigError("bad learner intervals");
    }
};

// One parameter set shared across agents; the agent id enters as a one-hot
// appended to the (min-max scaled) observation.
class AgentNet {
public:
    AgentNet() = default;
    AgentNet(const LearnerConfig& cfg, Rng& rng)
        : n_agents_(cfg.n_agents), lo_(cfg.obs_lo), hi_(cfg.obs_hi) {
        net_ = Mlp({cfg.obs_dim + cfg.n_agents, cfg.agent_hidden, cfg.agent_hidden, cfg.n_actions},
                   Activation::relu);
        net_.init_params(rng);
    }

    std::vector<double> q_values(const StateVector& obs, int agent, MlpCache& cache) const {
        return net_.forward(encode(obs, agent), cache);
    }
    std::vector<double> q_values(const StateVector& obs, int agent) const {
        MlpCache scratch;
        return q_values(obs, agent, scratch);
    }

    std::vector<double> encode(const StateVector& obs, int agent) const {
        if (agent < 0 || agent >= n_agents_) throw InputError("agent id out of range");
        std::vector<double> x;
        x.reserve(obs.size() + n_agents_);
        for (std::size_t d = 0; d < obs.size(); ++d)
            x.push_back((obs[d] - lo_[d]) / (hi_[d] - lo_[d]));
        for (int i = 0; i < n_agents_; ++i) x.push_back(i == agent ? 1.0 : 0.0);
        return x;
    }

    Mlp& net() { return net_; }
    const Mlp& net() const { return net_; }

private:
    int n_agents_ = 0;
    std::vector<double> lo_, hi_;
    Mlp net_;
};

// State-conditioned monotonic mixer. Hypernetworks generate non-negative
// (abs-activated) mixing weights; the hidden combination uses ELU, so
// Q_tot is non-decreasing in every agent utility by construction. The VDN
// variant is the exact sum of agent utilities.
class MixingNet {
public:
    struct Cache {
        MlpCache w1, b1, w2, v;
        std::vector<double> agent_qs;
        std::vector<double> z;       // pre-ELU hidden
        std::vector<double> hidden;  // post-ELU
    };

    struct Generated {
        std::vector<double> w1;  // mixing_dim x n_agents, row-major
        std::vector<double> b1;
        std::vector<double> w2;
        double v = 0.0;
    };

    MixingNet() = default;
    MixingNet(const LearnerConfig& cfg, Rng& rng)
        : vdn_(cfg.vdn), n_agents_(cfg.n_agents), dim_(cfg.mixing_dim),
          lo_(cfg.obs_lo), hi_(cfg.obs_hi) {
        if (vdn_) return;
        const int sd = cfg.obs_dim;
        hyper_w1_ = Mlp({sd, dim_ * n_agents_}, Activation::identity, Activation::abs);
        hyper_b1_ = Mlp({sd, dim_}, Activation::identity);
        hyper_w2_ = Mlp({sd, dim_}, Activation::identity, Activation::abs);
        value_ = Mlp({sd, dim_, 1}, Activation::relu);
        hyper_w1_.init_params(rng);
        hyper_b1_.init_params(rng);
        hyper_w2_.init_params(rng);
        value_.init_params(rng);
    }

    bool is_vdn() const { return vdn_; }

    double q_tot(const std::vector<double>& agent_qs, const StateVector& state,
                 Cache& cache) const {
        if (static_cast<int>(agent_qs.size()) != n_agents_)
            throw InputError("one utility per agent expected");
        cache.agent_qs = agent_qs;
        if (vdn_) {
            double s = 0.0;
            for (double q : agent_qs) s += q;
            return s;
        }
        auto x = scale_state(state);
        auto w1 = hyper_w1_.forward(x, cache.w1);
        auto b1 = hyper_b1_.forward(x, cache.b1);
        auto w2 = hyper_w2_.forward(x, cache.w2);
        auto v = value_.forward(x, cache.v);

        cache.z.resize(dim_);
        cache.hidden.resize(dim_);
        double out = v[0];
        for (int j = 0; j < dim_; ++j) {
            double z = b1[j];
            for (int i = 0; i < n_agents_; ++i) z += w1[j * n_agents_ + i] * agent_qs[i];
            cache.z[j] = z;
            cache.hidden[j] = elu(z);
            out += w2[j] * cache.hidden[j];
        }
        return out;
    }

    double q_tot(const std::vector<double>& agent_qs, const StateVector& state) const {
        Cache scratch;
        return q_tot(agent_qs, state, scratch);
    }

    // Returns dL/dq_i for the cached evaluation, accumulating hypernetwork
    // gradients along the way.
    std::vector<double> backward(double upstream, const Cache& cache) {
        if (vdn_) return std::vector<double>(n_agents_, upstream);

        std::vector<double> d_w2(dim_), d_z(dim_);
        const auto& w1 = cache.w1.acts.back();
        const auto& w2 = cache.w2.acts.back();
        for (int j = 0; j < dim_; ++j) {
            d_w2[j] = upstream * cache.hidden[j];
            d_z[j] = upstream * w2[j] * elu_grad(cache.z[j]);
        }
        std::vector<double> d_w1(dim_ * n_agents_);
        std::vector<double> dq(n_agents_, 0.0);
        for (int j = 0; j < dim_; ++j)
            for (int i = 0; i < n_agents_; ++i) {
                d_w1[j * n_agents_ + i] = d_z[j] * cache.agent_qs[i];
                dq[i] += d_z[j] * w1[j * n_agents_ + i];
            }
        hyper_w1_.backward(d_w1, cache.w1);
        hyper_b1_.backward(d_z, cache.b1);
        hyper_w2_.backward(d_w2, cache.w2);
        value_.backward({upstream}, cache.v);
        return dq;
    }

    // Mixing tensors generated for one state; test hook for the
    // non-negativity invariant.
    Generated generate(const StateVector& state) const {
        Generated g;
        if (vdn_) {
            g.w1.assign(n_agents_, 1.0);
            g.w2.assign(1, 1.0);
            return g;
        }
        MlpCache scratch;
        auto x = scale_state(state);
        g.w1 = hyper_w1_.forward(x, scratch);
        g.b1 = hyper_b1_.forward(x, scratch);
        g.w2 = hyper_w2_.forward(x, scratch);
        g.v = value_.forward(x, scratch)[0];
        return g;
    }

    template <class Fn>
    void for_each_net(Fn&& fn) {
        if (vdn_) return;
        fn(hyper_w1_);
        fn(hyper_b1_);
        fn(hyper_w2_);
        fn(value_);
    }

    bool operator==(const MixingNet& other) const {
        return vdn_ == other.vdn_ && hyper_w1_ == other.hyper_w1_ && hyper_b1_ == other.hyper_b1_ &&
               hyper_w2_ == other.hyper_w2_ && value_ == other.value_;
    }

private:
    bool vdn_ = false;
    int n_agents_ = 0;
    int dim_ = 0;
    std::vector<double> lo_, hi_;
    Mlp hyper_w1_, hyper_b1_, hyper_w2_, value_;

    static double elu(double z) { return z > 0.0 ? z : std::expm1(z); }
    static double elu_grad(double z) { return z > 0.0 ? 1.0 : std::exp(z); }

    std::vector<double> scale_state(const StateVector& s) const {
        if (s.size() != lo_.size()) throw InputError("mixer state size mismatch");
        std::vector<double> x(s.size());
        for (std::size_t d = 0; d < s.size(); ++d) x[d] = (s[d] - lo_[d]) / (hi_[d] - lo_[d]);
        return x;
    }
};

// Frozen copies of the online parameters, refreshed every target_interval
// learner updates.
struct TargetParams {
    AgentNet agent;
    MixingNet mixer;
    int steps_since_sync = 0;
};

// Ring of complete episodes with uniform sampling.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 5000) : capacity_(capacity) {
        if (capacity_ < 1) throw ConfigError("buffer capacity must be positive");
    }

    void add_episode(std::vector<Transition> episode) {
        if (episode.empty()) throw InputError("cannot store an empty episode");
        if (episodes_.size() == capacity_) episodes_.pop_front();
        episodes_.push_back(std::move(episode));
    }

    std::size_t size() const { return episodes_.size(); }
    std::size_t capacity() const { return capacity_; }
    const std::vector<Transition>& episode(std::size_t i) const { return episodes_.at(i); }

private:
    std::size_t capacity_;
    std::deque<std::vector<Transition>> episodes_;
};

// Epsilon-greedy over per-agent utilities; ties break to the lowest index.
inline JointAction select_actions(const AgentNet& nets, const std::vector<StateVector>& obs,
                                  double epsilon, int n_actions, Rng& rng) {
    if (epsilon < 0.0 || epsilon > 1.0) throw InputError("epsilon must lie in [0,1]");
    JointAction actions(obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) {
        if (rng.uniform() < epsilon) {
            actions[i] = rng.below(n_actions);
            continue;
        }
        auto q = nets.q_values(obs[i], static_cast<int>(i));
        int best = 0;
        for (int a = 1; a < static_cast<int>(q.size()); ++a)
            if (q[a] > q[best]) best = a;
        actions[i] = best;
    }
    return actions;
}

class Learner {
public:
    Learner(LearnerConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
        cfg_.validate();
        agent_ = AgentNet(cfg_, rng);
        mixer_ = MixingNet(cfg_, rng);
        agent_opt_ = AdamOptimizer(agent_.net().param_count(), cfg_.learning_rate);
        mixer_.for_each_net([&](Mlp& net) {
            mixer_opts_.emplace_back(net.param_count(), cfg_.learning_rate);
        });
        sync_targets();
        targets_.steps_since_sync = 0;
    }

    const LearnerConfig& config() const { return cfg_; }
    AgentNet& agent_net() { return agent_; }
    MixingNet& mixer() { return mixer_; }
    TargetParams& targets() { return targets_; }

    JointAction act(const std::vector<StateVector>& obs, double epsilon, Rng& rng) const {
        return select_actions(agent_, obs, epsilon, cfg_.n_actions, rng);
    }

    // One TD step on a uniform batch of episodes: per-agent max target
    // utilities mixed by the frozen target mixer; r is the composed reward
    // stored with each transition.
    double td_update(const ReplayBuffer& buffer, Rng& rng) {
        if (buffer.size() == 0) throw StateError("td_update with an empty replay buffer");

        std::vector<std::size_t> picks(cfg_.batch_size);
        for (auto& p : picks) p = static_cast<std::size_t>(rng.below(static_cast<int>(buffer.size())));

        std::size_t n_steps = 0;
        for (auto p : picks) n_steps += buffer.episode(p).size();
        const double inv_n = 1.0 / static_cast<double>(n_steps);

        agent_.net().zero_grads();
        mixer_.for_each_net([](Mlp& net) { net.zero_grads(); });

        double loss = 0.0;
        std::vector<MlpCache> agent_caches(cfg_.n_agents);
        MlpCache scratch;
        MixingNet::Cache mix_cache, target_mix_cache;
        for (auto p : picks) {
            for (const Transition& tr : buffer.episode(p)) {
                std::vector<double> chosen(cfg_.n_agents);
                for (int i = 0; i < cfg_.n_agents; ++i) {
                    auto q = agent_.q_values(tr.state, i, agent_caches[i]);
                    chosen[i] = q[tr.action[i]];
                }
                double q_tot = mixer_.q_tot(chosen, tr.state, mix_cache);

                double y = tr.reward;
                if (!tr.done) {
                    std::vector<double> best(cfg_.n_agents);
                    for (int i = 0; i < cfg_.n_agents; ++i) {
                        auto q = targets_.agent.q_values(tr.next_state, i, scratch);
                        best[i] = *std::max_element(q.begin(), q.end());
                    }
                    y += cfg_.gamma * targets_.mixer.q_tot(best, tr.next_state, target_mix_cache);
                }

                const double err = q_tot - y;
                loss += err * err * inv_n;
                auto dq = mixer_.backward(2.0 * err * inv_n, mix_cache);
                for (int i = 0; i < cfg_.n_agents; ++i) {
                    std::vector<double> up(cfg_.n_actions, 0.0);
                    up[tr.action[i]] = dq[i];
                    agent_.net().backward(up, agent_caches[i]);
                }
            }
        }
        if (!std::isfinite(loss)) throw TrainingError("non-finite TD loss");

        agent_opt_.step(agent_.net());
        std::size_t k = 0;
        mixer_.for_each_net([&](Mlp& net) { mixer_opts_[k++].step(net); });

        if (++targets_.steps_since_sync >= cfg_.target_interval) sync_targets();
        return loss;
    }

    void sync_targets() {
        targets_.agent = agent_;
        targets_.mixer = mixer_;
        targets_.steps_since_sync = 0;
    }

private:
    LearnerConfig cfg_;
    AgentNet agent_;
    MixingNet mixer_;
    TargetParams targets_;
    AdamOptimizer agent_opt_{1};
    std::vector<AdamOptimizer> mixer_opts_;
};

}  // namespace fimlab

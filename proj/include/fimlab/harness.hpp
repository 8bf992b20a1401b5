#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fimlab/common.hpp"
#include "fimlab/dynamics.hpp"
#include "fimlab/entropy.hpp"
#include "fimlab/grid_env.hpp"
#include "fimlab/heatmap.hpp"
#include "fimlab/influence.hpp"
#include "fimlab/learner.hpp"

namespace fimlab {

enum class Mode { fim, afi_only, sfi_only, uniform, lfi, efi, baseline };

inline std::string to_string(Mode m) {
    switch (m) {
        case Mode::fim: return "fim";
        case Mode::afi_only: return "afi_only";
        case Mode::sfi_only: return "sfi_only";
        case Mode::uniform: return "uniform";
        case Mode::lfi: return "lfi";
        case Mode::efi: return "efi";
        case Mode::baseline: return "baseline";
    }
    return "fim";
}

inline Mode mode_from_string(const std::string& s) {
    for (Mode m : {Mode::fim, Mode::afi_only, Mode::sfi_only, Mode::uniform, Mode::lfi, Mode::efi,
                   Mode::baseline})
        if (to_string(m) == s) return m;
    throw ConfigError("unknown mode: " + s);
}

struct RunConfig {
    Mode mode = Mode::fim;
    GridConfig grid;
    std::uint64_t seed = 0;

    double alpha = 5.0;        // intrinsic reward scale
    double phi = 0.05;         // EMA rate for dimension weights
    double tau = 0.1;          // softmax temperature
    double gamma_trace = 0.99; // eligibility trace decay

    std::int64_t total_steps = 120000;        // training environment steps
    std::int64_t reestimate_interval = 25000; // steps between weight re-estimations
    std::int64_t estimation_samples = 10000;  // transitions per estimation round
    std::int64_t eval_interval = 5000;
    int eval_episodes = 32;
    std::vector<int> efi_mask;  // dimension indices weighted in efi mode

    // Learner and dynamics knobs.
    double gamma = 0.99;
    double learning_rate = 5e-4;
    int target_interval = 200;
    int batch_size = 32;
    std::size_t buffer_capacity = 5000;
    int agent_hidden = 64;
    int mixing_dim = 32;
    bool vdn = false;
    int updates_per_episode = 1;
    int dynamics_batch = 128;

    double eps_start = 1.0;
    double eps_end = 0.05;
    double eps_decay_fraction = 0.50;  // fraction of total_steps to anneal over
    int dynamics_warmup_steps = 500;   // batches over the initial rollouts

    std::int64_t trace_snapshot_interval = 250;

    void validate() const {
        grid.validate();
        if (alpha < 0.0) throw ConfigError("alpha must be non-negative");
        if (phi < 0.0 || phi > 1.0) throw ConfigError("phi must lie in [0,1]");
        if (tau <= 0.0) throw ConfigError("tau must be positive");
        if (gamma_trace <= 0.0 || gamma_trace > 1.0)
            throw ConfigError("gamma_trace must lie in (0,1]");
        if (total_steps < 0) throw ConfigError("total_steps must be non-negative");
        if (reestimate_interval < 1) throw ConfigError("reestimate_interval must be >= 1");
        if (estimation_samples < 1) throw ConfigError("estimation_samples must be >= 1");
        if (eval_interval < 1 || eval_episodes < 1) throw ConfigError("bad evaluation settings");
        if (mode == Mode::efi) {
            if (efi_mask.empty()) throw ConfigError("efi mode requires a dimension mask");
            const int dims = 2 * (grid.n_agents + grid.n_boxes);
            for (int d : efi_mask)
                if (d < 0 || d >= dims) throw ConfigError("efi mask index out of range");
        }
        if (eps_start < 0.0 || eps_start > 1.0 || eps_end < 0.0 || eps_end > eps_start)
            throw ConfigError("bad epsilon schedule");
        if (updates_per_episode < 1 || dynamics_batch < 1) throw ConfigError("bad update ratios");
        if (dynamics_warmup_steps < 0) throw ConfigError("bad dynamics warmup");
    }

    LearnerConfig learner_config() const {
        LearnerConfig lc;
        lc.n_agents = grid.n_agents;
        lc.obs_dim = 2 * (grid.n_agents + grid.n_boxes);
        lc.n_actions = kNumActions;
        lc.obs_lo.assign(lc.obs_dim, 0.0);
        lc.obs_hi.resize(lc.obs_dim);
        for (int d = 0; d < lc.obs_dim; ++d)
            lc.obs_hi[d] = (d % 2 == 0) ? static_cast<double>(grid.width - 1)
                                        : static_cast<double>(grid.height - 1);
        lc.agent_hidden = agent_hidden;
        lc.mixing_dim = mixing_dim;
        lc.gamma = gamma;
        lc.learning_rate = learning_rate;
        lc.target_interval = target_interval;
        lc.batch_size = batch_size;
        lc.buffer_capacity = buffer_capacity;
        lc.vdn = vdn;
        return lc;
    }

    bool uses_influence() const { return mode != Mode::baseline; }
    bool uses_estimation() const {
        return mode == Mode::fim || mode == Mode::sfi_only || mode == Mode::lfi;
    }
};

// r_t for one transition. `w` is whatever weight vector the mode resolved
// (softmax weights, a renormalized mask, or all-ones); `trace_prev` is the
// eligibility trace before the current influence is folded in.
inline double compose_reward(Mode mode, double alpha, double r_ext, const InfluenceVector& inf,
                             const TraceVector& trace_prev, const std::vector<double>& w) {
    if (mode == Mode::baseline) return r_ext;
    if (inf.size() != trace_prev.values.size()) throw InputError("influence/trace length mismatch");
    double intrinsic = 0.0;
    switch (mode) {
        case Mode::fim:
        case Mode::lfi:
        case Mode::efi:
            if (w.size() != inf.size()) throw InputError("weight length mismatch");
            for (std::size_t d = 0; d < inf.size(); ++d)
                intrinsic += w[d] * inf[d] * std::max(trace_prev.values[d], 1.0);
            break;
        case Mode::afi_only:
        case Mode::uniform:
            intrinsic = afi_reward(inf, trace_prev);
            break;
        case Mode::sfi_only:
            if (w.size() != inf.size()) throw InputError("weight length mismatch");
            for (std::size_t d = 0; d < inf.size(); ++d) intrinsic += w[d] * inf[d];
            break;
        case Mode::baseline: break;
    }
    return r_ext + alpha * intrinsic;
}

struct EvalPoint {
    std::int64_t step = 0;
    double success_rate = 0.0;
};

struct WeightsPoint {
    std::int64_t step = 0;
    std::vector<double> w;
};

struct TracePoint {
    std::int64_t step = 0;
    std::vector<double> trace;
};

struct LossPoint {
    std::int64_t step = 0;
    double loss = 0.0;
    double epsilon = 0.0;
};

struct RunRecord {
    RunConfig config;
    std::int64_t train_steps = 0;      // environment steps consumed by training
    std::int64_t estimation_steps = 0; // environment steps consumed by estimation rollouts
    std::int64_t episodes = 0;

    std::vector<EvalPoint> success;
    std::vector<float> step_rewards;  // composed reward per training step
    std::vector<WeightsPoint> weights_series;
    std::vector<TracePoint> trace_series;
    std::vector<LossPoint> dynamics_losses;
    std::vector<LossPoint> td_losses;
    DimensionProfile profile;  // most recent estimation round
    HeatmapGrid visits;

    double final_success_rate() const {
        return success.empty() ? 0.0 : success.back().success_rate;
    }
};

// Greedy (epsilon = 0) evaluation over fresh episode seeds.
template <class Policy>
double evaluate_policy(const PushBoxEnv& env, Policy&& policy, int n_episodes,
                       std::uint64_t seed_base) {
    if (n_episodes < 1) throw InputError("need at least one evaluation episode");
    int successes = 0;
    for (int k = 0; k < n_episodes; ++k) {
        auto [state, obs] = env.reset(splitmix64(seed_base) ^ static_cast<std::uint64_t>(k));
        bool done = false;
        while (!done) {
            JointAction a = policy(state);
            auto res = env.step(state, a);
            if (res.success) ++successes;
            state = res.next_state;
            done = res.done;
        }
    }
    return static_cast<double>(successes) / static_cast<double>(n_episodes);
}

inline double evaluate(const PushBoxEnv& env, const AgentNet& agent, int n_episodes,
                       std::uint64_t seed_base) {
    Rng rng(seed_base, 61);
    return evaluate_policy(
        env,
        [&](const PushBoxState& state) {
            std::vector<StateVector> obs(env.n_agents(), env.flatten_state(state));
            return select_actions(agent, obs, 0.0, env.n_actions(), rng);
        },
        n_episodes, seed_base);
}

namespace detail {

// Distinct random streams per concern so that enabling one consumer (say,
// dynamics batching) never shifts the draws another one sees.
enum Stream : std::uint64_t {
    kLearnerInit = 1,
    kDynamicsInit = 2,
    kExplore = 3,
    kLearnerBatch = 4,
    kDynamicsBatch = 5,
    kEstimation = 6,
    kTrainResets = 7,
    kEval = 8,
};

inline std::vector<double> lfi_weights(std::span<const Transition> transitions,
                                       const std::vector<double>& frozen_scales, double tau) {
    std::vector<double> mean_change(frozen_scales.size(), 0.0);
    for (const Transition& tr : transitions)
        for (std::size_t d = 0; d < mean_change.size(); ++d)
            mean_change[d] += std::fabs(tr.next_state[d] - tr.state[d]) / frozen_scales[d];
    for (double& m : mean_change) m /= static_cast<double>(transitions.size());
    // Softmax over negative mean normalized temporal change: least-changing
    // dimensions get the weight.
    return weights_from_entropy(mean_change, tau);
}

inline std::vector<double> efi_weights(const RunConfig& rc) {
    const int dims = 2 * (rc.grid.n_agents + rc.grid.n_boxes);
    std::vector<double> w(dims, 0.0);
    for (int d : rc.efi_mask) w[d] = 1.0;
    double sum = 0.0;
    for (double x : w) sum += x;
    for (double& x : w) x /= sum;
    return w;
}

}  // namespace detail

class TrainingRun {
public:
    explicit TrainingRun(RunConfig rc)
        : rc_(std::move(rc)),
          env_(rc_.grid),
          learner_init_rng_(rc_.seed, detail::kLearnerInit),
          dynamics_init_rng_(rc_.seed, detail::kDynamicsInit),
          explore_rng_(rc_.seed, detail::kExplore),
          learner_batch_rng_(rc_.seed, detail::kLearnerBatch),
          dynamics_batch_rng_(rc_.seed, detail::kDynamicsBatch),
          estimation_rng_(rc_.seed, detail::kEstimation),
          learner_(rc_.learner_config(), learner_init_rng_),
          dynamics_(LearnedDynamicsModel::for_grid(rc_.grid, dynamics_init_rng_,
                                                   rc_.learning_rate)),
          buffer_(rc_.buffer_capacity),
          trace_(2 * (rc_.grid.n_agents + rc_.grid.n_boxes), rc_.gamma_trace) {
        rc_.validate();
    }

    RunRecord run() {
        RunRecord rec;
        rec.config = rc_;
        rec.visits = HeatmapGrid(rc_.grid);
        const int dims = 2 * (rc_.grid.n_agents + rc_.grid.n_boxes);

        // Initial weight estimation under the untrained behavior policy
        // (Algorithm setup phase), then the training loop with periodic
        // re-estimation and EMA blending.
        std::vector<double> w;
        if (rc_.uses_influence()) {
            auto rollouts = collect_estimation_rollouts(rec);
            if (rc_.uses_estimation()) {
                rec.profile = build_profile(rollouts, rc_.tau);
                frozen_scales_ = rec.profile.scale;
                w = (rc_.mode == Mode::lfi)
                        ? detail::lfi_weights(rollouts, frozen_scales_, rc_.tau)
                        : rec.profile.weight;
            } else if (rc_.mode == Mode::efi) {
                w = detail::efi_weights(rc_);
            } else {
                w.assign(dims, 1.0);  // uniform/afi_only: literal w_d = 1
            }
            warmup_dynamics(rollouts);
        }
        if (!w.empty()) rec.weights_series.push_back({0, w});

        std::int64_t next_eval = rc_.eval_interval;
        std::int64_t next_reestimate = rc_.reestimate_interval;
        std::int64_t next_trace_snap = rc_.trace_snapshot_interval;

        std::uint64_t episode_index = 0;
        while (rec.train_steps < rc_.total_steps) {
            auto [state, obs0] = env_.reset(splitmix64(rc_.seed) ^ (episode_index));
            ++episode_index;
            trace_.reset();
            std::vector<Transition> episode;
            bool done = false;
            while (!done) {
                const double eps = epsilon_at(rec.train_steps);
                std::vector<StateVector> obs(rc_.grid.n_agents, env_.flatten_state(state));
                JointAction action = learner_.act(obs, eps, explore_rng_);
                StepResult res = env_.step(state, action);

                Transition tr;
                tr.state = obs[0];
                tr.action = action;
                tr.reward_ext = res.reward_ext;
                tr.next_state = env_.flatten_state(res.next_state);
                tr.done = res.done;
                if (rc_.uses_influence()) {
                    auto inf = counterfactual_influence(dynamics_, tr.state, action);
                    tr.reward = compose_reward(rc_.mode, rc_.alpha, res.reward_ext, inf, trace_, w);
                    trace_ = update_trace(trace_, inf);
                } else {
                    tr.reward = res.reward_ext;
                }
                rec.step_rewards.push_back(static_cast<float>(tr.reward));
                record_visitation(rec.visits, res.next_state);
                episode.push_back(std::move(tr));

                ++rec.train_steps;
                state = res.next_state;
                done = res.done;

                if (rec.train_steps >= next_trace_snap && rc_.uses_influence()) {
                    rec.trace_series.push_back({rec.train_steps, trace_.values});
                    next_trace_snap += rc_.trace_snapshot_interval;
                }
                if (rec.train_steps >= next_eval) {
                    rec.success.push_back({rec.train_steps, evaluate_now(rec)});
                    next_eval += rc_.eval_interval;
                }
                if (rc_.uses_estimation() && rec.train_steps >= next_reestimate &&
                    rec.train_steps < rc_.total_steps) {
                    auto rollouts = collect_estimation_rollouts(rec);
                    rec.profile = build_profile(rollouts, rc_.tau);
                    auto w_new = (rc_.mode == Mode::lfi)
                                     ? detail::lfi_weights(rollouts, frozen_scales_, rc_.tau)
                                     : rec.profile.weight;
                    w = ema_update(w, w_new, rc_.phi);
                    rec.weights_series.push_back({rec.train_steps, w});
                    next_reestimate += rc_.reestimate_interval;
                }
            }

            buffer_.add_episode(std::move(episode));
            ++rec.episodes;
            for (int u = 0; u < rc_.updates_per_episode; ++u) {
                double loss = learner_.td_update(buffer_, learner_batch_rng_);
                rec.td_losses.push_back({rec.train_steps, loss, epsilon_at(rec.train_steps)});
            }
            if (rc_.uses_influence()) {
                double loss = dynamics_.train_step(sample_dynamics_batch());
                rec.dynamics_losses.push_back({rec.train_steps, loss, epsilon_at(rec.train_steps)});
            }
        }

        // Final evaluation point unless one just landed on the boundary.
        if (rc_.total_steps > 0 &&
            (rec.success.empty() || rec.success.back().step != rec.train_steps))
            rec.success.push_back({rec.train_steps, evaluate_now(rec)});
        return rec;
    }

    Learner& learner() { return learner_; }
    const PushBoxEnv& env() const { return env_; }

private:
    RunConfig rc_;
    PushBoxEnv env_;
    Rng learner_init_rng_, dynamics_init_rng_, explore_rng_, learner_batch_rng_,
        dynamics_batch_rng_, estimation_rng_;
    Learner learner_;
    LearnedDynamicsModel dynamics_;
    ReplayBuffer buffer_;
    TraceVector trace_;
    std::vector<double> frozen_scales_;
    std::uint64_t estimation_round_ = 0;
    std::uint64_t eval_round_ = 0;

    double epsilon_at(std::int64_t step) const {
        const double span = rc_.eps_decay_fraction * static_cast<double>(rc_.total_steps);
        if (span <= 0.0) return rc_.eps_end;
        const double frac = static_cast<double>(step) / span;
        if (frac >= 1.0) return rc_.eps_end;
        return rc_.eps_start - (rc_.eps_start - rc_.eps_end) * frac;
    }

    // Fresh rollouts under the current epsilon-greedy behavior policy, on
    // a separate reset stream so training trajectories are untouched.
    std::vector<Transition> collect_estimation_rollouts(RunRecord& rec) {
        std::vector<Transition> out;
        out.reserve(rc_.estimation_samples);
        std::uint64_t episode = 0;
        const double eps = epsilon_at(rec.train_steps);
        while (static_cast<std::int64_t>(out.size()) < rc_.estimation_samples) {
            auto [state, obs0] = env_.reset(splitmix64(rc_.seed ^ 0xE57ULL) ^
                                            (estimation_round_ * 1000003ULL + episode));
            ++episode;
            bool done = false;
            while (!done && static_cast<std::int64_t>(out.size()) < rc_.estimation_samples) {
                std::vector<StateVector> obs(rc_.grid.n_agents, env_.flatten_state(state));
                JointAction action = learner_.act(obs, eps, estimation_rng_);
                StepResult res = env_.step(state, action);
                Transition tr;
                tr.state = obs[0];
                tr.action = action;
                tr.reward_ext = res.reward_ext;
                tr.reward = res.reward_ext;
                tr.next_state = env_.flatten_state(res.next_state);
                tr.done = res.done;
                out.push_back(std::move(tr));
                state = res.next_state;
                done = res.done;
            }
        }
        ++estimation_round_;
        rec.estimation_steps += static_cast<std::int64_t>(out.size());
        return out;
    }

    double evaluate_now(const RunRecord&) {
        return evaluate(env_, learner_.agent_net(), rc_.eval_episodes,
                        splitmix64(rc_.seed ^ 0xEA1ULL) + (eval_round_++));
    }

    // The influence signal is only as good as the forward model; fitting
    // it to the initial rollouts first means pushes are predictable before
    // the first intrinsic reward is ever computed.
    void warmup_dynamics(const std::vector<Transition>& rollouts) {
        if (rollouts.empty()) return;
        for (int step = 0; step < rc_.dynamics_warmup_steps; ++step) {
            std::vector<Transition> batch;
            batch.reserve(rc_.dynamics_batch);
            for (int i = 0; i < rc_.dynamics_batch; ++i)
                batch.push_back(
                    rollouts[static_cast<std::size_t>(dynamics_batch_rng_.below(
                        static_cast<int>(rollouts.size())))]);
            dynamics_.train_step(batch);
        }
    }

    std::vector<Transition> sample_dynamics_batch() {
        std::vector<Transition> batch;
        batch.reserve(rc_.dynamics_batch);
        for (int i = 0; i < rc_.dynamics_batch; ++i) {
            const auto& ep =
                buffer_.episode(static_cast<std::size_t>(
                    dynamics_batch_rng_.below(static_cast<int>(buffer_.size()))));
            batch.push_back(ep[static_cast<std::size_t>(
                dynamics_batch_rng_.below(static_cast<int>(ep.size())))]);
        }
        return batch;
    }
};

inline RunRecord run_training(const RunConfig& rc) {
    TrainingRun run(rc);
    return run.run();
}

}  // namespace fimlab
